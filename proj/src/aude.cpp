#include "usr/aude.hpp"

namespace usr::aude {

using nn::TensorPtr;

namespace {
constexpr double kLeakySlope = 0.1;
constexpr double kLogvarLo = -12.0;
constexpr double kLogvarHi = 4.0;
}  // namespace

TensorPtr UncertainUDR::udr() const { return nn::scale_by(mu, alpha); }

DEParams make_de_params(int udr_dim) {
    if (udr_dim < 1) throw ParameterError("udr_dim must be >= 1");
    DEParams p;
    p.udr_dim = udr_dim;
    p.stem = nn::make_conv_layer(DEParams::kStemChannels, 3, 3);
    p.blocks.resize(DEParams::kNumBlocks);
    for (auto& b : p.blocks) {
        b.conv1 = nn::make_conv_layer(DEParams::kStemChannels, DEParams::kStemChannels, 3);
        b.conv2 = nn::make_conv_layer(DEParams::kStemChannels, DEParams::kStemChannels, 3);
    }
    p.fc1 = nn::make_linear_layer(DEParams::kMlpHidden, DEParams::kStemChannels);
    p.fc2 = nn::make_linear_layer(DEParams::kMlpHidden, DEParams::kMlpHidden);
    p.fc3 = nn::make_linear_layer(2 * udr_dim, DEParams::kMlpHidden);
    return p;
}

ContrastParams make_contrast_params(int udr_dim) {
    ContrastParams p;
    p.alpha_head = nn::make_linear_layer(1, 2 * udr_dim);
    return p;
}

UncertainUDR de_forward(const img::ImageBuffer& patch, const DEParams& params,
                        const ContrastParams& contrast) {
    img::validate(patch, "de_forward");
    if (patch.channels != 3) throw DataError("de_forward: patch must be RGB");
    if (patch.height < 16 || patch.width < 16)
        throw DataError("de_forward: patch must be at least 16x16");

    TensorPtr h = img::image_to_tensor(patch);
    h = nn::activation(nn::Activation::relu, nn::conv2d(h, params.stem.weight, params.stem.bias, 1));
    for (const auto& b : params.blocks) {
        h = nn::conv2d(h, b.conv1.weight, b.conv1.bias, 1);
        h = nn::activation(nn::Activation::relu, h);
        h = nn::conv2d(h, b.conv2.weight, b.conv2.bias, 1);
    }
    TensorPtr v = nn::global_avg_pool(h);
    v = nn::activation(nn::Activation::leaky_relu, nn::linear(v, params.fc1.weight, params.fc1.bias),
                       kLeakySlope);
    v = nn::activation(nn::Activation::leaky_relu, nn::linear(v, params.fc2.weight, params.fc2.bias),
                       kLeakySlope);
    v = nn::activation(nn::Activation::leaky_relu, nn::linear(v, params.fc3.weight, params.fc3.bias),
                       kLeakySlope);

    const int d = params.udr_dim;
    UncertainUDR out;
    out.mu = nn::slice(v, 0, d);
    out.logvar = nn::clamp(nn::slice(v, d, d), kLogvarLo, kLogvarHi);
    TensorPtr head_in = nn::concat(out.mu, out.logvar);
    out.alpha = nn::activation(nn::Activation::sigmoid,
                               nn::linear(head_in, contrast.alpha_head.weight, contrast.alpha_head.bias));
    return out;
}

TensorPtr sample_udr(const UncertainUDR& stats, const TensorPtr& z) {
    return nn::gaussian_reparam(stats.mu, stats.logvar, z);
}

UsLossResult us_loss(const UncertainUDR& s1, const UncertainUDR& s2, const TensorPtr& z1,
                     const TensorPtr& z2, const UncertaintyLossConfig& cfg) {
    if (cfg.kT <= 0.0) throw ParameterError("us_loss: kT must be > 0");
    if (cfg.lambda < 0.0) throw ParameterError("us_loss: lambda must be >= 0");
    if (cfg.num_samples < 1) throw ParameterError("us_loss: num_samples must be >= 1");
    const int d = s1.dim();
    if (d == 0 || s2.dim() != d) throw DimensionError("us_loss: UDR dimension mismatch");
    const std::int64_t want = static_cast<std::int64_t>(cfg.num_samples) * d;
    if (z1->size() != want || z2->size() != want)
        throw DimensionError("us_loss: z must carry num_samples*d draws");

    TensorPtr acc;
    for (int s = 0; s < cfg.num_samples; ++s) {
        TensorPtr za = cfg.num_samples == 1 ? z1 : nn::slice(z1, static_cast<std::int64_t>(s) * d, d);
        TensorPtr zb = cfg.num_samples == 1 ? z2 : nn::slice(z2, static_cast<std::int64_t>(s) * d, d);
        TensorPtr u1 = nn::scale_by(sample_udr(s1, za), s1.alpha);
        TensorPtr u2 = nn::scale_by(sample_udr(s2, zb), s2.alpha);
        TensorPtr term = nn::sum_abs_diff(u1, u2);
        acc = acc ? nn::add(acc, term) : term;
    }

    UsLossResult r;
    r.l_u = nn::scale(acc, 1.0 / (cfg.kT * cfg.num_samples));
    r.l_ur = nn::sum_abs_diff(s1.alpha, s2.alpha);
    r.loss = nn::add(r.l_u, nn::scale(r.l_ur, -cfg.lambda));
    return r;
}

PatchPair sample_patch_pair(const img::ImageBuffer& lr, int patch, nn::DeterministicRng& rng) {
    if (patch < 1) throw ParameterError("patch size must be >= 1");
    if (lr.height < patch || lr.width < patch)
        throw DataError("sample_patch_pair: image smaller than patch");

    const int ymax = lr.height - patch, xmax = lr.width - patch;
    PatchPair pp;
    pp.y1 = static_cast<int>(rng.next_int(0, ymax));
    pp.x1 = static_cast<int>(rng.next_int(0, xmax));
    pp.y2 = static_cast<int>(rng.next_int(0, ymax));
    pp.x2 = static_cast<int>(rng.next_int(0, xmax));
    if (pp.y1 == pp.y2 && pp.x1 == pp.x2 && (ymax > 0 || xmax > 0)) {
        pp.y2 = static_cast<int>(rng.next_int(0, ymax));
        pp.x2 = static_cast<int>(rng.next_int(0, xmax));
    }
    pp.patch1 = lr.crop(pp.y1, pp.x1, patch, patch);
    pp.patch2 = lr.crop(pp.y2, pp.x2, patch, patch);
    return pp;
}

TensorPtr infer_udr(const img::ImageBuffer& lr, const DEParams& params,
                    const ContrastParams& contrast) {
    const UncertainUDR stats = de_forward(lr, params, contrast);
    return stats.udr();
}

}  // namespace usr::aude
