#include "usr/vddc.hpp"

namespace usr::sr {

using nn::TensorPtr;

namespace {
constexpr double kCabWeight = 0.01;
constexpr int kCabReduction = 4;
constexpr int kMlpRatio = 2;
}  // namespace

void SRConfig::validate() const {
    if (channels < 1 || n_vddc < 1 || habs_per_block < 1 || window < 1 || heads < 1 ||
        dyn_kernel < 1 || scale < 1)
        throw ParameterError("SRConfig fields must be positive");
    if (channels % heads != 0) throw ParameterError("channels must be divisible by heads");
    if (channels % kCabReduction != 0)
        throw ParameterError("channels must be divisible by the CAB reduction (4)");
    if (dyn_kernel % 2 != 1) throw ParameterError("dyn_kernel must be odd");
}

VDDCParams make_vddc_params(const SRConfig& cfg) {
    VDDCParams p;
    const int c = cfg.channels;
    p.ais_weight = nn::Tensor::zeros({cfg.udr_dim()});
    p.ais_bias = nn::Tensor::zeros({1});
    p.habs.resize(static_cast<std::size_t>(cfg.habs_per_block));
    for (auto& hab : p.habs) {
        hab.ln1 = nn::make_layer_norm(c);
        hab.msa = nn::make_wmsa_params(c);
        hab.cab.squeeze = nn::make_linear_layer(c / kCabReduction, c);
        hab.cab.excite = nn::make_linear_layer(c, c / kCabReduction);
        hab.ln2 = nn::make_layer_norm(c);
        hab.mlp.fc1 = nn::make_conv_layer(kMlpRatio * c, c, 1);
        hab.mlp.fc2 = nn::make_conv_layer(c, kMlpRatio * c, 1);
    }
    p.rg_ln1 = nn::make_layer_norm(c);
    p.rg_msa = nn::make_wmsa_params(c);
    p.rg_ln2 = nn::make_layer_norm(c);
    p.rg_mlp.fc1 = nn::make_conv_layer(kMlpRatio * c, c, 1);
    p.rg_mlp.fc2 = nn::make_conv_layer(c, kMlpRatio * c, 1);
    p.tail = nn::make_conv_layer(c, c, 3);
    return p;
}

USRParams make_usr_params(const SRConfig& cfg) {
    cfg.validate();
    USRParams p;
    p.shallow = nn::make_conv_layer(cfg.channels, 3, 3);
    p.blocks.resize(static_cast<std::size_t>(cfg.n_vddc));
    for (auto& b : p.blocks) b = make_vddc_params(cfg);
    p.recon1 = nn::make_conv_layer(3 * cfg.scale * cfg.scale, cfg.channels, 3);
    p.recon2 = nn::make_conv_layer(3, 3, 3);
    return p;
}

TensorPtr ais_gamma(const TensorPtr& u, const TensorPtr& weight, const TensorPtr& bias) {
    if (u->shape.size() != 1 || weight->shape.size() != 1 || u->shape != weight->shape)
        throw DimensionError("ais_gamma: weight and udr must be equal-length vectors");
    const int d = u->shape[0];
    TensorPtr logits = nn::linear(u, nn::reshape(weight, {1, d}), bias);
    return nn::activation(nn::Activation::sigmoid, logits);
}

TensorPtr ais_scale(const TensorPtr& u, const TensorPtr& gamma) { return nn::scale_by(u, gamma); }

namespace {

TensorPtr mlp_forward(const TensorPtr& x, const MlpParams& p) {
    TensorPtr h = nn::conv2d(x, p.fc1.weight, p.fc1.bias, 0);
    h = nn::activation(nn::Activation::gelu, h);
    return nn::conv2d(h, p.fc2.weight, p.fc2.bias, 0);
}

TensorPtr cab_forward(const TensorPtr& x, const CabParams& p) {
    TensorPtr g = nn::global_avg_pool(x);
    g = nn::activation(nn::Activation::relu, nn::linear(g, p.squeeze.weight, p.squeeze.bias));
    g = nn::activation(nn::Activation::sigmoid, nn::linear(g, p.excite.weight, p.excite.bias));
    return nn::channel_scale(x, g);
}

}  // namespace

TensorPtr hab_forward(const TensorPtr& feat, const HabParams& p, const SRConfig& cfg) {
    TensorPtr n1 = nn::layer_norm(feat, p.ln1.gamma, p.ln1.beta);
    TensorPtr att = nn::window_msa(n1, p.msa, cfg.window, cfg.heads);
    TensorPtr ca = nn::scale(cab_forward(n1, p.cab), kCabWeight);
    TensorPtr x = nn::add(nn::add(feat, att), ca);
    TensorPtr n2 = nn::layer_norm(x, p.ln2.gamma, p.ln2.beta);
    return nn::add(x, mlp_forward(n2, p.mlp));
}

TensorPtr vddc_forward(const TensorPtr& feat, const TensorPtr& udr, const VDDCParams& p,
                       const SRConfig& cfg, bool use_ais) {
    TensorPtr x = feat;
    if (udr) {
        if (udr->size() != cfg.udr_dim())
            throw DimensionError("vddc_forward: udr length does not match channels*k^2");
        TensorPtr u = udr;
        if (use_ais) {
            TensorPtr gamma = ais_gamma(udr, p.ais_weight, p.ais_bias);
            u = ais_scale(udr, gamma);
        }
        TensorPtr kernel = nn::reshape(u, {cfg.channels, cfg.dyn_kernel, cfg.dyn_kernel});
        x = nn::add(feat, nn::depthwise_dynamic_conv(feat, kernel));
    }
    for (const auto& hab : p.habs) x = hab_forward(x, hab, cfg);
    TensorPtr n1 = nn::layer_norm(x, p.rg_ln1.gamma, p.rg_ln1.beta);
    x = nn::add(x, nn::window_msa(n1, p.rg_msa, cfg.window, cfg.heads));
    TensorPtr n2 = nn::layer_norm(x, p.rg_ln2.gamma, p.rg_ln2.beta);
    x = nn::add(x, mlp_forward(n2, p.rg_mlp));
    x = nn::conv2d(x, p.tail.weight, p.tail.bias, 1);
    return nn::add(feat, x);
}

TensorPtr usr_forward(const img::ImageBuffer& lr, const TensorPtr& udr, const USRParams& p,
                      const SRConfig& cfg, bool use_ais) {
    img::validate(lr, "usr_forward");
    if (lr.channels != 3) throw DataError("usr_forward: LR image must be RGB");
    if (lr.height % cfg.window != 0 || lr.width % cfg.window != 0)
        throw DimensionError("usr_forward: LR dims must be divisible by the window size");
    if (udr && udr->size() != cfg.udr_dim())
        throw DimensionError("usr_forward: udr length does not match the configuration");

    TensorPtr x = img::image_to_tensor(lr);
    TensorPtr shallow = nn::conv2d(x, p.shallow.weight, p.shallow.bias, 1);
    TensorPtr f = shallow;
    for (const auto& block : p.blocks) f = vddc_forward(f, udr, block, cfg, use_ais);
    f = nn::add(f, shallow);
    TensorPtr r = nn::conv2d(f, p.recon1.weight, p.recon1.bias, 1);
    r = nn::pixel_shuffle(r, cfg.scale);
    return nn::conv2d(r, p.recon2.weight, p.recon2.bias, 1);
}

img::ImageBuffer usr_forward_image(const img::ImageBuffer& lr, const TensorPtr& udr,
                                   const USRParams& p, const SRConfig& cfg, bool use_ais) {
    return img::tensor_to_image(*usr_forward(lr, udr, p, cfg, use_ais));
}

}  // namespace usr::sr
