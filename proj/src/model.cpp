#include "usr/model.hpp"

#include <cmath>

#include "usr/rng.hpp"

namespace usr {

namespace nn {

ConvLayer make_conv_layer(int c_out, int c_in, int k) {
    ConvLayer l;
    l.weight = Tensor::zeros({c_out, c_in, k, k}, true);
    l.bias = Tensor::zeros({c_out}, true);
    return l;
}

LinearLayer make_linear_layer(int out, int in) {
    LinearLayer l;
    l.weight = Tensor::zeros({out, in}, true);
    l.bias = Tensor::zeros({out}, true);
    return l;
}

LayerNormLayer make_layer_norm(int feats) {
    LayerNormLayer l;
    l.gamma = Tensor::full({feats}, 1.0, true);
    l.beta = Tensor::zeros({feats}, true);
    return l;
}

WmsaParams make_wmsa_params(int channels) {
    WmsaParams p;
    p.wq = Tensor::zeros({channels, channels}, true);
    p.bq = Tensor::zeros({channels}, true);
    p.wk = Tensor::zeros({channels, channels}, true);
    p.bk = Tensor::zeros({channels}, true);
    p.wv = Tensor::zeros({channels, channels}, true);
    p.bv = Tensor::zeros({channels}, true);
    p.wo = Tensor::zeros({channels, channels}, true);
    p.bo = Tensor::zeros({channels}, true);
    return p;
}

}  // namespace nn

UsrModel make_model(const sr::SRConfig& cfg) {
    cfg.validate();
    UsrModel m;
    m.cfg = cfg;
    m.de = aude::make_de_params(cfg.udr_dim());
    m.contrast = aude::make_contrast_params(cfg.udr_dim());
    m.srnet = sr::make_usr_params(cfg);
    return m;
}

namespace {

void push(std::vector<nn::Parameter>& out, const std::string& name, const nn::TensorPtr& t) {
    out.push_back({name, t});
}

void push_conv(std::vector<nn::Parameter>& out, const std::string& prefix, const nn::ConvLayer& l) {
    push(out, prefix + ".weight", l.weight);
    push(out, prefix + ".bias", l.bias);
}

void push_linear(std::vector<nn::Parameter>& out, const std::string& prefix,
                 const nn::LinearLayer& l) {
    push(out, prefix + ".weight", l.weight);
    push(out, prefix + ".bias", l.bias);
}

void push_ln(std::vector<nn::Parameter>& out, const std::string& prefix,
             const nn::LayerNormLayer& l) {
    push(out, prefix + ".gamma", l.gamma);
    push(out, prefix + ".beta", l.beta);
}

void push_msa(std::vector<nn::Parameter>& out, const std::string& prefix, const nn::WmsaParams& p) {
    push(out, prefix + ".wq", p.wq);
    push(out, prefix + ".bq", p.bq);
    push(out, prefix + ".wk", p.wk);
    push(out, prefix + ".bk", p.bk);
    push(out, prefix + ".wv", p.wv);
    push(out, prefix + ".bv", p.bv);
    push(out, prefix + ".wo", p.wo);
    push(out, prefix + ".bo", p.bo);
}

void push_hab(std::vector<nn::Parameter>& out, const std::string& prefix, const sr::HabParams& p) {
    push_ln(out, prefix + ".ln1", p.ln1);
    push_msa(out, prefix + ".msa", p.msa);
    push_linear(out, prefix + ".cab.squeeze", p.cab.squeeze);
    push_linear(out, prefix + ".cab.excite", p.cab.excite);
    push_ln(out, prefix + ".ln2", p.ln2);
    push_conv(out, prefix + ".mlp.fc1", p.mlp.fc1);
    push_conv(out, prefix + ".mlp.fc2", p.mlp.fc2);
}

}  // namespace

std::vector<nn::Parameter> de_side_parameters(const UsrModel& m) {
    std::vector<nn::Parameter> out;
    push_conv(out, "de.stem", m.de.stem);
    for (std::size_t i = 0; i < m.de.blocks.size(); ++i) {
        const std::string prefix = "de.block" + std::to_string(i);
        push_conv(out, prefix + ".conv1", m.de.blocks[i].conv1);
        push_conv(out, prefix + ".conv2", m.de.blocks[i].conv2);
    }
    push_linear(out, "de.fc1", m.de.fc1);
    push_linear(out, "de.fc2", m.de.fc2);
    push_linear(out, "de.fc3", m.de.fc3);
    push_linear(out, "contrast.alpha", m.contrast.alpha_head);
    return out;
}

std::vector<nn::Parameter> sr_side_parameters(const UsrModel& m) {
    std::vector<nn::Parameter> out;
    push_conv(out, "sr.shallow", m.srnet.shallow);
    for (std::size_t i = 0; i < m.srnet.blocks.size(); ++i) {
        const std::string prefix = "sr.vddc" + std::to_string(i);
        const auto& b = m.srnet.blocks[i];
        push(out, prefix + ".ais.weight", b.ais_weight);
        push(out, prefix + ".ais.bias", b.ais_bias);
        for (std::size_t j = 0; j < b.habs.size(); ++j)
            push_hab(out, prefix + ".hab" + std::to_string(j), b.habs[j]);
        push_ln(out, prefix + ".rg.ln1", b.rg_ln1);
        push_msa(out, prefix + ".rg.msa", b.rg_msa);
        push_ln(out, prefix + ".rg.ln2", b.rg_ln2);
        push_conv(out, prefix + ".rg.mlp.fc1", b.rg_mlp.fc1);
        push_conv(out, prefix + ".rg.mlp.fc2", b.rg_mlp.fc2);
        push_conv(out, prefix + ".tail", b.tail);
    }
    push_conv(out, "sr.recon1", m.srnet.recon1);
    push_conv(out, "sr.recon2", m.srnet.recon2);
    return out;
}

std::vector<nn::Parameter> all_parameters(const UsrModel& m) {
    std::vector<nn::Parameter> out = de_side_parameters(m);
    auto srp = sr_side_parameters(m);
    out.insert(out.end(), srp.begin(), srp.end());
    return out;
}

void init_model(UsrModel& model, std::uint64_t seed) {
    nn::DeterministicRng rng(seed, 0, "init");
    auto ends_with = [](const std::string& s, const std::string& suf) {
        return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
    };
    for (auto& p : all_parameters(model)) {
        auto& t = *p.tensor;
        if (ends_with(p.name, ".gamma")) {
            std::fill(t.data.begin(), t.data.end(), 1.0);
        } else if (ends_with(p.name, ".beta") || ends_with(p.name, ".bias") ||
                   ends_with(p.name, "bq") || ends_with(p.name, "bk") || ends_with(p.name, "bv") ||
                   ends_with(p.name, "bo")) {
            std::fill(t.data.begin(), t.data.end(), 0.0);
        } else if (ends_with(p.name, ".wo") || ends_with(p.name, ".mlp.fc2.weight") ||
                   ends_with(p.name, ".tail.weight")) {
            // residual branches open at zero so the deep stack starts as the
            // identity; He-uniform here compounds variance block over block
            std::fill(t.data.begin(), t.data.end(), 0.0);
        } else {
            // He-uniform over the fan-in of the weight
            std::int64_t fan_in = 1;
            if (t.shape.size() == 4)
                fan_in = static_cast<std::int64_t>(t.shape[1]) * t.shape[2] * t.shape[3];
            else if (t.shape.size() == 2)
                fan_in = t.shape[1];
            else
                fan_in = t.size();
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            for (double& v : t.data) v = rng.next_uniform(-bound, bound);
        }
    }
}

}  // namespace usr
