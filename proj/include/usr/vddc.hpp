#pragma once

#include "usr/image.hpp"
#include "usr/layers.hpp"

namespace usr::sr {

// Desk-scale defaults; the paper-scale configuration (64 channels, 7 blocks of
// 6 HABs, window 8) is reachable through the same fields.
struct SRConfig {
    int channels = 16;
    int n_vddc = 2;
    int habs_per_block = 2;
    int window = 4;
    int heads = 2;
    int dyn_kernel = 3;
    int scale = 4;

    int udr_dim() const { return channels * dyn_kernel * dyn_kernel; }
    void validate() const;
};

// Channel attention bottleneck (reduction 4) ending in a sigmoid gate.
struct CabParams {
    nn::LinearLayer squeeze;  // C -> C/4
    nn::LinearLayer excite;   // C/4 -> C
};

// Two 1x1 convs with GELU in between, expansion ratio 2.
struct MlpParams {
    nn::ConvLayer fc1;  // C -> 2C
    nn::ConvLayer fc2;  // 2C -> C
};

struct HabParams {
    nn::LayerNormLayer ln1;
    nn::WmsaParams msa;
    CabParams cab;
    nn::LayerNormLayer ln2;
    MlpParams mlp;
};

struct VDDCParams {
    nn::TensorPtr ais_weight;  // d
    nn::TensorPtr ais_bias;    // 1
    std::vector<HabParams> habs;
    nn::LayerNormLayer rg_ln1;
    nn::WmsaParams rg_msa;
    nn::LayerNormLayer rg_ln2;
    MlpParams rg_mlp;
    nn::ConvLayer tail;  // 3x3, C -> C
};

struct USRParams {
    nn::ConvLayer shallow;  // 3 -> C
    std::vector<VDDCParams> blocks;
    nn::ConvLayer recon1;  // C -> 3*scale^2
    nn::ConvLayer recon2;  // 3 -> 3
};

VDDCParams make_vddc_params(const SRConfig& cfg);
USRParams make_usr_params(const SRConfig& cfg);

// gamma_i = sigmoid(w . u + b), strictly in (0,1).
nn::TensorPtr ais_gamma(const nn::TensorPtr& u, const nn::TensorPtr& weight,
                        const nn::TensorPtr& bias);
// Elementwise gamma * u.
nn::TensorPtr ais_scale(const nn::TensorPtr& u, const nn::TensorPtr& gamma);

// F' = F + W-MSA(LN(F)) + 0.01*CAB(LN(F)); F'' = F' + MLP(LN(F')).
nn::TensorPtr hab_forward(const nn::TensorPtr& feat, const HabParams& p, const SRConfig& cfg);

// Dynamic-conv entry with residual, t HABs, a residual group, tail conv, and a
// block-level skip. udr may be null, which removes the dynamic-conv branch
// entirely; use_ais=false pins gamma at 1.
nn::TensorPtr vddc_forward(const nn::TensorPtr& feat, const nn::TensorPtr& udr,
                           const VDDCParams& p, const SRConfig& cfg, bool use_ais = true);

// Shallow conv, n_vddc blocks sharing one udr, global skip, then
// conv -> pixel shuffle -> conv reconstruction. Output values are left
// unclamped for loss graphs; clamp happens at image emission.
nn::TensorPtr usr_forward(const img::ImageBuffer& lr, const nn::TensorPtr& udr,
                          const USRParams& p, const SRConfig& cfg, bool use_ais = true);

img::ImageBuffer usr_forward_image(const img::ImageBuffer& lr, const nn::TensorPtr& udr,
                                   const USRParams& p, const SRConfig& cfg, bool use_ais = true);

}  // namespace usr::sr
