#pragma once

#include "usr/image.hpp"
#include "usr/layers.hpp"
#include "usr/rng.hpp"

namespace usr::aude {

// Degradation extractor: 3x3 stem into 32 channels, 5 plain conv blocks, then
// global average pooling and a 3-layer MLP (LeakyReLU 0.1) producing the
// concatenated (mu, logvar) vector of width 2*udr_dim.
struct DEParams {
    static constexpr int kStemChannels = 32;
    static constexpr int kNumBlocks = 5;
    static constexpr int kMlpHidden = 64;

    nn::ConvLayer stem;  // 3 -> 32
    struct Block {
        nn::ConvLayer conv1, conv2;  // 32 -> 32 each
    };
    std::vector<Block> blocks;
    nn::LinearLayer fc1, fc2, fc3;  // 32 -> 64 -> 64 -> 2d
    int udr_dim = 0;
};

// Uncertainty head: one linear layer (2d -> 1) plus sigmoid.
struct ContrastParams {
    nn::LinearLayer alpha_head;
};

// Gaussian stats of one patch's degradation representation.
struct UncertainUDR {
    nn::TensorPtr mu;      // d
    nn::TensorPtr logvar;  // d, clamped to [-12, 4]
    nn::TensorPtr alpha;   // 1 element, strictly in (0,1)

    nn::TensorPtr udr() const;  // alpha * mu
    int dim() const { return mu ? mu->shape[0] : 0; }
};

struct UncertaintyLossConfig {
    double kT = 1.0;
    double lambda = 0.1;
    int num_samples = 1;
};

struct PatchPair {
    img::ImageBuffer patch1, patch2;
    int y1 = 0, x1 = 0, y2 = 0, x2 = 0;
};

DEParams make_de_params(int udr_dim);
ContrastParams make_contrast_params(int udr_dim);

// patch must be at least 16x16 RGB. Deterministic.
UncertainUDR de_forward(const img::ImageBuffer& patch, const DEParams& params,
                        const ContrastParams& contrast);

// u = mu + exp(logvar/2) .* z (z constant; gradient reaches mu and logvar).
nn::TensorPtr sample_udr(const UncertainUDR& stats, const nn::TensorPtr& z);

struct UsLossResult {
    nn::TensorPtr loss;  // l_u - lambda * l_ur
    nn::TensorPtr l_u;
    nn::TensorPtr l_ur;
};

// z1/z2 carry num_samples*d gaussian draws each (a plain d-vector when
// num_samples is 1). l_u averages the per-draw energy sum over draws.
UsLossResult us_loss(const UncertainUDR& s1, const UncertainUDR& s2, const nn::TensorPtr& z1,
                     const nn::TensorPtr& z2, const UncertaintyLossConfig& cfg);

// Two uniform crop offsets; redrawn once if they coincide and the image
// allows distinct placements.
PatchPair sample_patch_pair(const img::ImageBuffer& lr, int patch, nn::DeterministicRng& rng);

// Whole-image forward; returns alpha*mu as a graph node (no sampling).
nn::TensorPtr infer_udr(const img::ImageBuffer& lr, const DEParams& params,
                        const ContrastParams& contrast);

}  // namespace usr::aude
