#pragma once

#include "usr/ops.hpp"

namespace usr::nn {

struct ConvLayer {
    TensorPtr weight;  // C_out x C_in x k x k
    TensorPtr bias;    // C_out
};

struct LinearLayer {
    TensorPtr weight;  // out x in
    TensorPtr bias;    // out
};

struct LayerNormLayer {
    TensorPtr gamma;
    TensorPtr beta;
};

ConvLayer make_conv_layer(int c_out, int c_in, int k);
LinearLayer make_linear_layer(int out, int in);
LayerNormLayer make_layer_norm(int feats);
WmsaParams make_wmsa_params(int channels);

}  // namespace usr::nn
