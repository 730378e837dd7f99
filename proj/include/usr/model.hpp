#pragma once

#include "usr/aude.hpp"
#include "usr/vddc.hpp"

namespace usr {

// Full trainable state: degradation extractor, uncertainty head, SR network.
struct UsrModel {
    sr::SRConfig cfg;
    aude::DEParams de;
    aude::ContrastParams contrast;
    sr::USRParams srnet;
};

// Zero-valued parameters with requires_grad set; call init_model for the
// training initialization (He-uniform weights, zero biases, unit LN gamma).
UsrModel make_model(const sr::SRConfig& cfg);
void init_model(UsrModel& model, std::uint64_t seed);

// Canonical parameter order (de.*, contrast.*, sr.*); names are checkpoint
// identities.
std::vector<nn::Parameter> all_parameters(const UsrModel& model);
std::vector<nn::Parameter> de_side_parameters(const UsrModel& model);  // de.* + contrast.*
std::vector<nn::Parameter> sr_side_parameters(const UsrModel& model);

}  // namespace usr
