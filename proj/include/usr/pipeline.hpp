#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "usr/degrade.hpp"
#include "usr/jpeg.hpp"

namespace usr::degrade {

// ---- ranged stage descriptors (sampled per image) ----

struct BlurRange {
    int size_min = 7, size_max = 21;
    double sigma_min = 0.2, sigma_max = 3.0;
    bool isotropic = false;
};

struct ResizeRange {
    // to_final resizes straight to HR/final_scale; otherwise a relative scale
    // is sampled from [scale_min, scale_max]. The pipeline forces the last
    // resize of the last pass to the final dims regardless.
    bool to_final = true;
    double scale_min = 0.5, scale_max = 1.0;
    std::vector<ResizeMode> modes{ResizeMode::bicubic, ResizeMode::bilinear, ResizeMode::area};
};

struct NoiseRange {
    double sigma_min = 1.0 / 255.0, sigma_max = 30.0 / 255.0;
    double gray_prob = 0.5;
};

struct JpegRange {
    int quality_min = 30, quality_max = 95;
};

using StageRange = std::variant<BlurRange, ResizeRange, NoiseRange, JpegRange>;

enum class PipelineOrder { first, second, random_half };

struct DegradationSpec {
    std::vector<StageRange> stages;
    PipelineOrder order = PipelineOrder::first;
    int final_scale = 4;
    std::string mode_label = "custom";
};

// Named presets: "bnj" (blur+noise+jpeg), "bn", "bj" — first-order pipelines —
// and "full" (all stages, second order with probability 0.5). "mix" is handled
// at dataset level by cycling bnj/bn/bj.
DegradationSpec preset_spec(const std::string& name);
bool is_preset_name(const std::string& name);

// ---- applied-operation records (exact sampled parameters) ----

struct BlurOp {
    int size;
    double sigma_x, sigma_y, theta;
    std::vector<double> weights;
};
struct ResizeOp {
    int out_h, out_w;
    ResizeMode mode;
};
struct NoiseOp {
    NoiseKind kind;
    double sigma;
    std::uint64_t rng_seed, rng_sample_index;
    std::string rng_purpose;
};
struct JpegOp {
    int quality;
};
using AppliedOp = std::variant<BlurOp, ResizeOp, NoiseOp, JpegOp>;

struct DegradationRecord {
    std::string mode = "custom";
    int final_scale = 4;
    std::uint64_t seed = 0, sample_index = 0;
    int hr_height = 0, hr_width = 0;
    std::vector<AppliedOp> ops;
};

// Applies the spec's stages in order (once or twice), sampling every ranged
// parameter from rng; the result is exactly HR/final_scale in each dimension
// and the record captures every sampled value.
std::pair<ImageBuffer, DegradationRecord> degrade_pipeline(const ImageBuffer& hr,
                                                           const DegradationSpec& spec,
                                                           nn::DeterministicRng& rng);

// Re-applies a record on the same HR; bit-identical to the original LR.
ImageBuffer replay_record(const ImageBuffer& hr, const DegradationRecord& record);

std::string record_to_json(const DegradationRecord& record);
DegradationRecord record_from_json(const std::string& text);

std::string spec_to_json(const DegradationSpec& spec);
DegradationSpec spec_from_json(const std::string& text);

// ---- procedural dataset ----

struct SynthSample {
    ImageBuffer hr;
    ImageBuffer lr;
    DegradationRecord record;
};

// HR images are sums of 4 seeded sinusoidal gratings plus 3 constant
// rectangles, min-max normalized to [0,1]. mode is a preset name or "mix"
// (cycles bnj/bn/bj by sample index). sample_offset shifts the per-image
// stream keys so disjoint corpora can share a seed.
std::vector<SynthSample> synth_dataset(int count, int size, const std::string& mode,
                                       std::uint64_t seed, std::uint64_t sample_offset = 0);
ImageBuffer synth_hr_image(int size, std::uint64_t seed, std::uint64_t sample_index);

}  // namespace usr::degrade
