#pragma once

#include "usr/adam.hpp"
#include "usr/model.hpp"
#include "usr/pipeline.hpp"

namespace usr::train {

// Ablation variants: no_ais pins gamma at 1, no_aude removes the degradation
// conditioning (udr absent, stage 2 skipped), neither does both.
enum class Variant { full, no_ais, no_aude, neither };
Variant variant_from_name(const std::string& name);
const char* variant_name(Variant v);

struct DatasetSpec {
    std::string kind = "procedural";  // "procedural" | "directory"
    int count = 32;
    int size = 96;
    std::string mode = "mix";
    std::uint64_t sample_offset = 0;
    std::string directory;
};

struct TrainConfig {
    int stage1_steps = 400;
    int stage2_steps = 300;
    int stage3_steps = 200;
    int batch_size = 4;
    int lr_patch = 48;   // LR-side crop for stages 1/3 (shrunk to the image)
    int pair_patch = 32; // stage-2 patch-pair size
    double lr1 = 2e-4;
    double lr2 = 1e-4;
    double lr3 = 5e-5;
    double lambda = 0.1;
    double kT = 1.0;
    int num_samples = 1;
    std::uint64_t seed = 0;
    Variant variant = Variant::full;
    DatasetSpec dataset;
    sr::SRConfig sr;
};

TrainConfig config_from_json(const std::string& text);
std::string config_to_json(const TrainConfig& cfg);

struct MetricsRow {
    std::int64_t step = 0;
    int stage = 0;
    double loss = 0.0;
    double l_u = 0.0;
    double l_ur = 0.0;
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    double mean_logvar = 0.0;
    double grad_norm = 0.0;
    bool collapse = false;
};

struct MetricsLog {
    std::vector<MetricsRow> rows;

    static const char* csv_header() {
        return "step,stage,loss,l_u,l_ur,alpha1,alpha2,mean_logvar,grad_norm,collapse";
    }
    std::string to_csv() const;
    std::int64_t next_step() const { return rows.empty() ? 1 : rows.back().step + 1; }
    bool any_collapse() const;
};

struct Dataset {
    std::vector<degrade::SynthSample> samples;
};

// Procedural synthesis (seeded) or a directory of hr_*.ppm / lr_*.ppm /
// rec_*.json triples (records optional; the seed is ignored).
Dataset load_dataset(const DatasetSpec& spec, std::uint64_t seed);

// Stage 1: joint DE+SR training under MSE. Stage 2: SR frozen, DE + alpha head
// under the uncertainty-suppression loss (skipped for variants without AUDE).
// Stage 3: everything unfrozen under L1. All stages are deterministic
// functions of (config, seed) and raise NumericError on a non-finite loss,
// leaving the model at the last finite state.
void train_stage1(const TrainConfig& cfg, const Dataset& data, UsrModel& model, MetricsLog& log);
void train_stage2(const TrainConfig& cfg, const Dataset& data, UsrModel& model, MetricsLog& log);
void train_stage3(const TrainConfig& cfg, const Dataset& data, UsrModel& model, MetricsLog& log);
void train_all(const TrainConfig& cfg, const Dataset& data, UsrModel& model, MetricsLog& log);

}  // namespace usr::train
