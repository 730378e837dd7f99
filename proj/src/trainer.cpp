#include "usr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "usr/ppm.hpp"

namespace usr::train {

namespace {

constexpr double kCollapseAlpha = 0.05;
constexpr double kCollapseLogvar = -10.0;
constexpr int kCollapseSteps = 100;

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double tensor_mean(const nn::Tensor& t) {
    double s = 0.0;
    for (double v : t.data) s += v;
    return s / static_cast<double>(t.data.size());
}

bool uses_de(Variant v) { return v == Variant::full || v == Variant::no_ais; }
bool uses_ais(Variant v) { return v == Variant::full || v == Variant::no_aude; }

}  // namespace

Variant variant_from_name(const std::string& name) {
    if (name == "full") return Variant::full;
    if (name == "no-ais") return Variant::no_ais;
    if (name == "no-aude") return Variant::no_aude;
    if (name == "neither") return Variant::neither;
    throw ParameterError("unknown variant: " + name);
}

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_ais: return "no-ais";
        case Variant::no_aude: return "no-aude";
        case Variant::neither: return "neither";
    }
    return "?";
}

std::string MetricsLog::to_csv() const {
    std::string s = csv_header();
    s += "\n";
    for (const auto& r : rows) {
        s += std::to_string(r.step) + "," + std::to_string(r.stage) + "," + fmt(r.loss) + "," +
             fmt(r.l_u) + "," + fmt(r.l_ur) + "," + fmt(r.alpha1) + "," + fmt(r.alpha2) + "," +
             fmt(r.mean_logvar) + "," + fmt(r.grad_norm) + "," + (r.collapse ? "1" : "0") + "\n";
    }
    return s;
}

bool MetricsLog::any_collapse() const {
    return std::any_of(rows.begin(), rows.end(), [](const MetricsRow& r) { return r.collapse; });
}

Dataset load_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    Dataset data;
    if (spec.kind == "procedural") {
        data.samples =
            degrade::synth_dataset(spec.count, spec.size, spec.mode, seed, spec.sample_offset);
    } else if (spec.kind == "directory") {
        namespace fs = std::filesystem;
        if (!fs::is_directory(spec.directory))
            throw DataError("dataset directory not found: " + spec.directory);
        std::vector<std::string> stems;
        for (const auto& e : fs::directory_iterator(spec.directory)) {
            const std::string name = e.path().filename().string();
            if (name.rfind("lr_", 0) == 0 && e.path().extension() == ".ppm")
                stems.push_back(name.substr(3, name.size() - 7));
        }
        std::sort(stems.begin(), stems.end());
        if (stems.empty()) throw DataError("no lr_*.ppm images in " + spec.directory);
        for (const auto& stem : stems) {
            degrade::SynthSample s;
            s.lr = img::read_ppm(spec.directory + "/lr_" + stem + ".ppm");
            const std::string hr_path = spec.directory + "/hr_" + stem + ".ppm";
            if (fs::exists(hr_path)) s.hr = img::read_ppm(hr_path);
            const std::string rec_path = spec.directory + "/rec_" + stem + ".json";
            if (fs::exists(rec_path)) {
                std::ifstream f(rec_path);
                std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
                s.record = degrade::record_from_json(text);
            }
            data.samples.push_back(std::move(s));
        }
    } else {
        throw ParameterError("unknown dataset kind: " + spec.kind);
    }
    return data;
}

namespace {

// Crop size honoring the window divisibility and the DE minimum.
int effective_patch(const TrainConfig& cfg, const img::ImageBuffer& lr, bool need_de) {
    int p = std::min({cfg.lr_patch, lr.height, lr.width});
    p -= p % cfg.sr.window;
    if (p < cfg.sr.window) throw DataError("LR image too small for the window size");
    if (need_de && p < 16) throw DataError("LR crop below the 16px DE minimum");
    return p;
}

void supervised_stage(const TrainConfig& cfg, const Dataset& data, UsrModel& model,
                      MetricsLog& log, int stage) {
    if (data.samples.empty()) throw DataError("empty training dataset");
    const bool de_on = uses_de(cfg.variant);
    const bool ais_on = uses_ais(cfg.variant);
    const int steps = stage == 1 ? cfg.stage1_steps : cfg.stage3_steps;
    const double lr = stage == 1 ? cfg.lr1 : cfg.lr3;
    const nn::LossKind loss_kind = stage == 1 ? nn::LossKind::mse : nn::LossKind::l1;
    const char* tag = stage == 1 ? "s1" : "s3";

    auto params = de_on ? all_parameters(model) : sr_side_parameters(model);
    nn::AdamState opt = nn::AdamState::init(params, lr);

    const int n = static_cast<int>(data.samples.size());
    for (int step = 0; step < steps; ++step) {
        nn::DeterministicRng rng(cfg.seed, static_cast<std::uint64_t>(step), tag);
        nn::zero_grads(params);

        nn::TensorPtr total;
        double alpha_sum = 0.0, logvar_sum = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& s = data.samples[static_cast<std::size_t>(rng.next_int(0, n - 1))];
            const int p = effective_patch(cfg, s.lr, de_on);
            const int y = static_cast<int>(rng.next_int(0, s.lr.height - p));
            const int x = static_cast<int>(rng.next_int(0, s.lr.width - p));
            const img::ImageBuffer lr_crop = s.lr.crop(y, x, p, p);
            const img::ImageBuffer hr_crop =
                s.hr.crop(y * cfg.sr.scale, x * cfg.sr.scale, p * cfg.sr.scale, p * cfg.sr.scale);

            nn::TensorPtr udr;
            if (de_on) {
                const aude::UncertainUDR stats = aude::de_forward(lr_crop, model.de, model.contrast);
                udr = stats.udr();
                alpha_sum += stats.alpha->value();
                logvar_sum += tensor_mean(*stats.logvar);
            }
            nn::TensorPtr pred = sr::usr_forward(lr_crop, udr, model.srnet, cfg.sr, ais_on);
            nn::TensorPtr li = nn::reconstruction_loss(loss_kind, pred, img::image_to_tensor(hr_crop));
            total = total ? nn::add(total, li) : li;
        }
        nn::TensorPtr loss = nn::scale(total, 1.0 / cfg.batch_size);
        if (!std::isfinite(loss->value()))
            throw NumericError("stage " + std::to_string(stage) + ": non-finite loss at step " +
                               std::to_string(step));
        loss->backward();
        const double gnorm = nn::grad_norm(params);
        nn::adam_step(params, opt);

        MetricsRow row;
        row.step = log.next_step();
        row.stage = stage;
        row.loss = loss->value();
        row.alpha1 = row.alpha2 = de_on ? alpha_sum / cfg.batch_size : 0.0;
        row.mean_logvar = de_on ? logvar_sum / cfg.batch_size : 0.0;
        row.grad_norm = gnorm;
        log.rows.push_back(row);
    }
}

}  // namespace

void train_stage1(const TrainConfig& cfg, const Dataset& data, UsrModel& model, MetricsLog& log) {
    supervised_stage(cfg, data, model, log, 1);
}

void train_stage2(const TrainConfig& cfg, const Dataset& data, UsrModel& model, MetricsLog& log) {
    if (!uses_de(cfg.variant)) return;  // no AUDE, nothing to self-supervise
    if (data.samples.empty()) throw DataError("empty training dataset");

    auto params = de_side_parameters(model);
    nn::AdamState opt = nn::AdamState::init(params, cfg.lr2);
    const aude::UncertaintyLossConfig lcfg{cfg.kT, cfg.lambda, cfg.num_samples};
    const int d = model.cfg.udr_dim();
    const int n = static_cast<int>(data.samples.size());

    int collapse_run = 0;
    for (int step = 0; step < cfg.stage2_steps; ++step) {
        nn::DeterministicRng rng(cfg.seed, static_cast<std::uint64_t>(step), "s2");
        nn::zero_grads(params);

        nn::TensorPtr total, total_lu, total_lur;
        double a1_sum = 0.0, a2_sum = 0.0, logvar_sum = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& s = data.samples[static_cast<std::size_t>(rng.next_int(0, n - 1))];
            const int p = std::min({cfg.pair_patch, s.lr.height, s.lr.width});
            if (p < 16) throw DataError("stage 2: pair patch below the 16px DE minimum");
            const aude::PatchPair pair = aude::sample_patch_pair(s.lr, p, rng);
            const aude::UncertainUDR s1 = aude::de_forward(pair.patch1, model.de, model.contrast);
            const aude::UncertainUDR s2 = aude::de_forward(pair.patch2, model.de, model.contrast);

            const int zn = cfg.num_samples * d;
            std::vector<double> z1(static_cast<std::size_t>(zn));
            std::vector<double> z2(static_cast<std::size_t>(zn));
            for (double& z : z1) z = rng.next_gaussian();
            for (double& z : z2) z = rng.next_gaussian();
            const auto zt1 = nn::Tensor::from_values({zn}, std::move(z1));
            const auto zt2 = nn::Tensor::from_values({zn}, std::move(z2));

            const aude::UsLossResult r = aude::us_loss(s1, s2, zt1, zt2, lcfg);
            total = total ? nn::add(total, r.loss) : r.loss;
            total_lu = total_lu ? nn::add(total_lu, r.l_u) : r.l_u;
            total_lur = total_lur ? nn::add(total_lur, r.l_ur) : r.l_ur;
            a1_sum += s1.alpha->value();
            a2_sum += s2.alpha->value();
            logvar_sum += 0.5 * (tensor_mean(*s1.logvar) + tensor_mean(*s2.logvar));
        }
        nn::TensorPtr loss = nn::scale(total, 1.0 / cfg.batch_size);
        if (!std::isfinite(loss->value()))
            throw NumericError("stage 2: non-finite loss at step " + std::to_string(step));
        loss->backward();
        const double gnorm = nn::grad_norm(params);
        nn::adam_step(params, opt);

        MetricsRow row;
        row.step = log.next_step();
        row.stage = 2;
        row.loss = loss->value();
        row.l_u = total_lu->value() / cfg.batch_size;
        row.l_ur = total_lur->value() / cfg.batch_size;
        row.alpha1 = a1_sum / cfg.batch_size;
        row.alpha2 = a2_sum / cfg.batch_size;
        row.mean_logvar = logvar_sum / cfg.batch_size;
        row.grad_norm = gnorm;

        const bool degenerate = (row.alpha1 < kCollapseAlpha && row.alpha2 < kCollapseAlpha) ||
                                row.mean_logvar < kCollapseLogvar;
        collapse_run = degenerate ? collapse_run + 1 : 0;
        row.collapse = collapse_run >= kCollapseSteps;
        log.rows.push_back(row);
    }
}

void train_stage3(const TrainConfig& cfg, const Dataset& data, UsrModel& model, MetricsLog& log) {
    supervised_stage(cfg, data, model, log, 3);
}

void train_all(const TrainConfig& cfg, const Dataset& data, UsrModel& model, MetricsLog& log) {
    train_stage1(cfg, data, model, log);
    train_stage2(cfg, data, model, log);
    train_stage3(cfg, data, model, log);
}

TrainConfig config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad train config: ") + e.what());
    }
    TrainConfig cfg;
    try {
        auto get = [&](const char* key, auto& dst) {
            if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
        };
        get("stage1_steps", cfg.stage1_steps);
        get("stage2_steps", cfg.stage2_steps);
        get("stage3_steps", cfg.stage3_steps);
        get("batch_size", cfg.batch_size);
        get("lr_patch", cfg.lr_patch);
        get("pair_patch", cfg.pair_patch);
        get("lr1", cfg.lr1);
        get("lr2", cfg.lr2);
        get("lr3", cfg.lr3);
        get("lambda", cfg.lambda);
        get("kT", cfg.kT);
        get("num_samples", cfg.num_samples);
        get("seed", cfg.seed);
        if (j.contains("variant")) cfg.variant = variant_from_name(j.at("variant").get<std::string>());
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            auto getd = [&](const char* key, auto& dst) {
                if (d.contains(key)) dst = d.at(key).get<std::decay_t<decltype(dst)>>();
            };
            getd("kind", cfg.dataset.kind);
            getd("count", cfg.dataset.count);
            getd("size", cfg.dataset.size);
            getd("mode", cfg.dataset.mode);
            getd("sample_offset", cfg.dataset.sample_offset);
            getd("directory", cfg.dataset.directory);
        }
        if (j.contains("sr")) {
            const auto& s = j.at("sr");
            auto gets = [&](const char* key, auto& dst) {
                if (s.contains(key)) dst = s.at(key).get<std::decay_t<decltype(dst)>>();
            };
            gets("channels", cfg.sr.channels);
            gets("n_vddc", cfg.sr.n_vddc);
            gets("habs_per_block", cfg.sr.habs_per_block);
            gets("window", cfg.sr.window);
            gets("heads", cfg.sr.heads);
            gets("dyn_kernel", cfg.sr.dyn_kernel);
            gets("scale", cfg.sr.scale);
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad train config: ") + e.what());
    }
    return cfg;
}

std::string config_to_json(const TrainConfig& cfg) {
    nlohmann::json j;
    j["stage1_steps"] = cfg.stage1_steps;
    j["stage2_steps"] = cfg.stage2_steps;
    j["stage3_steps"] = cfg.stage3_steps;
    j["batch_size"] = cfg.batch_size;
    j["lr_patch"] = cfg.lr_patch;
    j["pair_patch"] = cfg.pair_patch;
    j["lr1"] = cfg.lr1;
    j["lr2"] = cfg.lr2;
    j["lr3"] = cfg.lr3;
    j["lambda"] = cfg.lambda;
    j["kT"] = cfg.kT;
    j["num_samples"] = cfg.num_samples;
    j["seed"] = cfg.seed;
    j["variant"] = variant_name(cfg.variant);
    j["dataset"] = {{"kind", cfg.dataset.kind},         {"count", cfg.dataset.count},
                    {"size", cfg.dataset.size},         {"mode", cfg.dataset.mode},
                    {"sample_offset", cfg.dataset.sample_offset}, {"directory", cfg.dataset.directory}};
    j["sr"] = {{"channels", cfg.sr.channels},   {"n_vddc", cfg.sr.n_vddc},
               {"habs_per_block", cfg.sr.habs_per_block}, {"window", cfg.sr.window},
               {"heads", cfg.sr.heads},         {"dyn_kernel", cfg.sr.dyn_kernel},
               {"scale", cfg.sr.scale}};
    return j.dump(2);
}

}  // namespace usr::train
