#include "usr/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "usr/checkpoint.hpp"
#include "usr/diagnostics.hpp"
#include "usr/gradsuite.hpp"
#include "usr/model.hpp"
#include "usr/ppm.hpp"
#include "usr/trainer.hpp"

namespace usr::cli {

namespace fs = std::filesystem;

namespace {

std::string read_text_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open file: " + path);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::string index_name(const char* prefix, int i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%04d.%s", prefix, i, ext);
    return buf;
}

void echo_run_config(const std::string& command, const nlohmann::json& resolved,
                     const std::string& out_dir) {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = resolved;
    const std::string text = j.dump(2) + "\n";
    std::cout << text;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        eval::write_text_file(out_dir + "/run.json", text);
    }
}

UsrModel load_model_for(const std::string& ckpt_path, const sr::SRConfig& cfg) {
    UsrModel model = make_model(cfg);
    auto params = all_parameters(model);
    train::load_checkpoint(ckpt_path, params);
    return model;
}

sr::SRConfig sr_config_from(const std::string& config_path) {
    if (config_path.empty()) return sr::SRConfig{};
    return train::config_from_json(read_text_file(config_path)).sr;
}

// dataset directory listing shared by eval/cluster
struct DirSample {
    std::string stem;
    img::ImageBuffer hr, lr;
    bool has_hr = false;
    degrade::DegradationRecord record;
    bool has_record = false;
};

std::vector<DirSample> load_dir_samples(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir);
    std::vector<std::string> stems;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("lr_", 0) == 0 && e.path().extension() == ".ppm")
            stems.push_back(name.substr(3, name.size() - 7));
    }
    std::sort(stems.begin(), stems.end());
    if (stems.empty()) throw DataError("no lr_*.ppm images in " + dir);
    std::vector<DirSample> out;
    for (const auto& stem : stems) {
        DirSample s;
        s.stem = stem;
        s.lr = img::read_ppm(dir + "/lr_" + stem + ".ppm");
        const std::string hr_path = dir + "/hr_" + stem + ".ppm";
        if (fs::exists(hr_path)) {
            s.hr = img::read_ppm(hr_path);
            s.has_hr = true;
        }
        const std::string rec_path = dir + "/rec_" + stem + ".json";
        if (fs::exists(rec_path)) {
            s.record = degrade::record_from_json(read_text_file(rec_path));
            s.has_record = true;
        }
        out.push_back(std::move(s));
    }
    return out;
}

nn::TensorPtr udr_for_variant(const UsrModel& model, const img::ImageBuffer& lr,
                              train::Variant variant) {
    if (variant == train::Variant::no_aude || variant == train::Variant::neither) return nullptr;
    return aude::infer_udr(lr, model.de, model.contrast);
}

bool variant_uses_ais(train::Variant v) {
    return v == train::Variant::full || v == train::Variant::no_aude;
}

// ---- subcommand bodies ----

int cmd_synth(int count, int size, const std::string& mode, std::uint64_t seed,
              const std::string& out_dir) {
    nlohmann::json resolved{{"count", count}, {"size", size}, {"mode", mode}, {"seed", seed},
                            {"out", out_dir}};
    echo_run_config("synth", resolved, out_dir);
    const auto samples = degrade::synth_dataset(count, size, mode, seed);
    for (int i = 0; i < count; ++i) {
        img::write_ppm(samples[static_cast<std::size_t>(i)].hr, out_dir + "/" + index_name("hr_", i, "ppm"));
        img::write_ppm(samples[static_cast<std::size_t>(i)].lr, out_dir + "/" + index_name("lr_", i, "ppm"));
        eval::write_text_file(out_dir + "/" + index_name("rec_", i, "json"),
                              degrade::record_to_json(samples[static_cast<std::size_t>(i)].record) + "\n");
    }
    std::cout << "wrote " << count << " hr/lr/record triples to " << out_dir << "\n";
    return kOk;
}

int cmd_degrade(const std::string& config_path, const std::string& in_dir,
                const std::string& out_dir, std::uint64_t seed) {
    const degrade::DegradationSpec spec = degrade::spec_from_json(read_text_file(config_path));
    nlohmann::json resolved{{"config", config_path},
                            {"in", in_dir},
                            {"out", out_dir},
                            {"seed", seed},
                            {"spec", nlohmann::json::parse(degrade::spec_to_json(spec))}};
    echo_run_config("degrade", resolved, out_dir);

    if (!fs::is_directory(in_dir)) throw DataError("input directory not found: " + in_dir);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(in_dir))
        if (e.path().extension() == ".ppm") names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw DataError("no .ppm images in " + in_dir);

    std::uint64_t idx = 0;
    for (const auto& name : names) {
        const img::ImageBuffer hr = img::read_ppm(in_dir + "/" + name);
        nn::DeterministicRng rng(seed, idx, "degrade");
        auto [lr, rec] = degrade::degrade_pipeline(hr, spec, rng);
        std::string stem = name.substr(0, name.size() - 4);
        if (stem.rfind("hr_", 0) == 0) stem = stem.substr(3);
        img::write_ppm(lr, out_dir + "/lr_" + stem + ".ppm");
        eval::write_text_file(out_dir + "/rec_" + stem + ".json", degrade::record_to_json(rec) + "\n");
        ++idx;
    }
    std::cout << "degraded " << names.size() << " images into " << out_dir << "\n";
    return kOk;
}

int cmd_train(const std::string& config_path, const std::string& stage, const std::string& variant,
              const std::string& ckpt_in, const std::string& ckpt_out, std::int64_t seed_override) {
    train::TrainConfig cfg;
    if (!config_path.empty()) cfg = train::config_from_json(read_text_file(config_path));
    if (!variant.empty()) cfg.variant = train::variant_from_name(variant);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);

    const std::string out_dir = fs::path(ckpt_out).parent_path().string();
    echo_run_config("train",
                    nlohmann::json{{"stage", stage},
                                   {"ckpt_in", ckpt_in},
                                   {"ckpt_out", ckpt_out},
                                   {"train", nlohmann::json::parse(train::config_to_json(cfg))}},
                    out_dir);

    UsrModel model = make_model(cfg.sr);
    init_model(model, cfg.seed);
    auto params = all_parameters(model);
    if (!ckpt_in.empty()) train::load_checkpoint(ckpt_in, params);

    const train::Dataset data = train::load_dataset(cfg.dataset, cfg.seed);
    train::MetricsLog log;
    int exit_code = kOk;
    try {
        if (stage == "1")
            train::train_stage1(cfg, data, model, log);
        else if (stage == "2")
            train::train_stage2(cfg, data, model, log);
        else if (stage == "3")
            train::train_stage3(cfg, data, model, log);
        else if (stage == "all")
            train::train_all(cfg, data, model, log);
        else
            throw ParameterError("stage must be one of 1|2|3|all");
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << " (saving last finite checkpoint)\n";
        exit_code = kNumericError;
    }

    train::save_checkpoint(params, ckpt_out);
    eval::write_text_file(ckpt_out + ".metrics.csv", log.to_csv());
    if (log.any_collapse())
        std::cerr << "warning: degradation-extractor collapse flagged during stage 2 "
                     "(see metrics log)\n";
    std::cout << "checkpoint: " << ckpt_out << "\nmetrics: " << ckpt_out << ".metrics.csv\n";
    return exit_code;
}

int cmd_sr(const std::string& ckpt, const std::string& in_path, const std::string& out_path,
           const std::string& config_path, const std::string& variant) {
    const sr::SRConfig cfg = sr_config_from(config_path);
    echo_run_config("sr",
                    nlohmann::json{{"ckpt", ckpt}, {"in", in_path}, {"out", out_path},
                                   {"variant", variant}},
                    "");
    const UsrModel model = load_model_for(ckpt, cfg);
    const train::Variant var = train::variant_from_name(variant);
    const img::ImageBuffer lr = img::read_ppm(in_path);
    const auto udr = udr_for_variant(model, lr, var);
    const img::ImageBuffer out =
        sr::usr_forward_image(lr, udr, model.srnet, cfg, variant_uses_ais(var));
    img::write_ppm(out, out_path);
    std::cout << "wrote " << out_path << " (" << out.width << "x" << out.height << ")\n";
    return kOk;
}

int cmd_eval(const std::string& ckpt, const std::string& dataset, const std::string& report,
             const std::string& config_path, const std::string& variant) {
    const sr::SRConfig cfg = sr_config_from(config_path);
    echo_run_config("eval",
                    nlohmann::json{{"ckpt", ckpt}, {"dataset", dataset}, {"report", report},
                                   {"variant", variant}},
                    fs::path(report).parent_path().string());
    const UsrModel model = load_model_for(ckpt, cfg);
    const train::Variant var = train::variant_from_name(variant);

    eval::QualityReport rep;
    for (const auto& s : load_dir_samples(dataset)) {
        if (!s.has_hr) throw DataError("eval: missing hr_" + s.stem + ".ppm");
        const auto udr = udr_for_variant(model, s.lr, var);
        const img::ImageBuffer pred =
            sr::usr_forward_image(s.lr, udr, model.srnet, cfg, variant_uses_ais(var));
        rep.rows.push_back({s.stem, eval::psnr(pred, s.hr), eval::ssim(pred, s.hr)});
    }
    rep.finalize();
    eval::write_text_file(report, eval::quality_csv(rep));
    std::printf("images: %zu  mean_psnr: %.4f dB  mean_ssim: %.4f\n", rep.rows.size(), rep.mean_psnr,
                rep.mean_ssim);
    return kOk;
}

int cmd_stability(const std::string& ckpt, const std::string& image_path, int patches,
                  int patch_size, std::uint64_t seed, const std::string& report,
                  const std::string& config_path) {
    const sr::SRConfig cfg = sr_config_from(config_path);
    echo_run_config("stability",
                    nlohmann::json{{"ckpt", ckpt}, {"image", image_path}, {"patches", patches},
                                   {"patch_size", patch_size}, {"seed", seed}, {"report", report}},
                    fs::path(report).parent_path().string());
    const UsrModel model = load_model_for(ckpt, cfg);
    const img::ImageBuffer image = img::read_ppm(image_path);
    nn::DeterministicRng rng(seed, 0, "stability");
    const eval::UdrFn fn = [&model](const img::ImageBuffer& p) {
        return aude::infer_udr(p, model.de, model.contrast)->data;
    };
    eval::StabilityReport rep = eval::stability_metric(fn, image, patches, patch_size, rng);
    rep.image = fs::path(image_path).filename().string();
    eval::write_text_file(report, eval::stability_csv({rep}));
    std::printf("instability: %.8g over %d patches (%d dims)\n", rep.instability, patches, rep.dims);
    return kOk;
}

int cmd_cluster(const std::string& ckpt, const std::string& dataset, const std::string& report,
                const std::string& svg, const std::string& config_path) {
    const sr::SRConfig cfg = sr_config_from(config_path);
    echo_run_config("cluster",
                    nlohmann::json{{"ckpt", ckpt}, {"dataset", dataset}, {"report", report},
                                   {"svg", svg}},
                    fs::path(report).parent_path().string());
    const UsrModel model = load_model_for(ckpt, cfg);

    std::vector<eval::ClusterSample> samples;
    for (const auto& s : load_dir_samples(dataset)) {
        if (!s.has_record) throw DataError("cluster: missing rec_" + s.stem + ".json");
        samples.push_back(
            {aude::infer_udr(s.lr, model.de, model.contrast)->data, s.record.mode});
    }
    const eval::ClusterReport rep = eval::cluster_separability(samples);
    eval::write_text_file(report, eval::cluster_csv(rep));
    if (!svg.empty()) eval::write_text_file(svg, eval::cluster_svg(rep));
    if (rep.degenerate) std::cerr << "warning: all UDRs identical; silhouette defined as 0\n";
    std::printf("samples: %zu  silhouette: %.6f\n", samples.size(), rep.silhouette);
    return kOk;
}

int cmd_gradcheck(const std::string& module) {
    echo_run_config("gradcheck", nlohmann::json{{"module", module}}, "");
    const auto entries = nn::run_gradcheck_suite(module);
    bool ok = true;
    std::printf("%-28s %-14s %s\n", "operation", "max_rel_err", "status");
    for (const auto& e : entries) {
        const bool pass = e.max_rel_err <= nn::kGradCheckTolerance;
        ok = ok && pass;
        std::printf("%-28s %-14.3e %s\n", e.name.c_str(), e.max_rel_err, pass ? "ok" : "FAIL");
    }
    if (!ok) {
        std::cerr << "gradient check failed (tolerance " << nn::kGradCheckTolerance << ")\n";
        return kNumericError;
    }
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"USR blind super-resolution toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a procedural HR/LR dataset");
    int sy_count = 8, sy_size = 96;
    std::string sy_mode = "bnj", sy_out;
    std::uint64_t sy_seed = 0;
    synth->add_option("--count", sy_count, "Number of images")->required();
    synth->add_option("--size", sy_size, "HR image size in pixels");
    synth->add_option("--mode", sy_mode, "Degradation preset: bnj|bn|bj|mix")
        ->check(CLI::IsMember({"bnj", "bn", "bj", "mix"}));
    synth->add_option("--seed", sy_seed, "RNG seed");
    synth->add_option("--out", sy_out, "Output directory")->required();

    // degrade
    auto* degrade_cmd = app.add_subcommand("degrade", "Degrade a directory of HR images");
    std::string dg_config, dg_in, dg_out;
    std::uint64_t dg_seed = 0;
    degrade_cmd->add_option("--config", dg_config, "Degradation spec JSON")->required();
    degrade_cmd->add_option("--in", dg_in, "Input directory of .ppm images")->required();
    degrade_cmd->add_option("--out", dg_out, "Output directory")->required();
    degrade_cmd->add_option("--seed", dg_seed, "RNG seed");

    // train
    auto* train_cmd = app.add_subcommand("train", "Run the three-stage training protocol");
    std::string tr_config, tr_stage = "all", tr_variant, tr_in, tr_out;
    std::int64_t tr_seed = -1;
    train_cmd->add_option("--config", tr_config, "Train config JSON");
    train_cmd->add_option("--stage", tr_stage, "Stage: 1|2|3|all")
        ->check(CLI::IsMember({"1", "2", "3", "all"}));
    train_cmd->add_option("--variant", tr_variant, "Ablation variant: full|no-ais|no-aude|neither")
        ->check(CLI::IsMember({"full", "no-ais", "no-aude", "neither"}));
    train_cmd->add_option("--ckpt-in", tr_in, "Input checkpoint");
    train_cmd->add_option("--ckpt-out", tr_out, "Output checkpoint")->required();
    train_cmd->add_option("--seed", tr_seed, "Seed override");

    // sr
    auto* sr_cmd = app.add_subcommand("sr", "Super-resolve one image");
    std::string srr_ckpt, srr_in, srr_out, srr_config, srr_variant = "full";
    sr_cmd->add_option("--ckpt", srr_ckpt, "Checkpoint")->required();
    sr_cmd->add_option("--in", srr_in, "Input LR image (.ppm)")->required();
    sr_cmd->add_option("--out", srr_out, "Output image (.ppm)")->required();
    sr_cmd->add_option("--config", srr_config, "Train config JSON (for the network shape)");
    sr_cmd->add_option("--variant", srr_variant, "Variant: full|no-ais|no-aude|neither")
        ->check(CLI::IsMember({"full", "no-ais", "no-aude", "neither"}));

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM over a dataset directory");
    std::string ev_ckpt, ev_dataset, ev_report, ev_config, ev_variant = "full";
    eval_cmd->add_option("--ckpt", ev_ckpt, "Checkpoint")->required();
    eval_cmd->add_option("--dataset", ev_dataset, "Dataset directory")->required();
    eval_cmd->add_option("--report", ev_report, "Output CSV")->required();
    eval_cmd->add_option("--config", ev_config, "Train config JSON (for the network shape)");
    eval_cmd->add_option("--variant", ev_variant, "Variant: full|no-ais|no-aude|neither")
        ->check(CLI::IsMember({"full", "no-ais", "no-aude", "neither"}));

    // stability
    auto* st_cmd = app.add_subcommand("stability", "Patch-stability of the degradation extractor");
    std::string st_ckpt, st_image, st_report, st_config;
    int st_patches = 16, st_patch_size = 32;
    std::uint64_t st_seed = 0;
    st_cmd->add_option("--ckpt", st_ckpt, "Checkpoint")->required();
    st_cmd->add_option("--image", st_image, "Input image (.ppm)")->required();
    st_cmd->add_option("--patches", st_patches, "Number of random patches");
    st_cmd->add_option("--patch-size", st_patch_size, "Patch size (>= 16)");
    st_cmd->add_option("--seed", st_seed, "RNG seed");
    st_cmd->add_option("--report", st_report, "Output CSV")->required();
    st_cmd->add_option("--config", st_config, "Train config JSON (for the network shape)");

    // cluster
    auto* cl_cmd = app.add_subcommand("cluster", "Degradation-mode separability of UDRs");
    std::string cl_ckpt, cl_dataset, cl_report, cl_svg, cl_config;
    cl_cmd->add_option("--ckpt", cl_ckpt, "Checkpoint")->required();
    cl_cmd->add_option("--dataset", cl_dataset, "Dataset directory (with rec_*.json)")->required();
    cl_cmd->add_option("--report", cl_report, "Output CSV")->required();
    cl_cmd->add_option("--svg", cl_svg, "Output SVG scatter");
    cl_cmd->add_option("--config", cl_config, "Train config JSON (for the network shape)");

    // gradcheck
    auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    std::string gc_module = "all";
    gc_cmd->add_option("--module", gc_module, "Suite: all|nn|aude|vddc")
        ->check(CLI::IsMember({"all", "nn", "aude", "vddc"}));

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsageError;
    }

    try {
        if (synth->parsed()) return cmd_synth(sy_count, sy_size, sy_mode, sy_seed, sy_out);
        if (degrade_cmd->parsed()) return cmd_degrade(dg_config, dg_in, dg_out, dg_seed);
        if (train_cmd->parsed()) return cmd_train(tr_config, tr_stage, tr_variant, tr_in, tr_out, tr_seed);
        if (sr_cmd->parsed()) return cmd_sr(srr_ckpt, srr_in, srr_out, srr_config, srr_variant);
        if (eval_cmd->parsed()) return cmd_eval(ev_ckpt, ev_dataset, ev_report, ev_config, ev_variant);
        if (st_cmd->parsed())
            return cmd_stability(st_ckpt, st_image, st_patches, st_patch_size, st_seed, st_report,
                                 st_config);
        if (cl_cmd->parsed()) return cmd_cluster(cl_ckpt, cl_dataset, cl_report, cl_svg, cl_config);
        if (gc_cmd->parsed()) return cmd_gradcheck(gc_module);
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kNumericError;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDataError;
    }
    return kUsageError;
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace usr::cli
