#include "usr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

namespace usr::degrade {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int sample_odd(nn::DeterministicRng& rng, int lo, int hi) {
    const int first = (lo % 2 == 1) ? lo : lo + 1;
    const int count = (hi - first) / 2 + 1;
    if (count <= 0) throw ParameterError("no odd kernel size in range");
    return first + 2 * static_cast<int>(rng.next_int(0, count - 1));
}

}  // namespace

DegradationSpec preset_spec(const std::string& name) {
    DegradationSpec spec;
    spec.mode_label = name;
    if (name == "bnj") {
        spec.stages = {BlurRange{}, ResizeRange{}, NoiseRange{}, JpegRange{}};
    } else if (name == "bn") {
        spec.stages = {BlurRange{}, ResizeRange{}, NoiseRange{}};
    } else if (name == "bj") {
        spec.stages = {BlurRange{}, ResizeRange{}, JpegRange{}};
    } else if (name == "full") {
        ResizeRange rr;
        rr.to_final = false;
        spec.stages = {BlurRange{}, rr, NoiseRange{}, JpegRange{}};
        spec.order = PipelineOrder::random_half;
    } else {
        throw ParameterError("unknown degradation preset: " + name);
    }
    return spec;
}

bool is_preset_name(const std::string& name) {
    return name == "bnj" || name == "bn" || name == "bj" || name == "full";
}

std::pair<ImageBuffer, DegradationRecord> degrade_pipeline(const ImageBuffer& hr,
                                                           const DegradationSpec& spec,
                                                           nn::DeterministicRng& rng) {
    img::validate(hr, "degrade_pipeline");
    if (spec.final_scale < 1) throw ParameterError("final_scale must be >= 1");
    if (hr.height % spec.final_scale != 0 || hr.width % spec.final_scale != 0)
        throw DataError("HR dims must be multiples of final_scale");

    const int target_h = hr.height / spec.final_scale;
    const int target_w = hr.width / spec.final_scale;

    int passes = 1;
    if (spec.order == PipelineOrder::second)
        passes = 2;
    else if (spec.order == PipelineOrder::random_half)
        passes = rng.next_uniform() < 0.5 ? 2 : 1;

    DegradationRecord rec;
    rec.mode = spec.mode_label;
    rec.final_scale = spec.final_scale;
    rec.seed = rng.seed();
    rec.sample_index = rng.sample_index();
    rec.hr_height = hr.height;
    rec.hr_width = hr.width;

    ImageBuffer cur = hr;
    int noise_counter = 0;
    for (int pass = 0; pass < passes; ++pass) {
        const bool last_pass = pass == passes - 1;
        for (const StageRange& stage : spec.stages) {
            if (const auto* br = std::get_if<BlurRange>(&stage)) {
                int size = sample_odd(rng, br->size_min, br->size_max);
                const int max_size = std::min(cur.height, cur.width) - 1;
                while (size > max_size && size > 7) size -= 2;
                const double sx = rng.next_uniform(br->sigma_min, br->sigma_max);
                const double sy = br->isotropic ? sx : rng.next_uniform(br->sigma_min, br->sigma_max);
                const double theta = rng.next_uniform(0.0, kPi);
                BlurKernel k = make_gaussian_kernel(size, sx, sy, theta);
                cur = apply_blur(cur, k);
                rec.ops.push_back(BlurOp{size, sx, sy, theta, k.weights});
            } else if (const auto* rr = std::get_if<ResizeRange>(&stage)) {
                int oh, ow;
                if (last_pass || rr->to_final) {
                    oh = target_h;
                    ow = target_w;
                } else {
                    const double s = rng.next_uniform(rr->scale_min, rr->scale_max);
                    oh = std::max(8, static_cast<int>(std::lround(cur.height * s)));
                    ow = std::max(8, static_cast<int>(std::lround(cur.width * s)));
                }
                const ResizeMode mode =
                    rr->modes[static_cast<std::size_t>(rng.next_int(0, static_cast<int>(rr->modes.size()) - 1))];
                cur = resize(cur, oh, ow, mode);
                rec.ops.push_back(ResizeOp{oh, ow, mode});
            } else if (const auto* nr = std::get_if<NoiseRange>(&stage)) {
                const NoiseKind kind = rng.next_uniform() < nr->gray_prob ? NoiseKind::gaussian_gray
                                                                          : NoiseKind::gaussian_color;
                const double sigma = rng.next_uniform(nr->sigma_min, nr->sigma_max);
                const std::string purpose = "noise-" + std::to_string(noise_counter++);
                nn::DeterministicRng noise_rng(rng.seed(), rng.sample_index(), purpose);
                cur = add_noise(cur, kind, sigma, noise_rng);
                rec.ops.push_back(NoiseOp{kind, sigma, rng.seed(), rng.sample_index(), purpose});
            } else if (const auto* jr = std::get_if<JpegRange>(&stage)) {
                const int q = static_cast<int>(rng.next_int(jr->quality_min, jr->quality_max));
                cur = jpeg_degrade(cur, q);
                rec.ops.push_back(JpegOp{q});
            }
        }
    }

    if (cur.height != target_h || cur.width != target_w) {
        cur = resize(cur, target_h, target_w, ResizeMode::area);
        rec.ops.push_back(ResizeOp{target_h, target_w, ResizeMode::area});
    }
    return {std::move(cur), std::move(rec)};
}

ImageBuffer replay_record(const ImageBuffer& hr, const DegradationRecord& record) {
    ImageBuffer cur = hr;
    for (const AppliedOp& op : record.ops) {
        if (const auto* b = std::get_if<BlurOp>(&op)) {
            BlurKernel k;
            k.size = b->size;
            k.sigma_x = b->sigma_x;
            k.sigma_y = b->sigma_y;
            k.theta = b->theta;
            k.weights = b->weights;
            cur = apply_blur(cur, k);
        } else if (const auto* r = std::get_if<ResizeOp>(&op)) {
            cur = resize(cur, r->out_h, r->out_w, r->mode);
        } else if (const auto* n = std::get_if<NoiseOp>(&op)) {
            nn::DeterministicRng rng(n->rng_seed, n->rng_sample_index, n->rng_purpose);
            cur = add_noise(cur, n->kind, n->sigma, rng);
        } else if (const auto* j = std::get_if<JpegOp>(&op)) {
            cur = jpeg_degrade(cur, j->quality);
        }
    }
    return cur;
}

std::string record_to_json(const DegradationRecord& record) {
    std::string s = "{\"mode\":\"" + record.mode + "\"";
    s += ",\"final_scale\":" + std::to_string(record.final_scale);
    s += ",\"seed\":" + std::to_string(record.seed);
    s += ",\"sample_index\":" + std::to_string(record.sample_index);
    s += ",\"hr_height\":" + std::to_string(record.hr_height);
    s += ",\"hr_width\":" + std::to_string(record.hr_width);
    s += ",\"ops\":[";
    for (std::size_t i = 0; i < record.ops.size(); ++i) {
        if (i) s += ",";
        const AppliedOp& op = record.ops[i];
        if (const auto* b = std::get_if<BlurOp>(&op)) {
            s += "{\"op\":\"blur\",\"size\":" + std::to_string(b->size);
            s += ",\"sigma_x\":" + fmt_double(b->sigma_x);
            s += ",\"sigma_y\":" + fmt_double(b->sigma_y);
            s += ",\"theta\":" + fmt_double(b->theta);
            s += ",\"weights\":[";
            for (std::size_t k = 0; k < b->weights.size(); ++k) {
                if (k) s += ",";
                s += fmt_double(b->weights[k]);
            }
            s += "]}";
        } else if (const auto* r = std::get_if<ResizeOp>(&op)) {
            s += "{\"op\":\"resize\",\"out_h\":" + std::to_string(r->out_h);
            s += ",\"out_w\":" + std::to_string(r->out_w);
            s += ",\"mode\":\"" + std::string(resize_mode_name(r->mode)) + "\"}";
        } else if (const auto* n = std::get_if<NoiseOp>(&op)) {
            s += "{\"op\":\"noise\",\"kind\":\"" + std::string(noise_kind_name(n->kind)) + "\"";
            s += ",\"sigma\":" + fmt_double(n->sigma);
            s += ",\"rng_seed\":" + std::to_string(n->rng_seed);
            s += ",\"rng_sample_index\":" + std::to_string(n->rng_sample_index);
            s += ",\"rng_purpose\":\"" + n->rng_purpose + "\"}";
        } else if (const auto* j = std::get_if<JpegOp>(&op)) {
            s += "{\"op\":\"jpeg\",\"quality\":" + std::to_string(j->quality) + "}";
        }
    }
    s += "]}";
    return s;
}

DegradationRecord record_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad degradation record: ") + e.what());
    }
    try {
        DegradationRecord rec;
        rec.mode = j.at("mode").get<std::string>();
        rec.final_scale = j.at("final_scale").get<int>();
        rec.seed = j.at("seed").get<std::uint64_t>();
        rec.sample_index = j.at("sample_index").get<std::uint64_t>();
        rec.hr_height = j.at("hr_height").get<int>();
        rec.hr_width = j.at("hr_width").get<int>();
        for (const auto& o : j.at("ops")) {
            const std::string kind = o.at("op").get<std::string>();
            if (kind == "blur") {
                BlurOp b;
                b.size = o.at("size").get<int>();
                b.sigma_x = o.at("sigma_x").get<double>();
                b.sigma_y = o.at("sigma_y").get<double>();
                b.theta = o.at("theta").get<double>();
                b.weights = o.at("weights").get<std::vector<double>>();
                rec.ops.push_back(std::move(b));
            } else if (kind == "resize") {
                rec.ops.push_back(ResizeOp{o.at("out_h").get<int>(), o.at("out_w").get<int>(),
                                           resize_mode_from_name(o.at("mode").get<std::string>())});
            } else if (kind == "noise") {
                rec.ops.push_back(NoiseOp{noise_kind_from_name(o.at("kind").get<std::string>()),
                                          o.at("sigma").get<double>(), o.at("rng_seed").get<std::uint64_t>(),
                                          o.at("rng_sample_index").get<std::uint64_t>(),
                                          o.at("rng_purpose").get<std::string>()});
            } else if (kind == "jpeg") {
                rec.ops.push_back(JpegOp{o.at("quality").get<int>()});
            } else {
                throw DataError("unknown record op: " + kind);
            }
        }
        return rec;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad degradation record: ") + e.what());
    }
}

std::string spec_to_json(const DegradationSpec& spec) {
    nlohmann::json j;
    j["mode_label"] = spec.mode_label;
    j["final_scale"] = spec.final_scale;
    j["order"] = spec.order == PipelineOrder::first
                     ? "first"
                     : (spec.order == PipelineOrder::second ? "second" : "random");
    nlohmann::json stages = nlohmann::json::array();
    for (const StageRange& st : spec.stages) {
        nlohmann::json o;
        if (const auto* b = std::get_if<BlurRange>(&st)) {
            o["kind"] = "blur";
            o["size_min"] = b->size_min;
            o["size_max"] = b->size_max;
            o["sigma_min"] = b->sigma_min;
            o["sigma_max"] = b->sigma_max;
            o["isotropic"] = b->isotropic;
        } else if (const auto* r = std::get_if<ResizeRange>(&st)) {
            o["kind"] = "resize";
            o["to_final"] = r->to_final;
            o["scale_min"] = r->scale_min;
            o["scale_max"] = r->scale_max;
            std::vector<std::string> names;
            for (ResizeMode m : r->modes) names.emplace_back(resize_mode_name(m));
            o["modes"] = names;
        } else if (const auto* n = std::get_if<NoiseRange>(&st)) {
            o["kind"] = "noise";
            o["sigma_min"] = n->sigma_min;
            o["sigma_max"] = n->sigma_max;
            o["gray_prob"] = n->gray_prob;
        } else if (const auto* jp = std::get_if<JpegRange>(&st)) {
            o["kind"] = "jpeg";
            o["quality_min"] = jp->quality_min;
            o["quality_max"] = jp->quality_max;
        }
        stages.push_back(o);
    }
    j["stages"] = stages;
    return j.dump(2);
}

DegradationSpec spec_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad degradation spec: ") + e.what());
    }
    try {
        if (j.contains("preset")) {
            DegradationSpec spec = preset_spec(j.at("preset").get<std::string>());
            if (j.contains("final_scale")) spec.final_scale = j.at("final_scale").get<int>();
            return spec;
        }
        DegradationSpec spec;
        if (j.contains("mode_label")) spec.mode_label = j.at("mode_label").get<std::string>();
        if (j.contains("final_scale")) spec.final_scale = j.at("final_scale").get<int>();
        if (j.contains("order")) {
            const std::string o = j.at("order").get<std::string>();
            if (o == "first")
                spec.order = PipelineOrder::first;
            else if (o == "second")
                spec.order = PipelineOrder::second;
            else if (o == "random")
                spec.order = PipelineOrder::random_half;
            else
                throw DataError("unknown pipeline order: " + o);
        }
        for (const auto& o : j.at("stages")) {
            const std::string kind = o.at("kind").get<std::string>();
            if (kind == "blur") {
                BlurRange b;
                if (o.contains("size_min")) b.size_min = o.at("size_min").get<int>();
                if (o.contains("size_max")) b.size_max = o.at("size_max").get<int>();
                if (o.contains("sigma_min")) b.sigma_min = o.at("sigma_min").get<double>();
                if (o.contains("sigma_max")) b.sigma_max = o.at("sigma_max").get<double>();
                if (o.contains("isotropic")) b.isotropic = o.at("isotropic").get<bool>();
                spec.stages.push_back(b);
            } else if (kind == "resize") {
                ResizeRange r;
                if (o.contains("to_final")) r.to_final = o.at("to_final").get<bool>();
                if (o.contains("scale_min")) r.scale_min = o.at("scale_min").get<double>();
                if (o.contains("scale_max")) r.scale_max = o.at("scale_max").get<double>();
                if (o.contains("modes")) {
                    r.modes.clear();
                    for (const auto& m : o.at("modes"))
                        r.modes.push_back(resize_mode_from_name(m.get<std::string>()));
                    if (r.modes.empty()) throw DataError("resize stage needs at least one mode");
                }
                spec.stages.push_back(r);
            } else if (kind == "noise") {
                NoiseRange n;
                if (o.contains("sigma_min")) n.sigma_min = o.at("sigma_min").get<double>();
                if (o.contains("sigma_max")) n.sigma_max = o.at("sigma_max").get<double>();
                if (o.contains("gray_prob")) n.gray_prob = o.at("gray_prob").get<double>();
                spec.stages.push_back(n);
            } else if (kind == "jpeg") {
                JpegRange jp;
                if (o.contains("quality_min")) jp.quality_min = o.at("quality_min").get<int>();
                if (o.contains("quality_max")) jp.quality_max = o.at("quality_max").get<int>();
                spec.stages.push_back(jp);
            } else {
                throw DataError("unknown stage kind: " + kind);
            }
        }
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad degradation spec: ") + e.what());
    }
}

ImageBuffer synth_hr_image(int size, std::uint64_t seed, std::uint64_t sample_index) {
    if (size < 8) throw ParameterError("synth image size must be >= 8");
    nn::DeterministicRng rng(seed, sample_index, "synth-hr");
    ImageBuffer img = ImageBuffer::zeros(3, size, size);

    for (int k = 0; k < 4; ++k) {
        const double fx = rng.next_uniform(0.5, 8.0);
        const double fy = rng.next_uniform(0.5, 8.0);
        const double phase = rng.next_uniform(0.0, 2.0 * kPi);
        double amp[3];
        for (double& a : amp) a = rng.next_uniform(0.0, 1.0);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const double v =
                    std::sin(2.0 * kPi * (fx * x / size + fy * y / size) + phase);
                for (int c = 0; c < 3; ++c) img.at(c, y, x) += amp[c] * v;
            }
        }
    }
    for (int r = 0; r < 3; ++r) {
        int ya = static_cast<int>(rng.next_int(0, size - 1));
        int yb = static_cast<int>(rng.next_int(0, size - 1));
        int xa = static_cast<int>(rng.next_int(0, size - 1));
        int xb = static_cast<int>(rng.next_int(0, size - 1));
        if (ya > yb) std::swap(ya, yb);
        if (xa > xb) std::swap(xa, xb);
        double val[3];
        for (double& v : val) v = rng.next_uniform(-1.0, 1.0);
        for (int y = ya; y <= yb; ++y)
            for (int x = xa; x <= xb; ++x)
                for (int c = 0; c < 3; ++c) img.at(c, y, x) += val[c];
    }

    const auto [mn, mx] = std::minmax_element(img.data.begin(), img.data.end());
    const double lo = *mn, hi = *mx;
    if (hi - lo < 1e-12) {
        std::fill(img.data.begin(), img.data.end(), 0.5);
    } else {
        for (double& v : img.data) v = (v - lo) / (hi - lo);
    }
    return img;
}

std::vector<SynthSample> synth_dataset(int count, int size, const std::string& mode,
                                       std::uint64_t seed, std::uint64_t sample_offset) {
    if (count < 1) throw ParameterError("synth count must be >= 1");
    static const char* kMixCycle[3] = {"bnj", "bn", "bj"};
    const bool mix = mode == "mix";
    if (!mix && !is_preset_name(mode)) throw ParameterError("unknown degradation mode: " + mode);

    std::vector<SynthSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const std::uint64_t idx = sample_offset + static_cast<std::uint64_t>(i);
        SynthSample s;
        s.hr = synth_hr_image(size, seed, idx);
        const std::string m = mix ? kMixCycle[idx % 3] : mode;
        const DegradationSpec spec = preset_spec(m);
        if (size % spec.final_scale != 0) throw DataError("synth size must be a multiple of the scale");
        nn::DeterministicRng rng(seed, idx, "degrade");
        auto [lr, rec] = degrade_pipeline(s.hr, spec, rng);
        s.lr = std::move(lr);
        s.record = std::move(rec);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace usr::degrade
