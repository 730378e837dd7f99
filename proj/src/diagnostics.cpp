#include "usr/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

namespace usr::eval {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

}  // namespace

StabilityReport stability_metric(const UdrFn& udr_fn, const img::ImageBuffer& image,
                                 int n_patches, int patch, nn::DeterministicRng& rng) {
    if (n_patches < 2) throw ParameterError("stability_metric: n_patches must be >= 2");
    if (image.height < patch || image.width < patch)
        throw DataError("stability_metric: image smaller than patch");

    std::vector<std::vector<double>> udrs;
    udrs.reserve(static_cast<std::size_t>(n_patches));
    for (int i = 0; i < n_patches; ++i) {
        const int y = static_cast<int>(rng.next_int(0, image.height - patch));
        const int x = static_cast<int>(rng.next_int(0, image.width - patch));
        udrs.push_back(udr_fn(image.crop(y, x, patch, patch)));
        if (udrs.back().size() != udrs.front().size())
            throw DimensionError("stability_metric: UDR dimension changed between patches");
    }

    const int d = static_cast<int>(udrs.front().size());
    StabilityReport rep;
    rep.dims = d;
    rep.mean.assign(static_cast<std::size_t>(d), 0.0);
    for (const auto& u : udrs)
        for (int k = 0; k < d; ++k) rep.mean[static_cast<std::size_t>(k)] += u[static_cast<std::size_t>(k)];
    for (double& m : rep.mean) m /= n_patches;

    double acc = 0.0;
    for (int k = 0; k < d; ++k) {
        double var = 0.0;
        for (const auto& u : udrs) {
            const double dv = u[static_cast<std::size_t>(k)] - rep.mean[static_cast<std::size_t>(k)];
            var += dv * dv;
        }
        acc += var / n_patches;
    }
    rep.instability = acc / d;
    return rep;
}

double silhouette_score(const std::vector<std::vector<double>>& points,
                        const std::vector<int>& labels) {
    const std::size_t n = points.size();
    if (n != labels.size() || n < 2) throw ParameterError("silhouette: bad inputs");
    int n_labels = 0;
    for (int l : labels) n_labels = std::max(n_labels, l + 1);
    if (n_labels < 2) throw ParameterError("silhouette: need at least 2 labels");

    std::vector<std::size_t> cluster_size(static_cast<std::size_t>(n_labels), 0);
    for (int l : labels) ++cluster_size[static_cast<std::size_t>(l)];

    auto dist = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t k = 0; k < points[i].size(); ++k) {
            const double d = points[i][k] - points[j][k];
            s += d * d;
        }
        return std::sqrt(s);
    };

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int li = labels[i];
        if (cluster_size[static_cast<std::size_t>(li)] <= 1) continue;  // singleton scores 0
        std::vector<double> sums(static_cast<std::size_t>(n_labels), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            sums[static_cast<std::size_t>(labels[j])] += dist(i, j);
        }
        const double a = sums[static_cast<std::size_t>(li)] /
                         static_cast<double>(cluster_size[static_cast<std::size_t>(li)] - 1);
        double b = 1e300;
        for (int l = 0; l < n_labels; ++l) {
            if (l == li || cluster_size[static_cast<std::size_t>(l)] == 0) continue;
            b = std::min(b, sums[static_cast<std::size_t>(l)] /
                                static_cast<double>(cluster_size[static_cast<std::size_t>(l)]));
        }
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

std::vector<std::vector<double>> pca_components(const std::vector<std::vector<double>>& data,
                                                int n_components) {
    if (data.empty()) throw ParameterError("pca: empty data");
    const std::size_t n = data.size(), d = data.front().size();

    std::vector<double> mean(d, 0.0);
    for (const auto& row : data)
        for (std::size_t k = 0; k < d; ++k) mean[k] += row[k];
    for (double& m : mean) m /= static_cast<double>(n);

    std::vector<std::vector<double>> centered(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) centered[i][k] = data[i][k] - mean[k];

    auto normalize_sign = [&](std::vector<double>& v) {
        for (double x : v) {
            if (std::abs(x) > 1e-12) {
                if (x < 0.0)
                    for (double& y : v) y = -y;
                return;
            }
        }
    };

    std::vector<std::vector<double>> comps;
    for (int c = 0; c < n_components; ++c) {
        nn::DeterministicRng rng(0x90CA5EEDull, static_cast<std::uint64_t>(c), "pca");
        std::vector<double> v(d);
        double norm = 0.0;
        for (double& x : v) {
            x = rng.next_gaussian();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;

        std::vector<double> proj(n);
        for (int it = 0; it < 200; ++it) {
            // v <- X^T X v without forming the covariance
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0.0;
                for (std::size_t k = 0; k < d; ++k) s += centered[i][k] * v[k];
                proj[i] = s;
            }
            std::vector<double> nv(d, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < d; ++k) nv[k] += proj[i] * centered[i][k];
            double nn_ = 0.0;
            for (double x : nv) nn_ += x * x;
            nn_ = std::sqrt(nn_);
            if (nn_ < 1e-300) break;  // degenerate direction; keep the previous v
            for (std::size_t k = 0; k < d; ++k) v[k] = nv[k] / nn_;
        }
        normalize_sign(v);
        // deflate
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += centered[i][k] * v[k];
            for (std::size_t k = 0; k < d; ++k) centered[i][k] -= s * v[k];
        }
        comps.push_back(std::move(v));
    }
    return comps;
}

ClusterReport cluster_separability(const std::vector<ClusterSample>& samples) {
    std::map<std::string, int> label_ids;
    std::vector<int> labels;
    std::vector<std::vector<double>> points;
    for (const auto& s : samples) {
        auto [it, inserted] = label_ids.try_emplace(s.label, static_cast<int>(label_ids.size()));
        labels.push_back(it->second);
        points.push_back(s.udr);
    }
    if (label_ids.size() < 2) throw ParameterError("cluster_separability: need >= 2 labels");
    std::vector<std::size_t> per_label(label_ids.size(), 0);
    for (int l : labels) ++per_label[static_cast<std::size_t>(l)];
    for (std::size_t c : per_label)
        if (c < 2) throw ParameterError("cluster_separability: need >= 2 samples per label");

    ClusterReport rep;
    rep.samples = samples;

    bool all_same = true;
    for (std::size_t i = 1; i < points.size() && all_same; ++i) all_same = points[i] == points[0];
    rep.degenerate = all_same;
    rep.silhouette = all_same ? 0.0 : silhouette_score(points, labels);

    const auto comps = pca_components(points, 2);
    std::vector<double> mean(points.front().size(), 0.0);
    for (const auto& p : points)
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += p[k];
    for (double& m : mean) m /= static_cast<double>(points.size());
    for (const auto& p : points) {
        std::array<double, 2> xy{0.0, 0.0};
        for (int c = 0; c < 2; ++c)
            for (std::size_t k = 0; k < mean.size(); ++k)
                xy[static_cast<std::size_t>(c)] += (p[k] - mean[k]) * comps[static_cast<std::size_t>(c)][k];
        rep.coords.push_back(xy);
    }
    return rep;
}

std::string quality_csv(const QualityReport& report) {
    std::string s = "image,psnr_db,ssim\n";
    for (const auto& row : report.rows)
        s += row.image + "," + fmt(row.psnr_db) + "," + fmt(row.ssim) + "\n";
    return s;
}

std::string stability_csv(const std::vector<StabilityReport>& reports) {
    std::string s = "image,instability,dims\n";
    for (const auto& r : reports)
        s += r.image + "," + fmt(r.instability) + "," + std::to_string(r.dims) + "\n";
    return s;
}

std::string cluster_csv(const ClusterReport& report) {
    std::string s = "index,label,pc1,pc2,silhouette_overall\n";
    for (std::size_t i = 0; i < report.samples.size(); ++i)
        s += std::to_string(i) + "," + report.samples[i].label + "," + fmt(report.coords[i][0]) +
             "," + fmt(report.coords[i][1]) + "," + fmt(report.silhouette) + "\n";
    return s;
}

std::string cluster_svg(const ClusterReport& report) {
    static const char* kPalette[3] = {"#e41a1c", "#377eb8", "#4daf4a"};
    constexpr int kW = 640, kH = 480, kMargin = 40;

    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& c : report.coords) {
        x0 = std::min(x0, c[0]);
        x1 = std::max(x1, c[0]);
        y0 = std::min(y0, c[1]);
        y1 = std::max(y1, c[1]);
    }
    if (x1 - x0 < 1e-12) x1 = x0 + 1.0;
    if (y1 - y0 < 1e-12) y1 = y0 + 1.0;

    std::map<std::string, int> color_of;
    std::string s =
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"640\" height=\"480\">\n"
        "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
    for (std::size_t i = 0; i < report.samples.size(); ++i) {
        auto [it, inserted] =
            color_of.try_emplace(report.samples[i].label, static_cast<int>(color_of.size()));
        const char* color = kPalette[it->second % 3];
        const double px = kMargin + (report.coords[i][0] - x0) / (x1 - x0) * (kW - 2 * kMargin);
        const double py = kH - kMargin - (report.coords[i][1] - y0) / (y1 - y0) * (kH - 2 * kMargin);
        s += "<circle cx=\"" + fmt3(px) + "\" cy=\"" + fmt3(py) + "\" r=\"4\" fill=\"" + color +
             "\" fill-opacity=\"0.8\"><title>" + report.samples[i].label + "</title></circle>\n";
    }
    s += "</svg>\n";
    return s;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open file for writing: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw DataError("failed writing file: " + path);
}

}  // namespace usr::eval
