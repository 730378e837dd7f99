#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "usr/image.hpp"
#include "usr/metrics.hpp"
#include "usr/rng.hpp"

namespace usr::eval {

// Degradation-representation provider (the DE in production; stubs in tests).
using UdrFn = std::function<std::vector<double>(const img::ImageBuffer&)>;

// Instability = mean over dimensions of the per-dimension population variance
// of the UDRs extracted from n random patches of one image.
struct StabilityReport {
    std::string image;
    std::vector<double> mean;   // per-dimension mean over patches
    double instability = 0.0;
    int dims = 0;
};

StabilityReport stability_metric(const UdrFn& udr_fn, const img::ImageBuffer& image,
                                 int n_patches, int patch, nn::DeterministicRng& rng);

struct ClusterSample {
    std::vector<double> udr;
    std::string label;
};

struct ClusterReport {
    std::vector<ClusterSample> samples;
    std::vector<std::array<double, 2>> coords;  // 2-D PCA projection
    double silhouette = 0.0;
    bool degenerate = false;  // all points identical
};

// Silhouette (Euclidean) plus deterministic 2-component PCA via power
// iteration; singleton clusters score 0 by convention, as does a fully
// degenerate sample set.
ClusterReport cluster_separability(const std::vector<ClusterSample>& samples);

double silhouette_score(const std::vector<std::vector<double>>& points,
                        const std::vector<int>& labels);

// Principal directions of the centered rows of data (n x d), sign-normalized
// so the first non-negligible loading is positive.
std::vector<std::vector<double>> pca_components(const std::vector<std::vector<double>>& data,
                                                int n_components);

// CSV headers: quality "image,psnr_db,ssim"; stability "image,instability,dims";
// cluster "index,label,pc1,pc2,silhouette_overall".
std::string quality_csv(const QualityReport& report);
std::string stability_csv(const std::vector<StabilityReport>& reports);
std::string cluster_csv(const ClusterReport& report);

// 640x480 SVG 1.1 scatter of the PCA coordinates, one circle per sample,
// fixed 3-color palette by label order of first appearance.
std::string cluster_svg(const ClusterReport& report);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace usr::eval
