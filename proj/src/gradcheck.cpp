#include "usr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "usr/rng.hpp"

namespace usr::nn {

double grad_check(const ScalarFn& fn, const std::vector<TensorPtr>& point, double h,
                  std::int64_t max_coords) {
    for (const auto& t : point) t->requires_grad = true;

    auto root = fn(point);
    if (root->size() != 1) throw DimensionError("grad_check: closure must return a scalar");
    check_finite(*root, "grad_check value");
    for (const auto& t : point) t->zero_grad();
    root->backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(point.size());
    for (const auto& t : point) {
        t->ensure_grad();
        analytic.push_back(t->grad);
    }

    // Flat coordinate index space across all input tensors.
    std::vector<std::pair<std::size_t, std::int64_t>> coords;
    for (std::size_t ti = 0; ti < point.size(); ++ti)
        for (std::int64_t i = 0; i < point[ti]->size(); ++i) coords.emplace_back(ti, i);

    if (max_coords > 0 && static_cast<std::int64_t>(coords.size()) > max_coords) {
        DeterministicRng rng(0x6A7DCE1Full, coords.size(), "grad-check-sample");
        std::vector<std::pair<std::size_t, std::int64_t>> picked;
        picked.reserve(max_coords);
        for (std::int64_t i = 0; i < max_coords; ++i) {
            const auto idx = rng.next_int(0, static_cast<std::int64_t>(coords.size()) - 1);
            picked.push_back(coords[static_cast<std::size_t>(idx)]);
        }
        coords = std::move(picked);
    }

    double worst = 0.0;
    for (const auto& [ti, i] : coords) {
        Tensor& t = *point[ti];
        const double x0 = t.data[i];
        const double step = h * (std::abs(x0) + 1.0);

        t.data[i] = x0 + step;
        const double fp = fn(point)->value();
        t.data[i] = x0 - step;
        const double fm = fn(point)->value();
        t.data[i] = x0;

        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("grad_check: non-finite evaluation");
        const double numeric = (fp - fm) / (2.0 * step);
        const double a = analytic[ti][static_cast<std::size_t>(i)];
        const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace usr::nn
