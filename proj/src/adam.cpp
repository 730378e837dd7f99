#include "usr/adam.hpp"

#include <cmath>

namespace usr::nn {

AdamState AdamState::init(const std::vector<Parameter>& params, double lr, double beta1,
                          double beta2, double eps) {
    AdamState s;
    s.lr = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
        s.m.emplace_back(p.tensor->data.size(), 0.0);
        s.v.emplace_back(p.tensor->data.size(), 0.0);
    }
    return s;
}

void adam_step(std::vector<Parameter>& params, AdamState& state) {
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw DimensionError("adam_step: state does not match parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& t = *params[i].tensor;
        t.ensure_grad();
        if (state.m[i].size() != t.data.size())
            throw DimensionError("adam_step: moment shape mismatch for " + params[i].name);
        for (double g : t.grad)
            if (!std::isfinite(g))
                throw NumericError("adam_step: non-finite gradient in " + params[i].name);
    }

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& t = *params[i].tensor;
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < t.data.size(); ++j) {
            const double g = t.grad[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            t.data[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

void zero_grads(std::vector<Parameter>& params) {
    for (auto& p : params) p.tensor->zero_grad();
}

double grad_norm(const std::vector<Parameter>& params) {
    double s = 0.0;
    for (const auto& p : params) {
        if (p.tensor->grad.size() != p.tensor->data.size()) continue;
        for (double g : p.tensor->grad) s += g * g;
    }
    return std::sqrt(s);
}

}  // namespace usr::nn
