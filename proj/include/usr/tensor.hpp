#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "usr/error.hpp"

namespace usr::nn {

using Shape = std::vector<int>;

std::int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major tensor doubling as a reverse-mode autodiff node. Ops build
// fresh nodes whose backward_fn accumulates into the parents' grad buffers;
// leaves created with requires_grad participate as trainable parameters.
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // sized lazily, same length as data
    bool requires_grad = false;

    std::vector<TensorPtr> parents;
    std::function<void()> backward_fn;

    static TensorPtr zeros(Shape shape, bool requires_grad = false);
    static TensorPtr full(Shape shape, double value, bool requires_grad = false);
    static TensorPtr from_values(Shape shape, std::vector<double> values,
                                 bool requires_grad = false);
    static TensorPtr scalar(double value, bool requires_grad = false);

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    double value() const;  // scalar accessor

    void ensure_grad();
    void zero_grad();
    bool all_finite() const;

    // Reverse sweep from a scalar root: topological order, seed grad 1.
    void backward();

    // Detached copy of the values (no graph, no grad).
    TensorPtr detached() const;
};

// Named trainable tensor; the name is the checkpoint identity.
struct Parameter {
    std::string name;
    TensorPtr tensor;
};

void check_finite(const Tensor& t, const char* what);

}  // namespace usr::nn
