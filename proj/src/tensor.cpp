#include "usr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace usr::nn {

std::int64_t shape_size(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

TensorPtr Tensor::zeros(Shape shape, bool requires_grad) {
    auto t = std::make_shared<Tensor>();
    const std::int64_t n = shape_size(shape);
    t->shape = std::move(shape);
    t->data.assign(static_cast<std::size_t>(n), 0.0);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::full(Shape shape, double value, bool requires_grad) {
    auto t = zeros(std::move(shape), requires_grad);
    std::fill(t->data.begin(), t->data.end(), value);
    return t;
}

TensorPtr Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
    const std::int64_t n = shape_size(shape);
    if (n != static_cast<std::int64_t>(values.size()))
        throw DimensionError("value count does not match shape " + shape_str(shape));
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(values);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
    return from_values({1}, {value}, requires_grad);
}

double Tensor::value() const {
    if (size() != 1) throw DimensionError("value() requires a 1-element tensor");
    return data[0];
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    if (grad.size() != data.size())
        grad.assign(data.size(), 0.0);
    else
        std::fill(grad.begin(), grad.end(), 0.0);
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::backward() {
    if (size() != 1) throw DimensionError("backward() requires a scalar root");

    // Iterative post-order DFS; deep graphs would overflow the stack otherwise.
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> visited;
    struct Frame {
        Tensor* node;
        std::size_t next_child;
    };
    std::vector<Frame> stack;
    stack.push_back({this, 0});
    visited.insert(this);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_child < f.node->parents.size()) {
            Tensor* child = f.node->parents[f.next_child].get();
            ++f.next_child;
            if (child && !visited.count(child)) {
                visited.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    ensure_grad();
    grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* t = *it;
        // an empty grad buffer means no downstream contribution reached t
        if (t->requires_grad && t->backward_fn && !t->grad.empty()) t->backward_fn();
    }
}

TensorPtr Tensor::detached() const {
    auto t = std::make_shared<Tensor>();
    t->shape = shape;
    t->data = data;
    t->requires_grad = false;
    return t;
}

void check_finite(const Tensor& t, const char* what) {
    if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite values");
}

}  // namespace usr::nn
