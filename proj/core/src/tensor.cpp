#include "clipin/tensor.hpp"

#include <cmath>

#include "clipin/error.hpp"

namespace clipin {

namespace {

std::size_t shape_product(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ConfigError("tensor dimension must be nonnegative");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(shape_product(shape_), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size())
        throw ConfigError("tensor shape does not match data length");
    if (!all_finite()) throw ConfigError("tensor data contains NaN or Inf");
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vec(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v));
}

int Tensor::rows() const {
    if (ndim() == 1) return 1;
    if (ndim() == 2) return shape_[0];
    throw ConfigError("rows() requires a 1-D or 2-D tensor");
}

int Tensor::cols() const {
    if (ndim() == 1) return shape_[0];
    if (ndim() == 2) return shape_[1];
    throw ConfigError("cols() requires a 1-D or 2-D tensor");
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

}  // namespace clipin
