#pragma once

#include <span>
#include <vector>

namespace clipin {

// Dense row-major tensor of 64-bit floats. Data is validated finite at
// construction; the shape is fixed afterwards.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);  // zero-filled
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor vec(std::vector<double> v);

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // 2-D accessors; rows()/cols() also treat a 1-D tensor as a single row.
    int rows() const;
    int cols() const;
    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols() + c]; }
    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

}  // namespace clipin
