#pragma once

#include <variant>
#include <vector>

#include "clipin/tensor.hpp"

namespace clipin {

// Learned per-position embedding table added at the input, hard length cap.
struct AbsolutePos {
    int max_len = 77;
};

// Query/key rotation inside attention. max_len sizes caches only; positions
// beyond it are accepted (angles are computed from base_theta directly).
struct RotaryPos {
    double base_theta = 10000.0;
    int max_len = 512;
};

// Absolute table linearly stretched from original_len to stretched_len rows.
struct InterpolatedPos {
    int original_len = 77;
    int stretched_len = 512;
};

using PositionalMode = std::variant<AbsolutePos, RotaryPos, InterpolatedPos>;

void validate(const PositionalMode& mode);
int context_limit(const PositionalMode& mode);  // hard cap; rotary is uncapped (returns max_len as advisory)
bool enforces_context_limit(const PositionalMode& mode);

// Precomputed cos/sin per (position, frequency plane) for head width d_head.
// Frequencies are base_theta^(-2j/d_head) for plane j; row m holds the
// angle m * theta_j, so row m acting on row-0 values rotates by m * theta_j.
class RotationTable {
public:
    RotationTable(double base_theta, int d_head);

    double base_theta() const { return base_theta_; }
    int d_head() const { return d_head_; }
    int length() const { return length_; }

    void ensure_length(int len);
    double cos_at(int pos, int plane) const { return cos_[index(pos, plane)]; }
    double sin_at(int pos, int plane) const { return sin_[index(pos, plane)]; }

private:
    std::size_t index(int pos, int plane) const {
        return static_cast<std::size_t>(pos) * (d_head_ / 2) + plane;
    }

    double base_theta_;
    int d_head_;
    int length_ = 0;
    std::vector<double> cos_, sin_;
};

// Rotates each row of x (shape [seq, d_head], d_head even) by its position:
// the value pair (2j, 2j+1) turns by angle pos * base_theta^(-2j/d_head).
Tensor apply_rotary(const Tensor& x, const std::vector<int>& positions, double base_theta);

// Same rotation with an explicit direction; sign -1 applies the inverse.
Tensor apply_rotary_raw(const Tensor& x, const std::vector<int>& positions, double base_theta,
                        double sign);

// <apply_rotary(q, m), apply_rotary(k, n)>; depends only on m - n.
double relative_score(const Tensor& q, const Tensor& k, int m, int n, double base_theta);

// Linear stretch of an absolute position table onto new_len rows with both
// endpoints preserved. new_len below the table's row count is an error.
Tensor interpolate_absolute(const Tensor& table, int new_len);

}  // namespace clipin
