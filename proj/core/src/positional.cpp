#include "clipin/positional.hpp"

#include <cmath>

#include "clipin/error.hpp"

namespace clipin {

void validate(const PositionalMode& mode) {
    if (const auto* a = std::get_if<AbsolutePos>(&mode)) {
        if (a->max_len < 1) throw ConfigError("absolute mode: max_len must be >= 1");
    } else if (const auto* r = std::get_if<RotaryPos>(&mode)) {
        if (r->base_theta <= 0.0) throw ConfigError("rotary mode: base_theta must be > 0");
        if (r->max_len < 1) throw ConfigError("rotary mode: max_len must be >= 1");
    } else {
        const auto& ip = std::get<InterpolatedPos>(mode);
        if (ip.original_len < 1) throw ConfigError("interpolated mode: original_len must be >= 1");
        if (ip.stretched_len < ip.original_len)
            throw ConfigError("interpolated mode: stretched_len must be >= original_len");
    }
}

int context_limit(const PositionalMode& mode) {
    if (const auto* a = std::get_if<AbsolutePos>(&mode)) return a->max_len;
    if (const auto* r = std::get_if<RotaryPos>(&mode)) return r->max_len;
    return std::get<InterpolatedPos>(mode).stretched_len;
}

bool enforces_context_limit(const PositionalMode& mode) {
    return !std::holds_alternative<RotaryPos>(mode);
}

RotationTable::RotationTable(double base_theta, int d_head)
    : base_theta_(base_theta), d_head_(d_head) {
    if (d_head <= 0 || d_head % 2 != 0) throw ConfigError("rotary head width must be even and positive");
    if (base_theta <= 0.0) throw ConfigError("rotary base_theta must be > 0");
}

void RotationTable::ensure_length(int len) {
    if (len <= length_) return;
    const int planes = d_head_ / 2;
    cos_.resize(static_cast<std::size_t>(len) * planes);
    sin_.resize(static_cast<std::size_t>(len) * planes);
    for (int pos = length_; pos < len; ++pos) {
        for (int j = 0; j < planes; ++j) {
            const double theta = std::pow(base_theta_, -2.0 * j / d_head_);
            const double angle = static_cast<double>(pos) * theta;
            cos_[index(pos, j)] = std::cos(angle);
            sin_[index(pos, j)] = std::sin(angle);
        }
    }
    length_ = len;
}

Tensor apply_rotary_raw(const Tensor& x, const std::vector<int>& positions, double base_theta,
                        double sign) {
    const int seq = x.rows();
    const int d = x.cols();
    if (d % 2 != 0) throw ConfigError("apply_rotary: head width must be even");
    if (static_cast<int>(positions.size()) != seq)
        throw ConfigError("apply_rotary: one position per row required");
    for (int p : positions)
        if (p < 0) throw ConfigError("apply_rotary: positions must be nonnegative");

    Tensor out({seq, d});
    for (int t = 0; t < seq; ++t) {
        const double m = static_cast<double>(positions[static_cast<std::size_t>(t)]);
        for (int j = 0; j < d / 2; ++j) {
            const double theta = std::pow(base_theta, -2.0 * j / d);
            const double c = std::cos(m * theta);
            const double s = sign * std::sin(m * theta);
            const double a = x(t, 2 * j);
            const double b = x(t, 2 * j + 1);
            out(t, 2 * j) = a * c - b * s;
            out(t, 2 * j + 1) = a * s + b * c;
        }
    }
    return out;
}

Tensor apply_rotary(const Tensor& x, const std::vector<int>& positions, double base_theta) {
    return apply_rotary_raw(x, positions, base_theta, +1.0);
}

double relative_score(const Tensor& q, const Tensor& k, int m, int n, double base_theta) {
    const Tensor qr = apply_rotary(q, {m}, base_theta);
    const Tensor kr = apply_rotary(k, {n}, base_theta);
    return dot(qr.data(), kr.data());
}

Tensor interpolate_absolute(const Tensor& table, int new_len) {
    const int old_len = table.rows();
    const int d = table.cols();
    if (new_len < old_len)
        throw ConfigError("interpolate_absolute: new length is shorter than the table");
    if (new_len == old_len) return table;

    Tensor out({new_len, d});
    for (int r = 0; r < new_len; ++r) {
        // Endpoint-anchored map of the stretched index onto the source grid.
        const double u = static_cast<double>(r) * (old_len - 1) / (new_len - 1);
        const int lo = static_cast<int>(std::floor(u));
        const int hi = std::min(lo + 1, old_len - 1);
        const double w = u - lo;
        for (int c = 0; c < d; ++c) out(r, c) = (1.0 - w) * table(lo, c) + w * table(hi, c);
    }
    return out;
}

}  // namespace clipin
