#pragma once

// Dense double-precision vectors/matrices and a seeded random stream.
// Every reduction runs serially in index order so results are bit-reproducible.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pmmkit/error.hpp"

namespace pmmkit {

using Vec = std::vector<double>;
using ClassId = std::size_t;

/// Row-major dense matrix.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            fail(ErrorCategory::dimension,
                 "matrix data length " + std::to_string(data_.size()) + " does not match " +
                 std::to_string(rows_) + "x" + std::to_string(cols_));
    }

    static Mat from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) return {};
        Mat m(rows.size(), rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            require(rows[i].size() == m.cols_, ErrorCategory::dimension, "ragged matrix rows");
            std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
        }
        return m;
    }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    std::string shape() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

    bool operator==(const Mat&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows())
        fail(ErrorCategory::dimension, "matmul shape mismatch: " + a.shape() + " * " + b.shape());
    Mat out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < a.cols(); ++t) acc += a(i, t) * b(t, j);
            out(i, j) = acc;
        }
    }
    return out;
}

inline Mat transpose(const Mat& a) {
    Mat out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        fail(ErrorCategory::dimension,
             "dot length mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double squared_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return acc;
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(squared_norm(v)); }

/// Elementwise a - b.
inline Vec difference(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), ErrorCategory::dimension, "difference length mismatch");
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

/// Index of the maximum; ties go to the smallest index.
inline std::size_t argmax_tiebreak_low(std::span<const double> v) {
    require(!v.empty(), ErrorCategory::invalid_argument, "argmax of empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

/// Highest and second-highest entries, smallest index on ties.
inline std::pair<std::size_t, std::size_t> top2_tiebreak_low(std::span<const double> v) {
    if (v.size() < 2)
        fail(ErrorCategory::invalid_argument,
             "top2 needs at least 2 entries, got " + std::to_string(v.size()));
    const std::size_t first = argmax_tiebreak_low(v);
    std::size_t second = first == 0 ? 1 : 0;
    for (std::size_t i = second + 1; i < v.size(); ++i)
        if (i != first && v[i] > v[second]) second = i;
    return {first, second};
}

/// Stable ascending argsort.
inline std::vector<std::size_t> sort_indices_asc(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    return idx;
}

inline Vec softmax_stable(std::span<const double> v) {
    require(!v.empty(), ErrorCategory::invalid_argument, "softmax of empty vector");
    const double mx = v[argmax_tiebreak_low(v)];
    Vec out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - mx);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

/// log(sum(exp(v))) with max subtraction.
inline double log_sum_exp(std::span<const double> v) {
    const double mx = v[argmax_tiebreak_low(v)];
    double sum = 0.0;
    for (double x : v) sum += std::exp(x - mx);
    return mx + std::log(sum);
}

/// SplitMix64 generator. The algorithm and the derived sampling routines are
/// frozen: checkpoints and golden files depend on the exact output sequence.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Unbiased integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        require(n > 0, ErrorCategory::invalid_argument, "uniform_index needs n > 0");
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    /// Standard normal via Box-Muller; the sine branch is discarded so the
    /// whole generator state stays a single word.
    double normal() {
        const double u1 = 1.0 - uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    std::uint64_t state() const noexcept { return state_; }
    void set_state(std::uint64_t s) noexcept { state_ = s; }

    bool operator==(const RngStream&) const = default;

private:
    std::uint64_t state_;
};

/// Independent sub-seed for a named purpose (init, shuffling, selection, ...).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    RngStream s(seed ^ (tag * 0xD1B54A32D192ED03ULL));
    s.next_u64();
    return s.next_u64();
}

/// Seeded Fisher-Yates permutation of 0..n-1.
inline std::vector<std::size_t> permutation(std::size_t n, RngStream& rng) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_index(i));
        std::swap(p[i - 1], p[j]);
    }
    return p;
}

}  // namespace pmmkit
