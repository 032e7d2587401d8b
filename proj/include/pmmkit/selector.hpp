#pragma once

// Per-step batch selection: from a forward-passed candidate batch of size B,
// keep the b samples closest to their top-two decision boundary (smallest
// minimal margin score), or b uniformly random samples as a baseline.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pmmkit/error.hpp"
#include "pmmkit/margin.hpp"
#include "pmmkit/numkernel.hpp"

namespace pmmkit {

enum class SelectionMode { random, mms };

inline std::string_view selection_mode_name(SelectionMode m) { return m == SelectionMode::mms ? "mms" : "random"; }

struct SelectionConfig {
    SelectionMode mode = SelectionMode::random;
    std::size_t big_batch = 640;
    std::size_t small_batch = 64;

    void validate() const {
        if (!(small_batch >= 1 && small_batch <= big_batch))
            fail(ErrorCategory::config,
                 "selection needs 1 <= small_batch <= big_batch, got b=" + std::to_string(small_batch) +
                 " B=" + std::to_string(big_batch));
    }

    bool operator==(const SelectionConfig&) const = default;
};

struct SelectionResult {
    std::vector<std::size_t> indices;  // into the candidate batch
    std::vector<double> mms_values;    // of the selected rows; empty in random mode
    std::optional<double> mean_mms;
};

/// Selection never sees labels: only scores and the head.
inline SelectionResult select_mms(const ScoreMatrix& scores, const LinearHead& head, std::size_t b) {
    if (b > scores.rows())
        fail(ErrorCategory::invalid_argument,
             "cannot select " + std::to_string(b) + " of " + std::to_string(scores.rows()) + " samples");
    head.validate();
    Vec margins(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) margins[i] = mms(scores.row(i), head).mms;
    const auto order = sort_indices_asc(margins);

    SelectionResult r;
    r.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(b));
    r.mms_values.reserve(b);
    double sum = 0.0;
    for (std::size_t i : r.indices) {
        r.mms_values.push_back(margins[i]);
        sum += margins[i];
    }
    if (b > 0) r.mean_mms = sum / static_cast<double>(b);
    return r;
}

/// b distinct indices drawn uniformly without replacement (partial
/// Fisher-Yates), returned in ascending order so that b == B is the identity.
inline SelectionResult select_random(std::size_t big_batch, std::size_t b, RngStream& rng) {
    if (b > big_batch)
        fail(ErrorCategory::invalid_argument,
             "cannot select " + std::to_string(b) + " of " + std::to_string(big_batch) + " samples");
    std::vector<std::size_t> pool(big_batch);
    for (std::size_t i = 0; i < big_batch; ++i) pool[i] = i;
    for (std::size_t i = 0; i < b; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.uniform_index(big_batch - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(b);
    std::sort(pool.begin(), pool.end());
    return SelectionResult{std::move(pool), {}, std::nullopt};
}

}  // namespace pmmkit
