#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "pmmkit/pmmkit.hpp"

namespace testing {

using namespace pmmkit;

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::path(PMMKIT_TEST_TMP) / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::vector<unsigned char> file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string file_text(const std::filesystem::path& p) {
    const auto b = file_bytes(p);
    return std::string(b.begin(), b.end());
}

inline Mat random_mat(std::size_t r, std::size_t c, RngStream& rng, double scale = 1.0) {
    Mat m(r, c);
    for (double& x : m.data()) x = scale * rng.normal();
    return m;
}

inline Vec random_vec(std::size_t n, RngStream& rng, double scale = 1.0) {
    Vec v(n);
    for (double& x : v) x = scale * rng.normal();
    return v;
}

inline LinearHead random_head(std::size_t k, std::size_t d, RngStream& rng) {
    return LinearHead{random_mat(k, d, rng), random_vec(k, rng)};
}

inline std::vector<ClassId> random_labels(std::size_t n, std::size_t k, RngStream& rng) {
    std::vector<ClassId> y(n);
    for (auto& v : y) v = static_cast<ClassId>(rng.uniform_index(k));
    return y;
}

/// Category of the pmmkit::Error thrown by `f`, or nullopt if it returns.
template <typename F>
std::optional<ErrorCategory> error_category(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.category();
    }
    return std::nullopt;
}

/// |a - b| <= max(rel * max(|a|, |b|), abs_floor)
inline bool close(double a, double b, double rel, double abs_floor = 0.0) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return std::abs(a - b) <= std::max(rel * scale, abs_floor);
}

/// Small three-blob problem shared by the trainer tests.
inline std::pair<LabeledDataset, LabeledDataset> small_blobs(std::uint64_t seed = 3, std::size_t n_per_class = 40) {
    SyntheticSpec s;
    s.kind = SyntheticSpec::Kind::blobs;
    s.seed = seed;
    s.n_per_class = n_per_class;
    s.centers = {{0.0, 0.0}, {3.0, 0.0}, {0.0, 3.0}};
    s.sigma = 0.6;
    return split(gen_synthetic(s), SplitSpec{0.75, seed});
}

}  // namespace testing
