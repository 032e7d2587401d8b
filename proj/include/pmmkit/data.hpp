#pragma once

// Desk-scale datasets: synthetic generators, CSV and IDX ingestion,
// standardization, splitting and seeded batch iteration.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "pmmkit/error.hpp"
#include "pmmkit/numkernel.hpp"

namespace pmmkit {

struct LabeledDataset {
    Mat X;
    std::vector<ClassId> y;
    std::size_t k = 0;
    std::vector<std::string> feature_names;

    std::size_t size() const noexcept { return X.rows(); }
    std::size_t input_dim() const noexcept { return X.cols(); }

    /// Checked constructor; `k` = 0 infers max label + 1.
    static LabeledDataset make(Mat X, std::vector<ClassId> y, std::size_t k = 0,
                               std::vector<std::string> feature_names = {}) {
        require(X.rows() >= 1, ErrorCategory::invalid_argument, "dataset must have at least one sample");
        if (y.size() != X.rows())
            fail(ErrorCategory::dimension,
                 "label count " + std::to_string(y.size()) + " != sample count " + std::to_string(X.rows()));
        require(feature_names.empty() || feature_names.size() == X.cols(), ErrorCategory::dimension,
                "feature name count does not match columns");
        for (double v : X.data()) require(std::isfinite(v), ErrorCategory::invalid_argument, "non-finite feature");
        std::size_t max_label = 0;
        for (ClassId c : y) max_label = std::max(max_label, c);
        if (k == 0) k = max_label + 1;
        if (max_label >= k)
            fail(ErrorCategory::invalid_argument,
                 "label " + std::to_string(max_label) + " out of range for k=" + std::to_string(k));
        return LabeledDataset{std::move(X), std::move(y), k, std::move(feature_names)};
    }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> c(k, 0);
        for (ClassId l : y) ++c[l];
        return c;
    }

    /// Classes in [0, k) with no samples.
    std::vector<ClassId> empty_classes() const {
        std::vector<ClassId> out;
        const auto c = class_counts();
        for (ClassId j = 0; j < k; ++j)
            if (c[j] == 0) out.push_back(j);
        return out;
    }

    bool operator==(const LabeledDataset&) const = default;
};

inline LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> indices) {
    Mat X(indices.size(), ds.input_dim());
    std::vector<ClassId> y(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        require(indices[i] < ds.size(), ErrorCategory::invalid_argument, "subset index out of range");
        const auto src = ds.X.row(indices[i]);
        std::copy(src.begin(), src.end(), X.row(i).begin());
        y[i] = ds.y[indices[i]];
    }
    return LabeledDataset{std::move(X), std::move(y), ds.k, ds.feature_names};
}

// --- synthetic ------------------------------------------------------------

struct SyntheticSpec {
    enum class Kind { blobs, moons, rings };

    Kind kind = Kind::blobs;
    std::uint64_t seed = 0;
    // blobs
    std::size_t n_per_class = 100;
    std::vector<Vec> centers;
    double sigma = 1.0;
    // moons / rings
    std::size_t n = 200;
    double noise_sigma = 0.1;
    double inner_radius = 1.0;
    double outer_radius = 2.0;

    void validate() const {
        switch (kind) {
            case Kind::blobs: {
                require(centers.size() >= 2, ErrorCategory::invalid_argument, "blobs need at least 2 centers");
                require(n_per_class >= 1, ErrorCategory::invalid_argument, "blobs need n_per_class >= 1");
                require(sigma >= 0, ErrorCategory::invalid_argument, "blob sigma must be >= 0");
                const std::size_t d = centers.front().size();
                require(d >= 1, ErrorCategory::invalid_argument, "blob centers must be non-empty");
                for (std::size_t a = 0; a < centers.size(); ++a) {
                    require(centers[a].size() == d, ErrorCategory::dimension, "blob centers differ in dimension");
                    for (std::size_t b = 0; b < a; ++b)
                        require(centers[a] != centers[b], ErrorCategory::invalid_argument,
                                "blob centers must be distinct");
                }
                break;
            }
            case Kind::moons:
            case Kind::rings:
                require(n >= 2, ErrorCategory::invalid_argument, "need at least 2 samples");
                require(noise_sigma >= 0, ErrorCategory::invalid_argument, "noise sigma must be >= 0");
                if (kind == Kind::rings)
                    require(inner_radius > 0 && outer_radius > 0 && inner_radius != outer_radius,
                            ErrorCategory::invalid_argument, "ring radii must be positive and distinct");
                break;
        }
    }
};

inline LabeledDataset gen_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    RngStream rng(spec.seed);
    if (spec.kind == SyntheticSpec::Kind::blobs) {
        const std::size_t k = spec.centers.size();
        const std::size_t d = spec.centers.front().size();
        Mat X(k * spec.n_per_class, d);
        std::vector<ClassId> y(X.rows());
        std::size_t row = 0;
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t i = 0; i < spec.n_per_class; ++i, ++row) {
                for (std::size_t t = 0; t < d; ++t) X(row, t) = spec.centers[c][t] + spec.sigma * rng.normal();
                y[row] = c;
            }
        }
        return LabeledDataset::make(std::move(X), std::move(y), k);
    }

    const std::size_t n0 = (spec.n + 1) / 2;
    const std::size_t n1 = spec.n / 2;
    Mat X(spec.n, 2);
    std::vector<ClassId> y(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const bool second = i >= n0;
        const std::size_t local = second ? i - n0 : i;
        double px = 0.0;
        double py = 0.0;
        if (spec.kind == SyntheticSpec::Kind::moons) {
            const std::size_t count = second ? n1 : n0;
            const double t = count > 1 ? std::numbers::pi * static_cast<double>(local) / static_cast<double>(count - 1)
                                       : 0.0;
            px = second ? 1.0 - std::cos(t) : std::cos(t);
            py = second ? 0.5 - std::sin(t) : std::sin(t);
        } else {
            const double r = second ? spec.outer_radius : spec.inner_radius;
            const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
            px = r * std::cos(theta);
            py = r * std::sin(theta);
        }
        X(i, 0) = px + spec.noise_sigma * rng.normal();
        X(i, 1) = py + spec.noise_sigma * rng.normal();
        y[i] = second ? 1 : 0;
    }
    return LabeledDataset::make(std::move(X), std::move(y), 2);
}

// --- CSV ------------------------------------------------------------------

/// Shortest decimal text that parses back to the identical double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string where(const std::string& path, std::size_t line) {
    return path + ":" + std::to_string(line) + ": ";
}

inline double parse_double_cell(std::string_view cell, const std::string& path, std::size_t line) {
    double v = 0.0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (!(res.ec == std::errc() && res.ptr == cell.data() + cell.size() && !cell.empty()))
        fail(ErrorCategory::parse, where(path, line) + "non-numeric cell '" + std::string(cell) + "'");
    if (!std::isfinite(v))
        fail(ErrorCategory::parse, where(path, line) + "non-finite cell '" + std::string(cell) + "'");
    return v;
}

}  // namespace detail

/// Plain numeric table (every cell a double).
struct NumericTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

inline NumericTable read_numeric_csv(const std::string& path, bool has_header) {
    std::ifstream in(path);
    if (!in)
        fail(ErrorCategory::io, "cannot open '" + path + "'");
    NumericTable t;
    std::string line;
    std::size_t line_no = 0;
    std::size_t cols = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view view = detail::trim(line);
        if (view.empty()) continue;
        const auto cells = detail::split_commas(view);
        if (has_header && line_no == 1) {
            for (auto c : cells) t.header.emplace_back(c);
            cols = cells.size();
            continue;
        }
        if (cols == 0) cols = cells.size();
        if (cells.size() != cols)
            fail(ErrorCategory::parse,
                 detail::where(path, line_no) + "expected " + std::to_string(cols) + " columns, found " +
                 std::to_string(cells.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (auto c : cells) row.push_back(detail::parse_double_cell(c, path, line_no));
        t.rows.push_back(std::move(row));
    }
    if (t.rows.empty())
        fail(ErrorCategory::parse, "'" + path + "' contains no data rows");
    return t;
}

/// Features in every column but the last; the last column is an integer label.
inline LabeledDataset load_csv(const std::string& path, bool has_header) {
    std::ifstream in(path);
    if (!in)
        fail(ErrorCategory::io, "cannot open '" + path + "'");
    std::vector<std::string> names;
    std::vector<double> values;
    std::vector<ClassId> labels;
    std::size_t cols = 0;
    std::string line;
    std::size_t line_no = 0;
    bool header_pending = has_header;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view view = detail::trim(line);
        if (view.empty()) continue;
        const auto cells = detail::split_commas(view);
        if (header_pending) {
            header_pending = false;
            if (cells.size() < 2)
                fail(ErrorCategory::parse, detail::where(path, line_no) + "header needs >= 2 columns");
            for (std::size_t c = 0; c + 1 < cells.size(); ++c) names.emplace_back(cells[c]);
            cols = cells.size();
            continue;
        }
        if (cols == 0) cols = cells.size();
        if (cols < 2)
            fail(ErrorCategory::parse, detail::where(path, line_no) + "need >= 1 feature column and a label");
        if (cells.size() != cols)
            fail(ErrorCategory::parse,
                 detail::where(path, line_no) + "expected " + std::to_string(cols) + " columns, found " +
                 std::to_string(cells.size()));
        for (std::size_t c = 0; c + 1 < cells.size(); ++c)
            values.push_back(detail::parse_double_cell(cells[c], path, line_no));
        const std::string_view lab = cells.back();
        long long label = -1;
        const auto res = std::from_chars(lab.data(), lab.data() + lab.size(), label);
        if (!(res.ec == std::errc() && res.ptr == lab.data() + lab.size() && !lab.empty()))
            fail(ErrorCategory::parse,
                 detail::where(path, line_no) + "label '" + std::string(lab) + "' is not an integer");
        if (label < 0)
            fail(ErrorCategory::parse,
                 detail::where(path, line_no) + "negative label " + std::to_string(label));
        labels.push_back(static_cast<ClassId>(label));
    }
    if (labels.empty())
        fail(ErrorCategory::parse, "'" + path + "' contains no data rows");
    Mat X(labels.size(), cols - 1, std::move(values));
    return LabeledDataset::make(std::move(X), std::move(labels), 0, std::move(names));
}

inline void save_csv(const LabeledDataset& ds, const std::string& path, bool with_header = true) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail(ErrorCategory::io, "cannot write '" + path + "'");
    if (with_header) {
        for (std::size_t c = 0; c < ds.input_dim(); ++c)
            out << (ds.feature_names.empty() ? "x" + std::to_string(c) : ds.feature_names[c]) << ',';
        out << "label\n";
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.X.row(i)) out << format_double(v) << ',';
        out << ds.y[i] << '\n';
    }
    if (!out)
        fail(ErrorCategory::io, "write failed for '" + path + "'");
}

// --- IDX ------------------------------------------------------------------

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_all_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorCategory::io, "cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t off, const std::string& path) {
    if (off + 4 > buf.size())
        fail(ErrorCategory::corrupt, "'" + path + "' is truncated in its header");
    return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) |
           (std::uint32_t{buf[off + 2]} << 8) | std::uint32_t{buf[off + 3]};
}

}  // namespace detail

/// MNIST-style IDX pair; pixels are scaled from [0, 255] to [0, 1].
inline LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = detail::read_all_bytes(images_path);
    const auto lab = detail::read_all_bytes(labels_path);

    const std::uint32_t img_magic = detail::read_be32(img, 0, images_path);
    if (img_magic != kIdxImageMagic)
        fail(ErrorCategory::parse,
             "'" + images_path + "' has wrong image magic " + std::to_string(img_magic));
    const std::uint32_t lab_magic = detail::read_be32(lab, 0, labels_path);
    if (lab_magic != kIdxLabelMagic)
        fail(ErrorCategory::parse,
             "'" + labels_path + "' has wrong label magic " + std::to_string(lab_magic));

    const std::size_t n = detail::read_be32(img, 4, images_path);
    const std::size_t rows = detail::read_be32(img, 8, images_path);
    const std::size_t cols = detail::read_be32(img, 12, images_path);
    const std::size_t n_labels = detail::read_be32(lab, 4, labels_path);
    if (n != n_labels)
        fail(ErrorCategory::parse,
             "image count " + std::to_string(n) + " != label count " + std::to_string(n_labels));
    if (!(n >= 1 && rows * cols >= 1))
        fail(ErrorCategory::parse, "'" + images_path + "' holds no pixels");

    const std::size_t pixels = rows * cols;
    if (img.size() != 16 + n * pixels)
        fail(ErrorCategory::corrupt,
             "'" + images_path + "' has " + std::to_string(img.size()) + " bytes, expected " +
             std::to_string(16 + n * pixels));
    if (lab.size() != 8 + n)
        fail(ErrorCategory::corrupt,
             "'" + labels_path + "' has " + std::to_string(lab.size()) + " bytes, expected " +
             std::to_string(8 + n));

    Mat X(n, pixels);
    for (std::size_t i = 0; i < n * pixels; ++i) X.data()[i] = static_cast<double>(img[16 + i]) / 255.0;
    std::vector<ClassId> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = lab[8 + i];
    return LabeledDataset::make(std::move(X), std::move(y));
}

// --- preprocessing --------------------------------------------------------

struct StandardizeStats {
    Vec mean;
    Vec scale;  // divisor per feature; 1 where the std is ~0

    bool operator==(const StandardizeStats&) const = default;
};

inline StandardizeStats fit_standardize(const LabeledDataset& train) {
    const std::size_t n = train.size();
    const std::size_t d = train.input_dim();
    require(n >= 1, ErrorCategory::invalid_argument, "cannot standardize an empty dataset");
    StandardizeStats s{Vec(d, 0.0), Vec(d, 1.0)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < d; ++t) s.mean[t] += train.X(i, t);
    for (double& m : s.mean) m /= static_cast<double>(n);
    for (std::size_t t = 0; t < d; ++t) {
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = train.X(i, t) - s.mean[t];
            var += c * c;
        }
        const double sd = std::sqrt(var / static_cast<double>(n));
        s.scale[t] = sd < 1e-12 ? 1.0 : sd;
    }
    return s;
}

inline LabeledDataset apply_standardize(const StandardizeStats& stats, LabeledDataset ds) {
    require(stats.mean.size() == ds.input_dim(), ErrorCategory::dimension, "standardize stats dimension mismatch");
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t t = 0; t < ds.input_dim(); ++t)
            ds.X(i, t) = (ds.X(i, t) - stats.mean[t]) / stats.scale[t];
    return ds;
}

/// Fits on `train` and applies the same statistics to every dataset given.
inline std::pair<std::vector<LabeledDataset>, StandardizeStats> standardize(
    const LabeledDataset& train, const std::vector<LabeledDataset>& others = {}) {
    const StandardizeStats stats = fit_standardize(train);
    std::vector<LabeledDataset> out;
    out.push_back(apply_standardize(stats, train));
    for (const auto& o : others) out.push_back(apply_standardize(stats, o));
    return {std::move(out), stats};
}

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

/// Seeded shuffle, then prefix -> train and suffix -> validation.
inline std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, const SplitSpec& spec) {
    require(spec.train_fraction > 0 && spec.train_fraction < 1, ErrorCategory::invalid_argument,
            "train fraction must lie in (0, 1)");
    const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(ds.size())));
    if (!(n_train >= 1 && n_train < ds.size()))
        fail(ErrorCategory::invalid_argument,
             "split of " + std::to_string(ds.size()) + " samples leaves an empty part");
    RngStream rng(spec.seed);
    const auto perm = permutation(ds.size(), rng);
    const std::span<const std::size_t> all(perm);
    return {subset(ds, all.first(n_train)), subset(ds, all.subspan(n_train))};
}

/// Index batches for one epoch: seeded shuffle, trailing partial batch kept.
inline std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size,
                                                        std::uint64_t epoch_seed) {
    require(batch_size >= 1, ErrorCategory::invalid_argument, "batch size must be >= 1");
    RngStream rng(epoch_seed);
    const auto perm = permutation(n, rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

inline std::vector<std::vector<std::size_t>> batch_iter(const LabeledDataset& ds, std::size_t batch_size,
                                                        std::uint64_t epoch_seed) {
    return batch_iter(ds.size(), batch_size, epoch_seed);
}

}  // namespace pmmkit
