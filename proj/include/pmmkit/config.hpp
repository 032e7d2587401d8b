#pragma once

// Experiment configuration and its INI text form.
//
//   preset = pmm            ; optional, root level: baseline | pmm | mms
//   [train]      total_steps, lr_base, lr_drop_steps, lr_drop_factor, seed,
//                eval_every, target_val_accuracy, early_stop
//   [objective]  risk, reg, weight_decay, phi_max_mode
//   [alpha]      schedule, value | start, end, total_steps
//   [selection]  mode, big_batch, small_batch
//   [model]      hidden, activation
//   [data]       source and source-specific keys, train_fraction, split_seed
//
// Unknown sections or keys are errors. Lists are comma separated; blob
// centers are points separated by '|', e.g. "centers = 0,0 | 6,0 | 0,6".

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "pmmkit/data.hpp"
#include "pmmkit/error.hpp"
#include "pmmkit/model.hpp"
#include "pmmkit/objective.hpp"
#include "pmmkit/selector.hpp"

namespace pmmkit {

struct ModelConfig {
    std::vector<std::size_t> hidden;
    Activation activation = Activation::relu;

    MlpShape shape(std::size_t input_dim, std::size_t num_classes) const {
        return MlpShape{input_dim, hidden, std::vector<Activation>(hidden.size(), activation), num_classes};
    }

    bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
    std::size_t total_steps = 1000;
    double lr_base = 0.01;
    std::vector<std::size_t> lr_drop_steps;
    double lr_drop_factor = 10.0;
    ObjectiveConfig objective;
    AlphaSchedule alpha = AlphaSchedule::constant(1e-3);
    SelectionConfig selection;
    ModelConfig model;
    std::uint64_t seed = 0;
    std::size_t eval_every = 50;
    std::optional<double> target_val_accuracy;
    bool early_stop = false;

    void validate() const {
        require(lr_base > 0, ErrorCategory::config, "lr_base must be > 0");
        require(lr_drop_factor > 1, ErrorCategory::config, "lr_drop_factor must be > 1");
        for (std::size_t i = 0; i < lr_drop_steps.size(); ++i) {
            require(lr_drop_steps[i] <= total_steps, ErrorCategory::config,
                    "lr drop step " + std::to_string(lr_drop_steps[i]) + " exceeds total_steps");
            if (i > 0)
                require(lr_drop_steps[i] > lr_drop_steps[i - 1], ErrorCategory::config,
                        "lr_drop_steps must be strictly increasing");
        }
        require(eval_every >= 1, ErrorCategory::config, "eval_every must be >= 1");
        if (alpha.kind == AlphaSchedule::Kind::linear)
            require(alpha.total_steps >= 1, ErrorCategory::config, "linear alpha needs total_steps >= 1");
        require(alpha.start >= 0 && alpha.end >= 0, ErrorCategory::config, "alpha must be >= 0");
        require(objective.reg.coef >= 0, ErrorCategory::config, "weight_decay must be >= 0");
        if (target_val_accuracy)
            require(*target_val_accuracy > 0 && *target_val_accuracy <= 1, ErrorCategory::config,
                    "target_val_accuracy must lie in (0, 1]");
        require(!early_stop || target_val_accuracy.has_value(), ErrorCategory::config,
                "early_stop requires target_val_accuracy");
        selection.validate();
    }

    bool operator==(const TrainConfig&) const = default;
};

struct DataConfig {
    enum class Source { synthetic, csv, idx };

    Source source = Source::synthetic;
    SyntheticSpec synthetic;
    std::string path;  // csv
    bool has_header = true;
    std::string images_path;  // idx
    std::string labels_path;
    double train_fraction = 0.8;
    std::uint64_t split_seed = 0;

    bool operator==(const DataConfig& o) const {
        return source == o.source && synthetic.kind == o.synthetic.kind && synthetic.seed == o.synthetic.seed &&
               synthetic.n_per_class == o.synthetic.n_per_class && synthetic.centers == o.synthetic.centers &&
               synthetic.sigma == o.synthetic.sigma && synthetic.n == o.synthetic.n &&
               synthetic.noise_sigma == o.synthetic.noise_sigma &&
               synthetic.inner_radius == o.synthetic.inner_radius &&
               synthetic.outer_radius == o.synthetic.outer_radius && path == o.path &&
               has_header == o.has_header && images_path == o.images_path && labels_path == o.labels_path &&
               train_fraction == o.train_fraction && split_seed == o.split_seed;
    }
};

struct ExperimentConfig {
    TrainConfig train;
    DataConfig data;
};

// --- presets --------------------------------------------------------------

/// Cross-entropy + weight decay, random selection.
inline TrainConfig preset_baseline(std::size_t total_steps = 1000) {
    TrainConfig c;
    c.total_steps = total_steps;
    c.objective = {RiskKind::cross_entropy, RegKind::weight_decay(5e-4), PhiMaxMode::stop_gradient};
    c.alpha = AlphaSchedule::constant(1.0);
    c.selection = {SelectionMode::random, 64, 64};
    return c;
}

/// Cross-entropy + pairwise-margin regularizer with alpha ramped 1e-5 -> 1e-3.
inline TrainConfig preset_pmm(std::size_t total_steps = 1000) {
    TrainConfig c = preset_baseline(total_steps);
    c.objective = {RiskKind::cross_entropy, RegKind::pmm(), PhiMaxMode::stop_gradient};
    c.alpha = AlphaSchedule::linear(1e-5, 1e-3, std::max<std::size_t>(1, total_steps));
    return c;
}

/// Cross-entropy, minimal-margin-score selection of b out of B = 10 b.
inline TrainConfig preset_mms(std::size_t total_steps = 1000) {
    TrainConfig c = preset_baseline(total_steps);
    c.objective = {RiskKind::cross_entropy, RegKind::none(), PhiMaxMode::stop_gradient};
    c.alpha = AlphaSchedule::constant(0.0);
    c.selection = {SelectionMode::mms, 640, 64};
    return c;
}

// --- text helpers ---------------------------------------------------------

namespace detail {

inline std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

inline std::string cfg_where(std::string_view section, std::string_view key) {
    return "[" + std::string(section) + "] " + std::string(key) + ": ";
}

inline double parse_cfg_double(std::string_view text, std::string_view section, std::string_view key) {
    const std::string_view t = trim(text);
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    require(res.ec == std::errc() && res.ptr == t.data() + t.size() && !t.empty(), ErrorCategory::config,
            cfg_where(section, key) + "expected a number, got '" + std::string(text) + "'");
    return v;
}

inline std::uint64_t parse_cfg_uint(std::string_view text, std::string_view section, std::string_view key) {
    const std::string_view t = trim(text);
    std::uint64_t v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    require(res.ec == std::errc() && res.ptr == t.data() + t.size() && !t.empty(), ErrorCategory::config,
            cfg_where(section, key) + "expected a non-negative integer, got '" + std::string(text) + "'");
    return v;
}

inline bool parse_cfg_bool(std::string_view text, std::string_view section, std::string_view key) {
    const std::string_view t = trim(text);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    fail(ErrorCategory::config, cfg_where(section, key) + "expected true/false, got '" + std::string(text) + "'");
}

inline std::vector<std::string_view> split_on(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    if (trim(s).empty()) return out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::vector<std::size_t> parse_cfg_sizes(std::string_view text, std::string_view section,
                                                std::string_view key) {
    std::vector<std::size_t> out;
    for (auto part : split_on(text, ',')) out.push_back(parse_cfg_uint(part, section, key));
    return out;
}

inline std::vector<Vec> parse_cfg_points(std::string_view text, std::string_view section, std::string_view key) {
    std::vector<Vec> out;
    for (auto point : split_on(text, '|')) {
        Vec p;
        for (auto coord : split_on(point, ',')) p.push_back(parse_cfg_double(coord, section, key));
        require(!p.empty(), ErrorCategory::config, cfg_where(section, key) + "empty point");
        out.push_back(std::move(p));
    }
    return out;
}

inline std::string format_points(const std::vector<Vec>& pts) {
    std::string s;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i) s += " | ";
        for (std::size_t t = 0; t < pts[i].size(); ++t) s += (t ? "," : "") + format_double(pts[i][t]);
    }
    return s;
}

inline std::string_view risk_name(RiskKind r) { return r == RiskKind::hinge ? "hinge" : "cross_entropy"; }

inline std::string_view reg_name(RegKind::Tag t) {
    switch (t) {
        case RegKind::Tag::none: return "none";
        case RegKind::Tag::weight_decay: return "weight_decay";
        case RegKind::Tag::one_vs_all_l2: return "one_vs_all_l2";
        case RegKind::Tag::pmm: return "pmm";
    }
    return "?";
}

inline std::string_view phi_mode_name(PhiMaxMode m) {
    return m == PhiMaxMode::stop_gradient ? "stop_gradient" : "flow_gradient";
}

inline std::string_view synthetic_name(SyntheticSpec::Kind k) {
    switch (k) {
        case SyntheticSpec::Kind::blobs: return "blobs";
        case SyntheticSpec::Kind::moons: return "moons";
        case SyntheticSpec::Kind::rings: return "rings";
    }
    return "?";
}

/// Reads keys of one section, rejecting anything outside `allowed`.
class SectionReader {
public:
    SectionReader(const boost::property_tree::ptree* node, std::string name, std::set<std::string> allowed)
        : node_(node), name_(std::move(name)) {
        if (!node_) return;
        for (const auto& [key, child] : *node_) {
            require(allowed.count(key) == 1, ErrorCategory::config,
                    "unknown key '" + key + "' in section [" + name_ + "]");
            require(child.empty(), ErrorCategory::config, "nested value for '" + key + "' in [" + name_ + "]");
        }
    }

    std::optional<std::string> get(const std::string& key) const {
        if (!node_) return std::nullopt;
        auto it = node_->find(key);
        if (it == node_->not_found()) return std::nullopt;
        return it->second.data();
    }

    void read(const std::string& key, double& out) const {
        if (auto v = get(key)) out = parse_cfg_double(*v, name_, key);
    }
    void read(const std::string& key, std::size_t& out) const {
        if (auto v = get(key)) out = static_cast<std::size_t>(parse_cfg_uint(*v, name_, key));
    }
    void read_u64(const std::string& key, std::uint64_t& out) const {
        if (auto v = get(key)) out = parse_cfg_uint(*v, name_, key);
    }
    void read(const std::string& key, bool& out) const {
        if (auto v = get(key)) out = parse_cfg_bool(*v, name_, key);
    }
    void read(const std::string& key, std::string& out) const {
        if (auto v = get(key)) out = *v;
    }

    const std::string& name() const { return name_; }

private:
    const boost::property_tree::ptree* node_;
    std::string name_;
};

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        fail(ErrorCategory::config, "line " + std::to_string(e.line()) + ": " + e.message());
    }

    static const std::set<std::string> kSections{"train", "objective", "alpha", "selection", "model", "data"};
    std::map<std::string, const pt::ptree*> sections;
    std::optional<std::string> preset;
    for (const auto& [key, child] : tree) {
        if (child.empty()) {
            require(key == "preset", ErrorCategory::config,
                    "unknown top-level key '" + key + "' (or empty section)");
            preset = child.data();
            continue;
        }
        require(kSections.count(key) == 1, ErrorCategory::config, "unknown section [" + key + "]");
        sections[key] = &child;
    }
    auto section = [&](const std::string& name) -> const pt::ptree* {
        auto it = sections.find(name);
        return it == sections.end() ? nullptr : it->second;
    };

    using detail::SectionReader;
    const SectionReader train_sec(section("train"), "train",
                                  {"total_steps", "lr_base", "lr_drop_steps", "lr_drop_factor", "seed",
                                   "eval_every", "target_val_accuracy", "early_stop"});
    std::size_t total_steps = 1000;
    train_sec.read("total_steps", total_steps);

    ExperimentConfig cfg;
    TrainConfig& t = cfg.train;
    if (!preset || *preset == "baseline")
        t = preset_baseline(total_steps);
    else if (*preset == "pmm")
        t = preset_pmm(total_steps);
    else if (*preset == "mms")
        t = preset_mms(total_steps);
    else
        fail(ErrorCategory::config, "unknown preset '" + *preset + "'");

    train_sec.read("lr_base", t.lr_base);
    if (auto v = train_sec.get("lr_drop_steps")) t.lr_drop_steps = detail::parse_cfg_sizes(*v, "train", "lr_drop_steps");
    train_sec.read("lr_drop_factor", t.lr_drop_factor);
    train_sec.read_u64("seed", t.seed);
    train_sec.read("eval_every", t.eval_every);
    if (auto v = train_sec.get("target_val_accuracy")) {
        if (detail::trim(*v) == "none")
            t.target_val_accuracy.reset();
        else
            t.target_val_accuracy = detail::parse_cfg_double(*v, "train", "target_val_accuracy");
    }
    train_sec.read("early_stop", t.early_stop);

    const SectionReader obj_sec(section("objective"), "objective", {"risk", "reg", "weight_decay", "phi_max_mode"});
    if (auto v = obj_sec.get("risk")) {
        if (*v == "hinge")
            t.objective.risk = RiskKind::hinge;
        else if (*v == "cross_entropy")
            t.objective.risk = RiskKind::cross_entropy;
        else
            fail(ErrorCategory::config, "[objective] risk: unknown value '" + *v + "'");
    }
    double wd = t.objective.reg.tag == RegKind::Tag::weight_decay ? t.objective.reg.coef : 5e-4;
    obj_sec.read("weight_decay", wd);
    if (auto v = obj_sec.get("reg")) {
        if (*v == "none")
            t.objective.reg = RegKind::none();
        else if (*v == "weight_decay")
            t.objective.reg = RegKind{RegKind::Tag::weight_decay, wd};
        else if (*v == "one_vs_all_l2")
            t.objective.reg = RegKind::one_vs_all_l2();
        else if (*v == "pmm")
            t.objective.reg = RegKind::pmm();
        else
            fail(ErrorCategory::config, "[objective] reg: unknown value '" + *v + "'");
    } else if (t.objective.reg.tag == RegKind::Tag::weight_decay) {
        t.objective.reg.coef = wd;
    }
    if (obj_sec.get("weight_decay"))
        require(t.objective.reg.tag == RegKind::Tag::weight_decay, ErrorCategory::config,
                "[objective] weight_decay is only valid with reg = weight_decay");
    if (auto v = obj_sec.get("phi_max_mode")) {
        if (*v == "stop_gradient")
            t.objective.phi_max_mode = PhiMaxMode::stop_gradient;
        else if (*v == "flow_gradient")
            t.objective.phi_max_mode = PhiMaxMode::flow_gradient;
        else
            fail(ErrorCategory::config, "[objective] phi_max_mode: unknown value '" + *v + "'");
    }

    const SectionReader alpha_sec(section("alpha"), "alpha", {"schedule", "value", "start", "end", "total_steps"});
    if (auto v = alpha_sec.get("schedule")) {
        if (*v == "constant")
            t.alpha = AlphaSchedule::constant(t.alpha.start);
        else if (*v == "linear")
            t.alpha = AlphaSchedule{AlphaSchedule::Kind::linear, t.alpha.start, t.alpha.end,
                                    std::max<std::size_t>(1, t.total_steps)};
        else
            fail(ErrorCategory::config, "[alpha] schedule: unknown value '" + *v + "'");
    }
    if (t.alpha.kind == AlphaSchedule::Kind::constant) {
        require(!alpha_sec.get("start") && !alpha_sec.get("end") && !alpha_sec.get("total_steps"),
                ErrorCategory::config, "[alpha] constant schedule takes only 'value'");
        double a = t.alpha.start;
        alpha_sec.read("value", a);
        require(a >= 0, ErrorCategory::config, "[alpha] value must be >= 0");
        t.alpha = AlphaSchedule::constant(a);
    } else {
        require(!alpha_sec.get("value"), ErrorCategory::config, "[alpha] linear schedule takes start/end");
        alpha_sec.read("start", t.alpha.start);
        alpha_sec.read("end", t.alpha.end);
        alpha_sec.read("total_steps", t.alpha.total_steps);
    }

    const SectionReader sel_sec(section("selection"), "selection", {"mode", "big_batch", "small_batch"});
    if (auto v = sel_sec.get("mode")) {
        if (*v == "random")
            t.selection.mode = SelectionMode::random;
        else if (*v == "mms")
            t.selection.mode = SelectionMode::mms;
        else
            fail(ErrorCategory::config, "[selection] mode: unknown value '" + *v + "'");
    }
    sel_sec.read("big_batch", t.selection.big_batch);
    sel_sec.read("small_batch", t.selection.small_batch);

    const SectionReader model_sec(section("model"), "model", {"hidden", "activation"});
    if (auto v = model_sec.get("hidden")) t.model.hidden = detail::parse_cfg_sizes(*v, "model", "hidden");
    if (auto v = model_sec.get("activation")) t.model.activation = parse_activation(*v);

    const SectionReader data_sec(section("data"), "data",
                                 {"source", "seed", "n_per_class", "centers", "sigma", "n", "noise_sigma",
                                  "inner_radius", "outer_radius", "path", "has_header", "images", "labels",
                                  "train_fraction", "split_seed"});
    DataConfig& d = cfg.data;
    if (auto v = data_sec.get("source")) {
        if (*v == "blobs") {
            d.source = DataConfig::Source::synthetic;
            d.synthetic.kind = SyntheticSpec::Kind::blobs;
        } else if (*v == "moons") {
            d.source = DataConfig::Source::synthetic;
            d.synthetic.kind = SyntheticSpec::Kind::moons;
        } else if (*v == "rings") {
            d.source = DataConfig::Source::synthetic;
            d.synthetic.kind = SyntheticSpec::Kind::rings;
        } else if (*v == "csv") {
            d.source = DataConfig::Source::csv;
        } else if (*v == "idx") {
            d.source = DataConfig::Source::idx;
        } else {
            fail(ErrorCategory::config, "[data] source: unknown value '" + *v + "'");
        }
    }
    data_sec.read_u64("seed", d.synthetic.seed);
    data_sec.read("n_per_class", d.synthetic.n_per_class);
    if (auto v = data_sec.get("centers")) d.synthetic.centers = detail::parse_cfg_points(*v, "data", "centers");
    data_sec.read("sigma", d.synthetic.sigma);
    data_sec.read("n", d.synthetic.n);
    data_sec.read("noise_sigma", d.synthetic.noise_sigma);
    data_sec.read("inner_radius", d.synthetic.inner_radius);
    data_sec.read("outer_radius", d.synthetic.outer_radius);
    data_sec.read("path", d.path);
    data_sec.read("has_header", d.has_header);
    data_sec.read("images", d.images_path);
    data_sec.read("labels", d.labels_path);
    data_sec.read("train_fraction", d.train_fraction);
    data_sec.read_u64("split_seed", d.split_seed);

    t.validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCategory::io, "cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str());
}

/// Canonical, fully explicit text form. parse(to_ini(c)) reproduces c.
inline std::string to_ini(const ExperimentConfig& cfg) {
    const TrainConfig& t = cfg.train;
    std::ostringstream o;
    o << "[train]\n"
      << "total_steps = " << t.total_steps << '\n'
      << "lr_base = " << format_double(t.lr_base) << '\n'
      << "lr_drop_steps = " << detail::join_sizes(t.lr_drop_steps) << '\n'
      << "lr_drop_factor = " << format_double(t.lr_drop_factor) << '\n'
      << "seed = " << t.seed << '\n'
      << "eval_every = " << t.eval_every << '\n'
      << "target_val_accuracy = " << (t.target_val_accuracy ? format_double(*t.target_val_accuracy) : "none") << '\n'
      << "early_stop = " << (t.early_stop ? "true" : "false") << '\n';
    o << "[objective]\n"
      << "risk = " << detail::risk_name(t.objective.risk) << '\n'
      << "reg = " << detail::reg_name(t.objective.reg.tag) << '\n';
    if (t.objective.reg.tag == RegKind::Tag::weight_decay)
        o << "weight_decay = " << format_double(t.objective.reg.coef) << '\n';
    o << "phi_max_mode = " << detail::phi_mode_name(t.objective.phi_max_mode) << '\n';
    o << "[alpha]\n";
    if (t.alpha.kind == AlphaSchedule::Kind::constant) {
        o << "schedule = constant\nvalue = " << format_double(t.alpha.start) << '\n';
    } else {
        o << "schedule = linear\nstart = " << format_double(t.alpha.start) << "\nend = " << format_double(t.alpha.end)
          << "\ntotal_steps = " << t.alpha.total_steps << '\n';
    }
    o << "[selection]\n"
      << "mode = " << selection_mode_name(t.selection.mode) << '\n'
      << "big_batch = " << t.selection.big_batch << '\n'
      << "small_batch = " << t.selection.small_batch << '\n';
    o << "[model]\n"
      << "hidden = " << detail::join_sizes(t.model.hidden) << '\n'
      << "activation = " << activation_name(t.model.activation) << '\n';

    const DataConfig& d = cfg.data;
    o << "[data]\n";
    switch (d.source) {
        case DataConfig::Source::synthetic: {
            const SyntheticSpec& s = d.synthetic;
            o << "source = " << detail::synthetic_name(s.kind) << "\nseed = " << s.seed << '\n';
            if (s.kind == SyntheticSpec::Kind::blobs) {
                o << "n_per_class = " << s.n_per_class << "\ncenters = " << detail::format_points(s.centers)
                  << "\nsigma = " << format_double(s.sigma) << '\n';
            } else {
                o << "n = " << s.n << "\nnoise_sigma = " << format_double(s.noise_sigma) << '\n';
                if (s.kind == SyntheticSpec::Kind::rings)
                    o << "inner_radius = " << format_double(s.inner_radius)
                      << "\nouter_radius = " << format_double(s.outer_radius) << '\n';
            }
            break;
        }
        case DataConfig::Source::csv:
            o << "source = csv\npath = " << d.path << "\nhas_header = " << (d.has_header ? "true" : "false") << '\n';
            break;
        case DataConfig::Source::idx:
            o << "source = idx\nimages = " << d.images_path << "\nlabels = " << d.labels_path << '\n';
            break;
    }
    o << "train_fraction = " << format_double(d.train_fraction) << '\n'
      << "split_seed = " << d.split_seed << '\n';
    return o.str();
}

/// FNV-1a over the canonical text.
inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : to_ini(cfg)) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Loads the full dataset described by `d` (before splitting).
inline LabeledDataset load_dataset(const DataConfig& d) {
    switch (d.source) {
        case DataConfig::Source::synthetic: return gen_synthetic(d.synthetic);
        case DataConfig::Source::csv: return load_csv(d.path, d.has_header);
        case DataConfig::Source::idx: return load_idx(d.images_path, d.labels_path);
    }
    fail(ErrorCategory::config, "unknown data source");
}

}  // namespace pmmkit
