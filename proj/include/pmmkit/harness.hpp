#pragma once

// Training loop and experiment utilities.
//
// Each step draws the next size-B candidate batch from the seeded epoch
// shuffle, selects b of them (smallest MMS or uniformly at random), computes
// the objective and its gradients on the selected samples and applies one SGD
// update. MMS and random runs with the same seed see the same candidates.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pmmkit/config.hpp"
#include "pmmkit/data.hpp"
#include "pmmkit/error.hpp"
#include "pmmkit/margin.hpp"
#include "pmmkit/model.hpp"
#include "pmmkit/numkernel.hpp"
#include "pmmkit/objective.hpp"
#include "pmmkit/selector.hpp"

namespace pmmkit {

namespace seed_tag {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t shuffle = 2;
inline constexpr std::uint64_t selection = 3;
}  // namespace seed_tag

inline double lr_at(const TrainConfig& cfg, std::size_t step) {
    double lr = cfg.lr_base;
    for (std::size_t drop : cfg.lr_drop_steps)
        if (drop <= step) lr /= cfg.lr_drop_factor;
    return lr;
}

// --- whole-model objective ------------------------------------------------

namespace detail {

inline double body_square_sum(const Mlp& model) {
    double s = 0.0;
    for (const auto& l : model.body) s += squared_norm(l.W.data()) + squared_norm(l.b);
    return s;
}

}  // namespace detail

/// Objective of the full model on a batch. Weight decay covers every
/// parameter, body included; the other regularizers act on the head only.
inline ObjectiveValue model_objective(const Mlp& model, const Mat& x, std::span<const ClassId> labels,
                                      const ObjectiveConfig& cfg, double alpha) {
    const ForwardTrace trace = forward(model, x);
    ObjectiveValue v = objective_batch(model.head, trace.features, labels, cfg, alpha);
    if (cfg.reg.tag == RegKind::Tag::weight_decay) {
        v.reg_sum += cfg.reg.coef * detail::body_square_sum(model);
        v.total = alpha * v.reg_sum + v.risk_sum;
    }
    return v;
}

struct ModelObjective {
    ObjectiveValue value;
    ModelGradients grads;
};

inline ModelObjective model_gradients(const Mlp& model, const ForwardTrace& trace, std::span<const ClassId> labels,
                                      const ObjectiveConfig& cfg, double alpha) {
    const ObjectivePartials parts = objective_partials(model.head, trace.features, labels, cfg, alpha);
    ModelObjective out{parts.value, backward(model, trace, parts.d_scores, parts.reg_dPhi)};
    auto& head = out.grads.head;
    for (std::size_t i = 0; i < head.dW.data().size(); ++i) head.dW.data()[i] += parts.reg_dW.data()[i];
    for (std::size_t j = 0; j < head.db.size(); ++j) head.db[j] += parts.reg_db[j];
    if (cfg.reg.tag == RegKind::Tag::weight_decay) {
        const double c = cfg.reg.coef;
        out.value.reg_sum += c * detail::body_square_sum(model);
        out.value.total = alpha * out.value.reg_sum + out.value.risk_sum;
        for (std::size_t l = 0; l < model.body.size(); ++l) {
            const auto& layer = model.body[l];
            auto& g = out.grads.body[l];
            for (std::size_t i = 0; i < g.dW.data().size(); ++i) g.dW.data()[i] += alpha * c * 2.0 * layer.W.data()[i];
            for (std::size_t i = 0; i < g.db.size(); ++i) g.db[i] += alpha * c * 2.0 * layer.b[i];
        }
    }
    return out;
}

// --- evaluation -----------------------------------------------------------

struct EvalResult {
    double error = 0.0;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

inline EvalResult evaluate(const Mlp& model, const LabeledDataset& ds) {
    if (ds.input_dim() != model.input_dim())
        fail(ErrorCategory::dimension,
             "dataset dim " + std::to_string(ds.input_dim()) + " != model input dim " +
             std::to_string(model.input_dim()));
    const std::size_t k = model.num_classes();
    if (ds.k > k)
        fail(ErrorCategory::dimension,
             "dataset has " + std::to_string(ds.k) + " classes, model only " + std::to_string(k));
    const auto pred = predict(forward(model, ds.X).scores);
    EvalResult r{0.0, std::vector<std::vector<std::size_t>>(k, std::vector<std::size_t>(k, 0))};
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        ++r.confusion[ds.y[i]][pred[i]];
        if (pred[i] != ds.y[i]) ++wrong;
    }
    r.error = static_cast<double>(wrong) / static_cast<double>(ds.size());
    return r;
}

/// Smallest pairwise margin (true class vs competitive class) over `ds`,
/// normalized by the largest feature norm of `ds`.
inline double min_norm_pairwise_margin(const Mlp& model, const LabeledDataset& ds) {
    const Mat features = extract_features(model, ds.X);
    const double phi_max = phi_max_norm(features).first;
    if (phi_max <= 0) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ds.size(); ++i)
        best = std::min(best, normalized_feature_margin(model.head, features.row(i), ds.y[i], phi_max));
    return best;
}

// --- training -------------------------------------------------------------

struct MetricsRecord {
    std::size_t step = 0;
    double lr = 0.0;
    double alpha = 0.0;
    double train_error = 0.0;
    double val_error = 0.0;
    std::optional<double> risk_sum;  // of the most recent update's batch
    std::optional<double> reg_sum;
    std::optional<double> mean_mms;
    double min_norm_pairwise_margin = 0.0;
};

/// Everything needed to continue a run exactly.
struct TrainState {
    Mlp model;
    std::size_t step = 0;
    std::size_t epoch = 0;
    std::size_t batch_in_epoch = 0;
    RngStream selection_rng;

    bool operator==(const TrainState&) const = default;
};

/// One update, reported to the observer after it is applied.
struct StepEvent {
    std::size_t step = 0;  // update index (0-based)
    double lr = 0.0;
    double alpha = 0.0;
    std::vector<std::size_t> candidates;  // dataset indices of the B-batch
    SelectionResult selection;            // indices into `candidates`
    std::vector<std::size_t> trained;     // dataset indices actually used
    ObjectiveValue value;                 // at the pre-update parameters
};

struct RunOptions {
    std::optional<std::size_t> stop_after;  // halt once this many updates are done
    std::function<void(const StepEvent&)> observer;
};

struct TrainResult {
    TrainState state;
    std::vector<MetricsRecord> metrics;
    bool early_stopped = false;
};

inline TrainState initial_state(const TrainConfig& cfg, std::size_t input_dim, std::size_t num_classes) {
    TrainState s;
    s.model = init(cfg.model.shape(input_dim, num_classes), derive_seed(cfg.seed, seed_tag::init));
    s.selection_rng = RngStream(derive_seed(cfg.seed, seed_tag::selection));
    return s;
}

namespace detail {

inline std::uint64_t epoch_seed(const TrainConfig& cfg, std::size_t epoch) {
    return derive_seed(derive_seed(cfg.seed, seed_tag::shuffle), epoch);
}

inline void check_run_inputs(const TrainConfig& cfg, const LabeledDataset& train, const LabeledDataset& val) {
    cfg.validate();
    require(train.size() >= 1 && val.size() >= 1, ErrorCategory::invalid_argument, "datasets must be non-empty");
    require(train.input_dim() == val.input_dim(), ErrorCategory::dimension, "train/val feature dims differ");
}

}  // namespace detail

/// Continues `state` up to cfg.total_steps (or opts.stop_after). A record is
/// emitted at every multiple of eval_every and at total_steps; the record at
/// the starting step is emitted only for a fresh run.
inline TrainResult continue_run(const TrainConfig& cfg, TrainState state, const LabeledDataset& train,
                                const LabeledDataset& val, const RunOptions& opts = {}) {
    detail::check_run_inputs(cfg, train, val);
    require(state.model.input_dim() == train.input_dim(), ErrorCategory::dimension,
            "model input dim does not match data");
    require(train.k <= state.model.num_classes() && val.k <= state.model.num_classes(), ErrorCategory::dimension,
            "data has more classes than the model");

    const std::size_t stop = std::min(cfg.total_steps, opts.stop_after.value_or(cfg.total_steps));
    TrainResult result;
    std::optional<StepEvent> last;

    auto record = [&](std::size_t step) {
        MetricsRecord r;
        r.step = step;
        const std::size_t upd = step == 0 ? 0 : step - 1;
        r.lr = last ? last->lr : lr_at(cfg, upd);
        r.alpha = last ? last->alpha : alpha_at(cfg.alpha, upd);
        r.train_error = evaluate(state.model, train).error;
        r.val_error = evaluate(state.model, val).error;
        if (last) {
            r.risk_sum = last->value.risk_sum;
            r.reg_sum = last->value.reg_sum;
            r.mean_mms = last->selection.mean_mms;
        }
        r.min_norm_pairwise_margin = min_norm_pairwise_margin(state.model, val);
        result.metrics.push_back(r);
        return r;
    };
    auto should_record = [&](std::size_t step) { return step % cfg.eval_every == 0 || step == cfg.total_steps; };
    auto reached_target = [&](const MetricsRecord& r) {
        return cfg.early_stop && cfg.target_val_accuracy && 1.0 - r.val_error >= *cfg.target_val_accuracy;
    };

    if (state.step == 0 && should_record(0)) {
        if (reached_target(record(0))) {
            result.early_stopped = true;
            result.state = std::move(state);
            return result;
        }
    }

    const std::size_t big = cfg.selection.big_batch;
    std::vector<std::vector<std::size_t>> batches;
    std::size_t batches_epoch = std::numeric_limits<std::size_t>::max();
    while (state.step < stop) {
        if (batches_epoch != state.epoch) {
            batches = batch_iter(train.size(), big, detail::epoch_seed(cfg, state.epoch));
            batches_epoch = state.epoch;
        }
        if (state.batch_in_epoch >= batches.size()) {
            ++state.epoch;
            state.batch_in_epoch = 0;
            continue;
        }

        StepEvent ev;
        ev.step = state.step;
        ev.lr = lr_at(cfg, state.step);
        ev.alpha = alpha_at(cfg.alpha, state.step);
        ev.candidates = batches[state.batch_in_epoch];
        const std::size_t b = std::min(cfg.selection.small_batch, ev.candidates.size());

        if (cfg.selection.mode == SelectionMode::mms) {
            const LabeledDataset cand = subset(train, ev.candidates);
            const ForwardTrace cand_trace = forward(state.model, cand.X);
            ev.selection = select_mms(cand_trace.scores, state.model.head, b);
        } else {
            ev.selection = select_random(ev.candidates.size(), b, state.selection_rng);
        }
        ev.trained.reserve(b);
        for (std::size_t i : ev.selection.indices) ev.trained.push_back(ev.candidates[i]);

        const LabeledDataset batch = subset(train, ev.trained);
        const ForwardTrace trace = forward(state.model, batch.X);
        const ModelObjective mo = model_gradients(state.model, trace, batch.y, cfg.objective, ev.alpha);
        ev.value = mo.value;
        sgd_step(state.model, mo.grads, ev.lr);

        ++state.step;
        ++state.batch_in_epoch;
        last = std::move(ev);
        if (opts.observer) opts.observer(*last);

        if (should_record(state.step) && reached_target(record(state.step))) {
            result.early_stopped = true;
            break;
        }
    }
    result.state = std::move(state);
    return result;
}

inline TrainResult train_run(const TrainConfig& cfg, const LabeledDataset& train, const LabeledDataset& val,
                             const RunOptions& opts = {}) {
    detail::check_run_inputs(cfg, train, val);
    const std::size_t k = std::max({train.k, val.k, std::size_t{2}});
    return continue_run(cfg, initial_state(cfg, train.input_dim(), k), train, val, opts);
}

// --- persistence of metrics and embeddings ---------------------------------

inline std::string metrics_csv(const std::vector<MetricsRecord>& records, bool with_header = true) {
    std::ostringstream o;
    if (with_header)
        o << "step,lr,alpha,train_error,val_error,risk_sum,reg_sum,mean_mms,min_norm_pairwise_margin\n";
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    for (const auto& r : records) {
        o << r.step << ',' << format_double(r.lr) << ',' << format_double(r.alpha) << ','
          << format_double(r.train_error) << ',' << format_double(r.val_error) << ',' << opt(r.risk_sum) << ','
          << opt(r.reg_sum) << ',' << opt(r.mean_mms) << ',' << format_double(r.min_norm_pairwise_margin) << '\n';
    }
    return o.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail(ErrorCategory::io, "cannot write '" + path + "'");
    out << text;
    if (!out)
        fail(ErrorCategory::io, "write failed for '" + path + "'");
}

/// CSV of penultimate features with true and predicted labels.
inline void export_embeddings(const Mlp& model, const LabeledDataset& ds, const std::string& path) {
    const ForwardTrace trace = forward(model, ds.X);
    const auto pred = predict(trace.scores);
    std::ostringstream o;
    for (std::size_t t = 0; t < trace.features.cols(); ++t) o << 'f' << t << ',';
    o << "label,predicted\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : trace.features.row(i)) o << format_double(v) << ',';
        o << ds.y[i] << ',' << pred[i] << '\n';
    }
    write_text_file(path, o.str());
}

// --- run summaries and paired comparison ------------------------------------

struct RunSummary {
    std::string run_id;
    double final_val_accuracy = 0.0;
    double final_min_margin = 0.0;
    std::optional<std::size_t> steps_to_target;
    std::uint64_t config_hash = 0;
};

inline RunSummary summarize(const std::string& run_id, const ExperimentConfig& cfg,
                            const std::vector<MetricsRecord>& metrics) {
    require(!metrics.empty(), ErrorCategory::invalid_argument, "no metrics to summarize");
    RunSummary s;
    s.run_id = run_id;
    s.final_val_accuracy = 1.0 - metrics.back().val_error;
    s.final_min_margin = metrics.back().min_norm_pairwise_margin;
    s.config_hash = config_hash(cfg);
    if (cfg.train.target_val_accuracy) {
        for (const auto& r : metrics) {
            if (1.0 - r.val_error >= *cfg.train.target_val_accuracy) {
                s.steps_to_target = r.step;
                break;
            }
        }
    }
    return s;
}

struct PairedRow {
    std::size_t seed_offset = 0;
    RunSummary a;
    RunSummary b;
};

struct WinCount {
    std::size_t a = 0;
    std::size_t b = 0;
    std::size_t tie = 0;
};

struct ComparisonTable {
    std::vector<PairedRow> rows;
    WinCount accuracy;  // higher final val accuracy
    WinCount margin;    // larger final min normalized pairwise margin
    WinCount speed;     // fewer steps to target (reaching it beats not reaching it)
};

/// Train/val split for seed offset `s` of a paired experiment.
inline std::pair<LabeledDataset, LabeledDataset> prepare_data(DataConfig d, std::size_t s) {
    d.synthetic.seed += s;
    d.split_seed += s;
    const LabeledDataset all = load_dataset(d);
    return split(all, SplitSpec{d.train_fraction, d.split_seed});
}

/// Runs both configs on the same data and model seeds for each seed offset.
inline ComparisonTable compare_runs(const ExperimentConfig& cfg_a, const ExperimentConfig& cfg_b, std::size_t n_seeds) {
    cfg_a.train.validate();
    cfg_b.train.validate();
    require(cfg_a.data == cfg_b.data, ErrorCategory::config, "compared configs must share the [data] section");
    require(n_seeds >= 1, ErrorCategory::invalid_argument, "need at least one seed");

    ComparisonTable table;
    auto tally = [](WinCount& w, int cmp) { (cmp > 0 ? w.a : cmp < 0 ? w.b : w.tie) += 1; };
    for (std::size_t s = 0; s < n_seeds; ++s) {
        const auto [train, val] = prepare_data(cfg_a.data, s);
        auto run = [&, &train = train, &val = val](ExperimentConfig cfg, const std::string& id) {
            cfg.train.seed = cfg_a.train.seed + s;
            const TrainResult r = train_run(cfg.train, train, val);
            return summarize(id + "/seed" + std::to_string(s), cfg, r.metrics);
        };
        PairedRow row{s, run(cfg_a, "a"), run(cfg_b, "b")};

        const double acc = row.a.final_val_accuracy - row.b.final_val_accuracy;
        tally(table.accuracy, acc > 0 ? 1 : acc < 0 ? -1 : 0);
        const double mar = row.a.final_min_margin - row.b.final_min_margin;
        tally(table.margin, mar > 0 ? 1 : mar < 0 ? -1 : 0);
        const auto& sa = row.a.steps_to_target;
        const auto& sb = row.b.steps_to_target;
        int spd = 0;
        if (sa && sb)
            spd = *sa < *sb ? 1 : *sa > *sb ? -1 : 0;
        else if (sa || sb)
            spd = sa ? 1 : -1;
        tally(table.speed, spd);
        table.rows.push_back(std::move(row));
    }
    return table;
}

inline std::string comparison_csv(const ComparisonTable& t) {
    std::ostringstream o;
    o << "seed,a_final_val_accuracy,b_final_val_accuracy,a_min_margin,b_min_margin,a_steps_to_target,"
         "b_steps_to_target\n";
    auto steps = [](const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string(); };
    for (const auto& r : t.rows) {
        o << r.seed_offset << ',' << format_double(r.a.final_val_accuracy) << ','
          << format_double(r.b.final_val_accuracy) << ',' << format_double(r.a.final_min_margin) << ','
          << format_double(r.b.final_min_margin) << ',' << steps(r.a.steps_to_target) << ','
          << steps(r.b.steps_to_target) << '\n';
    }
    return o.str();
}

}  // namespace pmmkit
