#include <catch2/catch_amalgamated.hpp>

#include <numeric>
#include <set>

#include "test_support.hpp"

using namespace pmmkit;
using testing::error_category;

namespace {

TrainConfig small_config(std::size_t steps = 60) {
    TrainConfig c = preset_baseline(steps);
    c.lr_base = 0.05;
    c.selection = {SelectionMode::random, 16, 16};
    c.model.hidden = {6};
    c.model.activation = Activation::tanh;
    c.eval_every = 10;
    c.seed = 11;
    return c;
}

}  // namespace

TEST_CASE("lr_at drops by the factor at each drop step") {
    TrainConfig c;
    c.lr_base = 1.0;
    c.lr_drop_steps = {10, 20};
    c.lr_drop_factor = 10.0;
    CHECK(lr_at(c, 0) == 1.0);
    CHECK(lr_at(c, 9) == 1.0);
    CHECK(lr_at(c, 10) == 0.1);
    CHECK(lr_at(c, 19) == 0.1);
    CHECK(lr_at(c, 20) == Catch::Approx(0.01));
}

TEST_CASE("zero-step run records the initial state only") {
    const auto [train, val] = testing::small_blobs();
    TrainConfig c = small_config(0);
    const auto r = train_run(c, train, val);
    REQUIRE(r.metrics.size() == 1);
    CHECK(r.metrics[0].step == 0);
    CHECK_FALSE(r.metrics[0].risk_sum);
    CHECK_FALSE(r.metrics[0].mean_mms);
    CHECK(r.state.step == 0);
    CHECK(r.state.model == initial_state(c, train.input_dim(), 3).model);
}

TEST_CASE("metrics are recorded at eval_every and at the end") {
    const auto [train, val] = testing::small_blobs();
    TrainConfig c = small_config(25);
    c.eval_every = 10;
    const auto r = train_run(c, train, val);
    std::vector<std::size_t> steps;
    for (const auto& m : r.metrics) steps.push_back(m.step);
    CHECK(steps == std::vector<std::size_t>{0, 10, 20, 25});
    CHECK(r.metrics[1].risk_sum.has_value());
    CHECK(r.metrics.back().train_error == evaluate(r.state.model, train).error);
    CHECK(r.metrics.back().val_error == evaluate(r.state.model, val).error);

    const std::string csv = metrics_csv(r.metrics);
    CHECK(csv.rfind("step,lr,alpha,train_error,val_error,risk_sum,reg_sum,mean_mms,min_norm_pairwise_margin\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("random selection with b = B is plain minibatch SGD") {
    const auto [train, val] = testing::small_blobs();
    TrainConfig c = small_config(30);
    c.lr_drop_steps = {20};

    // Reference loop: same init, same epoch shuffles, no selection.
    TrainState s = initial_state(c, train.input_dim(), 3);
    Mlp ref = s.model;
    std::size_t step = 0;
    for (std::size_t epoch = 0; step < c.total_steps; ++epoch) {
        const auto batches =
            batch_iter(train.size(), 16, derive_seed(derive_seed(c.seed, seed_tag::shuffle), epoch));
        for (const auto& idx : batches) {
            if (step == c.total_steps) break;
            const LabeledDataset batch = subset(train, idx);
            const ForwardTrace trace = forward(ref, batch.X);
            const auto mo = model_gradients(ref, trace, batch.y, c.objective, alpha_at(c.alpha, step));
            sgd_step(ref, mo.grads, lr_at(c, step));
            ++step;
        }
    }

    std::vector<std::vector<std::size_t>> trained;
    RunOptions opts;
    opts.observer = [&](const StepEvent& ev) {
        CHECK(ev.trained.size() == ev.candidates.size());
        CHECK(std::multiset<std::size_t>(ev.trained.begin(), ev.trained.end()) ==
              std::multiset<std::size_t>(ev.candidates.begin(), ev.candidates.end()));
        trained.push_back(ev.trained);
    };
    const auto r = train_run(c, train, val, opts);
    CHECK(trained.size() == 30);
    // Order within the batch only changes the summation order.
    for (std::size_t i = 0; i < ref.head.W.data().size(); ++i)
        CHECK(testing::close(r.state.model.head.W.data()[i], ref.head.W.data()[i], 1e-10, 1e-12));
    for (std::size_t i = 0; i < ref.body[0].W.data().size(); ++i)
        CHECK(testing::close(r.state.model.body[0].W.data()[i], ref.body[0].W.data()[i], 1e-10, 1e-12));
}

TEST_CASE("mms runs train on the smallest-margin candidates") {
    const auto [train, val] = testing::small_blobs();
    TrainConfig c = small_config(20);
    c.selection = {SelectionMode::mms, 40, 8};

    Mlp shadow = initial_state(c, train.input_dim(), 3).model;
    std::size_t events = 0;
    RunOptions opts;
    opts.observer = [&](const StepEvent& ev) {
        ++events;
        const LabeledDataset cand = subset(train, ev.candidates);
        const Mat scores = forward(shadow, cand.X).scores;
        std::vector<double> margins(cand.size());
        for (std::size_t i = 0; i < cand.size(); ++i) margins[i] = mms(scores.row(i), shadow.head).mms;
        REQUIRE(ev.selection.indices.size() == 8);
        std::vector<double> chosen;
        for (std::size_t i : ev.selection.indices) chosen.push_back(margins[i]);
        const double worst_chosen = *std::max_element(chosen.begin(), chosen.end());
        std::set<std::size_t> picked(ev.selection.indices.begin(), ev.selection.indices.end());
        for (std::size_t i = 0; i < cand.size(); ++i)
            if (!picked.count(i)) CHECK(margins[i] >= worst_chosen);
        CHECK(*ev.selection.mean_mms ==
              Catch::Approx(std::accumulate(chosen.begin(), chosen.end(), 0.0) / 8.0).epsilon(1e-12));

        const LabeledDataset batch = subset(train, ev.trained);
        const auto mo = model_gradients(shadow, forward(shadow, batch.X), batch.y, c.objective, ev.alpha);
        sgd_step(shadow, mo.grads, ev.lr);
    };
    const auto r = train_run(c, train, val, opts);
    CHECK(events == 20);
    CHECK(r.state.model == shadow);
    CHECK(r.metrics.back().mean_mms.has_value());
}

TEST_CASE("first mms selection does not depend on labels") {
    const auto [train, val] = testing::small_blobs();
    TrainConfig c = small_config(1);
    c.selection = {SelectionMode::mms, 40, 8};
    LabeledDataset relabeled = train;
    for (auto& y : relabeled.y) y = (y + 1) % 3;

    auto first_selection = [&](const LabeledDataset& ds) {
        std::vector<std::size_t> out;
        RunOptions opts;
        opts.observer = [&](const StepEvent& ev) { out = ev.trained; };
        train_run(c, ds, val, opts);
        return out;
    };
    CHECK(first_selection(train) == first_selection(relabeled));
}

TEST_CASE("runs are deterministic and resume exactly") {
    const auto [train, val] = testing::small_blobs();
    for (SelectionMode mode : {SelectionMode::random, SelectionMode::mms}) {
        TrainConfig c = small_config(50);
        c.selection = {mode, 32, 8};
        c.lr_drop_steps = {30};
        const auto full = train_run(c, train, val);
        const auto again = train_run(c, train, val);
        CHECK(full.state == again.state);
        CHECK(metrics_csv(full.metrics) == metrics_csv(again.metrics));

        const auto half = train_run(c, train, val, RunOptions{25, {}});
        CHECK(half.state.step == 25);
        const Checkpoint ck = decode_checkpoint(encode_checkpoint(Checkpoint{kCheckpointVersion, "", half.state}));
        const auto resumed = continue_run(c, ck.state, train, val);
        CHECK(resumed.state == full.state);

        auto joined = half.metrics;
        joined.insert(joined.end(), resumed.metrics.begin(), resumed.metrics.end());
        CHECK(metrics_csv(joined) == metrics_csv(full.metrics));

        TrainConfig other = c;
        other.seed = c.seed + 1;
        CHECK_FALSE(train_run(other, train, val).state.model == full.state.model);
    }
}

TEST_CASE("early stopping at the target accuracy") {
    const auto [train, val] = testing::small_blobs();
    TrainConfig c = small_config(400);
    c.eval_every = 5;
    c.target_val_accuracy = 0.9;
    c.early_stop = true;
    const auto r = train_run(c, train, val);
    CHECK(r.early_stopped);
    CHECK(1.0 - r.metrics.back().val_error >= 0.9);
    CHECK(r.state.step < 400);
    for (std::size_t i = 0; i + 1 < r.metrics.size(); ++i) CHECK(1.0 - r.metrics[i].val_error < 0.9);
}

TEST_CASE("evaluate and confusion") {
    Mlp m;
    m.head = {Mat::identity(2), {0, 0}};
    const auto ds = LabeledDataset::make(Mat::from_rows({{1, 0}, {0, 1}, {2, 1}, {0, 3}}), {0, 1, 1, 0});
    const auto e = evaluate(m, ds);
    CHECK(e.error == 0.5);
    CHECK(e.confusion == std::vector<std::vector<std::size_t>>{{1, 1}, {1, 1}});
    CHECK(error_category([&] { evaluate(m, LabeledDataset::make(Mat(1, 3), {0})); }) == ErrorCategory::dimension);
}

TEST_CASE("min_norm_pairwise_margin") {
    Mlp m;
    m.head = {Mat::from_rows({{1, 0}, {-1, 0}}), {0, 0}};
    const auto ds = LabeledDataset::make(Mat::from_rows({{2, 0}, {-1, 0}, {1, 1}}), {0, 1, 0});
    // Distances 2, 1, 1; largest feature norm 2.
    CHECK(min_norm_pairwise_margin(m, ds) == Catch::Approx(0.5));
    const auto wrong = LabeledDataset::make(Mat::from_rows({{2, 0}, {1, 0}}), {0, 1});
    CHECK(min_norm_pairwise_margin(m, wrong) == Catch::Approx(-0.5));
}

TEST_CASE("model_objective adds body weight decay") {
    RngStream rng(3);
    Mlp m = init(MlpShape{3, {4}, {Activation::relu}, 2}, 5);
    const Mat x = testing::random_mat(6, 3, rng);
    const auto y = testing::random_labels(6, 2, rng);
    ObjectiveConfig cfg{RiskKind::cross_entropy, RegKind::weight_decay(0.1), PhiMaxMode::stop_gradient};
    const auto v = model_objective(m, x, y, cfg, 0.5);
    const auto head_only = objective_batch(m.head, forward(m, x).features, y, cfg, 0.5);
    double body = 0.0;
    for (double w : m.body[0].W.data()) body += w * w;
    for (double b : m.body[0].b) body += b * b;
    CHECK(v.reg_sum == Catch::Approx(head_only.reg_sum + 0.1 * body));
    CHECK(v.total == Catch::Approx(0.5 * v.reg_sum + v.risk_sum));
    const auto g = model_gradients(m, forward(m, x), y, cfg, 0.5);
    CHECK(g.value.total == Catch::Approx(v.total));

    cfg.reg = RegKind::pmm();
    const auto p = model_objective(m, x, y, cfg, 0.5);
    CHECK(p.reg_sum == Catch::Approx(objective_batch(m.head, forward(m, x).features, y, cfg, 0.5).reg_sum));
}

TEST_CASE("export_embeddings") {
    const auto dir = testing::scratch_dir("embed");
    Mlp m = init(MlpShape{2, {3}, {Activation::tanh}, 3}, 2);
    const auto [train, val] = testing::small_blobs();
    export_embeddings(m, val, (dir / "e.csv").string());
    const auto ds = load_csv((dir / "e.csv").string(), true);
    CHECK(ds.size() == val.size());
    CHECK(ds.feature_names == std::vector<std::string>{"f0", "f1", "f2", "label"});
    const Mat features = extract_features(m, val.X);
    const auto pred = predict(forward(m, val.X).scores);
    for (std::size_t i = 0; i < val.size(); ++i) {
        for (std::size_t t = 0; t < 3; ++t) CHECK(ds.X(i, t) == features(i, t));
        CHECK(ds.X(i, 3) == static_cast<double>(val.y[i]));
        CHECK(ds.y[i] == pred[i]);
    }
}

TEST_CASE("compare_runs") {
    ExperimentConfig a;
    a.train = small_config(30);
    a.train.target_val_accuracy = 0.5;
    a.data.synthetic.centers = {{0, 0}, {3, 0}, {0, 3}};
    a.data.synthetic.n_per_class = 20;
    a.data.synthetic.sigma = 0.6;

    const auto same = compare_runs(a, a, 3);
    REQUIRE(same.rows.size() == 3);
    CHECK(same.accuracy.tie == 3);
    CHECK(same.margin.tie == 3);
    CHECK(same.speed.tie == 3);
    CHECK(same.rows[0].a.final_val_accuracy == same.rows[0].b.final_val_accuracy);
    CHECK(same.rows[1].a.config_hash == same.rows[1].b.config_hash);
    const std::string csv = comparison_csv(same);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

    ExperimentConfig b = a;
    b.train.selection = {SelectionMode::mms, 32, 8};
    const auto diff = compare_runs(a, b, 2);
    CHECK(diff.accuracy.a + diff.accuracy.b + diff.accuracy.tie == 2);

    ExperimentConfig other_data = a;
    other_data.data.split_seed = 9;
    CHECK(error_category([&] { compare_runs(a, other_data, 1); }) == ErrorCategory::config);
}

TEST_CASE("training separates easy blobs") {
    const auto [train, val] = testing::small_blobs(5, 60);
    TrainConfig c = small_config(300);
    const auto r = train_run(c, train, val);
    CHECK(r.metrics.back().train_error <= 0.02);
    CHECK(r.metrics.back().val_error <= 0.05);
}

TEST_CASE("run input validation") {
    const auto [train, val] = testing::small_blobs();
    TrainConfig c = small_config();
    c.selection = {SelectionMode::mms, 8, 16};
    CHECK(error_category([&] { train_run(c, train, val); }) == ErrorCategory::config);
    c = small_config();
    const auto wide = LabeledDataset::make(Mat(2, 5), {0, 1});
    CHECK(error_category([&] { train_run(c, train, wide); }) == ErrorCategory::dimension);
}
