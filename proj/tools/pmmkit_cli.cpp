// pmmkit command-line front end.
//
// Failures print a single line "error: <category>: <message>" on stderr and
// exit with status 1 (2 for command-line usage errors).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pmmkit/pmmkit.hpp"

namespace fs = std::filesystem;
using namespace pmmkit;

namespace {

LabeledDataset load_data_arg(const std::vector<std::string>& data, bool no_header) {
    if (data.size() == 1) return load_csv(data[0], !no_header);
    require(data.size() == 2, ErrorCategory::invalid_argument,
            "--data takes a CSV path or an IDX images/labels pair");
    return load_idx(data[0], data[1]);
}

void warn_empty_classes(const LabeledDataset& ds) {
    for (ClassId c : ds.empty_classes()) std::cerr << "warning: class " << c << " has no samples\n";
}

int cmd_gen_data(const std::string& spec_path, const std::string& out) {
    const ExperimentConfig cfg = load_experiment_config(spec_path);
    require(cfg.data.source == DataConfig::Source::synthetic, ErrorCategory::config,
            "gen-data needs a synthetic [data] source (blobs, moons or rings)");
    const LabeledDataset ds = gen_synthetic(cfg.data.synthetic);
    save_csv(ds, out, true);
    std::cout << "wrote " << ds.size() << " samples to " << out << '\n';
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, const std::string& resume,
              std::optional<std::size_t> stop_after) {
    ExperimentConfig cfg;
    std::optional<Checkpoint> ck;
    if (!resume.empty()) {
        ck = load_checkpoint(resume);
        cfg = parse_experiment_config(ck->config_text);
    } else {
        require(!config_path.empty(), ErrorCategory::invalid_argument, "train needs --config or --resume");
        cfg = load_experiment_config(config_path);
    }
    const auto [train, val] = prepare_data(cfg.data, 0);
    warn_empty_classes(train);

    RunOptions opts;
    opts.stop_after = stop_after;
    const TrainResult result = ck ? continue_run(cfg.train, ck->state, train, val, opts)
                                  : train_run(cfg.train, train, val, opts);

    fs::create_directories(out_dir);
    const std::string metrics_path = (fs::path(out_dir) / "metrics.csv").string();
    const std::string ckpt_path = (fs::path(out_dir) / "checkpoint.bin").string();
    write_text_file(metrics_path, metrics_csv(result.metrics));
    save_checkpoint(Checkpoint{kCheckpointVersion, to_ini(cfg), result.state}, ckpt_path);

    nlohmann::ordered_json summary;
    if (!result.metrics.empty()) {
        const RunSummary s = summarize(fs::path(out_dir).filename().string(), cfg, result.metrics);
        summary["run_id"] = s.run_id;
        summary["final_val_accuracy"] = s.final_val_accuracy;
        summary["final_min_norm_pairwise_margin"] = s.final_min_margin;
        summary["steps_to_target"] = s.steps_to_target ? nlohmann::json(*s.steps_to_target) : nlohmann::json();
        char hash[17];
        std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(s.config_hash));
        summary["config_hash"] = hash;
    }
    summary["steps_completed"] = result.state.step;
    summary["early_stopped"] = result.early_stopped;
    write_text_file((fs::path(out_dir) / "summary.json").string(), summary.dump(2) + "\n");

    std::cout << "trained " << result.state.step << " steps; metrics: " << metrics_path
              << "; checkpoint: " << ckpt_path << '\n';
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::vector<std::string>& data, bool no_header) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    const LabeledDataset ds = load_data_arg(data, no_header);
    const EvalResult r = evaluate(ck.state.model, ds);
    std::cout << "error " << format_double(r.error) << '\n' << "accuracy " << format_double(1.0 - r.error) << '\n';
    std::cout << "confusion (rows: true class, columns: predicted)\n";
    for (const auto& row : r.confusion) {
        for (std::size_t j = 0; j < row.size(); ++j) std::cout << (j ? " " : "") << row[j];
        std::cout << '\n';
    }
    return 0;
}

int cmd_embed(const std::string& ckpt_path, const std::vector<std::string>& data, bool no_header,
              const std::string& out) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    const LabeledDataset ds = load_data_arg(data, no_header);
    export_embeddings(ck.state.model, ds, out);
    std::cout << "wrote " << ds.size() << " embeddings to " << out << '\n';
    return 0;
}

int cmd_compare(const std::string& a_path, const std::string& b_path, std::size_t seeds, const std::string& out) {
    const ComparisonTable t = compare_runs(load_experiment_config(a_path), load_experiment_config(b_path), seeds);
    write_text_file(out, comparison_csv(t));
    auto line = [](const char* what, const WinCount& w) {
        std::cout << what << " wins: a=" << w.a << " b=" << w.b << " tie=" << w.tie << '\n';
    };
    line("accuracy", t.accuracy);
    line("margin", t.margin);
    line("speed", t.speed);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pairwise-margin regularization and minimal-margin batch selection toolkit"};
    app.require_subcommand(1);

    std::string spec_path, out, config_path, out_dir, resume, ckpt, cfg_a, cfg_b;
    std::vector<std::string> data;
    bool no_header = false;
    std::size_t stop_after = 0;
    std::size_t seeds = 10;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset as CSV");
    gen->add_option("--spec", spec_path, "Config file with a synthetic [data] section")->required();
    gen->add_option("--out", out, "Output CSV")->required();

    auto* train = app.add_subcommand("train", "Train a model from a config file");
    train->add_option("--config", config_path, "Experiment config (INI)");
    train->add_option("--out-dir", out_dir, "Directory for metrics.csv, checkpoint.bin, summary.json")->required();
    train->add_option("--resume", resume, "Continue from a checkpoint (uses its embedded config)");
    auto* stop_opt = train->add_option("--stop-after", stop_after, "Stop after this many total updates");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    eval->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
    eval->add_option("--data", data, "CSV file, or IDX images and labels files")->required()->expected(1, 2);
    eval->add_flag("--no-header", no_header, "CSV has no header row");

    auto* embed = app.add_subcommand("embed", "Export penultimate-layer features");
    embed->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
    embed->add_option("--data", data, "CSV file, or IDX images and labels files")->required()->expected(1, 2);
    embed->add_flag("--no-header", no_header, "CSV has no header row");
    embed->add_option("--out", out, "Output CSV")->required();

    auto* compare = app.add_subcommand("compare", "Paired-seed comparison of two configs");
    compare->add_option("--config-a", cfg_a, "First config")->required();
    compare->add_option("--config-b", cfg_b, "Second config")->required();
    compare->add_option("--seeds", seeds, "Number of paired seeds")->check(CLI::PositiveNumber);
    compare->add_option("--out", out, "Output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*gen) return cmd_gen_data(spec_path, out);
        if (*train)
            return cmd_train(config_path, out_dir, resume,
                             stop_opt->count() ? std::optional<std::size_t>(stop_after) : std::nullopt);
        if (*eval) return cmd_eval(ckpt, data, no_header);
        if (*embed) return cmd_embed(ckpt, data, no_header, out);
        if (*compare) return cmd_compare(cfg_a, cfg_b, seeds, out);
    } catch (const Error& e) {
        std::cerr << "error: " << category_name(e.category()) << ": " << e.what() << '\n';
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: io: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
