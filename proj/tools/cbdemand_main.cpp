// cbdemand: batch CLI for count-demand PDF forecasting.
//
// Subcommands: ingest, train, predict, evaluate, experiment.
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <cbdemand/csv.hpp>
#include <cbdemand/dataset.hpp>
#include <cbdemand/errors.hpp>
#include <cbdemand/model_io.hpp>
#include <cbdemand/pipeline.hpp>

namespace {

using namespace cbdemand;

struct CommonFlags {
    std::string config_path;
    std::string mode;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

RunConfig resolve_config(const CommonFlags& flags) {
    if (flags.config_path.empty()) throw ConfigError("--config is required");
    RunConfig cfg = load_run_config(flags.config_path);
    if (!flags.mode.empty()) cfg.mode = flags.mode;
    if (flags.seed_set) cfg.seed = flags.seed;
    if (!flags.out.empty()) cfg.out_dir = flags.out;
    validate_run_config(cfg);
    return cfg;
}

SampleTable ingest_from_config(const RunConfig& cfg) {
    IngestFilters filters{cfg.items, cfg.stores, cfg.from, cfg.to};
    return ingest(cfg.calendar_path, cfg.sales_path, cfg.prices_path, filters);
}

int run_ingest(const CommonFlags& flags) {
    RunConfig cfg = resolve_config(flags);
    const SampleTable table = ingest_from_config(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    const std::string path = cfg.out_dir + "/table.csv";
    write_long_csv(table, path);
    std::cout << "wrote " << table.n_rows() << " rows (" << table.n_series() << " series) to "
              << path << "\n";
    return 0;
}

int run_train(const CommonFlags& flags) {
    RunConfig cfg = resolve_config(flags);
    const SampleTable table = ingest_from_config(cfg);
    const ModelArtifact artifact = train_models(cfg, table);
    std::filesystem::create_directories(cfg.out_dir);
    const std::string path = cfg.out_dir + "/model.json";
    save_artifact(artifact, path);
    std::cout << "trained mode " << cfg.mode << " on " << table.n_series() << " series; model at "
              << path << "\n";
    if (!artifact.mean_model.mad_per_cycle.empty())
        std::cout << "training MAD " << artifact.mean_model.mad_per_cycle.back() << " after "
                  << artifact.mean_model.mad_per_cycle.size() << " cycles\n";
    return 0;
}

int run_experiment_cmd(const CommonFlags& flags) {
    RunConfig cfg = resolve_config(flags);
    const ExperimentSummary s = run_experiment(cfg);
    std::cout << "mode " << cfg.mode << ": train rows " << s.train_rows << ", test rows "
              << s.test_rows << "\n"
              << "target mean " << s.target_mean << ", MAD " << s.point.mad << ", MSE "
              << s.point.mse << "\n"
              << "EMD accuracy: NBD " << s.emd_accuracy_nbd << ", Poisson "
              << s.emd_accuracy_poisson << "\n"
              << "artifacts in " << cfg.out_dir << "\n";
    return 0;
}

int run_predict(const CommonFlags& flags, const std::string& model_path,
                const std::string& from, const std::string& to,
                std::vector<double> quantiles, bool explain, const std::string& decision) {
    RunConfig cfg = resolve_config(flags);
    if (model_path.empty()) throw ConfigError("--model is required");
    const ModelArtifact artifact = load_artifact(model_path);
    const SampleTable table = ingest_from_config(cfg);

    const Date horizon_from = from.empty() ? cfg.split : Date::parse(from);
    const Date horizon_to = to.empty() ? cfg.to : Date::parse(to);
    if (quantiles.empty()) quantiles = cfg.quantiles;
    for (double q : quantiles)
        if (!(q > 0.0 && q < 1.0)) throw ConfigError("quantiles must lie in (0, 1)");

    std::filesystem::create_directories(cfg.out_dir);
    const std::string forecasts = cfg.out_dir + "/forecasts.csv";
    const std::string explains = explain ? cfg.out_dir + "/explanations.jsonl" : "";
    const std::int64_t n = predict_records(artifact, table, horizon_from, horizon_to, quantiles,
                                           forecasts, explains, decision);
    std::cout << "wrote " << n << " forecasts to " << forecasts << "\n";
    if (explain) std::cout << "explanations in " << explains << "\n";
    return 0;
}

int run_evaluate(const std::string& forecasts_path, int pit_bins, std::uint64_t seed,
                 const std::string& out_dir, std::vector<double> quantiles) {
    if (quantiles.empty()) quantiles = {0.1, 0.3, 0.5, 0.7, 0.9, 0.97};
    CsvReader reader(forecasts_path);
    const int c_date = reader.column("date");
    const int c_mu = reader.column("mu_final");
    const int c_inv_r = reader.column("inv_r");
    const int c_sales = reader.column("sales");

    EvaluationInputs in;
    std::string line;
    while (reader.next_line(line)) {
        const auto f = split_csv_line(line);
        const Date d = Date::parse(f[c_date]);
        const double mu = parse_double(f[c_mu], forecasts_path);
        in.nbd.push_back({mu, parse_double(f[c_inv_r], forecasts_path)});
        in.mu_final.push_back(mu);
        in.y.push_back(parse_double(f[c_sales], forecasts_path));
        in.dow_labels.push_back(std::to_string(d.day_of_week()));
    }
    if (in.nbd.empty()) throw DataError("'" + forecasts_path + "' holds no forecast rows");

    const Json context = {{"kind", "evaluate"}, {"forecasts", forecasts_path}};
    const EvaluationOutputs out =
        write_evaluation(in, quantiles, pit_bins, seed, out_dir, context);
    std::cout << "rows " << out.rows << ", MAD " << out.point.mad << ", MSE " << out.point.mse
              << "\nEMD accuracy: NBD " << out.emd_accuracy_nbd << ", Poisson "
              << out.emd_accuracy_poisson << "\nreport in " << out_dir << "\n";
    if (!out.pit_sample_size_sufficient)
        std::cerr << "warning: fewer than 50 samples per PIT bin; histogram diagnostics are "
                     "coarse\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Individual count-demand PDF forecasting with Cyclic Boosting"};
    app.require_subcommand(1);

    CommonFlags flags;
    auto add_common = [&flags](CLI::App* cmd, bool with_mode = true) {
        cmd->add_option("--config", flags.config_path, "run configuration (JSON)");
        cmd->add_option("--out", flags.out, "output directory (overrides config)");
        cmd->add_option("--seed", flags.seed, "RNG seed (overrides config)")
            ->each([&flags](const std::string&) { flags.seed_set = true; });
        if (with_mode)
            cmd->add_option("--mode", flags.mode, "ablation mode: a, b or c")
                ->check(CLI::IsMember({"a", "b", "c"}));
    };

    auto* ingest_cmd = app.add_subcommand("ingest", "pivot the raw files into a long table");
    add_common(ingest_cmd, false);

    auto* train_cmd = app.add_subcommand("train", "fit the mean and width models");
    add_common(train_cmd);

    auto* predict_cmd = app.add_subcommand("predict", "forecast from a trained model");
    add_common(predict_cmd, false);
    std::string model_path, horizon_from, horizon_to, decision;
    std::vector<double> predict_quantiles;
    bool explain = false;
    predict_cmd->add_option("--model", model_path, "model artifact (model.json)");
    predict_cmd->add_option("--from", horizon_from, "first horizon date (YYYY-MM-DD)");
    predict_cmd->add_option("--to", horizon_to, "last horizon date (YYYY-MM-DD)");
    predict_cmd->add_option("--quantiles", predict_quantiles, "quantile columns to emit")
        ->delimiter(',');
    predict_cmd->add_flag("--explain", explain, "write per-sample factor breakdowns");
    predict_cmd->add_option("--decision", decision,
                            "decision column: quadratic, absolute or newsvendor:<b>,<h>");

    auto* evaluate_cmd = app.add_subcommand("evaluate", "calibration report from forecasts");
    std::string forecasts_path, eval_out = "out";
    int pit_bins = 100;
    std::uint64_t eval_seed = 0;
    std::vector<double> eval_quantiles;
    evaluate_cmd->add_option("--forecasts", forecasts_path, "forecasts.csv to evaluate")
        ->required();
    evaluate_cmd->add_option("--out", eval_out, "output directory");
    evaluate_cmd->add_option("--pit-bins", pit_bins, "PIT histogram bins");
    evaluate_cmd->add_option("--seed", eval_seed, "RNG seed for the randomized PIT");
    evaluate_cmd->add_option("--quantiles", eval_quantiles, "profile quantiles")->delimiter(',');

    auto* experiment_cmd =
        app.add_subcommand("experiment", "full train + correct + evaluate batch run");
    add_common(experiment_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(ingest_cmd)) return run_ingest(flags);
        if (app.got_subcommand(train_cmd)) return run_train(flags);
        if (app.got_subcommand(predict_cmd))
            return run_predict(flags, model_path, horizon_from, horizon_to, predict_quantiles,
                               explain, decision);
        if (app.got_subcommand(evaluate_cmd))
            return run_evaluate(forecasts_path, pit_bins, eval_seed, eval_out, eval_quantiles);
        if (app.got_subcommand(experiment_cmd)) return run_experiment_cmd(flags);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 2;
}
