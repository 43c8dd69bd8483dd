#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include <cbdemand/cb_mean.hpp>
#include <cbdemand/cb_width.hpp>
#include <cbdemand/csv.hpp>
#include <cbdemand/dataset.hpp>
#include <cbdemand/decision.hpp>
#include <cbdemand/errors.hpp>
#include <cbdemand/evaluation.hpp>
#include <cbdemand/features.hpp>
#include <cbdemand/model_io.hpp>
#include <cbdemand/residual_correction.hpp>
#include <cbdemand/svg.hpp>

namespace cbdemand {

inline constexpr const char* kCodeVersion = "cbdemand 0.1.0";

// Lagged-target EWMA features used by the ablation modes b and c.
inline constexpr double kEwmaFeatureAlphaSeries = 0.25;  // grouped by (store, item), lag 2
inline constexpr double kEwmaFeatureAlphaDow = 0.05;     // grouped by (store, item, dow), lag 7

struct ModelHyperparams {
    MeanTrainConfig mean;
    WidthTrainConfig width;
    int continuous_bins = 20;  ///< generic continuous features (day_of_year)
    int trend_bins = 50;       ///< days_since_epoch
    int price_bins = 10;       ///< price_ratio
    int mean_pred_bins = 20;   ///< width model's mean-prediction feature
    int ewma_bins = 20;        ///< lagged-target EWMA features
};

/// Ablation modes:
///   a: exogenous features only + residual correction
///   b: + lagged-target EWMA features, no residual correction
///   c: + lagged-target EWMA features, with residual correction
struct RunConfig {
    std::string calendar_path, sales_path, prices_path;
    std::vector<std::string> items, stores;
    Date from = Date::from_ymd(2013, 1, 1);
    Date to = Date::from_ymd(2016, 5, 22);
    Date split = Date::from_ymd(2016, 1, 1);  ///< first test day
    Date epoch = Date::from_ymd(2013, 1, 1);
    std::string mode = "a";
    CorrectionConfig correction;
    ModelHyperparams hp;
    std::vector<double> quantiles = {0.1, 0.3, 0.5, 0.7, 0.9, 0.97};
    int pit_bins = 100;
    std::uint64_t seed = 0;
    std::string out_dir = "out";

    bool with_ewma_features() const { return mode != "a"; }
    bool with_correction() const { return mode != "b"; }
};

inline void validate_run_config(const RunConfig& c) {
    if (c.mode != "a" && c.mode != "b" && c.mode != "c")
        throw ConfigError("mode must be one of a, b, c");
    if (!(c.from < c.split && c.split <= c.to))
        throw ConfigError("split date must lie inside the data range");
    if (c.correction.lag < 1) throw ConfigError("lag must be >= 1");
    if (!(c.correction.alpha > 0.0 && c.correction.alpha <= 1.0))
        throw ConfigError("alpha must lie in (0, 1]");
    if (c.pit_bins < 2) throw ConfigError("pit_bins must be >= 2");
    for (double q : c.quantiles)
        if (!(q > 0.0 && q < 1.0)) throw ConfigError("quantiles must lie in (0, 1)");
}

// ---------------------------------------------------------------------------
// Config document
// ---------------------------------------------------------------------------

inline Json run_config_to_json(const RunConfig& c) {
    return {{"data",
             {{"calendar", c.calendar_path},
              {"sales", c.sales_path},
              {"prices", c.prices_path},
              {"items", c.items},
              {"stores", c.stores},
              {"from", c.from.to_string()},
              {"to", c.to.to_string()},
              {"split", c.split.to_string()},
              {"epoch", c.epoch.to_string()}}},
            {"mode", c.mode},
            {"correction",
             {{"alpha", c.correction.alpha},
              {"lag", c.correction.lag},
              {"factor_floor", c.correction.factor_floor},
              {"factor_ceil", c.correction.factor_ceil}}},
            {"mean",
             {{"max_cycles", c.hp.mean.max_cycles},
              {"convergence_tolerance", c.hp.mean.convergence_tolerance},
              {"prior_weight", c.hp.mean.prior_weight},
              {"learning_damping", c.hp.mean.learning_damping}}},
            {"width",
             {{"max_cycles", c.hp.width.max_cycles},
              {"nll_tolerance", c.hp.width.nll_tolerance},
              {"log_factor_bound", c.hp.width.log_factor_bound},
              {"line_search_evals", c.hp.width.line_search_evals},
              {"prior_weight", c.hp.width.prior_weight}}},
            {"bins",
             {{"continuous", c.hp.continuous_bins},
              {"trend", c.hp.trend_bins},
              {"price", c.hp.price_bins},
              {"mean_prediction", c.hp.mean_pred_bins},
              {"ewma", c.hp.ewma_bins}}},
            {"quantiles", c.quantiles},
            {"pit_bins", c.pit_bins},
            {"seed", c.seed},
            {"out_dir", c.out_dir}};
}

inline RunConfig run_config_from_json(const Json& j) {
    RunConfig c;
    try {
        const auto& d = j.at("data");
        c.calendar_path = d.at("calendar").get<std::string>();
        c.sales_path = d.at("sales").get<std::string>();
        c.prices_path = d.at("prices").get<std::string>();
        if (d.contains("items")) c.items = d.at("items").get<std::vector<std::string>>();
        if (d.contains("stores")) c.stores = d.at("stores").get<std::vector<std::string>>();
        if (d.contains("from")) c.from = Date::parse(d.at("from").get<std::string>());
        if (d.contains("to")) c.to = Date::parse(d.at("to").get<std::string>());
        if (d.contains("split")) c.split = Date::parse(d.at("split").get<std::string>());
        c.epoch = d.contains("epoch") ? Date::parse(d.at("epoch").get<std::string>()) : c.from;
        if (j.contains("mode")) c.mode = j.at("mode").get<std::string>();
        if (j.contains("correction")) {
            const auto& r = j.at("correction");
            if (r.contains("alpha")) c.correction.alpha = r.at("alpha").get<double>();
            if (r.contains("lag")) c.correction.lag = r.at("lag").get<int>();
            if (r.contains("factor_floor"))
                c.correction.factor_floor = r.at("factor_floor").get<double>();
            if (r.contains("factor_ceil"))
                c.correction.factor_ceil = r.at("factor_ceil").get<double>();
        }
        if (j.contains("mean")) {
            const auto& m = j.at("mean");
            if (m.contains("max_cycles")) c.hp.mean.max_cycles = m.at("max_cycles").get<int>();
            if (m.contains("convergence_tolerance"))
                c.hp.mean.convergence_tolerance = m.at("convergence_tolerance").get<double>();
            if (m.contains("prior_weight"))
                c.hp.mean.prior_weight = m.at("prior_weight").get<double>();
            if (m.contains("learning_damping"))
                c.hp.mean.learning_damping = m.at("learning_damping").get<double>();
        }
        if (j.contains("width")) {
            const auto& w = j.at("width");
            if (w.contains("max_cycles")) c.hp.width.max_cycles = w.at("max_cycles").get<int>();
            if (w.contains("nll_tolerance"))
                c.hp.width.nll_tolerance = w.at("nll_tolerance").get<double>();
            if (w.contains("log_factor_bound"))
                c.hp.width.log_factor_bound = w.at("log_factor_bound").get<double>();
            if (w.contains("line_search_evals"))
                c.hp.width.line_search_evals = w.at("line_search_evals").get<int>();
            if (w.contains("prior_weight"))
                c.hp.width.prior_weight = w.at("prior_weight").get<double>();
        }
        if (j.contains("bins")) {
            const auto& b = j.at("bins");
            if (b.contains("continuous")) c.hp.continuous_bins = b.at("continuous").get<int>();
            if (b.contains("trend")) c.hp.trend_bins = b.at("trend").get<int>();
            if (b.contains("price")) c.hp.price_bins = b.at("price").get<int>();
            if (b.contains("mean_prediction"))
                c.hp.mean_pred_bins = b.at("mean_prediction").get<int>();
            if (b.contains("ewma")) c.hp.ewma_bins = b.at("ewma").get<int>();
        }
        if (j.contains("quantiles")) c.quantiles = j.at("quantiles").get<std::vector<double>>();
        if (j.contains("pit_bins")) c.pit_bins = j.at("pit_bins").get<int>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("bad run config: ") + e.what());
    }
    validate_run_config(c);
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    Json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Feature assembly
// ---------------------------------------------------------------------------

namespace detail {

/// Lagged-target EWMA columns; the history available at row t stops lag days
/// earlier, so nothing the model sees leaks the forecast-time target.
inline void add_ewma_columns(const SampleTable& table, RawColumns& raw) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    auto& series_col = raw["ewma_sales_lag2"].numeric;
    auto& dow_col = raw["ewma_sales_dow_lag7"].numeric;
    series_col.assign(table.n_rows(), nan);
    dow_col.assign(table.n_rows(), nan);

    const int n_days = table.n_days();
    for (std::size_t s = 0; s < table.n_series(); ++s) {
        const auto [begin, end] = table.series_rows(s);
        EwmaState series_state;
        series_state.alpha = kEwmaFeatureAlphaSeries;
        std::array<EwmaState, 7> dow_state;
        for (auto& st : dow_state) st.alpha = kEwmaFeatureAlphaDow;
        for (int t = 0; t < n_days; ++t) {
            const std::size_t row = begin + t;
            if (t >= 2) {
                series_state.update(table.sales[begin + t - 2], t - 2);
                series_col[row] = series_state.value();
            }
            if (t >= 7) {
                // t-7 shares the day of week with t, so each state holds
                // exactly the same-dow history up to one week back.
                auto& st = dow_state[table.date[begin + t - 7].day_of_week()];
                st.update(table.sales[begin + t - 7], t - 7);
            }
            const auto& st = dow_state[table.date[row].day_of_week()];
            if (st.has_history()) dow_col[row] = st.value();
        }
    }
}

}  // namespace detail

/// Raw feature columns for every row of the table. `required_events` forces a
/// window column (all "outside") for trained event features whose occurrences
/// do not fall into this table's range.
inline RawColumns build_raw_columns(const SampleTable& table, Date epoch,
                                    bool with_ewma_features,
                                    const std::set<std::string>& required_events = {}) {
    RawColumns raw = build_calendar_features(table.date, epoch);
    RawColumns event_cols = build_event_windows(table.date, table.events);
    for (auto& [name, col] : event_cols) raw[name] = std::move(col);
    for (const auto& name : required_events) {
        const std::string key = "event:" + name;
        if (!raw.count(key)) raw[key].category.assign(table.n_rows(), "outside");
    }
    RawColumns price_cols = build_price_features(table.sell_price, table.list_price);
    for (auto& [name, col] : price_cols) raw[name] = std::move(col);

    raw["item_id"].category = table.item;
    raw["store_id"].category = table.store;
    auto& snap = raw["snap"].category;
    snap.reserve(table.n_rows());
    for (int v : table.snap) snap.push_back(v ? "1" : "0");

    if (with_ewma_features) detail::add_ewma_columns(table, raw);
    return raw;
}

inline std::vector<std::string> sorted_event_names(const SampleTable& table) {
    std::set<std::string> names;
    for (const auto& e : table.events) names.insert(e.name);
    return {names.begin(), names.end()};
}

namespace detail {

inline std::vector<FeatureSpec> base_feature_specs(const std::vector<std::string>& event_names,
                                                   const ModelHyperparams& hp,
                                                   bool with_ewma_features) {
    std::vector<FeatureSpec> specs = {
        FeatureSpec::categorical("item_id"),
        FeatureSpec::categorical("store_id"),
        FeatureSpec::continuous("days_since_epoch", hp.trend_bins),
        FeatureSpec::categorical("day_of_week"),
        FeatureSpec::continuous("day_of_year", hp.continuous_bins),
        FeatureSpec::categorical("month"),
        FeatureSpec::categorical("week_of_month"),
        FeatureSpec::categorical("event_type"),
        FeatureSpec::categorical("promo"),
        FeatureSpec::continuous("price_ratio", hp.price_bins),
        FeatureSpec::categorical("snap"),
    };
    for (const auto& name : event_names)
        specs.push_back(FeatureSpec::categorical("event:" + name));
    if (with_ewma_features) {
        specs.push_back(FeatureSpec::continuous("ewma_sales_lag2", hp.ewma_bins,
                                                FeatureProvenance::lagged_target));
        specs.push_back(FeatureSpec::continuous("ewma_sales_dow_lag7", hp.ewma_bins,
                                                FeatureProvenance::lagged_target));
    }
    return specs;
}

}  // namespace detail

/// Mean-model features: the one-dimensional exogenous set plus the default
/// two-dimensional combinations (one side always item or store), and for
/// modes b/c the two lagged-target EWMA features.
inline std::vector<FeatureSpec> mean_feature_specs(const std::vector<std::string>& event_names,
                                                   const ModelHyperparams& hp,
                                                   bool with_ewma_features) {
    auto specs = detail::base_feature_specs(event_names, hp, with_ewma_features);
    specs.push_back(FeatureSpec::interaction("item_id", "store_id"));
    specs.push_back(FeatureSpec::interaction("item_id", "day_of_week"));
    specs.push_back(FeatureSpec::interaction("store_id", "day_of_week"));
    specs.push_back(FeatureSpec::interaction("item_id", "month"));
    specs.push_back(FeatureSpec::interaction("store_id", "month"));
    specs.push_back(FeatureSpec::interaction("item_id", "promo"));
    specs.push_back(FeatureSpec::interaction("store_id", "price_ratio"));
    specs.push_back(FeatureSpec::interaction("item_id", "event_type"));
    return specs;
}

/// Width-model features: same one-dimensional set, most interactions dropped,
/// plus the in-sample mean prediction as a continuous feature.
inline std::vector<FeatureSpec> width_feature_specs(const std::vector<std::string>& event_names,
                                                    const ModelHyperparams& hp,
                                                    bool with_ewma_features) {
    auto specs = detail::base_feature_specs(event_names, hp, with_ewma_features);
    specs.push_back(FeatureSpec::continuous("mean_prediction", hp.mean_pred_bins,
                                            FeatureProvenance::model_derived));
    specs.push_back(FeatureSpec::interaction("item_id", "store_id"));
    specs.push_back(FeatureSpec::interaction("store_id", "day_of_week"));
    specs.push_back(FeatureSpec::interaction("item_id", "event_type"));
    return specs;
}

// ---------------------------------------------------------------------------
// Training and the shared prediction path
// ---------------------------------------------------------------------------

/// Fits the mean model, applies the in-sample residual correction and fits
/// the width model on the training period (dates before the split).
inline ModelArtifact train_models(const RunConfig& cfg, const SampleTable& table) {
    std::vector<std::size_t> train_rows;
    for (std::size_t i = 0; i < table.n_rows(); ++i)
        if (table.date[i] < cfg.split) train_rows.push_back(i);
    if (train_rows.empty() || train_rows.size() == table.n_rows())
        throw ConfigError("split date leaves an empty training or test period");

    const auto event_names = sorted_event_names(table);
    const auto m_specs = mean_feature_specs(event_names, cfg.hp, cfg.with_ewma_features());
    if (cfg.mode == "a")
        for (const auto& spec : m_specs)
            if (spec.provenance == FeatureProvenance::lagged_target)
                throw ConfigError("mode a must not contain lagged-target features");

    RawColumns raw = build_raw_columns(table, cfg.epoch, cfg.with_ewma_features());
    ModelArtifact artifact;
    artifact.mode = cfg.mode;
    artifact.epoch = cfg.epoch;
    artifact.events = table.events;
    artifact.correction_enabled = cfg.with_correction();
    artifact.correction = cfg.correction;

    artifact.mean_layout = fit_bins(raw, m_specs, train_rows);
    const FeatureMatrix fm = apply_bins(raw, artifact.mean_layout);

    std::vector<double> y_train;
    y_train.reserve(train_rows.size());
    for (std::size_t i : train_rows) y_train.push_back(table.sales[i]);
    artifact.mean_model = fit_mean(y_train, select_rows(fm, train_rows), cfg.hp.mean);

    // In-sample means over the whole timeline; the width model consumes the
    // corrected (final) values of the training period.
    const std::vector<double> mu_ml = predict_mean(artifact.mean_model, fm);
    std::vector<double> mu_final = mu_ml;
    if (cfg.with_correction()) {
        for (std::size_t s = 0; s < table.n_series(); ++s) {
            const auto [begin, end] = table.series_rows(s);
            const auto corrected = correct_series(
                std::span(mu_ml).subspan(begin, end - begin),
                std::span(table.sales).subspan(begin, end - begin), cfg.correction);
            for (std::size_t t = 0; t < corrected.corrected.size(); ++t)
                mu_final[begin + t] = corrected.corrected[t];
        }
    }

    raw["mean_prediction"].numeric = mu_final;
    const auto w_specs = width_feature_specs(event_names, cfg.hp, cfg.with_ewma_features());
    artifact.width_layout = fit_bins(raw, w_specs, train_rows);
    const FeatureMatrix wfm = apply_bins(raw, artifact.width_layout);

    std::vector<double> mu_train;
    mu_train.reserve(train_rows.size());
    for (std::size_t i : train_rows) mu_train.push_back(mu_final[i]);
    artifact.width_model =
        fit_width(y_train, mu_train, select_rows(wfm, train_rows), cfg.hp.width);
    return artifact;
}

/// Full-table predictions from a trained artifact: raw mean, residual
/// correction factor, final mean, and the dispersion r_hat.
struct TablePredictions {
    std::vector<double> mu_ml, factor, mu_final, r_hat;
};

inline std::set<std::string> trained_event_names(const ModelArtifact& artifact) {
    std::set<std::string> names;
    for (const auto& spec : artifact.mean_layout.specs)
        if (spec.name.rfind("event:", 0) == 0) names.insert(spec.name.substr(6));
    return names;
}

inline TablePredictions predict_table(const ModelArtifact& artifact, const SampleTable& table) {
    RawColumns raw = build_raw_columns(table, artifact.epoch, artifact.mode != "a",
                                       trained_event_names(artifact));
    const FeatureMatrix fm = apply_bins(raw, artifact.mean_layout);

    TablePredictions out;
    out.mu_ml = predict_mean(artifact.mean_model, fm);
    out.factor.assign(table.n_rows(), 1.0);
    out.mu_final = out.mu_ml;
    if (artifact.correction_enabled) {
        for (std::size_t s = 0; s < table.n_series(); ++s) {
            const auto [begin, end] = table.series_rows(s);
            const auto corrected = correct_series(
                std::span(out.mu_ml).subspan(begin, end - begin),
                std::span(table.sales).subspan(begin, end - begin), artifact.correction);
            for (std::size_t t = 0; t < corrected.factor.size(); ++t) {
                out.factor[begin + t] = corrected.factor[t];
                out.mu_final[begin + t] = corrected.corrected[t];
            }
        }
    }

    raw["mean_prediction"].numeric = out.mu_final;
    const FeatureMatrix wfm = apply_bins(raw, artifact.width_layout);
    out.r_hat = predict_dispersion(artifact.width_model, wfm);
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation outputs
// ---------------------------------------------------------------------------

namespace detail {

inline std::string quantile_column(double q) {
    std::string s = "q" + format_double(q);
    for (char& ch : s)
        if (ch == '.') ch = '_';
    return s;
}

/// Grouping of mean predictions: 5-wide intervals up to 60, then [60,70],
/// (70,80] and (80,inf); labels are zero-padded lower edges so the groups
/// sort numerically.
inline std::string mean_interval_label(double mu) {
    static constexpr double edges[] = {0,  5,  10, 15, 20, 25, 30, 35,
                                       40, 45, 50, 55, 60, 70, 80};
    double lo = 80;
    for (std::size_t k = 0; k + 1 < std::size(edges); ++k)
        if (mu >= edges[k] && mu < edges[k + 1]) {
            lo = edges[k];
            break;
        }
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%03d", static_cast<int>(lo));
    return buf;
}

inline void write_profile_csv(
    const std::string& path,
    const std::vector<std::pair<std::string, const QuantileProfile*>>& named_profiles) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << "model,group,quantile,fraction,count\n";
    for (const auto& [model, profile] : named_profiles)
        for (std::size_t g = 0; g < profile->groups.size(); ++g)
            for (std::size_t k = 0; k < profile->quantiles.size(); ++k)
                out << model << ',' << csv_quote(profile->groups[g]) << ','
                    << format_double(profile->quantiles[k]) << ','
                    << format_double(profile->fraction[g][k]) << ','
                    << profile->group_count[g] << '\n';
}

inline Json profile_to_json(const QuantileProfile& p) {
    Json groups = Json::array();
    for (std::size_t g = 0; g < p.groups.size(); ++g) {
        Json fractions = Json::object();
        for (std::size_t k = 0; k < p.quantiles.size(); ++k)
            fractions[format_double(p.quantiles[k])] = p.fraction[g][k];
        groups.push_back(
            {{"group", p.groups[g]}, {"count", p.group_count[g]}, {"fraction_below", fractions}});
    }
    return groups;
}

}  // namespace detail

struct EvaluationInputs {
    std::vector<NegBinDistribution> nbd;      ///< final predicted PDFs
    std::vector<double> y;                    ///< observed sales
    std::vector<double> mu_final;             ///< final means (x axis groupings)
    std::vector<std::string> dow_labels;      ///< day-of-week group per sample
};

struct EvaluationOutputs {
    std::int64_t rows = 0;
    double target_mean = 0.0;
    PointMetrics point;
    double emd_accuracy_nbd = 0.0;
    double emd_accuracy_poisson = 0.0;
    bool pit_sample_size_sufficient = true;
    CalibrationReport nbd, poisson;
};

/// Writes calibration.csv, report.json and the figure files for the NBD
/// predictions and the same-mean Poisson benchmark.
inline EvaluationOutputs write_evaluation(const EvaluationInputs& in,
                                          const std::vector<double>& quantiles, int pit_bins,
                                          std::uint64_t seed, const std::string& out_dir,
                                          const Json& context = Json::object()) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/figures");
    if (in.nbd.empty()) throw DataError("write_evaluation: no samples");

    std::vector<NegBinDistribution> poisson;
    poisson.reserve(in.nbd.size());
    for (const auto& d : in.nbd) poisson.push_back({d.mu, 0.0});

    EvaluationOutputs out;
    out.rows = static_cast<std::int64_t>(in.nbd.size());
    for (double y : in.y) out.target_mean += y;
    out.target_mean /= static_cast<double>(in.y.size());
    out.point = point_metrics(in.mu_final, in.y);

    const PitHistogram pit_nbd = pit_histogram(in.nbd, in.y, pit_bins, seed);
    const PitHistogram pit_poisson = pit_histogram(poisson, in.y, pit_bins, seed);
    out.emd_accuracy_nbd = emd_accuracy(pit_nbd);
    out.emd_accuracy_poisson = emd_accuracy(pit_poisson);
    out.pit_sample_size_sufficient = pit_nbd.sample_size_sufficient();

    // slow-seller filter: mean predictions above 1 only
    std::vector<NegBinDistribution> nbd_hi, poisson_hi;
    std::vector<double> y_hi;
    for (std::size_t k = 0; k < in.nbd.size(); ++k) {
        if (in.mu_final[k] <= 1.0) continue;
        nbd_hi.push_back(in.nbd[k]);
        poisson_hi.push_back(poisson[k]);
        y_hi.push_back(in.y[k]);
    }
    const PitHistogram hi_nbd =
        y_hi.empty() ? pit_nbd : pit_histogram(nbd_hi, y_hi, pit_bins, seed);
    const PitHistogram hi_poisson =
        y_hi.empty() ? pit_poisson : pit_histogram(poisson_hi, y_hi, pit_bins, seed);

    std::vector<std::string> mean_labels;
    mean_labels.reserve(in.nbd.size());
    for (double mu : in.mu_final) mean_labels.push_back(detail::mean_interval_label(mu));

    const QuantileProfile prof_dow_nbd =
        inverse_quantile_profile(in.nbd, in.y, quantiles, in.dow_labels, seed);
    const QuantileProfile prof_dow_poisson =
        inverse_quantile_profile(poisson, in.y, quantiles, in.dow_labels, seed);
    const QuantileProfile prof_mean_nbd =
        inverse_quantile_profile(in.nbd, in.y, quantiles, mean_labels, seed);
    const QuantileProfile prof_mean_poisson =
        inverse_quantile_profile(poisson, in.y, quantiles, mean_labels, seed);

    out.nbd = {pit_nbd, out.emd_accuracy_nbd, out.point.mad, out.point.mse,
               {{"day_of_week", prof_dow_nbd}, {"mean_prediction", prof_mean_nbd}}};
    out.poisson = {pit_poisson, out.emd_accuracy_poisson, out.point.mad, out.point.mse,
                   {{"day_of_week", prof_dow_poisson}, {"mean_prediction", prof_mean_poisson}}};

    {  // calibration.csv: PIT histogram table for both models
        std::ofstream csv(out_dir + "/calibration.csv");
        if (!csv) throw DataError("cannot write calibration.csv");
        csv << "bin_lo,bin_hi,count_nbd,count_poisson,count_nbd_mu_gt1,count_poisson_mu_gt1\n";
        for (int k = 0; k < pit_bins; ++k)
            csv << format_double(static_cast<double>(k) / pit_bins) << ','
                << format_double(static_cast<double>(k + 1) / pit_bins) << ','
                << pit_nbd.counts[k] << ',' << pit_poisson.counts[k] << ',' << hi_nbd.counts[k]
                << ',' << hi_poisson.counts[k] << '\n';
    }

    svg::render_pit_histogram(pit_nbd, "PIT histogram, NBD", out_dir + "/figures/pit_nbd.svg");
    svg::render_pit_histogram(pit_poisson, "PIT histogram, Poisson",
                              out_dir + "/figures/pit_poisson.svg");
    svg::render_pit_histogram(hi_nbd, "PIT histogram, NBD, mean above 1",
                              out_dir + "/figures/pit_nbd_mu_gt1.svg");
    svg::render_pit_histogram(hi_poisson, "PIT histogram, Poisson, mean above 1",
                              out_dir + "/figures/pit_poisson_mu_gt1.svg");

    detail::write_profile_csv(out_dir + "/figures/invquant_dayofweek.csv",
                              {{"nbd", &prof_dow_nbd}, {"poisson", &prof_dow_poisson}});
    detail::write_profile_csv(out_dir + "/figures/invquant_mean.csv",
                              {{"nbd", &prof_mean_nbd}, {"poisson", &prof_mean_poisson}});
    svg::render_quantile_profile(prof_dow_nbd, "Inverse quantile profile by day of week, NBD",
                                 out_dir + "/figures/invquant_dayofweek_nbd.svg");
    svg::render_quantile_profile(prof_dow_poisson,
                                 "Inverse quantile profile by day of week, Poisson",
                                 out_dir + "/figures/invquant_dayofweek_poisson.svg");
    svg::render_quantile_profile(prof_mean_nbd,
                                 "Inverse quantile profile by mean prediction, NBD",
                                 out_dir + "/figures/invquant_mean_nbd.svg");
    svg::render_quantile_profile(prof_mean_poisson,
                                 "Inverse quantile profile by mean prediction, Poisson",
                                 out_dir + "/figures/invquant_mean_poisson.svg");

    {  // profile histogram of sales against the predicted mean
        const double hi_edge = std::max(2.0, std::ceil(out.target_mean * 4.0));
        const auto edges = equidistant_edges(0.0, hi_edge, 20);
        const auto bins = profile_histogram(in.mu_final, in.y, edges);
        std::ofstream csv(out_dir + "/figures/profile_mean_vs_sales.csv");
        csv << "x_lo,x_hi,count,mean,stddev\n";
        for (const auto& b : bins)
            csv << format_double(b.lo) << ',' << format_double(b.hi) << ',' << b.count << ','
                << (b.count ? format_double(b.mean) : "") << ','
                << (b.count ? format_double(b.stddev) : "") << '\n';
        svg::render_profile_histogram(bins, "Sales vs mean prediction",
                                      out_dir + "/figures/profile_mean_vs_sales.svg");
    }

    {  // report.json
        Json report = {
            {"code_version", kCodeVersion},
            {"rows", out.rows},
            {"target_mean", out.target_mean},
            {"mad", out.point.mad},
            {"mse", out.point.mse},
            {"emd_accuracy",
             {{"nbd", out.emd_accuracy_nbd}, {"poisson", out.emd_accuracy_poisson}}},
            {"pit",
             {{"bins", pit_bins},
              {"total", pit_nbd.total},
              {"seed", seed},
              {"sample_size_sufficient", out.pit_sample_size_sufficient}}},
            {"emd_convention",
             "EMD = sum_k |cum_hist(k) - (k+1)/N| / N over cumulative count fractions; "
             "accuracy = 1 - 2*EMD"},
            {"underdispersion_clamps", underdispersion_clamp_count().load()},
            {"profiles",
             {{"day_of_week",
               {{"nbd", detail::profile_to_json(prof_dow_nbd)},
                {"poisson", detail::profile_to_json(prof_dow_poisson)}}},
              {"mean_prediction",
               {{"nbd", detail::profile_to_json(prof_mean_nbd)},
                {"poisson", detail::profile_to_json(prof_mean_poisson)}}}}},
            {"context", context},
        };
        std::ofstream js(out_dir + "/report.json");
        if (!js) throw DataError("cannot write report.json");
        js << report.dump(2) << '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Experiment
// ---------------------------------------------------------------------------

struct ExperimentSummary {
    std::int64_t train_rows = 0, test_rows = 0;
    double target_mean = 0.0;
    PointMetrics point;  ///< final means vs sales, test period
    double emd_accuracy_nbd = 0.0;
    double emd_accuracy_poisson = 0.0;
    ModelArtifact artifact;
};

/// The end-to-end batch run: ingest, training, test-period evaluation against
/// both the NBD and a Poisson benchmark with the same means, and all on-disk
/// artifacts. Any stage failure leaves a `_PARTIAL` marker naming the stage.
inline ExperimentSummary run_experiment(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    validate_run_config(cfg);
    fs::create_directories(cfg.out_dir);

    std::string stage = "ingest";
    try {
        IngestFilters filters{cfg.items, cfg.stores, cfg.from, cfg.to};
        const SampleTable table =
            ingest(cfg.calendar_path, cfg.sales_path, cfg.prices_path, filters);

        stage = "train";
        ExperimentSummary summary;
        summary.artifact = train_models(cfg, table);
        save_artifact(summary.artifact, cfg.out_dir + "/model.json");

        stage = "predict";
        const TablePredictions pred = predict_table(summary.artifact, table);

        stage = "evaluate";
        EvaluationInputs eval;
        std::vector<std::size_t> test_rows;
        for (std::size_t i = 0; i < table.n_rows(); ++i) {
            if (table.date[i] < cfg.split) {
                ++summary.train_rows;
                continue;
            }
            test_rows.push_back(i);
            const double inv_r = std::isinf(pred.r_hat[i]) ? 0.0 : 1.0 / pred.r_hat[i];
            eval.nbd.push_back({pred.mu_final[i], inv_r});
            eval.y.push_back(table.sales[i]);
            eval.mu_final.push_back(pred.mu_final[i]);
            eval.dow_labels.push_back(std::to_string(table.date[i].day_of_week()));
        }
        summary.test_rows = static_cast<std::int64_t>(test_rows.size());

        const Json context = {{"mode", cfg.mode}, {"seed", cfg.seed}, {"kind", "experiment"}};
        const EvaluationOutputs eval_out = write_evaluation(
            eval, cfg.quantiles, cfg.pit_bins, cfg.seed, cfg.out_dir, context);
        summary.target_mean = eval_out.target_mean;
        summary.point = eval_out.point;
        summary.emd_accuracy_nbd = eval_out.emd_accuracy_nbd;
        summary.emd_accuracy_poisson = eval_out.emd_accuracy_poisson;

        stage = "write";
        {  // forecasts.csv: one record per test-period row
            std::ofstream out(cfg.out_dir + "/forecasts.csv");
            if (!out) throw DataError("cannot write forecasts.csv");
            out << "item_id,store_id,date,mu_ml,correction_factor,mu_final,inv_r";
            for (double q : cfg.quantiles) out << ',' << detail::quantile_column(q);
            out << ",sales\n";
            for (std::size_t k = 0; k < test_rows.size(); ++k) {
                const std::size_t i = test_rows[k];
                out << csv_quote(table.item[i]) << ',' << csv_quote(table.store[i]) << ','
                    << table.date[i].to_string() << ',' << format_double(pred.mu_ml[i]) << ','
                    << format_double(pred.factor[i]) << ',' << format_double(pred.mu_final[i])
                    << ',' << format_double(eval.nbd[k].inv_r);
                for (double q : cfg.quantiles) out << ',' << nbd_quantile(q, eval.nbd[k]);
                out << ',' << format_double(table.sales[i]) << '\n';
            }
        }

        {  // manifest.json: config echo + code version + row counts
            Json manifest = {{"code_version", kCodeVersion},
                             {"config", run_config_to_json(cfg)},
                             {"rows",
                              {{"train", summary.train_rows},
                               {"test", summary.test_rows},
                               {"series", table.n_series()}}}};
            std::ofstream out(cfg.out_dir + "/manifest.json");
            if (!out) throw DataError("cannot write manifest.json");
            out << manifest.dump(2) << '\n';
        }
        return summary;
    } catch (...) {
        std::ofstream marker(cfg.out_dir + "/_PARTIAL");
        marker << "failed at stage: " << stage << '\n';
        throw;
    }
}

// ---------------------------------------------------------------------------
// Prediction records (the `predict` subcommand)
// ---------------------------------------------------------------------------

/// Parses a decision-column request: "quadratic", "absolute" or
/// "newsvendor:<b>,<h>" with positive unit costs.
inline CostFunction parse_decision_spec(const std::string& spec) {
    if (spec == "quadratic") return CostFunction::quadratic();
    if (spec == "absolute") return CostFunction::absolute();
    if (spec.rfind("newsvendor:", 0) == 0) {
        double b = 0.0, h = 0.0;
        if (std::sscanf(spec.c_str(), "newsvendor:%lf,%lf", &b, &h) == 2 && b > 0.0 && h > 0.0)
            return CostFunction::linear_asymmetric(b, h);
    }
    throw ConfigError("bad decision spec '" + spec +
                      "'; expected quadratic, absolute or newsvendor:<b>,<h>");
}

/// Emits forecasts for every row with a date in [horizon_from, horizon_to].
/// With a non-empty `explain_path`, a JSON-lines file with the per-sample
/// factor breakdown is written; folding c through the mean factors in model
/// feature order reproduces mu_ml exactly. A non-empty `decision_spec` adds a
/// cost-optimal point-estimate column.
inline std::int64_t predict_records(const ModelArtifact& artifact, const SampleTable& table,
                                    Date horizon_from, Date horizon_to,
                                    const std::vector<double>& quantiles,
                                    const std::string& forecasts_path,
                                    const std::string& explain_path = "",
                                    const std::string& decision_spec = "") {
    const TablePredictions pred = predict_table(artifact, table);
    const bool with_decision = !decision_spec.empty();
    const CostFunction decision_cost =
        with_decision ? parse_decision_spec(decision_spec) : CostFunction::quadratic();

    // Feature matrices are rebuilt here only for the explanation payload.
    RawColumns raw;
    FeatureMatrix fm, wfm;
    const bool explain = !explain_path.empty();
    if (explain) {
        raw = build_raw_columns(table, artifact.epoch, artifact.mode != "a",
                                trained_event_names(artifact));
        fm = apply_bins(raw, artifact.mean_layout);
        raw["mean_prediction"].numeric = pred.mu_final;
        wfm = apply_bins(raw, artifact.width_layout);
    }

    std::ofstream out(forecasts_path);
    if (!out) throw DataError("cannot write '" + forecasts_path + "'");
    out << "item_id,store_id,date,mu_ml,correction_factor,mu_final,inv_r";
    for (double q : quantiles) out << ',' << detail::quantile_column(q);
    if (with_decision) out << ",decision";
    out << ",sales\n";

    std::ofstream explain_out;
    if (explain) {
        explain_out.open(explain_path);
        if (!explain_out) throw DataError("cannot write '" + explain_path + "'");
    }

    std::int64_t emitted = 0;
    for (std::size_t i = 0; i < table.n_rows(); ++i) {
        if (table.date[i] < horizon_from || table.date[i] > horizon_to) continue;
        const double inv_r = std::isinf(pred.r_hat[i]) ? 0.0 : 1.0 / pred.r_hat[i];
        const NegBinDistribution d{pred.mu_final[i], inv_r};
        out << csv_quote(table.item[i]) << ',' << csv_quote(table.store[i]) << ','
            << table.date[i].to_string() << ',' << format_double(pred.mu_ml[i]) << ','
            << format_double(pred.factor[i]) << ',' << format_double(pred.mu_final[i]) << ','
            << format_double(inv_r);
        for (double q : quantiles) out << ',' << nbd_quantile(q, d);
        if (with_decision) out << ',' << format_double(optimal_point_estimate(d, decision_cost));
        out << ',' << format_double(table.sales[i]) << '\n';
        ++emitted;

        if (explain) {
            Json mean_factors = Json::array();
            for (const auto& fc : explain_mean(artifact.mean_model, fm, i))
                mean_factors.push_back(
                    {{"feature", fc.feature},
                     {"bin", fc.bin},
                     {"label",
                      bin_label(artifact.mean_layout,
                                artifact.mean_layout.feature_index(fc.feature), fc.bin)},
                     {"factor", fc.factor}});
            Json width_factors = Json::array();
            for (const auto& fc : explain_width(artifact.width_model, wfm, i)) {
                const int j = artifact.width_layout.feature_index(fc.feature);
                width_factors.push_back(
                    {{"feature", fc.feature},
                     {"bin", fc.bin},
                     {"label", j < 0 ? "" : bin_label(artifact.width_layout, j, fc.bin)},
                     {"factor", fc.factor}});
            }
            const Json line = {{"item_id", table.item[i]},
                               {"store_id", table.store[i]},
                               {"date", table.date[i].to_string()},
                               {"c", artifact.mean_model.c},
                               {"mu_ml", pred.mu_ml[i]},
                               {"correction_factor", pred.factor[i]},
                               {"mu_final", pred.mu_final[i]},
                               {"r_hat", std::isinf(pred.r_hat[i]) ? -1.0 : pred.r_hat[i]},
                               {"mean_factors", mean_factors},
                               {"width_factors", width_factors}};
            explain_out << line.dump() << '\n';
        }
    }
    return emitted;
}

}  // namespace cbdemand
