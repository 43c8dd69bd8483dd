#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include <cbdemand/cb_mean.hpp>
#include <cbdemand/cb_width.hpp>
#include <cbdemand/dataset.hpp>
#include <cbdemand/errors.hpp>
#include <cbdemand/features.hpp>
#include <cbdemand/residual_correction.hpp>

namespace cbdemand {

using Json = nlohmann::ordered_json;

inline constexpr int kArtifactVersion = 1;

/// Everything needed to reproduce predictions: both factor models, their bin
/// layouts, the event table and epoch for feature rebuilding, and the
/// residual-correction settings.
struct ModelArtifact {
    std::string mode = "a";  ///< a: no lagged-target features, correction on
    Date epoch = Date::from_ymd(2013, 1, 1);
    std::vector<EventOccurrence> events;
    bool correction_enabled = true;
    CorrectionConfig correction;
    BinLayout mean_layout, width_layout;
    MeanModel mean_model;
    WidthModel width_model;
};

namespace detail {

inline const char* kind_name(FeatureKind k) {
    switch (k) {
        case FeatureKind::categorical: return "categorical";
        case FeatureKind::continuous: return "continuous";
        case FeatureKind::interaction: return "interaction";
    }
    return "?";
}
inline FeatureKind kind_from(const std::string& s) {
    if (s == "categorical") return FeatureKind::categorical;
    if (s == "continuous") return FeatureKind::continuous;
    if (s == "interaction") return FeatureKind::interaction;
    throw DataError("model artifact: unknown feature kind '" + s + "'");
}
inline const char* provenance_name(FeatureProvenance p) {
    switch (p) {
        case FeatureProvenance::exogenous: return "exogenous";
        case FeatureProvenance::lagged_target: return "lagged_target";
        case FeatureProvenance::model_derived: return "model_derived";
    }
    return "?";
}
inline FeatureProvenance provenance_from(const std::string& s) {
    if (s == "exogenous") return FeatureProvenance::exogenous;
    if (s == "lagged_target") return FeatureProvenance::lagged_target;
    if (s == "model_derived") return FeatureProvenance::model_derived;
    throw DataError("model artifact: unknown provenance '" + s + "'");
}

inline Json layout_to_json(const BinLayout& layout) {
    Json specs = Json::array();
    for (const auto& s : layout.specs) {
        specs.push_back({{"name", s.name},
                         {"kind", kind_name(s.kind)},
                         {"bin_count", s.bin_count},
                         {"parent_a", s.parent_a},
                         {"parent_b", s.parent_b},
                         {"provenance", provenance_name(s.provenance)}});
    }
    Json bins = Json::array();
    for (const auto& b : layout.bins) {
        bins.push_back({{"kind", kind_name(b.kind)},
                        {"edges", b.edges},
                        {"categories", b.categories},
                        {"parent_a", b.parent_a},
                        {"parent_b", b.parent_b}});
    }
    return {{"specs", specs}, {"bins", bins}};
}

inline BinLayout layout_from_json(const Json& j) {
    BinLayout layout;
    for (const auto& s : j.at("specs")) {
        FeatureSpec spec;
        spec.name = s.at("name").get<std::string>();
        spec.kind = kind_from(s.at("kind").get<std::string>());
        spec.bin_count = s.at("bin_count").get<int>();
        spec.parent_a = s.at("parent_a").get<std::string>();
        spec.parent_b = s.at("parent_b").get<std::string>();
        spec.provenance = provenance_from(s.at("provenance").get<std::string>());
        layout.specs.push_back(std::move(spec));
    }
    for (const auto& b : j.at("bins")) {
        FeatureBins fb;
        fb.kind = kind_from(b.at("kind").get<std::string>());
        fb.edges = b.at("edges").get<std::vector<double>>();
        fb.categories = b.at("categories").get<std::vector<std::string>>();
        fb.parent_a = b.at("parent_a").get<int>();
        fb.parent_b = b.at("parent_b").get<int>();
        for (std::size_t k = 0; k < fb.categories.size(); ++k)
            fb.category_index[fb.categories[k]] = static_cast<int>(k);
        layout.bins.push_back(std::move(fb));
    }
    return layout;
}

}  // namespace detail

inline Json artifact_to_json(const ModelArtifact& a) {
    Json events = Json::array();
    for (const auto& e : a.events)
        events.push_back({{"date", e.date.to_string()}, {"name", e.name}, {"type", e.type}});
    return {
        {"format_version", kArtifactVersion},
        {"mode", a.mode},
        {"epoch", a.epoch.to_string()},
        {"events", events},
        {"correction",
         {{"enabled", a.correction_enabled},
          {"alpha", a.correction.alpha},
          {"lag", a.correction.lag},
          {"factor_floor", a.correction.factor_floor},
          {"factor_ceil", a.correction.factor_ceil}}},
        {"mean_layout", detail::layout_to_json(a.mean_layout)},
        {"width_layout", detail::layout_to_json(a.width_layout)},
        {"mean_model",
         {{"c", a.mean_model.c},
          {"feature_names", a.mean_model.feature_names},
          {"factors", a.mean_model.factors},
          {"support", a.mean_model.support},
          {"mad_per_cycle", a.mean_model.mad_per_cycle},
          {"rolled_back_cycles", a.mean_model.rolled_back_cycles}}},
        {"width_model",
         {{"feature_names", a.width_model.feature_names},
          {"factors", a.width_model.factors},
          {"support", a.width_model.support},
          {"global_factor", a.width_model.global_factor},
          {"nll_per_cycle", a.width_model.nll_per_cycle},
          {"guarded_updates", a.width_model.guarded_updates}}},
    };
}

inline ModelArtifact artifact_from_json(const Json& j) {
    if (!j.contains("format_version") || j.at("format_version").get<int>() != kArtifactVersion)
        throw DataError("model artifact: unsupported format version");
    ModelArtifact a;
    a.mode = j.at("mode").get<std::string>();
    a.epoch = Date::parse(j.at("epoch").get<std::string>());
    for (const auto& e : j.at("events"))
        a.events.push_back({Date::parse(e.at("date").get<std::string>()),
                            e.at("name").get<std::string>(), e.at("type").get<std::string>()});
    const auto& c = j.at("correction");
    a.correction_enabled = c.at("enabled").get<bool>();
    a.correction.alpha = c.at("alpha").get<double>();
    a.correction.lag = c.at("lag").get<int>();
    a.correction.factor_floor = c.at("factor_floor").get<double>();
    a.correction.factor_ceil = c.at("factor_ceil").get<double>();
    a.mean_layout = detail::layout_from_json(j.at("mean_layout"));
    a.width_layout = detail::layout_from_json(j.at("width_layout"));
    const auto& m = j.at("mean_model");
    a.mean_model.c = m.at("c").get<double>();
    a.mean_model.feature_names = m.at("feature_names").get<std::vector<std::string>>();
    a.mean_model.factors = m.at("factors").get<std::vector<std::vector<double>>>();
    a.mean_model.support = m.at("support").get<std::vector<std::vector<std::int64_t>>>();
    a.mean_model.mad_per_cycle = m.at("mad_per_cycle").get<std::vector<double>>();
    a.mean_model.rolled_back_cycles = m.at("rolled_back_cycles").get<int>();
    const auto& w = j.at("width_model");
    a.width_model.feature_names = w.at("feature_names").get<std::vector<std::string>>();
    a.width_model.factors = w.at("factors").get<std::vector<std::vector<double>>>();
    a.width_model.support = w.at("support").get<std::vector<std::vector<std::int64_t>>>();
    a.width_model.global_factor = w.at("global_factor").get<double>();
    a.width_model.nll_per_cycle = w.at("nll_per_cycle").get<std::vector<double>>();
    a.width_model.guarded_updates = w.at("guarded_updates").get<std::int64_t>();
    return a;
}

inline void save_artifact(const ModelArtifact& a, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << artifact_to_json(a).dump(2) << '\n';
}

inline ModelArtifact load_artifact(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    Json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw DataError("model artifact '" + path + "' is not valid JSON: " + e.what());
    }
    return artifact_from_json(j);
}

}  // namespace cbdemand
