#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <cbdemand/date.hpp>
#include <cbdemand/errors.hpp>

namespace cbdemand {

enum class FeatureKind { categorical, continuous, interaction };

/// Where a feature's information comes from. The ablation checks rely on
/// this: a model advertised as free of lagged target information must not
/// contain any `lagged_target` feature.
enum class FeatureProvenance { exogenous, lagged_target, model_derived };

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::categorical;
    int bin_count = 20;  // continuous only
    std::string parent_a, parent_b;  // interaction only
    FeatureProvenance provenance = FeatureProvenance::exogenous;

    static FeatureSpec categorical(std::string name,
                                   FeatureProvenance prov = FeatureProvenance::exogenous) {
        return {std::move(name), FeatureKind::categorical, 0, "", "", prov};
    }
    static FeatureSpec continuous(std::string name, int bins,
                                  FeatureProvenance prov = FeatureProvenance::exogenous) {
        return {std::move(name), FeatureKind::continuous, bins, "", "", prov};
    }
    static FeatureSpec interaction(const std::string& a, const std::string& b) {
        return {a + " x " + b, FeatureKind::interaction, 0, a, b,
                FeatureProvenance::exogenous};
    }
};

/// One raw column: continuous columns use `numeric` with NaN as the missing
/// marker, categorical columns use `category` with "" as the missing marker.
struct RawColumn {
    std::vector<double> numeric;
    std::vector<std::string> category;

    std::size_t size() const { return numeric.empty() ? category.size() : numeric.size(); }
};

using RawColumns = std::map<std::string, RawColumn>;

/// Fitted discretization of one feature.
struct FeatureBins {
    FeatureKind kind = FeatureKind::categorical;
    std::vector<double> edges;              // continuous: upper-inclusive internal edges
    std::vector<std::string> categories;    // categorical: sorted observed categories
    std::map<std::string, int> category_index;
    int parent_a = -1, parent_b = -1;       // interaction: layout positions of parents

    int regular_bins(const std::vector<FeatureBins>& all) const {
        switch (kind) {
            case FeatureKind::continuous: return static_cast<int>(edges.size()) + 1;
            case FeatureKind::categorical: return static_cast<int>(categories.size());
            case FeatureKind::interaction:
                return all[parent_a].total_bins(all) * all[parent_b].total_bins(all);
        }
        return 0;
    }

    /// Interactions have no missing bin of their own; a missing parent value
    /// lands in the parent's missing bin inside the product.
    int total_bins(const std::vector<FeatureBins>& all) const {
        return regular_bins(all) + (kind == FeatureKind::interaction ? 0 : 1);
    }

    int missing_bin(const std::vector<FeatureBins>& all) const { return regular_bins(all); }
};

struct BinLayout {
    std::vector<FeatureSpec> specs;
    std::vector<FeatureBins> bins;  // aligned with specs

    int feature_index(const std::string& name) const {
        for (std::size_t j = 0; j < specs.size(); ++j)
            if (specs[j].name == name) return static_cast<int>(j);
        return -1;
    }
    int total_bins(int j) const { return bins[j].total_bins(bins); }
};

/// Dense per-feature bin indices, row-aligned with the sample table that
/// produced the raw columns.
struct FeatureMatrix {
    std::size_t n_samples = 0;
    std::vector<std::string> names;
    std::vector<int> n_bins;                   // total bins per feature
    std::vector<std::vector<std::int32_t>> idx;  // [feature][sample]

    std::size_t n_features() const { return names.size(); }
};

inline FeatureMatrix select_rows(const FeatureMatrix& fm, std::span<const std::size_t> rows) {
    FeatureMatrix out;
    out.n_samples = rows.size();
    out.names = fm.names;
    out.n_bins = fm.n_bins;
    out.idx.resize(fm.idx.size());
    for (std::size_t j = 0; j < fm.idx.size(); ++j) {
        out.idx[j].reserve(rows.size());
        for (std::size_t r : rows) out.idx[j].push_back(fm.idx[j][r]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Raw feature builders
// ---------------------------------------------------------------------------

/// Trend and seasonality columns:
///   days_since_epoch (numeric), day_of_week 0=Monday..6 (categorical),
///   day_of_year 1..366 (numeric), month 1..12 (categorical),
///   week_of_month floor((day-1)/7)+1 (categorical).
inline RawColumns build_calendar_features(std::span<const Date> dates, Date epoch) {
    RawColumns out;
    auto& days = out["days_since_epoch"].numeric;
    auto& dow = out["day_of_week"].category;
    auto& doy = out["day_of_year"].numeric;
    auto& month = out["month"].category;
    auto& wom = out["week_of_month"].category;
    days.reserve(dates.size());
    for (const Date& d : dates) {
        days.push_back(static_cast<double>(d - epoch));
        dow.push_back(std::to_string(d.day_of_week()));
        doy.push_back(static_cast<double>(d.day_of_year()));
        month.push_back(std::to_string(d.month()));
        wom.push_back(std::to_string((d.day() - 1) / 7 + 1));
    }
    return out;
}

struct EventOccurrence {
    Date date;
    std::string name;
    std::string type;
};

inline bool event_uses_wide_window(const std::string& name) {
    return name == "Christmas" || name == "Easter";
}

/// Per event name: a categorical column holding the day offset to the nearest
/// occurrence when the date falls inside that event's window, "outside"
/// otherwise. Christmas and Easter use [-7, +3], every other event [-3, +1].
/// Also emits `event_type`: the type of the nearest in-window event, "none"
/// when no window covers the date.
inline RawColumns build_event_windows(std::span<const Date> dates,
                                      std::span<const EventOccurrence> events) {
    std::map<std::string, std::vector<Date>> occurrences;
    std::map<std::string, std::string> type_of;
    for (const auto& e : events) {
        occurrences[e.name].push_back(e.date);
        type_of[e.name] = e.type;
    }
    for (auto& [name, ds] : occurrences) std::sort(ds.begin(), ds.end());

    RawColumns out;
    for (const auto& [name, ds] : occurrences)
        out["event:" + name].category.assign(dates.size(), "outside");
    auto& etype = out["event_type"].category;
    etype.assign(dates.size(), "none");

    for (std::size_t i = 0; i < dates.size(); ++i) {
        int best_abs = std::numeric_limits<int>::max();
        for (const auto& [name, ds] : occurrences) {
            const int lo = event_uses_wide_window(name) ? -7 : -3;
            const int hi = event_uses_wide_window(name) ? 3 : 1;
            // nearest occurrence of this event
            auto it = std::lower_bound(ds.begin(), ds.end(), dates[i]);
            int offset = std::numeric_limits<int>::max();
            if (it != ds.end()) offset = dates[i] - *it;
            if (it != ds.begin()) {
                const int alt = dates[i] - *std::prev(it);
                if (std::abs(alt) < std::abs(offset)) offset = alt;
            }
            if (offset >= lo && offset <= hi) {
                out["event:" + name].category[i] = std::to_string(offset);
                if (std::abs(offset) < best_abs) {
                    best_abs = std::abs(offset);
                    etype[i] = type_of.at(name);
                }
            }
        }
    }
    return out;
}

/// price_ratio = sell/list and a promotion flag (ratio < 1). A missing sell
/// price yields a missing ratio and promo "0".
inline RawColumns build_price_features(std::span<const double> sell_price,
                                       std::span<const double> list_price) {
    RawColumns out;
    auto& ratio = out["price_ratio"].numeric;
    auto& promo = out["promo"].category;
    ratio.reserve(sell_price.size());
    for (std::size_t i = 0; i < sell_price.size(); ++i) {
        if (std::isnan(sell_price[i]) || std::isnan(list_price[i]) || list_price[i] <= 0.0) {
            ratio.push_back(std::numeric_limits<double>::quiet_NaN());
            promo.push_back("0");
        } else {
            const double r = sell_price[i] / list_price[i];
            ratio.push_back(r);
            promo.push_back(r < 1.0 ? "1" : "0");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Discretization
// ---------------------------------------------------------------------------

namespace detail {

inline const RawColumn& column_for(const RawColumns& raw, const std::string& name) {
    auto it = raw.find(name);
    if (it == raw.end()) throw DataError("fit_bins: raw column '" + name + "' not found");
    return it->second;
}

}  // namespace detail

/// Fits bin boundaries from the (training) rows of the raw columns.
/// Continuous features are cut at equal-frequency quantiles with duplicate
/// boundaries merged; categoricals enumerate the observed categories. Every
/// feature reserves one extra bin for missing / unseen values.
inline BinLayout fit_bins(const RawColumns& raw, const std::vector<FeatureSpec>& specs,
                          std::span<const std::size_t> rows = {}) {
    BinLayout layout;
    layout.specs = specs;
    layout.bins.resize(specs.size());

    for (std::size_t j = 0; j < specs.size(); ++j) {
        const FeatureSpec& spec = specs[j];
        FeatureBins& fb = layout.bins[j];
        fb.kind = spec.kind;
        if (spec.kind == FeatureKind::interaction) {
            fb.parent_a = layout.feature_index(spec.parent_a);
            fb.parent_b = layout.feature_index(spec.parent_b);
            if (fb.parent_a < 0 || fb.parent_b < 0 ||
                specs[fb.parent_a].kind == FeatureKind::interaction ||
                specs[fb.parent_b].kind == FeatureKind::interaction)
                throw ConfigError("fit_bins: interaction '" + spec.name +
                                  "' must reference two base features");
            if (static_cast<std::size_t>(fb.parent_a) >= j ||
                static_cast<std::size_t>(fb.parent_b) >= j)
                throw ConfigError("fit_bins: parents of '" + spec.name +
                                  "' must be declared before the interaction");
            continue;
        }

        const RawColumn& col = detail::column_for(raw, spec.name);
        const std::size_t n_rows = col.size();
        auto each_row = [&](auto&& fn) {
            if (rows.empty())
                for (std::size_t r = 0; r < n_rows; ++r) fn(r);
            else
                for (std::size_t r : rows) fn(r);
        };

        if (spec.kind == FeatureKind::continuous) {
            if (spec.bin_count < 1)
                throw ConfigError("fit_bins: bin_count must be >= 1 for '" + spec.name + "'");
            std::vector<double> values;
            each_row([&](std::size_t r) {
                if (!std::isnan(col.numeric[r])) values.push_back(col.numeric[r]);
            });
            if (values.empty())
                throw DataError("fit_bins: feature '" + spec.name + "' has no observed values");
            std::sort(values.begin(), values.end());
            const std::size_t n = values.size();
            for (int b = 1; b < spec.bin_count; ++b) {
                std::size_t rank = static_cast<std::size_t>(
                    static_cast<unsigned long long>(b) * n / spec.bin_count);
                if (rank == 0) rank = 1;
                fb.edges.push_back(values[rank - 1]);
            }
            fb.edges.erase(std::unique(fb.edges.begin(), fb.edges.end()), fb.edges.end());
            // A boundary equal to the global maximum would leave the top bin
            // empty by construction; drop it.
            while (!fb.edges.empty() && fb.edges.back() >= values.back()) fb.edges.pop_back();
        } else {
            std::set<std::string> cats;
            each_row([&](std::size_t r) {
                if (!col.category[r].empty()) cats.insert(col.category[r]);
            });
            if (cats.empty())
                throw DataError("fit_bins: feature '" + spec.name + "' has no observed values");
            fb.categories.assign(cats.begin(), cats.end());
            for (std::size_t k = 0; k < fb.categories.size(); ++k)
                fb.category_index[fb.categories[k]] = static_cast<int>(k);
        }
    }
    return layout;
}

/// Maps every sample of every feature to exactly one bin index. Continuous
/// values use upper-inclusive edges (values beyond the fitted range clamp to
/// the first/last bin), unseen categories and missing values go to the
/// reserved missing bin, and interactions flatten the parents' indices
/// row-major: flat = a_idx * b_total + b_idx.
inline FeatureMatrix apply_bins(const RawColumns& raw, const BinLayout& layout) {
    FeatureMatrix fm;
    fm.names.reserve(layout.specs.size());
    std::size_t n = 0;
    for (const auto& spec : layout.specs) {
        if (spec.kind != FeatureKind::interaction) {
            n = detail::column_for(raw, spec.name).size();
            break;
        }
    }
    fm.n_samples = n;
    fm.idx.resize(layout.specs.size());
    for (std::size_t j = 0; j < layout.specs.size(); ++j) {
        const FeatureSpec& spec = layout.specs[j];
        const FeatureBins& fb = layout.bins[j];
        fm.names.push_back(spec.name);
        fm.n_bins.push_back(fb.total_bins(layout.bins));
        auto& out = fm.idx[j];
        out.resize(n);

        if (spec.kind == FeatureKind::continuous) {
            const auto& vals = detail::column_for(raw, spec.name).numeric;
            const std::int32_t miss = fb.missing_bin(layout.bins);
            for (std::size_t r = 0; r < n; ++r) {
                if (std::isnan(vals[r])) {
                    out[r] = miss;
                } else {
                    out[r] = static_cast<std::int32_t>(
                        std::lower_bound(fb.edges.begin(), fb.edges.end(), vals[r]) -
                        fb.edges.begin());
                }
            }
        } else if (spec.kind == FeatureKind::categorical) {
            const auto& vals = detail::column_for(raw, spec.name).category;
            const std::int32_t miss = fb.missing_bin(layout.bins);
            for (std::size_t r = 0; r < n; ++r) {
                auto it = fb.category_index.find(vals[r]);
                out[r] = (vals[r].empty() || it == fb.category_index.end())
                             ? miss
                             : static_cast<std::int32_t>(it->second);
            }
        } else {
            const auto& ia = fm.idx[fb.parent_a];
            const auto& ib = fm.idx[fb.parent_b];
            const std::int32_t b_total = fm.n_bins[fb.parent_b];
            for (std::size_t r = 0; r < n; ++r) out[r] = ia[r] * b_total + ib[r];
        }
    }
    return fm;
}

/// Human-readable label for one bin of one feature.
inline std::string bin_label(const BinLayout& layout, int j, int bin) {
    const FeatureBins& fb = layout.bins[j];
    switch (fb.kind) {
        case FeatureKind::categorical:
            if (bin < static_cast<int>(fb.categories.size())) return fb.categories[bin];
            return "missing";
        case FeatureKind::continuous: {
            const int regular = static_cast<int>(fb.edges.size()) + 1;
            if (bin >= regular) return "missing";
            char buf[64];
            if (fb.edges.empty()) return "all";
            if (bin == 0) {
                std::snprintf(buf, sizeof(buf), "<=%g", fb.edges[0]);
            } else if (bin == regular - 1) {
                std::snprintf(buf, sizeof(buf), ">%g", fb.edges[bin - 1]);
            } else {
                std::snprintf(buf, sizeof(buf), "(%g,%g]", fb.edges[bin - 1], fb.edges[bin]);
            }
            return buf;
        }
        case FeatureKind::interaction: {
            const int b_total = layout.total_bins(fb.parent_b);
            return bin_label(layout, fb.parent_a, bin / b_total) + " & " +
                   bin_label(layout, fb.parent_b, bin % b_total);
        }
    }
    return "?";
}

}  // namespace cbdemand
