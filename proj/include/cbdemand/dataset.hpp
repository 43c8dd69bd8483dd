#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <cbdemand/csv.hpp>
#include <cbdemand/date.hpp>
#include <cbdemand/errors.hpp>
#include <cbdemand/features.hpp>

namespace cbdemand {

/// Long-format sales records, sorted by (item, store, date) with a dense
/// daily grid per series: every series covers every date in [from, to], and
/// days absent from the input are materialized as zero sales and flagged.
struct SampleTable {
    Date from, to;
    std::vector<std::string> item, store;
    std::vector<Date> date;
    std::vector<double> sales;
    std::vector<std::string> event_name, event_type;
    std::vector<int> snap;           ///< SNAP flag of the store's state
    std::vector<double> sell_price;  ///< NaN where no price is listed
    std::vector<double> list_price;  ///< running max of sell_price per series
    std::vector<std::uint8_t> zero_filled;
    std::vector<EventOccurrence> events;  ///< event_name_1 occurrences near the range

    std::size_t n_rows() const { return item.size(); }
    int n_days() const { return to - from + 1; }
    std::size_t n_series() const { return n_rows() / static_cast<std::size_t>(n_days()); }

    /// Row range [begin, end) of series s; rows inside are date-ordered.
    std::pair<std::size_t, std::size_t> series_rows(std::size_t s) const {
        const std::size_t len = static_cast<std::size_t>(n_days());
        return {s * len, (s + 1) * len};
    }
};

struct IngestFilters {
    std::vector<std::string> items;   ///< empty = all
    std::vector<std::string> stores;  ///< empty = all
    Date from = Date::from_ymd(2013, 1, 1);
    Date to = Date::from_ymd(2016, 5, 22);
};

namespace detail {

struct CalendarDay {
    Date date;
    std::string wm_yr_wk;
    std::string event_name, event_type;
    std::map<std::string, int> snap_by_state;
};

inline std::string state_of_store(const std::string& store_id) {
    const auto pos = store_id.find('_');
    return pos == std::string::npos ? store_id : store_id.substr(0, pos);
}

}  // namespace detail

/// Reads M5-style calendar / wide sales / weekly price files and pivots them
/// into a SampleTable. list_price is not an input column; it is derived as
/// the running maximum of sell_price per series.
inline SampleTable ingest(const std::string& calendar_path, const std::string& sales_path,
                          const std::string& prices_path, const IngestFilters& filters) {
    // --- calendar ---
    CsvReader calendar(calendar_path);
    const int c_date = calendar.column("date");
    const int c_wk = calendar.column("wm_yr_wk");
    const int c_d = calendar.column("d");
    const int c_ev_name = calendar.column("event_name_1");
    const int c_ev_type = calendar.column("event_type_1");
    std::vector<int> c_snap;
    std::vector<std::string> snap_states;
    for (std::size_t i = 0; i < calendar.header().size(); ++i) {
        const std::string& h = calendar.header()[i];
        if (h.rfind("snap_", 0) == 0) {
            c_snap.push_back(static_cast<int>(i));
            snap_states.push_back(h.substr(5));
        }
    }

    std::map<std::string, detail::CalendarDay> by_day_key;  // "d_17" -> day
    std::map<Date, detail::CalendarDay> by_date;
    std::vector<EventOccurrence> events;
    {
        std::string line;
        while (calendar.next_line(line)) {
            const auto f = split_csv_line(line);
            if (f.size() < calendar.header().size())
                throw DataError("'" + calendar_path + "': truncated row '" + line + "'");
            detail::CalendarDay day;
            day.date = Date::parse(f[c_date]);
            day.wm_yr_wk = f[c_wk];
            day.event_name = f[c_ev_name];
            day.event_type = f[c_ev_type];
            for (std::size_t s = 0; s < c_snap.size(); ++s)
                day.snap_by_state[snap_states[s]] = f[c_snap[s]] == "1" ? 1 : 0;
            if (!day.event_name.empty() && day.date >= filters.from - 8 &&
                day.date <= filters.to + 8)
                events.push_back({day.date, day.event_name, day.event_type});
            by_date[day.date] = day;
            by_day_key[f[c_d]] = std::move(day);
        }
    }
    for (Date d = filters.from; d <= filters.to; d = d + 1)
        if (!by_date.count(d))
            throw DataError("calendar does not cover " + d.to_string());

    const std::set<std::string> item_filter(filters.items.begin(), filters.items.end());
    const std::set<std::string> store_filter(filters.stores.begin(), filters.stores.end());

    // --- sales (wide day columns) ---
    CsvReader sales(sales_path);
    const int s_item = sales.column("item_id");
    const int s_store = sales.column("store_id");
    std::vector<std::pair<int, Date>> day_columns;  // (column index, date)
    for (std::size_t i = 0; i < sales.header().size(); ++i) {
        const std::string& h = sales.header()[i];
        if (h.rfind("d_", 0) == 0) {
            auto it = by_day_key.find(h);
            if (it == by_day_key.end())
                throw DataError("sales column '" + h + "' missing from the calendar");
            if (it->second.date >= filters.from && it->second.date <= filters.to)
                day_columns.push_back({static_cast<int>(i), it->second.date});
        }
    }
    if (day_columns.empty())
        throw DataError("'" + sales_path + "' has no day columns (d_*) inside the date range");

    const int n_days = filters.to - filters.from + 1;
    std::map<std::pair<std::string, std::string>, std::vector<double>> series_sales;
    std::map<std::pair<std::string, std::string>, std::vector<std::uint8_t>> series_filled;
    {
        std::string line;
        while (sales.next_line(line)) {
            const auto f = split_csv_line(line);
            const std::string& item = f[s_item];
            const std::string& store = f[s_store];
            if (!item_filter.empty() && !item_filter.count(item)) continue;
            if (!store_filter.empty() && !store_filter.count(store)) continue;
            if (series_sales.count({item, store}))
                throw DataError("'" + sales_path + "': duplicate series " + item + " / " + store);
            auto& vals = series_sales[{item, store}];
            auto& filled = series_filled[{item, store}];
            vals.assign(n_days, 0.0);
            filled.assign(n_days, 1);
            for (const auto& [col, d] : day_columns) {
                if (col >= static_cast<int>(f.size())) continue;
                const std::string& cell = f[col];
                if (cell.empty()) continue;
                vals[d - filters.from] = parse_double(cell, sales_path);
                filled[d - filters.from] = 0;
            }
        }
    }
    if (series_sales.empty())
        throw DataError("no sales rows left after applying the item/store filters");

    // --- prices (weekly) ---
    CsvReader prices(prices_path);
    const int p_store = prices.column("store_id");
    const int p_item = prices.column("item_id");
    const int p_wk = prices.column("wm_yr_wk");
    const int p_price = prices.column("sell_price");
    std::map<std::pair<std::string, std::string>, std::map<std::string, double>> price_by_week;
    {
        std::string line;
        while (prices.next_line(line)) {
            const auto f = split_csv_line(line);
            if (f.size() < prices.header().size())
                throw DataError("'" + prices_path + "': truncated row '" + line + "'");
            const std::string& item = f[p_item];
            const std::string& store = f[p_store];
            if (!item_filter.empty() && !item_filter.count(item)) continue;
            if (!store_filter.empty() && !store_filter.count(store)) continue;
            price_by_week[{item, store}][f[p_wk]] = parse_double(f[p_price], prices_path);
        }
    }

    // --- assemble, sorted by (item, store, date) ---
    SampleTable table;
    table.from = filters.from;
    table.to = filters.to;
    table.events = std::move(events);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& [key, vals] : series_sales) {
        const auto& filled = series_filled[key];
        const auto* weeks = price_by_week.count(key) ? &price_by_week.at(key) : nullptr;
        const std::string state = detail::state_of_store(key.second);
        double running_max = nan;
        for (int t = 0; t < n_days; ++t) {
            const Date d = filters.from + t;
            const auto& day = by_date.at(d);
            table.item.push_back(key.first);
            table.store.push_back(key.second);
            table.date.push_back(d);
            table.sales.push_back(vals[t]);
            table.zero_filled.push_back(filled[t]);
            table.event_name.push_back(day.event_name);
            table.event_type.push_back(day.event_type);
            auto snap_it = day.snap_by_state.find(state);
            table.snap.push_back(snap_it == day.snap_by_state.end() ? 0 : snap_it->second);
            double price = nan;
            if (weeks) {
                auto it = weeks->find(day.wm_yr_wk);
                if (it != weeks->end()) price = it->second;
            }
            table.sell_price.push_back(price);
            if (!std::isnan(price) && !(price <= running_max)) running_max = price;
            table.list_price.push_back(running_max);
        }
    }
    return table;
}

/// Writes the pivoted long table (the `ingest` subcommand output).
inline void write_long_csv(const SampleTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << "item_id,store_id,date,sales,event_name,event_type,snap,sell_price,list_price,"
           "zero_filled\n";
    for (std::size_t i = 0; i < table.n_rows(); ++i) {
        out << csv_quote(table.item[i]) << ',' << csv_quote(table.store[i]) << ','
            << table.date[i].to_string() << ',' << format_double(table.sales[i]) << ','
            << csv_quote(table.event_name[i]) << ',' << csv_quote(table.event_type[i]) << ','
            << table.snap[i] << ','
            << (std::isnan(table.sell_price[i]) ? "" : format_double(table.sell_price[i])) << ','
            << (std::isnan(table.list_price[i]) ? "" : format_double(table.list_price[i])) << ','
            << static_cast<int>(table.zero_filled[i]) << '\n';
    }
}

}  // namespace cbdemand
