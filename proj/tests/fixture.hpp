#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <cbdemand/date.hpp>

#include "testutil.hpp"

namespace fixture {

using cbdemand::Date;

/// Synthetic M5-format dataset with a known multiplicative generative model:
///   y ~ NBD(c * f_item * f_store * f_dow, r = 2)
/// written as calendar.csv / sales.csv / prices.csv under `dir`.
struct Generated {
    std::string calendar, sales, prices;
    Date from, to;
    int n_items = 0, n_stores = 0;
    double c = 4.0;
    std::vector<double> f_item, f_store, f_dow;
    double inv_r = 0.5;

    double mu(int item, int store, int dow) const {
        return c * f_item[item] * f_store[store] * f_dow[dow];
    }
};

inline Generated write_fixture(const std::string& dir, int n_items = 24, int n_stores = 3,
                               Date from = Date::from_ymd(2013, 1, 1),
                               Date to = Date::from_ymd(2014, 5, 31), std::uint64_t seed = 12345,
                               double inv_r = 0.5) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    Generated g;
    g.calendar = dir + "/calendar.csv";
    g.sales = dir + "/sales.csv";
    g.prices = dir + "/prices.csv";
    g.from = from;
    g.to = to;
    g.n_items = n_items;
    g.n_stores = n_stores;
    g.inv_r = inv_r;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> log_factor(-0.6, 0.6);
    for (int i = 0; i < n_items; ++i) g.f_item.push_back(std::exp(log_factor(rng)));
    g.f_store = {0.8, 1.0, 1.25};
    g.f_store.resize(n_stores, 1.0);
    g.f_dow = {0.9, 0.95, 1.0, 1.0, 1.05, 1.25, 1.1};

    const int n_days = to - from + 1;
    const std::vector<std::string> stores = [&] {
        const char* states[] = {"CA", "TX", "WI"};
        std::vector<std::string> s;
        for (int k = 0; k < n_stores; ++k)
            s.push_back(std::string(states[k % 3]) + "_" + std::to_string(k / 3 + 1));
        return s;
    }();
    auto item_name = [](int i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "ITEM_%03d", i);
        return std::string(buf);
    };

    {  // calendar
        std::ofstream out(g.calendar);
        out << "date,wm_yr_wk,weekday,wday,month,year,d,event_name_1,event_type_1,"
               "event_name_2,event_type_2,snap_CA,snap_TX,snap_WI\n";
        for (int t = 0; t < n_days; ++t) {
            const Date d = from + t;
            std::string event_name, event_type;
            if (d.month() == 12 && d.day() == 25) {
                event_name = "Christmas";
                event_type = "National";
            } else if (d.month() == 6 && d.day() == 15) {
                event_name = "TestFest";
                event_type = "Cultural";
            }
            const int snap = d.day() <= 10 ? 1 : 0;
            out << d.to_string() << ',' << 11000 + t / 7 << ',' << d.day_of_week() << ','
                << d.day_of_week() << ',' << d.month() << ',' << d.year() << ",d_" << (t + 1)
                << ',' << event_name << ',' << event_type << ",,," << snap << ",0,0\n";
        }
    }

    {  // sales (wide)
        std::ofstream out(g.sales);
        out << "id,item_id,dept_id,cat_id,store_id,state_id";
        for (int t = 1; t <= n_days; ++t) out << ",d_" << t;
        out << '\n';
        for (int i = 0; i < n_items; ++i) {
            for (int s = 0; s < n_stores; ++s) {
                const std::string item = item_name(i);
                out << item << '_' << stores[s] << ',' << item << ",TEST_1,TEST," << stores[s]
                    << ',' << stores[s].substr(0, 2);
                for (int t = 0; t < n_days; ++t) {
                    const Date d = from + t;
                    const double mu = g.mu(i, s, d.day_of_week());
                    out << ',' << testutil::sample_nbd(rng, {mu, inv_r});
                }
                out << '\n';
            }
        }
    }

    {  // weekly prices; item 0 gets no prices for the first 6 weeks
        std::ofstream out(g.prices);
        out << "store_id,item_id,wm_yr_wk,sell_price\n";
        const int n_weeks = (n_days + 6) / 7;
        for (int i = 0; i < n_items; ++i) {
            for (int s = 0; s < n_stores; ++s) {
                for (int w = 0; w < n_weeks; ++w) {
                    if (i == 0 && w < 6) continue;
                    const double base = 2.0 + (i % 5) * 0.5;
                    const double price = (w % 13 == 12) ? base * 0.8 : base;
                    out << stores[s] << ',' << item_name(i) << ',' << 11000 + w << ','
                        << price << '\n';
                }
            }
        }
    }
    return g;
}

}  // namespace fixture
