#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <tuple>

namespace cbdemand {

/// Calendar date stored as a day count since 1970-01-01 (proleptic Gregorian).
/// Civil conversions follow the classic Hinnant algorithms, so the full range
/// needed here (years 2000..2100) is exact.
class Date {
public:
    Date() = default;
    explicit Date(std::int32_t days_since_unix_epoch) : days_(days_since_unix_epoch) {}

    static Date from_ymd(int year, int month, int day) {
        if (month < 1 || month > 12 || day < 1 || day > 31)
            throw std::invalid_argument("Date: invalid year-month-day");
        const int y = year - (month <= 2);
        const int era = (y >= 0 ? y : y - 399) / 400;
        const unsigned yoe = static_cast<unsigned>(y - era * 400);
        const unsigned doy = (153u * (month + (month > 2 ? -3 : 9)) + 2u) / 5u + day - 1u;
        const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        return Date(era * 146097 + static_cast<int>(doe) - 719468);
    }

    /// Parses "YYYY-MM-DD".
    static Date parse(const std::string& s) {
        int y = 0, m = 0, d = 0;
        if (std::sscanf(s.c_str(), "%d-%d-%d", &y, &m, &d) != 3)
            throw std::invalid_argument("Date: cannot parse '" + s + "'");
        return from_ymd(y, m, d);
    }

    std::int32_t days() const { return days_; }

    std::tuple<int, int, int> ymd() const {
        std::int32_t z = days_ + 719468;
        const std::int32_t era = (z >= 0 ? z : z - 146096) / 146097;
        const unsigned doe = static_cast<unsigned>(z - era * 146097);
        const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
        const int y = static_cast<int>(yoe) + era * 400;
        const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        const unsigned mp = (5 * doy + 2) / 153;
        const unsigned d = doy - (153 * mp + 2) / 5 + 1;
        const unsigned m = mp + (mp < 10 ? 3 : -9);
        return {y + (m <= 2), static_cast<int>(m), static_cast<int>(d)};
    }

    int year() const { return std::get<0>(ymd()); }
    int month() const { return std::get<1>(ymd()); }
    int day() const { return std::get<2>(ymd()); }

    /// 0 = Monday .. 6 = Sunday.
    int day_of_week() const {
        // 1970-01-01 was a Thursday.
        std::int32_t w = (days_ + 3) % 7;
        return w < 0 ? w + 7 : w;
    }

    /// 1..366
    int day_of_year() const {
        return days_ - Date::from_ymd(year(), 1, 1).days_ + 1;
    }

    std::string to_string() const {
        auto [y, m, d] = ymd();
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
        return buf;
    }

    Date operator+(int n) const { return Date(days_ + n); }
    Date operator-(int n) const { return Date(days_ - n); }
    std::int32_t operator-(Date other) const { return days_ - other.days_; }
    auto operator<=>(const Date&) const = default;

private:
    std::int32_t days_ = 0;
};

}  // namespace cbdemand
