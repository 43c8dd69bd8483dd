#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include <cbdemand/errors.hpp>

namespace cbdemand {

/// Splits one CSV record. Handles quoted fields with embedded commas and
/// doubled quotes; trailing CR is stripped.
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

class CsvReader {
public:
    explicit CsvReader(const std::string& path) : in_(path), path_(path) {
        if (!in_) throw DataError("cannot open '" + path + "'");
        std::string line;
        if (!std::getline(in_, line)) throw DataError("'" + path + "' is empty");
        header_ = split_csv_line(line);
    }

    const std::vector<std::string>& header() const { return header_; }

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header_.size(); ++i)
            if (header_[i] == name) return static_cast<int>(i);
        throw DataError("'" + path_ + "': required column '" + name + "' missing");
    }

    /// Reads the next raw line; returns false at EOF. Splitting is left to
    /// the caller so cheap row filters can run before the full parse.
    bool next_line(std::string& line) {
        while (std::getline(in_, line)) {
            if (!line.empty() && line != "\r") return true;
        }
        return false;
    }

private:
    std::ifstream in_;
    std::string path_;
    std::vector<std::string> header_;
};

/// strtod with a DataError instead of std::invalid_argument, so schema
/// problems land on the data-error exit path.
inline double parse_double(const std::string& field, const std::string& context) {
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end == field.c_str() || end != field.c_str() + field.size())
        throw DataError(context + ": cannot parse number '" + field + "'");
    return v;
}

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

/// Shortest round-trip decimal form, so rewritten files stay byte-stable.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    for (int prec = 1; prec <= 16; ++prec) {
        char tight[32];
        std::snprintf(tight, sizeof(tight), "%.*g", prec, v);
        std::sscanf(tight, "%lf", &back);
        if (back == v) return tight;
    }
    return buf;
}

}  // namespace cbdemand
