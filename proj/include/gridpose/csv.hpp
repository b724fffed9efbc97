#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridpose::csv {

inline void strip_eol(std::string& line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

/// Shortest decimal form that round-trips a double (17 significant digits).
inline std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline double parse_double(const std::string& s, const std::string& context) {
    try {
        size_t used = 0;
        double x = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw std::runtime_error(context + ": cannot parse number '" + s + "'");
    }
}

inline long parse_long(const std::string& s, const std::string& context) {
    try {
        size_t used = 0;
        long x = std::stol(s, &used);
        if (used != s.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw std::runtime_error(context + ": cannot parse integer '" + s + "'");
    }
}

}  // namespace gridpose::csv
