#pragma once

#include <charconv>
#include <cstdio>
#include <string>

namespace ecmu {

/// Shortest decimal form that reads back as the same double.
inline std::string format_real(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline std::string format_fixed(double x, int decimals = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
    return buf;
}

inline std::string format_percent(double fraction) { return format_fixed(fraction * 100.0, 2) + "%"; }

} // namespace ecmu
