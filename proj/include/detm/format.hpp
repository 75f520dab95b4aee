#pragma once

#include <charconv>
#include <string>

namespace detm {

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_number(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace detm
