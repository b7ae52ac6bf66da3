#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <system_error>

namespace icofact::detail {

// Shortest decimal text that parses back to exactly `v`.
inline void append_number(std::string& out, double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) {
        out += "nan";
        return;
    }
    out.append(buf, end);
}

inline std::string number(double v) {
    std::string s;
    append_number(s, v);
    return s;
}

}  // namespace icofact::detail
