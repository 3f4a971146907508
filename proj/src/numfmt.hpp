#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>

namespace bbphase::detail {

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

inline std::string format_hex(std::uint64_t v) {
    char buf[24] = {'0', 'x'};
    auto [end, ec] = std::to_chars(buf + 2, buf + sizeof buf, v, 16);
    return std::string(buf, end);
}

template <typename T>
std::optional<T> parse_number(std::string_view s, int base = 10) {
    T value{};
    const char* first = s.data();
    const char* last = s.data() + s.size();
    std::from_chars_result r;
    if constexpr (std::is_floating_point_v<T>) {
        r = std::from_chars(first, last, value);
    } else {
        r = std::from_chars(first, last, value, base);
    }
    if (r.ec != std::errc{} || r.ptr != last) return std::nullopt;
    return value;
}

inline std::optional<std::uint64_t> parse_hex(std::string_view s) {
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) s.remove_prefix(2);
    if (s.empty()) return std::nullopt;
    return parse_number<std::uint64_t>(s, 16);
}

}  // namespace bbphase::detail
