#include "fibresense/units.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace fibresense::units {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool prefix_scale(std::string_view rest, double& scale, std::size_t& consumed) {
    if (rest.empty()) return false;
    // µ is the two-byte UTF-8 sequence 0xC2 0xB5
    if (rest.size() >= 2 && static_cast<unsigned char>(rest[0]) == 0xC2 &&
        static_cast<unsigned char>(rest[1]) == 0xB5) {
        scale = 1e-6;
        consumed = 2;
        return true;
    }
    switch (rest[0]) {
        case 'T': scale = 1e12; break;
        case 'G': scale = 1e9; break;
        case 'M': scale = 1e6; break;
        case 'k': scale = 1e3; break;
        case 'm': scale = 1e-3; break;
        case 'u': scale = 1e-6; break;
        case 'n': scale = 1e-9; break;
        case 'p': scale = 1e-12; break;
        case 'f': scale = 1e-15; break;
        default: return false;
    }
    consumed = 1;
    return true;
}

bool is_unit_tail(std::string_view s) {
    // Unit tokens after the prefix ("Hz", "F", "ohm", "V", ...) are ignored.
    return std::all_of(s.begin(), s.end(), [](char ch) {
        return std::isalpha(static_cast<unsigned char>(ch)) != 0;
    });
}

} // namespace

double parse_value(std::string_view text) {
    std::string_view s = trim(text);
    if (s.empty()) throw std::invalid_argument("empty numeric value");

    double value = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr == begin)
        throw std::invalid_argument("malformed number: '" + std::string(text) + "'");

    std::string_view rest(ptr, static_cast<std::size_t>(end - ptr));
    if (rest.empty()) return value;

    double scale = 1.0;
    std::size_t consumed = 0;
    if (prefix_scale(rest, scale, consumed)) {
        std::string_view tail = rest.substr(consumed);
        if (is_unit_tail(tail)) return value * scale;
        // Prefix letter followed by non-unit junk: fall through to the unit-only check,
        // e.g. "4.7pF" handled above, "12k5" rejected below.
    }
    if (is_unit_tail(rest)) return value;  // bare unit, e.g. "30Hz"
    throw std::invalid_argument("malformed number suffix: '" + std::string(text) + "'");
}

std::vector<double> parse_list(std::string_view text) {
    std::vector<double> out;
    std::string_view s = trim(text);
    if (s.empty()) return out;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t comma = s.find(',', start);
        std::string_view item = (comma == std::string_view::npos)
                                    ? s.substr(start)
                                    : s.substr(start, comma - start);
        out.push_back(parse_value(item));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

} // namespace fibresense::units
