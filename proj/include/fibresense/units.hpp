#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace fibresense::units {

/// Parses a number with an optional SI prefix (T G M k m u/µ n p f) and an
/// optional trailing unit token: "4.7p", "12.5kHz", "0.75k", "1e-3", "30".
/// Throws std::invalid_argument on malformed input.
double parse_value(std::string_view text);

/// Comma-separated list of parse_value items. Empty input yields an empty list.
std::vector<double> parse_list(std::string_view text);

/// Shortest decimal form that round-trips exactly (std::to_chars).
std::string format_double(double v);

} // namespace fibresense::units
