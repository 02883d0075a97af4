#pragma once

#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mdd::csv {

/// Split one line on commas. No quoting: fields must not contain commas.
std::vector<std::string_view> split_fields(std::string_view line);

/// Parse a decimal floating-point cell. Returns nullopt on malformed input,
/// trailing garbage, or a non-finite value (NaN/Inf tokens are rejected).
std::optional<double> parse_finite_double(std::string_view cell);

std::optional<long> parse_long(std::string_view cell);

/// Shortest decimal string that round-trips to the same double bit pattern.
std::string format_double(double v);

/// Strip one trailing '\r' (files written on Windows).
std::string_view strip_cr(std::string_view line);

}  // namespace mdd::csv
