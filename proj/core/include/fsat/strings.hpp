#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fsat {

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// Strict parsers: the whole string must be consumed, otherwise ConfigError naming `what`.
double parse_double(std::string_view s, std::string_view what);
std::int64_t parse_int(std::string_view s, std::string_view what);
std::uint64_t parse_uint(std::string_view s, std::string_view what);
bool parse_bool(std::string_view s, std::string_view what);
std::vector<std::size_t> parse_size_list(std::string_view s, std::string_view what);

std::string join_sizes(const std::vector<std::size_t>& values, char sep = ',');
/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace fsat
