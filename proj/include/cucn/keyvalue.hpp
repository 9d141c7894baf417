// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cucn {

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// keys and values are trimmed. Throws Error on a line without '='.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

std::int64_t parse_int(std::string_view s);
double parse_double(std::string_view s);
bool parse_bool(std::string_view s);
std::vector<std::int64_t> parse_int_list(std::string_view s);
std::vector<double> parse_double_list(std::string_view s);

std::string join_ints(const std::vector<std::int64_t>& values);
/// Shortest representation that parses back to the same double.
std::string format_double(double v);

}  // namespace cucn
