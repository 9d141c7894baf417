// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include "cucn/keyvalue.hpp"

#include <charconv>
#include <system_error>

#include "cucn/tensor.hpp"

namespace cucn {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw Error("line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw Error("line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::move(key), trim(std::string_view(body).substr(eq + 1)));
  }
  return out;
}

std::int64_t parse_int(std::string_view s) {
  const std::string t = trim(s);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty())
    throw Error("not an integer: '" + t + "'");
  return v;
}

double parse_double(std::string_view s) {
  const std::string t = trim(s);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty())
    throw Error("not a number: '" + t + "'");
  return v;
}

bool parse_bool(std::string_view s) {
  const std::string t = trim(s);
  if (t == "1" || t == "true" || t == "on" || t == "yes") return true;
  if (t == "0" || t == "false" || t == "off" || t == "no") return false;
  throw Error("not a boolean: '" + t + "'");
}

std::vector<std::int64_t> parse_int_list(std::string_view s) {
  std::vector<std::int64_t> out;
  for (const auto& part : split(s, ',')) out.push_back(parse_int(part));
  return out;
}

std::vector<double> parse_double_list(std::string_view s) {
  std::vector<double> out;
  for (const auto& part : split(s, ',')) out.push_back(parse_double(part));
  return out;
}

std::string join_ints(const std::vector<std::int64_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace cucn
