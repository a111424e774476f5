// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#include "advtts/kvfile.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "advtts/errors.hpp"

namespace advtts {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value,
               const std::string& source, const char* kind) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last)
    throw ParseError(source + ": invalid " + std::string(kind) + " '" +
                     value + "' for key '" + key + "'");
  return out;
}

}  // namespace

KvDoc KvDoc::parse_string(const std::string& text, const std::string& source) {
  KvDoc doc;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ParseError(source + ":" + std::to_string(lineno) +
                       ": expected key=value, got '" + stripped + "'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      throw ParseError(source + ":" + std::to_string(lineno) +
                       ": empty key");
    if (doc.has(key))
      throw ParseError(source + ":" + std::to_string(lineno) +
                       ": duplicate key '" + key + "'");
    doc.entries_.emplace_back(key, value);
  }
  return doc;
}

KvDoc KvDoc::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path.string());
}

bool KvDoc::has(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return true;
  return false;
}

const std::string& KvDoc::get(const std::string& key,
                              const std::string& source) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  throw ParseError(source + ": missing key '" + key + "'");
}

std::int64_t KvDoc::get_int(const std::string& key,
                            const std::string& source) const {
  return parse_number<std::int64_t>(key, get(key, source), source, "integer");
}

std::uint64_t KvDoc::get_u64(const std::string& key,
                             const std::string& source) const {
  return parse_number<std::uint64_t>(key, get(key, source), source,
                                     "unsigned integer");
}

double KvDoc::get_double(const std::string& key,
                         const std::string& source) const {
  return parse_number<double>(key, get(key, source), source, "number");
}

void KvDoc::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void KvDoc::set_int(const std::string& key, std::int64_t value) {
  set(key, std::to_string(value));
}

void KvDoc::set_u64(const std::string& key, std::uint64_t value) {
  set(key, std::to_string(value));
}

void KvDoc::set_double(const std::string& key, double value) {
  set(key, format_double(value));
}

std::string KvDoc::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

void KvDoc::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << serialize();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw NumericError("format_double failed");
  return std::string(buf, ptr);
}

}  // namespace advtts
