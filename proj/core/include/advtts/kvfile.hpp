// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADVTTS_KVFILE_HPP
#define ADVTTS_KVFILE_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace advtts {

// Flat `key=value` text documents: one pair per line, UTF-8, '#' comments and
// blank lines ignored, duplicate keys rejected. This single grammar backs
// corpus specs, run configs and checkpoint manifests.
class KvDoc {
 public:
  // ParseError messages carry `source` and a 1-based line number.
  static KvDoc parse_string(const std::string& text,
                            const std::string& source = "<string>");
  static KvDoc parse_file(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  // ParseError naming the key when absent.
  const std::string& get(const std::string& key,
                         const std::string& source = "<config>") const;

  // Typed accessors; ParseError on malformed values.
  std::int64_t get_int(const std::string& key,
                       const std::string& source = "<config>") const;
  std::uint64_t get_u64(const std::string& key,
                        const std::string& source = "<config>") const;
  double get_double(const std::string& key,
                    const std::string& source = "<config>") const;

  // Insertion order is preserved; set() on an existing key overwrites.
  void set(const std::string& key, const std::string& value);
  void set_int(const std::string& key, std::int64_t value);
  void set_u64(const std::string& key, std::uint64_t value);
  void set_double(const std::string& key, double value);

  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

  std::string serialize() const;
  void write_file(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Shortest round-trip decimal rendering of a double (always reparses to the
// same bits).
std::string format_double(double value);

}  // namespace advtts

#endif  // ADVTTS_KVFILE_HPP
