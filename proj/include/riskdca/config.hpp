// Flat key-value configuration files: one `key = value` pair per line,
// `#` starts a comment, values are scalars or comma-separated lists.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace riskdca {

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig from_string(const std::string& text);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& dflt) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double dflt) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

  // FNV-1a over the sorted key=value pairs; changes iff any entry changes.
  std::uint64_t hash() const;

 private:
  std::map<std::string, std::string> entries_;
};

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

}  // namespace riskdca
