#include "riskdca/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "riskdca/errors.hpp"

namespace riskdca {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    cfg.entries_[key] = value;
  }
  return cfg;
}

bool KeyValueConfig::has(const std::string& key) const {
  return entries_.count(key) != 0;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

std::string KeyValueConfig::get_string(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("missing config key: " + key);
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& dflt) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? dflt : it->second;
}

static double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("config key " + key + ": not a number: '" + v + "'");
  return x;
}

double KeyValueConfig::get_double(const std::string& key) const {
  return parse_double(key, get_string(key));
}

double KeyValueConfig::get_double(const std::string& key, double dflt) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? dflt : parse_double(key, it->second);
}

long long KeyValueConfig::get_int(const std::string& key) const {
  double x = get_double(key);
  auto i = static_cast<long long>(x);
  if (static_cast<double>(i) != x)
    throw ConfigError("config key " + key + ": expected integer");
  return i;
}

long long KeyValueConfig::get_int(const std::string& key, long long dflt) const {
  return has(key) ? get_int(key) : dflt;
}

bool KeyValueConfig::get_bool(const std::string& key, bool dflt) const {
  if (!has(key)) return dflt;
  std::string v = get_string(key);
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("config key " + key + ": expected boolean, got '" + v + "'");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key) const {
  std::string value = get_string(key);
  // lists may be written bare or bracketed: a,b,c or [a, b, c]
  if (value.size() >= 2 && value.front() == '[' && value.back() == ']')
    value = value.substr(1, value.size() - 2);
  std::vector<std::string> out;
  for (const std::string& part : split(value, ',')) {
    std::string t = trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& part : get_list(key))
    out.push_back(parse_double(key, part));
  return out;
}

std::uint64_t KeyValueConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0x1f;  // separator
    h *= 0x100000001b3ULL;
  };
  for (const auto& [k, v] : entries_) {
    mix(k);
    mix(v);
  }
  return h;
}

}  // namespace riskdca
