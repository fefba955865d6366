#include "lwe/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include "lwe/util.hpp"

namespace lwe {

namespace {

std::string trim(std::string_view s) {
  size_t begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  size_t end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

double parse_double(const std::string& key, const std::string& value) {
  const char* begin = value.c_str();
  char* end = nullptr;
  double parsed = std::strtod(begin, &end);
  if (end != begin + value.size() || value.empty())
    throw UsageError("config key '" + key + "' is not a number: '" + value + "'");
  return parsed;
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_text(buffer.str(), path);
}

Config Config::from_text(std::string_view text, const std::string& origin) {
  Config config;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    std::string_view raw =
        text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError(origin + ":" + std::to_string(line_no) + ": expected key=value");
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty())
      throw DataError(origin + ":" + std::to_string(line_no) + ": empty key");
    config.entries_[key] = value;  // later lines override earlier ones
  }
  return config;
}

void Config::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

std::string Config::require(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw UsageError("missing required config key: " + key);
  return it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : parse_double(key, it->second);
}

size_t Config::get_size(const std::string& key, size_t fallback) const {
  double v = get_double(key, static_cast<double>(fallback));
  // Validate before casting: float-to-unsigned conversion of a negative or
  // oversized value is undefined. 2^53 bounds the exactly-representable range.
  if (v < 0.0 || v != std::floor(v) || v > 9007199254740992.0)
    throw UsageError("config key '" + key + "' is not a nonnegative integer");
  return static_cast<size_t>(v);
}

uint64_t Config::get_u64(const std::string& key, uint64_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& v = it->second;
  // stoull would accept a minus sign and wrap around; digits only here.
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw UsageError("config key '" + key + "' is not an unsigned integer: '" + v + "'");
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' is not an unsigned integer: '" + v + "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError("config key '" + key + "' is not a boolean: '" + v + "'");
}

std::vector<double> Config::get_list(const std::string& key,
                                     const std::vector<double>& fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<double> values;
  std::string item;
  std::istringstream stream(it->second);
  while (std::getline(stream, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    values.push_back(parse_double(key, item));
  }
  if (values.empty()) throw UsageError("config key '" + key + "' lists no values");
  return values;
}

uint64_t Config::hash() const {
  uint64_t h = fnv1a("lwe-config");
  for (const auto& [key, value] : entries_) {
    h = fnv1a(key, h);
    h = fnv1a("=", h);
    h = fnv1a(value, h);
    h = fnv1a("\n", h);
  }
  return h;
}

}  // namespace lwe
