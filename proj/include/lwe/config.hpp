#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lwe {

// Flat key=value experiment configuration. Files are '#'-commented text,
// one assignment per line; later assignments (and CLI overrides) win. The
// canonical hash covers every entry, so any change to the effective
// configuration shows up in output headers.
class Config {
 public:
  Config() = default;
  static Config from_file(const std::string& path);
  static Config from_text(std::string_view text, const std::string& origin = "<inline>");

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;  // throws UsageError when absent
  double get_double(const std::string& key, double fallback) const;
  size_t get_size(const std::string& key, size_t fallback) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // comma-separated numeric list, used for cross-validation grids
  std::vector<double> get_list(const std::string& key,
                               const std::vector<double>& fallback) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  uint64_t hash() const;  // FNV-1a over sorted key=value lines

 private:
  std::map<std::string, std::string> entries_;
};

// A caller misuse distinct from bad data: missing required keys, malformed
// values, unknown modes. Exits with status 1 rather than 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lwe
