#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace mrf {

// Flat `key = value` text config with `#` comments.
class KvConfig {
 public:
  static KvConfig parse_file(const std::filesystem::path& path);
  static KvConfig parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const;
  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_f64(const std::string& key) const;
  double get_f64(const std::string& key, double fallback) const;
  uint64_t get_u64(const std::string& key) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;
  // whitespace-separated list of integers, e.g. "grid = 64 64"
  std::vector<uint64_t> get_dims(const std::string& key) const;
  std::vector<double> get_f64_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

  // Keys present in the file but never read; used to reject unknown keys.
  std::vector<std::string> unread_keys() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::string require(const std::string& key) const;

  std::string origin_;
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> read_;
};

}  // namespace mrf
