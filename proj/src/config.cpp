#include "mrf/config.hpp"

#include <fstream>
#include <sstream>

#include "mrf/errors.hpp"

namespace mrf {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

KvConfig KvConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_string(ss.str(), path.string());
}

KvConfig KvConfig::parse_string(const std::string& text, const std::string& origin) {
  KvConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected `key = value`");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (cfg.values_.count(key))
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key `" + key + "`");
    cfg.values_[key] = value;
  }
  return cfg;
}

bool KvConfig::has(const std::string& key) const {
  return values_.count(key) != 0;
}

std::string KvConfig::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end())
    throw ConfigError(origin_ + ": missing key `" + key + "`");
  read_.insert(key);
  return it->second;
}

std::string KvConfig::get_str(const std::string& key) const { return require(key); }

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
  if (!has(key)) return fallback;
  return require(key);
}

double KvConfig::get_f64(const std::string& key) const {
  const std::string v = require(key);
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key `" + key + "` is not a number: `" + v + "`");
  }
}

double KvConfig::get_f64(const std::string& key, double fallback) const {
  return has(key) ? get_f64(key) : fallback;
}

uint64_t KvConfig::get_u64(const std::string& key) const {
  const std::string v = require(key);
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size() || x < 0) throw std::invalid_argument(v);
    return static_cast<uint64_t>(x);
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key `" + key + "` is not a nonnegative integer: `" + v + "`");
  }
}

uint64_t KvConfig::get_u64(const std::string& key, uint64_t fallback) const {
  return has(key) ? get_u64(key) : fallback;
}

std::vector<uint64_t> KvConfig::get_dims(const std::string& key) const {
  const std::string v = require(key);
  std::istringstream in(v);
  std::vector<uint64_t> out;
  long long x;
  while (in >> x) {
    if (x < 1) throw ConfigError(origin_ + ": key `" + key + "` has nonpositive dim");
    out.push_back(static_cast<uint64_t>(x));
  }
  if (out.empty()) throw ConfigError(origin_ + ": key `" + key + "` has no dims");
  return out;
}

std::vector<double> KvConfig::get_f64_list(const std::string& key) const {
  const std::string v = require(key);
  std::istringstream in(v);
  std::vector<double> out;
  double x;
  while (in >> x) out.push_back(x);
  if (out.empty()) throw ConfigError(origin_ + ": key `" + key + "` has no values");
  return out;
}

void KvConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

std::vector<std::string> KvConfig::unread_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!read_.count(k)) out.push_back(k);
  return out;
}

}  // namespace mrf
