#include "traffic/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "traffic/error.hpp"

namespace traffic {

namespace {
std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace

RunConfig RunConfig::from_string(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    cfg.values[key] = value;
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str(), path.string());
}

std::string RunConfig::to_string() const {
  std::string out;
  for (const auto& [k, v] : values) out += k + "=" + v + "\n";
  return out;
}

void RunConfig::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << to_string();
  if (!out) throw IoError("write failed: " + path.string());
}

ConfigReader::ConfigReader(const RunConfig& cfg, std::set<std::string> allowed_keys)
    : cfg_(cfg), allowed_(std::move(allowed_keys)) {
  for (const auto& [k, _] : cfg_.values)
    if (!allowed_.count(k)) problems_.push_back("unknown key '" + k + "'");
}

std::string ConfigReader::str(const std::string& key, const std::string& fallback) {
  auto it = cfg_.values.find(key);
  return it == cfg_.values.end() ? fallback : it->second;
}

std::string ConfigReader::required_str(const std::string& key) {
  auto it = cfg_.values.find(key);
  if (it == cfg_.values.end() || it->second.empty()) {
    problems_.push_back("missing required key '" + key + "'");
    return "";
  }
  return it->second;
}

int64_t ConfigReader::integer(const std::string& key, int64_t fallback, int64_t min_value,
                              int64_t max_value) {
  auto it = cfg_.values.find(key);
  if (it == cfg_.values.end()) return fallback;
  int64_t v = 0;
  try {
    size_t used = 0;
    v = std::stoll(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing junk");
  } catch (const std::exception&) {
    problems_.push_back("key '" + key + "' is not an integer: '" + it->second + "'");
    return fallback;
  }
  if (v < min_value || v > max_value) {
    problems_.push_back("key '" + key + "'=" + it->second + " outside [" +
                        std::to_string(min_value) + "," + std::to_string(max_value) + "]");
    return fallback;
  }
  return v;
}

double ConfigReader::number(const std::string& key, double fallback, double min_value,
                            double max_value) {
  auto it = cfg_.values.find(key);
  if (it == cfg_.values.end()) return fallback;
  double v = 0;
  try {
    size_t used = 0;
    v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing junk");
  } catch (const std::exception&) {
    problems_.push_back("key '" + key + "' is not a number: '" + it->second + "'");
    return fallback;
  }
  if (v < min_value || v > max_value) {
    problems_.push_back("key '" + key + "'=" + it->second + " outside range");
    return fallback;
  }
  return v;
}

bool ConfigReader::flag(const std::string& key, bool fallback) {
  auto it = cfg_.values.find(key);
  if (it == cfg_.values.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  problems_.push_back("key '" + key + "' must be true/false, got '" + it->second + "'");
  return fallback;
}

uint64_t ConfigReader::seed(const std::string& key, uint64_t fallback) {
  auto it = cfg_.values.find(key);
  if (it == cfg_.values.end()) return fallback;
  try {
    size_t used = 0;
    uint64_t v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    problems_.push_back("key '" + key + "' is not a seed: '" + it->second + "'");
    return fallback;
  }
}

void ConfigReader::finish() const {
  if (problems_.empty()) return;
  std::string msg = "invalid config:";
  for (const auto& p : problems_) msg += " " + p + ";";
  msg.pop_back();
  throw ConfigError(msg);
}

}  // namespace traffic
