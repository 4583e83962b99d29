#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace traffic {

// Flat UTF-8 key=value run configuration with # comments. Emission is
// sorted, so a resolved config is a byte-stable provenance record.
struct RunConfig {
  std::map<std::string, std::string> values;

  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values[key] = value; }

  void write(const std::filesystem::path& path) const;
  std::string to_string() const;
};

// Typed accessors that collect every problem (unknown keys, bad values,
// missing requirements) and report them in one ConfigError.
class ConfigReader {
 public:
  ConfigReader(const RunConfig& cfg, std::set<std::string> allowed_keys);

  std::string str(const std::string& key, const std::string& fallback);
  std::string required_str(const std::string& key);
  int64_t integer(const std::string& key, int64_t fallback, int64_t min_value, int64_t max_value);
  double number(const std::string& key, double fallback, double min_value, double max_value);
  bool flag(const std::string& key, bool fallback);
  uint64_t seed(const std::string& key, uint64_t fallback);

  void fail(const std::string& message) { problems_.push_back(message); }
  // Throws ConfigError listing every offending key at once.
  void finish() const;

 private:
  const RunConfig& cfg_;
  std::set<std::string> allowed_;
  std::vector<std::string> problems_;
};

}  // namespace traffic
