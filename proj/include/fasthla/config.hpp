#pragma once

#include <map>
#include <string>
#include <string_view>

namespace fasthla {

// Flat "key = value" file. '#' starts a comment; blank lines are ignored.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);  // throws Errc::parse
  static KeyValueConfig load(const std::string& path);  // throws Errc::io

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace fasthla
