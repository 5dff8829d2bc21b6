#pragma once

#include "drums/core.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace drums {

/// Plain-text configuration: one `key = value` per line, `#` starts a
/// comment, blank lines are ignored. Keys are unique.
class KeyValues {
public:
  KeyValues() = default;

  static KeyValues parse(const std::string &text, const std::string &origin = "<string>");
  static KeyValues load(const std::filesystem::path &path);

  bool contains(const std::string &key) const { return values_.count(key) != 0; }
  void set(const std::string &key, const std::string &value) { values_[key] = value; }
  const std::map<std::string, std::string> &values() const { return values_; }

  std::string get_string(const std::string &key, const std::string &fallback) const;
  double get_double(const std::string &key, double fallback) const;
  long get_int(const std::string &key, long fallback) const;
  bool get_bool(const std::string &key, bool fallback) const;

  /// ConfigError naming the first key not in `known`.
  void require_known(const std::set<std::string> &known) const;

private:
  std::string origin_;
  std::map<std::string, std::string> values_;
};

} // namespace drums
