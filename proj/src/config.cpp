#include "drums/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace drums {

namespace {

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

} // namespace

KeyValues KeyValues::parse(const std::string &text, const std::string &origin) {
  KeyValues kv;
  kv.origin_ = origin;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos)
      throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(where + ": empty key");
    if (kv.values_.count(key))
      throw ConfigError(where + ": duplicate key '" + key + "'");
    kv.values_[key] = value;
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path &path) {
  std::ifstream is(path);
  if (!is)
    throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.string());
}

std::string KeyValues::get_string(const std::string &key, const std::string &fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValues::get_double(const std::string &key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end())
    return fallback;
  double v = 0.0;
  const auto &s = it->second;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ConfigError(origin_ + ": '" + key + "' is not a number: '" + s + "'");
  return v;
}

long KeyValues::get_int(const std::string &key, long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end())
    return fallback;
  long v = 0;
  const auto &s = it->second;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ConfigError(origin_ + ": '" + key + "' is not an integer: '" + s + "'");
  return v;
}

bool KeyValues::get_bool(const std::string &key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end())
    return fallback;
  std::string s = it->second;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "yes" || s == "on" || s == "1")
    return true;
  if (s == "false" || s == "no" || s == "off" || s == "0")
    return false;
  throw ConfigError(origin_ + ": '" + key + "' is not a boolean: '" + it->second + "'");
}

void KeyValues::require_known(const std::set<std::string> &known) const {
  for (const auto &[k, v] : values_)
    if (!known.count(k))
      throw ConfigError(origin_ + ": unknown key '" + k + "'");
}

} // namespace drums
