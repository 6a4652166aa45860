#include "mmfuse/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mmfuse/errors.hpp"

extern char** environ;

namespace mmfuse {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) a++;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) b--;
  return s.substr(a, b - a);
}

constexpr const char* kEnvPrefix = "MMFUSE_";

}  // namespace

std::string Config::env_name(const std::string& key) {
  std::string name = kEnvPrefix;
  for (char c : key) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    } else {
      name.push_back('_');
    }
  }
  return name;
}

Config Config::parse_text(const std::string& text, const std::string& source, bool apply_env) {
  Config config;
  config.source_ = source;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    line_no++;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    if (config.file_entries_.contains(key))
      throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    config.file_entries_[key] = value;
  }
  if (apply_env && environ != nullptr) {
    for (char** e = environ; *e != nullptr; ++e) {
      const std::string entry(*e);
      if (entry.rfind(kEnvPrefix, 0) != 0) continue;
      const std::size_t eq = entry.find('=');
      if (eq == std::string::npos) continue;
      config.env_entries_[entry.substr(0, eq)] = entry.substr(eq + 1);
    }
  }
  return config;
}

Config Config::parse_file(const std::string& path, bool apply_env) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_text(buffer.str(), path, apply_env);
}

std::string Config::lookup(const std::string& key) const {
  consumed_keys_.insert(key);
  const std::string env = env_name(key);
  const auto env_it = env_entries_.find(env);
  if (env_it != env_entries_.end()) {
    consumed_env_.insert(env);
    return env_it->second;
  }
  const auto it = file_entries_.find(key);
  if (it != file_entries_.end()) return it->second;
  return {};
}

bool Config::has(const std::string& key) const {
  consumed_keys_.insert(key);
  if (env_entries_.contains(env_name(key))) {
    consumed_env_.insert(env_name(key));
    return true;
  }
  return file_entries_.contains(key);
}

std::string Config::require(const std::string& key) const {
  if (!has(key)) throw ConfigError(source_ + ": missing required key '" + key + "'");
  return lookup(key);
}

std::string Config::str(const std::string& key, const std::string& fallback) const {
  return has(key) ? lookup(key) : fallback;
}

std::int64_t Config::integer(const std::string& key, std::int64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string text = lookup(key);
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError(source_ + ": key '" + key + "' is not an integer: '" + text + "'");
  return value;
}

std::uint64_t Config::seed(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string text = lookup(key);
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError(source_ + ": key '" + key + "' is not a nonnegative integer: '" + text + "'");
  return value;
}

double Config::number(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string text = lookup(key);
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw ConfigError(source_ + ": key '" + key + "' is not a number: '" + text + "'");
  }
}

bool Config::flag(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string text = lookup(key);
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(source_ + ": key '" + key + "' is not a boolean: '" + text + "'");
}

std::vector<double> Config::number_list(const std::string& key,
                                        const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  const std::string text = lookup(key);
  std::vector<double> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ',') {
      const std::string item = trim(text.substr(start, i - start));
      if (item.empty())
        throw ConfigError(source_ + ": key '" + key + "' has an empty list item");
      try {
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ConfigError(source_ + ": key '" + key + "' has a non-numeric item: '" + item + "'");
      }
      start = i + 1;
    }
  }
  if (out.empty()) throw ConfigError(source_ + ": key '" + key + "' is an empty list");
  return out;
}

void Config::reject_unknown() const {
  std::vector<std::string> unknown;
  for (const auto& [key, value] : file_entries_) {
    if (!consumed_keys_.contains(key)) unknown.push_back(key);
  }
  for (const auto& [name, value] : env_entries_) {
    if (!consumed_env_.contains(name)) unknown.push_back(name + " (environment)");
  }
  if (!unknown.empty()) {
    std::string joined;
    for (const auto& k : unknown) {
      if (!joined.empty()) joined += ", ";
      joined += k;
    }
    throw ConfigError(source_ + ": unknown keys: " + joined);
  }
}

std::string Config::digest_hex() const {
  // FNV-1a over "key=value\n" of file entries then "env\0NAME=value\n".
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [key, value] : file_entries_) {
    mix(key);
    mix("=");
    mix(value);
    mix("\n");
  }
  for (const auto& [name, value] : env_entries_) {
    mix("env");
    mix(std::string(1, '\0'));
    mix(name);
    mix("=");
    mix(value);
    mix("\n");
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace mmfuse
