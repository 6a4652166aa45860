#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace mmfuse {

// Line-oriented "key = value" configuration. '#' starts a comment, blank
// lines are skipped. Environment variables with the MMFUSE_ prefix override
// file values (key "cv.folds" → MMFUSE_CV_FOLDS). Keys nobody reads and
// prefixed environment variables nobody consumes are rejected, so typos
// cannot silently change a run.
class Config {
 public:
  static Config parse_file(const std::string& path, bool apply_env = true);
  static Config parse_text(const std::string& text, const std::string& source,
                           bool apply_env = false);
  static std::string env_name(const std::string& key);

  bool has(const std::string& key) const;
  std::string require(const std::string& key) const;
  std::string str(const std::string& key, const std::string& fallback) const;
  std::int64_t integer(const std::string& key, std::int64_t fallback) const;
  std::uint64_t seed(const std::string& key, std::uint64_t fallback) const;
  double number(const std::string& key, double fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::vector<double> number_list(const std::string& key,
                                  const std::vector<double>& fallback) const;

  // Config-error if any file key or prefixed environment variable was never
  // read; call once after all reads.
  void reject_unknown() const;

  // FNV-1a over the sorted effective entries; recorded in reports.
  std::string digest_hex() const;

  const std::string& source() const { return source_; }

 private:
  std::string lookup(const std::string& key) const;  // marks the key consumed

  std::string source_;
  std::map<std::string, std::string> file_entries_;
  std::map<std::string, std::string> env_entries_;  // env var name → value
  mutable std::set<std::string> consumed_keys_;
  mutable std::set<std::string> consumed_env_;
};

}  // namespace mmfuse
