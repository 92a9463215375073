#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace trlab {

/// Flat experiment configuration: `key = value` lines, `#` comments.
/// Every key has a documented default (see `key_docs()`); unknown keys are
/// validation errors. Values are kept as text and typed on access.
class ExperimentConfig {
 public:
  ExperimentConfig();

  static ExperimentConfig parse(const std::string& text, const std::string& origin = "<config>");
  static ExperimentConfig load(const std::filesystem::path& path);

  /// Throws ConfigError for unknown keys.
  void set(const std::string& key, const std::string& value);
  /// "key=value"
  void set_assignment(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  bool has_value(const std::string& key) const { return !get(key).empty(); }

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  /// Every problem found (unknown values, bad numbers, missing seed, ...).
  std::vector<std::string> problems() const;
  /// Throws ConfigError listing problems().
  void validate() const;

  /// Sorted `key = value` lines of every key that affects results.
  std::string canonical() const;
  /// Hash of canonical() (which carries the content digests of referenced
  /// files) and the data generator version.
  std::string fingerprint() const;
  /// All keys including output-only ones.
  std::string text() const;

  static const std::vector<std::pair<std::string, std::string>>& key_docs();

 private:
  std::map<std::string, std::string> values_;
};

/// Content digest of a file (hex64 of FNV-1a over its bytes).
std::string file_digest(const std::filesystem::path& path);

}  // namespace trlab
