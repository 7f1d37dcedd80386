#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace maskjudge {

/// Minimal TOML-style `key = value` file. `[section]` headers prefix the
/// following keys as "section.key"; `#` starts a comment; values may be
/// double-quoted.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  std::optional<std::string> get(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }
  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace maskjudge
