#pragma once

#include <map>
#include <optional>
#include <string>

namespace spannorm {

/// Flat `key = value` text with optional `[section]` headers. Keys are stored
/// as "section.key"; lines starting with '#' or ';' are comments.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::optional<std::string> find(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Sections in key order, one `key = value` per line.
  std::string to_text() const;

 private:
  std::map<std::string, std::string> entries_;
};

double parse_double(const std::string& key, const std::string& text);
long long parse_integer(const std::string& key, const std::string& text);
/// Shortest text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace spannorm
