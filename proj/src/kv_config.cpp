#include "spannorm/kv_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "spannorm/errors.hpp"

namespace spannorm {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig config;
  std::istringstream in(text);
  std::string line, section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#' || body[0] == ';') continue;
    if (body.front() == '[') {
      if (body.back() != ']' || body.size() < 3) {
        throw ConfigError("config line " + std::to_string(number) + ": malformed section header");
      }
      section = trim(body.substr(1, body.size() - 2));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(body.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(number) + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (config.has(full)) {
      throw ConfigError("config line " + std::to_string(number) + ": duplicate key " + full);
    }
    config.entries_[full] = trim(body.substr(eq + 1));
  }
  return config;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::optional<std::string> KeyValueConfig::find(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) { entries_[key] = value; }

std::string KeyValueConfig::to_text() const {
  std::ostringstream out;
  std::string current;
  bool first = true;
  for (const auto& [full, value] : entries_) {
    const auto dot = full.find('.');
    const std::string section = dot == std::string::npos ? "" : full.substr(0, dot);
    const std::string key = dot == std::string::npos ? full : full.substr(dot + 1);
    if (first || section != current) {
      if (!section.empty()) out << (first ? "" : "\n") << '[' << section << "]\n";
      current = section;
      first = false;
    }
    out << key << " = " << value << '\n';
  }
  return out.str();
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": '" + text + "' is not a number");
  }
}

long long parse_integer(const std::string& key, const std::string& text) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("config key " + key + ": '" + text + "' is not an integer");
  }
  return v;
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw ContractError("format_double: conversion failed");
  return std::string(buf, ptr);
}

}  // namespace spannorm
