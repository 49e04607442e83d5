#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace viewgen {

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// Flat `key=value` text with `#` comments. Later assignments override earlier
// ones, so a config file followed by command-line overrides merges naturally.
// Readers consume keys with take_*; finish() rejects anything left unread.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text, const std::string& source = "config");

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string take_string(const std::string& key, const std::string& fallback);
  double take_double(const std::string& key, double fallback);
  std::int64_t take_int(const std::string& key, std::int64_t fallback);
  std::uint64_t take_u64(const std::string& key, std::uint64_t fallback);
  bool take_bool(const std::string& key, bool fallback);
  std::vector<int> take_int_list(const std::string& key, const std::vector<int>& fallback);
  std::vector<double> take_double_list(const std::string& key,
                                       const std::vector<double>& fallback);
  std::vector<std::string> take_string_list(const std::string& key,
                                            const std::vector<std::string>& fallback);

  // Throws ErrorCode::kUsage naming every key that no reader consumed.
  void finish() const;

  std::string to_text() const;

 private:
  const std::string* lookup(const std::string& key);

  std::vector<std::pair<std::string, std::string>> entries_;
  std::set<std::string> consumed_;
  std::string source_;
};

}  // namespace viewgen
