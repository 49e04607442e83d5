#include "key_values.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

#include "error.hpp"

namespace viewgen {

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

KeyValues KeyValues::parse(std::string_view text, const std::string& source) {
  KeyValues kv;
  kv.source_ = source;
  std::size_t line_no = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    require(eq != std::string::npos && eq > 0, ErrorCode::kConfig,
            source + ":" + std::to_string(line_no) + ": expected key=value, got '" + line + "'");
    kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

void KeyValues::set(const std::string& key, const std::string& value) {
  for (auto& entry : entries_) {
    if (entry.first == key) {
      entry.second = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

bool KeyValues::has(const std::string& key) const {
  for (const auto& entry : entries_) {
    if (entry.first == key) return true;
  }
  return false;
}

const std::string* KeyValues::lookup(const std::string& key) {
  consumed_.insert(key);
  for (const auto& entry : entries_) {
    if (entry.first == key) return &entry.second;
  }
  return nullptr;
}

std::string KeyValues::take_string(const std::string& key, const std::string& fallback) {
  const std::string* v = lookup(key);
  return v ? *v : fallback;
}

double KeyValues::take_double(const std::string& key, double fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  double out = 0.0;
  auto res = std::from_chars(v->data(), v->data() + v->size(), out);
  require(res.ec == std::errc() && res.ptr == v->data() + v->size() && std::isfinite(out),
          ErrorCode::kConfig, source_ + ": '" + key + "' is not a number: '" + *v + "'");
  return out;
}

std::int64_t KeyValues::take_int(const std::string& key, std::int64_t fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  std::int64_t out = 0;
  auto res = std::from_chars(v->data(), v->data() + v->size(), out);
  require(res.ec == std::errc() && res.ptr == v->data() + v->size(), ErrorCode::kConfig,
          source_ + ": '" + key + "' is not an integer: '" + *v + "'");
  return out;
}

std::uint64_t KeyValues::take_u64(const std::string& key, std::uint64_t fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  auto res = std::from_chars(v->data(), v->data() + v->size(), out);
  require(res.ec == std::errc() && res.ptr == v->data() + v->size(), ErrorCode::kConfig,
          source_ + ": '" + key + "' is not an unsigned integer: '" + *v + "'");
  return out;
}

bool KeyValues::take_bool(const std::string& key, bool fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  fail(ErrorCode::kConfig, source_ + ": '" + key + "' is not a boolean: '" + *v + "'");
}

std::vector<int> KeyValues::take_int_list(const std::string& key,
                                          const std::vector<int>& fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  std::vector<int> out;
  if (v->empty()) return out;
  for (const std::string& part : split(*v, ',')) {
    int x = 0;
    auto res = std::from_chars(part.data(), part.data() + part.size(), x);
    require(res.ec == std::errc() && res.ptr == part.data() + part.size(), ErrorCode::kConfig,
            source_ + ": '" + key + "' has a non-integer entry '" + part + "'");
    out.push_back(x);
  }
  return out;
}

std::vector<double> KeyValues::take_double_list(const std::string& key,
                                                const std::vector<double>& fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  std::vector<double> out;
  if (v->empty()) return out;
  for (const std::string& part : split(*v, ',')) {
    double x = 0.0;
    auto res = std::from_chars(part.data(), part.data() + part.size(), x);
    require(res.ec == std::errc() && res.ptr == part.data() + part.size(), ErrorCode::kConfig,
            source_ + ": '" + key + "' has a non-numeric entry '" + part + "'");
    out.push_back(x);
  }
  return out;
}

std::vector<std::string> KeyValues::take_string_list(const std::string& key,
                                                     const std::vector<std::string>& fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  if (v->empty()) return {};
  return split(*v, ',');
}

void KeyValues::finish() const {
  std::string unknown;
  for (const auto& entry : entries_) {
    if (!consumed_.count(entry.first)) unknown += (unknown.empty() ? "" : ", ") + entry.first;
  }
  require(unknown.empty(), ErrorCode::kUsage, source_ + ": unknown keys: " + unknown);
}

std::string KeyValues::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

}  // namespace viewgen
