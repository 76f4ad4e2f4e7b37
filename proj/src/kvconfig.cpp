#include "mdopt/kvconfig.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace mdopt {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = value.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(trim(value.substr(start)));
      return out;
    }
    out.push_back(trim(value.substr(start, comma - start)));
    start = comma + 1;
  }
}

}  // namespace

KvConfig KvConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open: " + path);
  std::ostringstream text;
  text << f.rdbuf();
  return parse_string(text.str());
}

KvConfig KvConfig::parse_string(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: missing '=' at line " + std::to_string(line_no));
    const auto key = trim(line.substr(0, eq));
    if (key.empty())
      throw ConfigError("config: empty key at line " + std::to_string(line_no));
    cfg.entries_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

bool KvConfig::has(const std::string& key) const {
  return entries_.count(key) > 0;
}

void KvConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

std::string KvConfig::get_string(const std::string& key,
                                 const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

std::int64_t KvConfig::get_int(const std::string& key,
                               std::int64_t fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::int64_t value = 0;
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError("config: " + key + " is not an integer: " + s);
  return value;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " is not a number: " + it->second);
  }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const auto& s = it->second;
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config: " + key + " is not a boolean: " + s);
}

std::vector<double> KvConfig::get_doubles(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return {};
  std::vector<double> out;
  for (const auto& piece : split_list(it->second)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(piece, &used));
      if (used != piece.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("config: " + key + " has a bad number: " + piece);
    }
  }
  return out;
}

std::vector<std::int64_t> KvConfig::get_ints(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return {};
  std::vector<std::int64_t> out;
  for (const auto& piece : split_list(it->second)) {
    std::int64_t value = 0;
    auto [ptr, ec] =
        std::from_chars(piece.data(), piece.data() + piece.size(), value);
    if (ec != std::errc() || ptr != piece.data() + piece.size())
      throw ConfigError("config: " + key + " has a bad integer: " + piece);
    out.push_back(value);
  }
  return out;
}

std::string KvConfig::to_text() const {
  std::ostringstream out;
  for (const auto& [key, value] : entries_) out << key << '=' << value << '\n';
  return out.str();
}

}  // namespace mdopt
