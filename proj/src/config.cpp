#include "twopass/config.hpp"

#include <fstream>
#include <sstream>

namespace twopass {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text,
                                                     const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": empty key");
    }
    if (out.count(key)) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": duplicate key '" + key + "'");
    }
    out[key] = value;
  }
  return out;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str(), path);
}

void ConfigResolver::define(const std::string& key,
                            const std::string& default_value) {
  entries_.push_back(Entry{key, default_value, true, false});
}

void ConfigResolver::require(const std::string& key) {
  entries_.push_back(Entry{key, "", false, true});
}

const ConfigResolver::Entry& ConfigResolver::find(const std::string& key) const {
  for (const Entry& e : entries_) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown config key: " + key);
}

ConfigResolver::Entry& ConfigResolver::find(const std::string& key) {
  for (Entry& e : entries_) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown config key: " + key);
}

void ConfigResolver::load_file(const std::string& path) {
  for (const auto& [key, value] : parse_config_file(path)) {
    Entry& e = find(key);  // rejects keys outside the schema
    e.value = value;
    e.has_value = true;
  }
}

void ConfigResolver::set_flag(const std::string& key, const std::string& value) {
  Entry& e = find(key);
  e.value = value;
  e.has_value = true;
}

bool ConfigResolver::provided(const std::string& key) const {
  return find(key).has_value;
}

std::string ConfigResolver::get(const std::string& key) const {
  const Entry& e = find(key);
  if (!e.has_value) {
    throw ConfigError("missing required option '" + key + "' for " + command_);
  }
  return e.value;
}

int ConfigResolver::get_int(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    const int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("option '" + key + "': expected an integer, got '" + v +
                      "'");
  }
}

std::int64_t ConfigResolver::get_i64(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    const std::int64_t out = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("option '" + key + "': expected an integer, got '" + v +
                      "'");
  }
}

std::uint64_t ConfigResolver::get_u64(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    const unsigned long long out = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<std::uint64_t>(out);
  } catch (const std::exception&) {
    throw ConfigError("option '" + key +
                      "': expected a non-negative integer, got '" + v + "'");
  }
}

double ConfigResolver::get_double(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("option '" + key + "': expected a number, got '" + v +
                      "'");
  }
}

bool ConfigResolver::get_bool(const std::string& key) const {
  const std::string v = get(key);
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("option '" + key + "': expected on/off, got '" + v + "'");
}

std::string ConfigResolver::resolved_text() const {
  std::ostringstream os;
  os << "# command: " << command_ << '\n';
  for (const Entry& e : entries_) {
    if (!e.has_value) continue;  // optional keys that never got a value
    os << e.key << " = " << e.value << '\n';
  }
  return os.str();
}

}  // namespace twopass
