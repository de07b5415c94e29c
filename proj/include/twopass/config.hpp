#ifndef TWOPASS_CONFIG_HPP
#define TWOPASS_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "twopass/common.hpp"

namespace twopass {

// Config-file or flag problems; the CLI turns these into usage errors.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Line-oriented "key = value" files. Blank lines and '#' comments are
// allowed; duplicate keys and malformed lines are reported with their line
// number.
std::map<std::string, std::string> parse_config_text(const std::string& text,
                                                     const std::string& origin);
std::map<std::string, std::string> parse_config_file(const std::string& path);

// Key schema with defaults plus file/flag overrides (flag > file > default).
// Unknown keys in a config file are rejected. The resolved state prints as
// a config file that reproduces the run.
class ConfigResolver {
 public:
  explicit ConfigResolver(std::string command) : command_(std::move(command)) {}

  void define(const std::string& key, const std::string& default_value);
  void require(const std::string& key);  // no default; must come from file/flag

  void load_file(const std::string& path);
  void set_flag(const std::string& key, const std::string& value);

  bool provided(const std::string& key) const;
  std::string get(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::int64_t get_i64(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;  // on/off, true/false, 1/0

  // "# command: <name>" plus one "key = value" line per schema entry
  std::string resolved_text() const;

 private:
  struct Entry {
    std::string key;
    std::string value;
    bool has_value = false;
    bool required = false;
  };
  const Entry& find(const std::string& key) const;
  Entry& find(const std::string& key);

  std::string command_;
  std::vector<Entry> entries_;  // schema order
};

}  // namespace twopass

#endif  // TWOPASS_CONFIG_HPP
