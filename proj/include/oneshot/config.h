#ifndef ONESHOT_CONFIG_H_
#define ONESHOT_CONFIG_H_

// Flat "key = value" experiment configuration. Every key is declared in a
// fixed schema with a default; unknown keys and unparsable values are
// rejected when set.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace oneshot::io {

class Config {
 public:
  Config();  // all defaults

  /// Parses "key = value" lines; '#' starts a comment.
  static Config parse(const std::string &text, const std::string &origin = "<config>");
  static Config load(const std::filesystem::path &path);

  /// Validates against the schema; throws UsageError.
  void set(const std::string &key, const std::string &value);
  /// "key=value" form used by --set.
  void set_assignment(const std::string &assignment);

  const std::string &str(const std::string &key) const;
  double real(const std::string &key) const;
  long long integer(const std::string &key) const;
  std::uint64_t seed(const std::string &key) const;
  bool flag(const std::string &key) const;

  /// Canonical dump, one "key = value" per line in key order.
  std::string dump() const;
  /// Canonical dump of the keys starting with any of `prefixes`.
  std::string dump(const std::vector<std::string> &prefixes) const;

  static std::vector<std::string> keys();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace oneshot::io

#endif  // ONESHOT_CONFIG_H_
