#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "moltailor/ablation.h"
#include "moltailor/model.h"
#include "moltailor/probe.h"
#include "moltailor/train.h"

namespace moltailor {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

// Every key accepted in config files; the CLI exposes each as --<name>.
const std::vector<ConfigKey>& config_schema();

// Parses "key = value" lines; '#' starts a comment. Unknown keys throw.
std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin = "config");
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

struct RunConfig {
  std::map<std::string, std::string> values;  // every schema key
  std::map<std::string, std::string> origin;  // "default", "file", "flag" or "env"

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t seed() const;

  ModelConfig model() const;
  TrainConfig train() const;
  ProbeConfig probe() const;
  AblationConfig ablation() const;

  // Sorted key=value lines; the hash is FNV-1a 64 of this text.
  std::string resolved_text() const;
  std::uint64_t hash() const;
  // resolved_config.txt with the hash on its first line.
  void write(const std::filesystem::path& dir) const;
};

// Defaults, then the file, then flags. The seed alone is taken from the flag,
// else from `env_seed` (MOLTAILOR_SEED), else from the file.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const std::map<std::string, std::string>& flags,
                         const char* env_seed);

// Exclusive lock on an output directory (created if missing) held for the
// object's lifetime. Throws when another run holds it.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace moltailor
