#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "fedccrl/data.hpp"
#include "fedccrl/federation.hpp"

namespace fedccrl {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DataSource { kSynthetic, kFolder };

/// Fully resolved experiment configuration. Every field has a default; the
/// config file and --set overrides only change what they name.
struct ResolvedConfig {
  FederationConfig federation;
  SyntheticConfig synthetic;
  DataSource source = DataSource::kSynthetic;
  std::string folder;

  /// Canonical echo (the config.resolved file): fixed section and key order,
  /// normalized value formatting.
  std::string canonical_text() const;

  std::vector<DomainDataset> load_data() const;
};

/// Parses `[section]` / `key = value` text with `#` comments. Unknown sections
/// or keys and malformed values are rejected with the offending name.
/// Overrides use the form `section.key=value`.
ResolvedConfig parse_config_text(const std::string& text,
                                 const std::vector<std::string>& overrides = {});

/// Same, reading from a file; an empty path yields the built-in defaults.
ResolvedConfig parse_config(const std::string& path,
                            const std::vector<std::string>& overrides = {});

}  // namespace fedccrl
