#pragma once

#include "shield/config.hpp"
#include "shield/llm_client.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace shield {

inline constexpr int kExitUsage = 64;
inline constexpr int kExitUnexpected = 1;

/// Runs one command. `args` excludes the program name. Results go to `out`;
/// failures are reported on `err` as one JSON line and mapped to the exit
/// code of their error family.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const EnvLookup& env = process_env);

// Client selected by the extraction section. ConfigError before any network
// use when the live client has no API key.
std::unique_ptr<LlmClient> make_client(const ExtractionConfig& config);

/// Exclusive claim on an output directory, released on destruction.
/// LockedError when another live process holds it.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

// "14240" -> "14,240".
std::string group_thousands(std::size_t n);

}  // namespace shield
