#pragma once

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace permk::cli {

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides the config's seed
};

struct RunResult {
  int exit_code = 0;  // 0 success, 1 a checked identity or hypothesis failed, 2 usage
  nlohmann::json report;
  std::map<std::string, std::string> artifacts;  // file name -> contents
};

// Executes one config document; performs no file I/O.
RunResult run(const nlohmann::json& config, const RunOptions& options = {});

// Writes <command>.json and every artifact into dir.
void write_artifacts(const RunResult& result, const std::string& dir);

}  // namespace permk::cli
