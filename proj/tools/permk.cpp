#include "commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"permk: permanental-sequence kernels, limit constants and simulations"};
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON run config")->required();
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--out", out_dir, "artifact directory (default $PERMK_OUT_DIR or .)");
  app.add_flag("--quiet", quiet, "suppress the report on stdout");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (out_dir.empty()) {
    const char* env = std::getenv("PERMK_OUT_DIR");
    out_dir = env ? env : ".";
  }

  nlohmann::json config;
  {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "error [config-missing]: cannot open " << config_path << '\n';
      return 2;
    }
    config = nlohmann::json::parse(in, nullptr, false);
    if (config.is_discarded()) {
      std::cerr << "error [config-parse]: " << config_path << " is not valid JSON\n";
      return 2;
    }
  }

  const auto result = permk::cli::run(config, permk::cli::RunOptions{seed});
  try {
    permk::cli::write_artifacts(result, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error [output]: " << e.what() << '\n';
    return 2;
  }
  if (!quiet) std::cout << result.report.dump(2) << '\n';
  if (result.exit_code != 0) {
    const auto& err = result.report.at("error");
    std::cerr << "error [" << err.at("key").get<std::string>() << "]: " << err.at("message").get<std::string>() << '\n';
  }
  return result.exit_code;
}
