#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "otfsim/simulator.hpp"

namespace {

using otfsim::SimConfig;

struct CommonOpts {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<int> threads;
  std::vector<double> snr_db;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path,
                  "JSON config file (defaults apply when omitted)");
  cmd->add_option("--out", opts.out_dir, "Output directory");
  cmd->add_option("--seed", opts.seed,
                  "Master seed (overrides OTFSIM_SEED and the config)");
  cmd->add_option("--trials", opts.trials, "Trials per SNR point");
  cmd->add_option("--threads", opts.threads, "Worker threads");
  cmd->add_option("--snr", opts.snr_db, "SNR grid in dB");
}

SimConfig resolve_config(const CommonOpts& opts) {
  SimConfig cfg = opts.config_path.empty()
                      ? SimConfig{}
                      : SimConfig::from_json_file(opts.config_path);
  if (const char* env = std::getenv("OTFSIM_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') {
      throw std::invalid_argument("OTFSIM_SEED: not an integer");
    }
    cfg.seed = v;
  }
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.trials) cfg.trials = *opts.trials;
  if (opts.threads) cfg.threads = *opts.threads;
  if (!opts.snr_db.empty()) cfg.snr_db = opts.snr_db;
  if (cfg.trials < 1 || cfg.threads < 1) {
    throw std::invalid_argument("trials and threads must be positive");
  }
  return cfg;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) {
    throw std::runtime_error("cannot write " + path);
  }
}

void write_outputs(const SimConfig& cfg, const std::string& out_dir,
                   const std::string& experiment, const std::string& csv) {
  std::filesystem::create_directories(out_dir);
  const std::string base = out_dir + "/" + experiment;
  write_file(base + ".csv", csv);
  nlohmann::json manifest;
  manifest["experiment"] = experiment;
  manifest["seed"] = cfg.seed;
  manifest["config"] = nlohmann::json::parse(cfg.to_json());
  write_file(base + ".manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << base << ".csv\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OTFS multi-antenna link simulator"};
  app.require_subcommand(1);

  CommonOpts ber_opts;
  CLI::App* ber = app.add_subcommand(
      "ber", "Paired OTFS vs OFDM bit error rate sweep");
  add_common(ber, ber_opts);

  CommonOpts sp_opts;
  std::vector<int> antenna_counts = {1, 8, 32};
  int draws = 20;
  CLI::App* sparsity = app.add_subcommand(
      "sparsity", "Branch channel sparsity vs antenna count");
  add_common(sparsity, sp_opts);
  sparsity->add_option("--antennas", antenna_counts, "Antenna counts");
  sparsity->add_option("--draws", draws, "Channel draws");

  CommonOpts conv_opts;
  CLI::App* convergence = app.add_subcommand(
      "convergence", "Detector iteration counts vs a single-antenna receiver");
  add_common(convergence, conv_opts);

  app.add_subcommand("validate", "Run quick self-checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (ber->parsed()) {
      const SimConfig cfg = resolve_config(ber_opts);
      const std::vector<otfsim::BerRow> rows = otfsim::run_ber(cfg);
      write_outputs(cfg, ber_opts.out_dir, "ber",
                    otfsim::to_csv(std::span<const otfsim::BerRow>(rows)));
      for (const otfsim::BerRow& r : rows) {
        std::cout << r.scheme << " @ " << r.snr_db << " dB: ber=" << r.ber
                  << " [" << r.ci_low << ", " << r.ci_high << "]\n";
      }
    } else if (sparsity->parsed()) {
      const SimConfig cfg = resolve_config(sp_opts);
      const std::vector<otfsim::SparsityRow> rows = otfsim::run_sparsity(
          cfg, std::span<const int>(antenna_counts), draws);
      write_outputs(
          cfg, sp_opts.out_dir, "sparsity",
          otfsim::to_csv(std::span<const otfsim::SparsityRow>(rows)));
    } else if (convergence->parsed()) {
      const SimConfig cfg = resolve_config(conv_opts);
      const std::vector<otfsim::ConvergenceRow> rows =
          otfsim::run_convergence(cfg);
      write_outputs(
          cfg, conv_opts.out_dir, "convergence",
          otfsim::to_csv(std::span<const otfsim::ConvergenceRow>(rows)));
    } else {
      return otfsim::run_selfcheck(std::cout) == 0 ? 0 : 1;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
