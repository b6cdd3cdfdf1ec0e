#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>

#include <CLI11.hpp>

#include "cpred/commands.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

int exit_code(cpred::ErrorKind kind) {
  switch (kind) {
    case cpred::ErrorKind::config: return kExitConfig;
    case cpred::ErrorKind::data: return kExitData;
    case cpred::ErrorKind::numerical: return kExitNumerical;
  }
  return kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convolutive prediction dereverberation and MVDR beamforming toolkit"};
  app.require_subcommand(1);

  cpred::SimulateOptions sim;
  std::uint64_t sim_seed = 0;
  auto* simulate = app.add_subcommand("simulate", "Render a synthetic reverberant multi-speaker corpus");
  simulate->add_option("--out", sim.out_dir, "Output directory")->required();
  simulate->add_option("--seed", sim_seed, "Corpus seed")->capture_default_str();
  simulate->add_option("--count", sim.count, "Number of scenes")->capture_default_str();
  simulate->add_option("--speakers", sim.base.num_speakers, "Speakers per scene")->capture_default_str();
  simulate->add_option("--channels", sim.base.num_channels, "Microphones per scene")->capture_default_str();
  simulate->add_option("--duration", sim.base.duration_seconds, "Scene length in seconds")->capture_default_str();
  simulate->add_option("--rate", sim.base.sample_rate_hz, "Sample rate in Hz")->capture_default_str();
  simulate->add_option("--t60-min", sim.ranges.t60_min, "T60 lower bound (s)")->capture_default_str();
  simulate->add_option("--t60-max", sim.ranges.t60_max, "T60 upper bound (s)")->capture_default_str();
  simulate->add_option("--snr-min", sim.ranges.snr_min_db, "Noise SNR lower bound (dB)")->capture_default_str();
  simulate->add_option("--snr-max", sim.ranges.snr_max_db, "Noise SNR upper bound (dB)")->capture_default_str();

  std::filesystem::path config_path, manifest_path, out_dir;
  std::optional<std::uint64_t> run_seed;
  int jobs = 1;
  auto* run = app.add_subcommand("run", "Run a processing pipeline over a manifest");
  run->add_option("--config", config_path, "Pipeline config file")->required();
  run->add_option("--manifest", manifest_path, "Scene manifest")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--seed", run_seed, "Override the config's estimator seed");
  run->add_option("--jobs", jobs, "Scenes processed in parallel")->capture_default_str();

  std::size_t ref_channel = 0;
  auto* eval = app.add_subcommand("eval", "Score enhanced outputs of a run against the manifest references");
  eval->add_option("--manifest", manifest_path, "Scene manifest")->required();
  eval->add_option("--out", out_dir, "Directory holding the run's outputs")->required();
  eval->add_option("--ref-channel", ref_channel)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*simulate) {
      sim.seed = sim_seed;
      const auto manifest = cpred::cmd_simulate(sim);
      std::cout << "wrote " << manifest.entries.size() << " scenes to " << (sim.out_dir / "manifest.txt").string()
                << "\n";
    } else if (*run) {
      cpred::RunOptions opts{cpred::load_pipeline(config_path), manifest_path, out_dir, jobs};
      if (run_seed) opts.pipeline.seed = *run_seed;
      const auto records = cpred::cmd_run(opts);
      std::cout << cpred::format_report(records);
    } else if (*eval) {
      std::cout << cpred::format_report(cpred::cmd_eval(manifest_path, out_dir, ref_channel));
    }
  } catch (const cpred::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
