#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cpred/corpus.hpp"
#include "cpred/pipeline.hpp"
#include "cpred/simulate.hpp"

namespace cpred {

struct SimulateOptions {
  SceneSpec base;  // speakers, channels, rate and duration; T60/SNR are drawn from `ranges`
  SceneRanges ranges;
  int count = 1;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
};

/// Renders `count` scenes into out_dir/scene_NNNN/ and writes out_dir/manifest.txt.
Manifest cmd_simulate(const SimulateOptions& options);

struct RunOptions {
  PipelineConfig pipeline;
  std::filesystem::path manifest;
  std::filesystem::path out_dir;
  int jobs = 1;
};

/// Runs the pipeline on every scene (bounded worker pool), writes
/// out_dir/<scene>/enhanced_<c>.wav and, when the chain evaluates, out_dir/report.txt.
std::vector<ReportRecord> cmd_run(const RunOptions& options);

/// Scores out_dir/<scene>/enhanced_<c>.wav against the manifest's references and writes
/// out_dir/eval_report.txt.
std::vector<ReportRecord> cmd_eval(const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
                                   std::size_t ref_channel = 0);

}  // namespace cpred
