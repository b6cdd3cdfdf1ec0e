#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpred/beamform.hpp"
#include "cpred/linpred.hpp"
#include "cpred/metrics.hpp"
#include "cpred/simulate.hpp"

namespace cpred {

enum class StageKind { estimate, wpe, fcp, cfcp, msfcp, mvdr, evaluate };

const char* to_string(StageKind k) noexcept;

/// Where the estimate stage gets its direct-path estimates from.
enum class EstimateSource { emulated, file };

struct StageConfig {
  StageKind kind = StageKind::evaluate;

  // estimate
  EstimateSource source = EstimateSource::emulated;
  PerturbationKind perturbation = PerturbationKind::residual_reverb;
  std::vector<double> snr_db_per_pass{std::numeric_limits<double>::infinity()};

  // wpe / fcp family
  int taps = 0;  // 0: algorithm default
  int delay = kDefaultWpeDelay;
  double epsilon = kDefaultEpsilon;
  double loading = kDefaultLoading;
  int steps = kDefaultMsFcpSteps;
  bool classic = false;  // wpe: iterative PSD estimation instead of estimate-driven weights
  int iterations = kDefaultWpeIterations;

  // mvdr
  CovarianceVariant variant = CovarianceVariant::dereverb_residual;
  double mvdr_loading = kDefaultMvdrLoading;

  EstimateQuality quality_for_pass(int pass) const;
  int effective_taps() const noexcept;
};

struct PipelineConfig {
  std::vector<StageConfig> stages;
  int passes = 1;
  std::size_t ref_channel = 0;
  std::uint64_t seed = 0;

  /// Channel-independent checks; throws config errors naming the stage.
  void validate() const;
  /// Stage names joined by '>', e.g. "estimate>msfcp>mvdr>evaluate".
  std::string chain() const;
};

/// Parses the flat key = value format with [stage] blocks. Keys before the first block are
/// pipeline-wide (passes, ref_channel, seed).
PipelineConfig parse_pipeline(std::istream& is);
PipelineConfig load_pipeline(const std::filesystem::path& path);
std::string format_pipeline(const PipelineConfig& config);

/// Time-domain material for one utterance. direct/reverberant/estimates are per speaker and
/// multichannel; reverberant and estimates may be empty for user-provided scenes.
struct SceneData {
  std::string id;
  std::uint64_t seed = 0;
  TimeSignal mixture;
  std::vector<TimeSignal> direct;
  std::vector<TimeSignal> reverberant;
  std::vector<TimeSignal> estimates;

  std::size_t speakers() const noexcept { return direct.size(); }
};

SceneData scene_data_from(const Scene& scene, std::string id);

/// STFT-domain view of a scene shared by the stages.
struct SceneSpectra {
  Spectrogram mixture;
  std::vector<Spectrogram> direct;
  std::vector<Spectrogram> reverberant;
  std::vector<Spectrogram> estimates;
};

SceneSpectra analyze_scene(const SceneData& scene, const StftConfig& config);

/// Supplies per-speaker multichannel direct-path estimates. `previous_outputs` holds the
/// previous pass's enhanced outputs (empty on the first pass) for providers that refine them.
class EstimateProvider {
 public:
  virtual ~EstimateProvider() = default;
  virtual std::vector<Spectrogram> estimate(const SceneData& scene, const SceneSpectra& spectra,
                                            const StageConfig& stage, int pass,
                                            std::span<const Spectrogram> previous_outputs) const = 0;
};

/// Ground-truth-driven emulation (emulate_estimator) or precomputed estimate files,
/// depending on the stage's source.
class DefaultEstimateProvider final : public EstimateProvider {
 public:
  explicit DefaultEstimateProvider(std::uint64_t seed) : seed_(seed) {}
  std::vector<Spectrogram> estimate(const SceneData& scene, const SceneSpectra& spectra, const StageConfig& stage,
                                    int pass, std::span<const Spectrogram> previous_outputs) const override;

 private:
  std::uint64_t seed_;
};

struct PipelineResult {
  std::vector<Spectrogram> outputs;  // per speaker, after the last stage of the last pass
  std::vector<TimeSignal> enhanced;  // per speaker, mono, reference channel
  std::optional<EvalReport> report;  // when the chain contains an evaluate stage
};

/// Runs every stage in order, `passes` times. Precondition violations throw errors that name
/// the stage and the scene.
PipelineResult run_pipeline(const PipelineConfig& config, const SceneData& scene, const EstimateProvider& provider);

/// Scores mono per-speaker outputs against the reference channel of the direct-path signals.
EvalReport evaluate_outputs(std::span<const TimeSignal> enhanced, const SceneData& scene, std::size_t ref_channel);

}  // namespace cpred
