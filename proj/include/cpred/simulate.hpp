#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "cpred/signal.hpp"
#include "cpred/stft.hpp"

namespace cpred {

struct SceneSpec {
  int num_speakers = 2;
  int num_channels = 1;
  double t60_seconds = 0.3;  // 0 renders direct-path-only RIRs
  double noise_snr_db = 25.0;  // +inf disables the noise
  int sample_rate_hz = 8000;
  double duration_seconds = 4.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Ranges a corpus draws per-scene T60 and SNR from.
struct SceneRanges {
  double t60_min = 0.2;
  double t60_max = 0.5;
  double snr_min_db = 20.0;
  double snr_max_db = 30.0;
};

/// Ground truth of one rendered scene. direct/reverberant are indexed by speaker, each [P].
struct Scene {
  SceneSpec spec;
  TimeSignal mixture;
  std::vector<TimeSignal> direct;
  std::vector<TimeSignal> reverberant;
  TimeSignal noise;
  std::vector<std::vector<std::vector<double>>> rirs;  // [C][P][L]
  std::vector<std::vector<int>> direct_delays;         // [C][P], samples
};

enum class PerturbationKind { white, residual_reverb };

struct EstimateQuality {
  double est_snr_db = std::numeric_limits<double>::infinity();  // +inf: exact direct path
  PerturbationKind kind = PerturbationKind::residual_reverb;

  bool is_oracle() const noexcept { return est_snr_db == std::numeric_limits<double>::infinity(); }
};

/// Mixes a seed with a stream tag into an independent seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Exponentially decaying Gaussian RIR: h[d] = 1 and, past d + early_gap,
/// h[n] = g[n] * exp(-3 ln(10) (n - d) / (t60 fs)). Deterministic in seed.
std::vector<double> gen_rir(std::uint64_t seed, double t60_seconds, int direct_delay_samples, std::size_t length,
                            int sample_rate_hz = 8000, int early_gap_samples = 0);

/// Full linear convolution, computed with FFTs.
std::vector<double> convolve(std::span<const double> x, std::span<const double> h);

/// Deterministic speech-like test source: harmonic voiced segments with formant shaping,
/// short noise bursts and pauses, normalized to an RMS of 0.1.
std::vector<double> synth_source(std::uint64_t seed, std::size_t samples, int sample_rate_hz);

/// Renders the convolutive mixture of the given mono sources with RIRs drawn from spec.seed.
/// Source lengths must agree.
Scene render_scene(const SceneSpec& spec, std::span<const TimeSignal> sources);

/// Renders with caller-supplied RIRs [C][P][L]. The direct path of each RIR is its first
/// non-zero tap; direct(c) is the source convolved with that tap alone.
Scene render_scene(const SceneSpec& spec, std::span<const TimeSignal> sources,
                   std::vector<std::vector<std::vector<double>>> rirs);

/// render_scene with synth_source() speakers derived from spec.seed.
Scene make_scene(const SceneSpec& spec);

/// Draws T60 and SNR uniformly from the ranges using the spec's seed.
SceneSpec draw_scene_spec(SceneSpec base, const SceneRanges& ranges);

/// Stand-in for a learned direct-path estimator. white: S + scaled complex Gaussian noise;
/// residual_reverb: S + beta (X - S). The perturbation is scaled so that
/// ||S||^2 / ||perturbation||^2 equals the requested SNR.
Spectrogram emulate_estimator(const Spectrogram& direct, const Spectrogram& reverberant, const EstimateQuality& quality,
                              std::uint64_t seed);

}  // namespace cpred
