#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "cpred/stft.hpp"

namespace cpred {

inline constexpr double kDefaultEpsilon = 1e-3;
inline constexpr double kDefaultLoading = 1e-5;
inline constexpr int kDefaultWpeTaps = 37;
inline constexpr int kDefaultWpeDelay = 3;
inline constexpr int kDefaultFcpTaps = 40;
inline constexpr int kDefaultMsFcpSteps = 2;
inline constexpr int kDefaultWpeIterations = 3;

/// Non-negative real tensor indexed [frame, bin].
struct RealGrid {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> values;

  RealGrid() = default;
  RealGrid(std::size_t t, std::size_t f, double fill = 0.0) : frames(t), bins(f), values(t * f, fill) {}

  double& operator()(std::size_t t, std::size_t f) { return values[t * bins + f]; }
  double operator()(std::size_t t, std::size_t f) const { return values[t * bins + f]; }
};

/// |X(c, t, f)|^2 for one channel.
RealGrid power(const Spectrogram& spec, std::size_t channel = 0);

/// Strictly positive per-unit denominators of a weighted prediction objective.
/// Built by weight_floor(); uniform() exists for tests and unweighted fits.
class WeightMap {
 public:
  static WeightMap uniform(std::size_t frames, std::size_t bins) { return WeightMap(RealGrid(frames, bins, 1.0)); }

  std::size_t frames() const noexcept { return grid_.frames; }
  std::size_t bins() const noexcept { return grid_.bins; }
  double operator()(std::size_t t, std::size_t f) const { return grid_(t, f); }
  const RealGrid& grid() const noexcept { return grid_; }

 private:
  explicit WeightMap(RealGrid grid) : grid_(std::move(grid)) {}
  friend WeightMap weight_floor(const RealGrid& power, double epsilon);
  friend WeightMap weight_floor(const RealGrid& power, double epsilon, double reference_peak);

  RealGrid grid_;
};

/// out(t,f) = max(epsilon * max(power), power(t,f)).
WeightMap weight_floor(const RealGrid& power, double epsilon = kDefaultEpsilon);

/// out(t,f) = max(epsilon * reference_peak, power(t,f)), with the peak taken from another
/// signal. Keeps the floor fixed while `power` changes across iterations.
WeightMap weight_floor(const RealGrid& power, double epsilon, double reference_peak);

/// Solves min_g sum_t |d(t) - g^H x(t)|^2 / w(t) + delta ||g||^2 in closed form, where
/// x(t) is row t of `regressors` and delta = loading * trace(R) / M. The normal equations
/// R g = p are factored with Cholesky; a (numerically) singular R throws rather than
/// falling back to a pseudo-inverse. An all-zero R with loading > 0 yields g = 0.
Eigen::VectorXcd solve_weighted_ls(std::span<const cdouble> target, const Eigen::MatrixXcd& regressors,
                                   std::span<const double> weights, double loading = kDefaultLoading);

enum class Algorithm { wpe, fcp, cfcp, msfcp };

const char* to_string(Algorithm a) noexcept;

/// Per-frequency tap vectors. Row f holds the M = K * P taps; column k * P + p multiplies
/// channel p at lag delay + k.
struct PredictionFilter {
  Eigen::MatrixXcd taps;
  int taps_per_channel = 0;
  int delay = 0;
  int channels = 1;

  std::size_t bins() const noexcept { return static_cast<std::size_t>(taps.rows()); }
  /// Tap vector of bin f for channel p, ordered by lag.
  Eigen::VectorXcd channel_taps(std::size_t f, int p) const;
  /// Single-channel lag-0 identity filter: prediction equals the regressor itself.
  static PredictionFilter identity(std::size_t bins, int taps);
  static PredictionFilter zeros(std::size_t bins, int taps, int delay, int channels);
};

struct DereverbResult {
  Spectrogram output;  // single channel [1, T, F]
  PredictionFilter filter;
  Algorithm algorithm = Algorithm::fcp;
  int speaker = 0;
};

/// Row t = [X(t-delay), ..., X(t-delay-K+1)] stacked over all channels of `spec` at bin f.
/// Lags before the first frame read as zero.
Eigen::MatrixXcd stacked_regressors(const Spectrogram& spec, std::size_t f, int taps, int delay);

/// g(f)^H x(t, f) for every frame, where x stacks `regressors` as in stacked_regressors().
Spectrogram apply_prediction(const Spectrogram& regressors, const PredictionFilter& filter);

// ---------------------------------------------------------------------------
// WPE

struct WpeParams {
  int taps = kDefaultWpeTaps;
  int delay = kDefaultWpeDelay;
  double loading = kDefaultLoading;
};

/// Closed-form weighted prediction of the reference channel from delayed multichannel
/// mixture frames.
PredictionFilter wpe_filter(const Spectrogram& mixture, const WeightMap& psd, std::size_t ref_channel,
                            const WpeParams& params = {});

/// Y_q(t) - g^H Y~(t - delay).
DereverbResult wpe_dereverb(const Spectrogram& mixture, const PredictionFilter& filter, std::size_t ref_channel,
                            int speaker = 0);

/// Sum over (t, f) of |Y_q - g^H Y~|^2 / psd + log(psd): the likelihood objective the
/// alternating estimator decreases.
double wpe_objective(const Spectrogram& mixture, const PredictionFilter& filter, const RealGrid& psd,
                     std::size_t ref_channel);

struct WpeClassicResult {
  DereverbResult result;
  /// Objective after each half-step: (g1, psd0), (g1, psd1), (g2, psd1), ...
  std::vector<double> objective_trace;
};

/// Iterative WPE: alternate the PSD estimate (power of the current output, starting from the
/// mixture) with the closed-form filter. The PSD floor is epsilon times the peak mixture power
/// in every iteration, so each half-step minimizes wpe_objective over a fixed feasible set.
WpeClassicResult wpe_classic(const Spectrogram& mixture, std::size_t ref_channel, const WpeParams& params = {},
                             int iterations = kDefaultWpeIterations, double epsilon = kDefaultEpsilon);

// ---------------------------------------------------------------------------
// Forward convolutive prediction

struct FcpParams {
  int taps = kDefaultFcpTaps;
  double loading = kDefaultLoading;
};

/// Fits target(t) ~ g^H [S(t), ..., S(t-K+1)] per bin. `target` is the mixture channel for
/// plain FCP or a refined target for later msFCP steps; both inputs are single channel.
PredictionFilter fcp_filter(const Spectrogram& target, const Spectrogram& estimate, const WeightMap& weights,
                            const FcpParams& params = {});

/// Y_q - (g^H S~ - S): removes the estimated reverberant excess of one speaker.
DereverbResult fcp_dereverb(const Spectrogram& mixture_channel, const Spectrogram& estimate,
                            const PredictionFilter& filter, int speaker = 0);

/// fcp_filter with weights floored from |Y_q|^2, followed by fcp_dereverb.
DereverbResult fcp_run(const Spectrogram& mixture_channel, const Spectrogram& estimate, const FcpParams& params = {},
                       double epsilon = kDefaultEpsilon, int speaker = 0);

/// Subtracts every speaker's estimated reverberant excess. All results share the same output.
std::vector<DereverbResult> cfcp_dereverb(const Spectrogram& mixture_channel, std::span<const Spectrogram> estimates,
                                          std::span<const PredictionFilter> filters);

/// Multi-step FCP. Step 1 is plain FCP; step i > 1 refits each speaker against the mixture
/// minus the other speakers' step i-1 predictions.
std::vector<DereverbResult> msfcp_run(const Spectrogram& mixture_channel, std::span<const Spectrogram> estimates,
                                      const FcpParams& params = {}, double epsilon = kDefaultEpsilon,
                                      int steps = kDefaultMsFcpSteps);

// ---------------------------------------------------------------------------
// Debug container: "CPFL" magic, u32 version, u32 bins, taps, K, delay, channels, then
// bins * taps little-endian (real, imag) doubles in row-major order.

void write_filter(const std::filesystem::path& path, const PredictionFilter& filter);
PredictionFilter read_filter(const std::filesystem::path& path);

}  // namespace cpred
