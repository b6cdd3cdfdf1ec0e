#pragma once

#include <optional>
#include <span>
#include <vector>

#include "cpred/signal.hpp"

namespace cpred {

/// SI-SDR values are clamped to +/- this many dB.
inline constexpr double kSiSdrCapDb = 80.0;

/// Scale-invariant SDR in dB of a mono estimate against a mono reference.
double si_sdr(std::span<const double> estimate, std::span<const double> reference);
double si_sdr(const TimeSignal& estimate, const TimeSignal& reference);

struct EvalReport {
  std::vector<double> per_speaker_si_sdr_db;  // indexed by reference
  double mean_si_sdr_db = 0.0;
  std::vector<int> permutation;  // permutation[r] = estimate assigned to reference r
  double improvement_over_mixture_db = 0.0;
  double mixture_mean_si_sdr_db = 0.0;
};

/// Exhaustive best assignment (C <= 4) of estimates to references by mean SI-SDR.
/// With a mixture, also reports the mean improvement over scoring the mixture itself.
EvalReport resolve_permutation(std::span<const TimeSignal> estimates, std::span<const TimeSignal> references,
                               const std::optional<TimeSignal>& mixture = std::nullopt);

}  // namespace cpred
