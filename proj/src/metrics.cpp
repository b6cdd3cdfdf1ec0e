#include "cpred/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cpred {

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size()) throw data_error("si_sdr: length mismatch");
  double ref_energy = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    ref_energy += reference[i] * reference[i];
    dot += estimate[i] * reference[i];
  }
  if (ref_energy == 0.0) throw data_error("si_sdr: zero reference");
  const double alpha = dot / ref_energy;
  double target = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = alpha * reference[i];
    const double e = estimate[i] - s;
    target += s * s;
    residual += e * e;
  }
  if (residual == 0.0) return target > 0.0 ? kSiSdrCapDb : -kSiSdrCapDb;
  if (target == 0.0) return -kSiSdrCapDb;
  return std::clamp(10.0 * std::log10(target / residual), -kSiSdrCapDb, kSiSdrCapDb);
}

double si_sdr(const TimeSignal& estimate, const TimeSignal& reference) {
  if (estimate.channels() != 1 || reference.channels() != 1) throw data_error("si_sdr: mono signals expected");
  return si_sdr(estimate.channel(0), reference.channel(0));
}

EvalReport resolve_permutation(std::span<const TimeSignal> estimates, std::span<const TimeSignal> references,
                               const std::optional<TimeSignal>& mixture) {
  const std::size_t n = references.size();
  if (estimates.size() != n) throw data_error("resolve_permutation: count mismatch");
  if (n == 0 || n > 4) throw data_error("resolve_permutation: supports 1 to 4 speakers");

  std::vector<std::vector<double>> score(n, std::vector<double>(n));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t e = 0; e < n; ++e) score[r][e] = si_sdr(estimates[e], references[r]);
  }

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  EvalReport best;
  double best_mean = -std::numeric_limits<double>::infinity();
  do {
    double sum = 0.0;
    for (std::size_t r = 0; r < n; ++r) sum += score[r][static_cast<std::size_t>(perm[r])];
    const double mean = sum / static_cast<double>(n);
    if (mean > best_mean) {
      best_mean = mean;
      best.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  best.mean_si_sdr_db = best_mean;
  for (std::size_t r = 0; r < n; ++r) {
    best.per_speaker_si_sdr_db.push_back(score[r][static_cast<std::size_t>(best.permutation[r])]);
  }
  if (mixture) {
    double sum = 0.0;
    for (const auto& ref : references) sum += si_sdr(*mixture, ref);
    best.mixture_mean_si_sdr_db = sum / static_cast<double>(n);
    best.improvement_over_mixture_db = best.mean_si_sdr_db - best.mixture_mean_si_sdr_db;
  }
  return best;
}

}  // namespace cpred
