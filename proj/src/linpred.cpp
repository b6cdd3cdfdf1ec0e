#include "cpred/linpred.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace cpred {
namespace {

void require_single_channel(const Spectrogram& s, const char* what) {
  if (s.channels() != 1) throw data_error(std::string(what) + " must be single channel");
}

void require_weights(const WeightMap& w, const Spectrogram& s) {
  if (w.frames() != s.frames() || w.bins() != s.bins()) throw data_error("weight map shape mismatch");
}

std::vector<cdouble> column(const Spectrogram& s, std::size_t c, std::size_t f) {
  std::vector<cdouble> out(s.frames());
  for (std::size_t t = 0; t < s.frames(); ++t) out[t] = s.at(c, t, f);
  return out;
}

std::vector<double> column(const WeightMap& w, std::size_t f) {
  std::vector<double> out(w.frames());
  for (std::size_t t = 0; t < w.frames(); ++t) out[t] = w(t, f);
  return out;
}

}  // namespace

RealGrid power(const Spectrogram& spec, std::size_t channel) {
  if (channel >= spec.channels()) throw data_error("channel index out of range");
  RealGrid out(spec.frames(), spec.bins());
  for (std::size_t t = 0; t < spec.frames(); ++t) {
    for (std::size_t f = 0; f < spec.bins(); ++f) out(t, f) = std::norm(spec.at(channel, t, f));
  }
  return out;
}

WeightMap weight_floor(const RealGrid& power, double epsilon) {
  double peak = 0.0;
  for (double v : power.values) {
    if (v < 0.0 || !std::isfinite(v)) throw data_error("power must be finite and non-negative");
    peak = std::max(peak, v);
  }
  return weight_floor(power, epsilon, peak);
}

WeightMap weight_floor(const RealGrid& power, double epsilon, double reference_peak) {
  if (!(epsilon > 0.0)) throw config_error("weight floor epsilon must be positive");
  if (!(reference_peak > 0.0)) throw data_error("silent spectrogram");
  const double floor = epsilon * reference_peak;
  RealGrid out = power;
  for (double& v : out.values) {
    if (v < 0.0 || !std::isfinite(v)) throw data_error("power must be finite and non-negative");
    v = std::max(floor, v);
  }
  return WeightMap(std::move(out));
}

Eigen::VectorXcd solve_weighted_ls(std::span<const cdouble> target, const Eigen::MatrixXcd& regressors,
                                   std::span<const double> weights, double loading) {
  const auto frames = static_cast<Eigen::Index>(target.size());
  const auto m = regressors.cols();
  if (regressors.rows() != frames || static_cast<Eigen::Index>(weights.size()) != frames) {
    throw data_error("weighted least squares: dimension mismatch");
  }
  if (loading < 0.0) throw config_error("loading must be non-negative");

  // Rows scaled by 1/sqrt(w) so that R = Xw^T conj(Xw) = sum_t x x^H / w.
  Eigen::MatrixXcd xw(frames, m);
  Eigen::VectorXcd dw(frames);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const double w = weights[static_cast<std::size_t>(t)];
    if (!(w > 0.0)) throw data_error("weights must be positive");
    const double s = 1.0 / std::sqrt(w);
    xw.row(t) = regressors.row(t) * s;
    dw(t) = std::conj(target[static_cast<std::size_t>(t)]) * s;
  }
  Eigen::MatrixXcd r = xw.transpose() * xw.conjugate();
  const Eigen::VectorXcd p = xw.transpose() * dw;

  const double trace = r.diagonal().real().sum();
  if (trace <= 0.0) {
    if (loading > 0.0) return Eigen::VectorXcd::Zero(m);
    throw numerical_error("rank-deficient normal equations");
  }
  const double delta = loading * trace / static_cast<double>(m);
  r.diagonal().array() += delta;

  Eigen::LLT<Eigen::MatrixXcd> llt(r);
  const double max_diag = r.diagonal().real().maxCoeff();
  if (llt.info() != Eigen::Success) throw numerical_error("rank-deficient normal equations");
  const Eigen::MatrixXcd l = llt.matrixL();
  const double min_pivot = l.diagonal().real().cwiseAbs2().minCoeff();
  if (min_pivot <= 1e-14 * max_diag) throw numerical_error("rank-deficient normal equations");
  return llt.solve(p);
}

const char* to_string(Algorithm a) noexcept {
  switch (a) {
    case Algorithm::wpe: return "wpe";
    case Algorithm::fcp: return "fcp";
    case Algorithm::cfcp: return "cfcp";
    case Algorithm::msfcp: return "msfcp";
  }
  return "?";
}

Eigen::VectorXcd PredictionFilter::channel_taps(std::size_t f, int p) const {
  Eigen::VectorXcd out(taps_per_channel);
  for (int k = 0; k < taps_per_channel; ++k) out(k) = taps(static_cast<Eigen::Index>(f), k * channels + p);
  return out;
}

PredictionFilter PredictionFilter::identity(std::size_t bins, int taps) {
  auto out = zeros(bins, taps, 0, 1);
  out.taps.col(0).setOnes();
  return out;
}

PredictionFilter PredictionFilter::zeros(std::size_t bins, int taps, int delay, int channels) {
  PredictionFilter out;
  out.taps = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(bins), taps * channels);
  out.taps_per_channel = taps;
  out.delay = delay;
  out.channels = channels;
  return out;
}

Eigen::MatrixXcd stacked_regressors(const Spectrogram& spec, std::size_t f, int taps, int delay) {
  const auto frames = static_cast<std::ptrdiff_t>(spec.frames());
  const auto channels = static_cast<Eigen::Index>(spec.channels());
  Eigen::MatrixXcd x = Eigen::MatrixXcd::Zero(frames, taps * channels);
  for (std::ptrdiff_t t = 0; t < frames; ++t) {
    for (int k = 0; k < taps; ++k) {
      const std::ptrdiff_t src = t - delay - k;
      if (src < 0) break;
      for (Eigen::Index p = 0; p < channels; ++p) {
        x(t, k * channels + p) = spec.at(static_cast<std::size_t>(p), static_cast<std::size_t>(src), f);
      }
    }
  }
  return x;
}

Spectrogram apply_prediction(const Spectrogram& regressors, const PredictionFilter& filter) {
  if (static_cast<std::size_t>(filter.channels) != regressors.channels() || filter.bins() != regressors.bins()) {
    throw data_error("filter does not match regressor shape");
  }
  Spectrogram out = regressors.zeros_like(1);
  const auto frames = static_cast<std::ptrdiff_t>(regressors.frames());
  for (std::size_t f = 0; f < regressors.bins(); ++f) {
    for (std::ptrdiff_t t = 0; t < frames; ++t) {
      cdouble acc = 0.0;
      for (int k = 0; k < filter.taps_per_channel; ++k) {
        const std::ptrdiff_t src = t - filter.delay - k;
        if (src < 0) break;
        for (int p = 0; p < filter.channels; ++p) {
          acc += std::conj(filter.taps(static_cast<Eigen::Index>(f), k * filter.channels + p)) *
                 regressors.at(static_cast<std::size_t>(p), static_cast<std::size_t>(src), f);
        }
      }
      out.at(0, static_cast<std::size_t>(t), f) = acc;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// WPE

PredictionFilter wpe_filter(const Spectrogram& mixture, const WeightMap& psd, std::size_t ref_channel,
                            const WpeParams& params) {
  if (params.taps < 1) throw config_error("wpe: taps must be >= 1");
  if (params.delay < 1) throw config_error("wpe: prediction delay must be >= 1");
  if (ref_channel >= mixture.channels()) throw data_error("wpe: reference channel out of range");
  require_weights(psd, mixture);

  auto filter = PredictionFilter::zeros(mixture.bins(), params.taps, params.delay,
                                        static_cast<int>(mixture.channels()));
  for (std::size_t f = 0; f < mixture.bins(); ++f) {
    const auto x = stacked_regressors(mixture, f, params.taps, params.delay);
    const auto d = column(mixture, ref_channel, f);
    const auto w = column(psd, f);
    filter.taps.row(static_cast<Eigen::Index>(f)) = solve_weighted_ls(d, x, w, params.loading).transpose();
  }
  return filter;
}

DereverbResult wpe_dereverb(const Spectrogram& mixture, const PredictionFilter& filter, std::size_t ref_channel,
                            int speaker) {
  if (ref_channel >= mixture.channels()) throw data_error("wpe: reference channel out of range");
  if (filter.delay < 1) throw config_error("wpe: prediction delay must be >= 1");
  DereverbResult r{mixture.extract(ref_channel), filter, Algorithm::wpe, speaker};
  r.output -= apply_prediction(mixture, filter);
  return r;
}

double wpe_objective(const Spectrogram& mixture, const PredictionFilter& filter, const RealGrid& psd,
                     std::size_t ref_channel) {
  const auto residual = wpe_dereverb(mixture, filter, ref_channel).output;
  if (psd.frames != residual.frames() || psd.bins != residual.bins()) throw data_error("psd shape mismatch");
  double total = 0.0;
  for (std::size_t t = 0; t < psd.frames; ++t) {
    for (std::size_t f = 0; f < psd.bins; ++f) {
      const double lambda = psd(t, f);
      total += std::norm(residual.at(0, t, f)) / lambda + std::log(lambda);
    }
  }
  return total;
}

WpeClassicResult wpe_classic(const Spectrogram& mixture, std::size_t ref_channel, const WpeParams& params,
                             int iterations, double epsilon) {
  if (iterations < 1) throw config_error("wpe: iterations must be >= 1");
  WpeClassicResult out;
  const auto mixture_power = power(mixture, ref_channel);
  const double peak = *std::max_element(mixture_power.values.begin(), mixture_power.values.end());
  auto psd = weight_floor(mixture_power, epsilon, peak);
  for (int i = 0; i < iterations; ++i) {
    auto filter = wpe_filter(mixture, psd, ref_channel, params);
    out.objective_trace.push_back(wpe_objective(mixture, filter, psd.grid(), ref_channel));
    out.result = wpe_dereverb(mixture, filter, ref_channel);
    psd = weight_floor(power(out.result.output), epsilon, peak);
    out.objective_trace.push_back(wpe_objective(mixture, filter, psd.grid(), ref_channel));
  }
  return out;
}

// ---------------------------------------------------------------------------
// FCP family

PredictionFilter fcp_filter(const Spectrogram& target, const Spectrogram& estimate, const WeightMap& weights,
                            const FcpParams& params) {
  require_single_channel(target, "fcp target");
  require_single_channel(estimate, "fcp estimate");
  if (!target.same_shape(estimate)) throw data_error("fcp: estimate shape mismatch");
  if (params.taps < 1) throw config_error("fcp: taps must be >= 1");
  require_weights(weights, target);
  if (params.loading == 0.0 && estimate.energy() == 0.0) throw numerical_error("degenerate regressor");

  auto filter = PredictionFilter::zeros(target.bins(), params.taps, 0, 1);
  for (std::size_t f = 0; f < target.bins(); ++f) {
    const auto x = stacked_regressors(estimate, f, params.taps, 0);
    const auto d = column(target, 0, f);
    const auto w = column(weights, f);
    filter.taps.row(static_cast<Eigen::Index>(f)) = solve_weighted_ls(d, x, w, params.loading).transpose();
  }
  return filter;
}

DereverbResult fcp_dereverb(const Spectrogram& mixture_channel, const Spectrogram& estimate,
                            const PredictionFilter& filter, int speaker) {
  require_single_channel(mixture_channel, "fcp mixture");
  require_single_channel(estimate, "fcp estimate");
  if (!mixture_channel.same_shape(estimate)) throw data_error("fcp: estimate shape mismatch");
  if (filter.delay != 0 || filter.channels != 1) throw data_error("fcp: filter is not a forward filter");
  DereverbResult r{mixture_channel, filter, Algorithm::fcp, speaker};
  r.output -= apply_prediction(estimate, filter);
  r.output += estimate;
  return r;
}

DereverbResult fcp_run(const Spectrogram& mixture_channel, const Spectrogram& estimate, const FcpParams& params,
                       double epsilon, int speaker) {
  const auto weights = weight_floor(power(mixture_channel), epsilon);
  return fcp_dereverb(mixture_channel, estimate, fcp_filter(mixture_channel, estimate, weights, params), speaker);
}

std::vector<DereverbResult> cfcp_dereverb(const Spectrogram& mixture_channel, std::span<const Spectrogram> estimates,
                                          std::span<const PredictionFilter> filters) {
  require_single_channel(mixture_channel, "cfcp mixture");
  if (estimates.size() != filters.size() || estimates.empty()) throw data_error("cfcp: speaker count mismatch");
  Spectrogram combined = mixture_channel;
  for (std::size_t c = 0; c < estimates.size(); ++c) {
    require_single_channel(estimates[c], "cfcp estimate");
    combined -= apply_prediction(estimates[c], filters[c]);
    combined += estimates[c];
  }
  std::vector<DereverbResult> out;
  out.reserve(estimates.size());
  for (std::size_t c = 0; c < estimates.size(); ++c) {
    out.push_back({combined, filters[c], Algorithm::cfcp, static_cast<int>(c)});
  }
  return out;
}

std::vector<DereverbResult> msfcp_run(const Spectrogram& mixture_channel, std::span<const Spectrogram> estimates,
                                      const FcpParams& params, double epsilon, int steps) {
  require_single_channel(mixture_channel, "msfcp mixture");
  if (steps < 1) throw config_error("msfcp: steps must be >= 1");
  if (estimates.empty()) throw data_error("msfcp: no estimates");
  const std::size_t speakers = estimates.size();

  const auto mixture_weights = weight_floor(power(mixture_channel), epsilon);
  std::vector<PredictionFilter> filters;
  std::vector<Spectrogram> predictions;
  for (const auto& est : estimates) {
    filters.push_back(fcp_filter(mixture_channel, est, mixture_weights, params));
    predictions.push_back(apply_prediction(est, filters.back()));
  }
  // Target each speaker's step-i fit regresses against; the mixture at step 1.
  std::vector<Spectrogram> targets(speakers, mixture_channel);

  for (int step = 2; step <= steps; ++step) {
    for (std::size_t c = 0; c < speakers; ++c) {
      targets[c] = mixture_channel;
      for (std::size_t other = 0; other < speakers; ++other) {
        if (other != c) targets[c] -= predictions[other];
      }
    }
    std::vector<PredictionFilter> next_filters;
    std::vector<Spectrogram> next_predictions;
    for (std::size_t c = 0; c < speakers; ++c) {
      const auto weights = weight_floor(power(targets[c]), epsilon);
      next_filters.push_back(fcp_filter(targets[c], estimates[c], weights, params));
      next_predictions.push_back(apply_prediction(estimates[c], next_filters.back()));
    }
    filters = std::move(next_filters);
    predictions = std::move(next_predictions);
  }

  std::vector<DereverbResult> out;
  out.reserve(speakers);
  for (std::size_t c = 0; c < speakers; ++c) {
    DereverbResult r{targets[c], filters[c], Algorithm::msfcp, static_cast<int>(c)};
    r.output -= predictions[c];
    r.output += estimates[c];
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kFilterMagic[4] = {'C', 'P', 'F', 'L'};
constexpr std::uint32_t kFilterVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

void write_filter(const std::filesystem::path& path, const PredictionFilter& filter) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot write " + path.string());
  os.write(kFilterMagic, 4);
  put_u32(os, kFilterVersion);
  put_u32(os, static_cast<std::uint32_t>(filter.taps.rows()));
  put_u32(os, static_cast<std::uint32_t>(filter.taps.cols()));
  put_u32(os, static_cast<std::uint32_t>(filter.taps_per_channel));
  put_u32(os, static_cast<std::uint32_t>(filter.delay));
  put_u32(os, static_cast<std::uint32_t>(filter.channels));
  for (Eigen::Index f = 0; f < filter.taps.rows(); ++f) {
    for (Eigen::Index m = 0; m < filter.taps.cols(); ++m) {
      const double re = filter.taps(f, m).real();
      const double im = filter.taps(f, m).imag();
      os.write(reinterpret_cast<const char*>(&re), sizeof re);
      os.write(reinterpret_cast<const char*>(&im), sizeof im);
    }
  }
  if (!os) throw data_error("write failed: " + path.string());
}

PredictionFilter read_filter(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot open " + path.string());
  char magic[4] = {};
  is.read(magic, 4);
  if (std::memcmp(magic, kFilterMagic, 4) != 0) throw data_error(path.string() + ": not a filter file");
  if (get_u32(is) != kFilterVersion) throw data_error(path.string() + ": unsupported filter version");
  const auto rows = get_u32(is);
  const auto cols = get_u32(is);
  PredictionFilter filter;
  filter.taps_per_channel = static_cast<int>(get_u32(is));
  filter.delay = static_cast<int>(get_u32(is));
  filter.channels = static_cast<int>(get_u32(is));
  if (!is || static_cast<std::uint64_t>(filter.taps_per_channel) * static_cast<std::uint64_t>(filter.channels) != cols) {
    throw data_error(path.string() + ": inconsistent filter header");
  }
  filter.taps.resize(rows, cols);
  for (Eigen::Index f = 0; f < filter.taps.rows(); ++f) {
    for (Eigen::Index m = 0; m < filter.taps.cols(); ++m) {
      double re = 0.0, im = 0.0;
      is.read(reinterpret_cast<char*>(&re), sizeof re);
      is.read(reinterpret_cast<char*>(&im), sizeof im);
      filter.taps(f, m) = {re, im};
    }
  }
  if (!is) throw data_error(path.string() + ": truncated filter file");
  return filter;
}

}  // namespace cpred
