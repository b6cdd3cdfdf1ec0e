#include "cpred/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "fft.hpp"

namespace cpred {
namespace {

enum Stream : std::uint64_t { kSources = 1, kDelays, kRirs, kNoise, kDraw };

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

}  // namespace

void SceneSpec::validate() const {
  if (num_speakers < 1) throw config_error("scene: need at least one speaker");
  if (num_channels < 1) throw config_error("scene: need at least one channel");
  if (t60_seconds < 0.0 || !std::isfinite(t60_seconds)) throw config_error("scene: t60 must be >= 0");
  if (std::isnan(noise_snr_db)) throw config_error("scene: noise SNR is NaN");
  if (sample_rate_hz <= 0) throw config_error("scene: sample rate must be positive");
  if (!(duration_seconds > 0.0)) throw config_error("scene: duration must be positive");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::vector<double> gen_rir(std::uint64_t seed, double t60_seconds, int direct_delay_samples, std::size_t length,
                            int sample_rate_hz, int early_gap_samples) {
  if (!(t60_seconds > 0.0)) throw config_error("rir: t60 must be positive");
  if (direct_delay_samples < 0) throw config_error("rir: direct delay must be non-negative");
  const auto d = static_cast<std::size_t>(direct_delay_samples);
  std::vector<double> h(std::max(length, d + 1), 0.0);
  h[d] = 1.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  const double rate = 3.0 * std::numbers::ln10 / (t60_seconds * sample_rate_hz);
  for (std::size_t n = d + static_cast<std::size_t>(std::max(early_gap_samples, 0)) + 1; n < h.size(); ++n) {
    h[n] = gauss(rng) * std::exp(-rate * static_cast<double>(n - d));
  }
  return h;
}

std::vector<double> convolve(std::span<const double> x, std::span<const double> h) {
  if (x.empty() || h.empty()) return {};
  const std::size_t out_len = x.size() + h.size() - 1;
  const int n = detail::next_pow2(static_cast<int>(out_len));
  detail::RealFft fft(n);
  std::vector<double> xa(static_cast<std::size_t>(n), 0.0), ha(static_cast<std::size_t>(n), 0.0);
  std::copy(x.begin(), x.end(), xa.begin());
  std::copy(h.begin(), h.end(), ha.begin());
  std::vector<cdouble> xs(static_cast<std::size_t>(n / 2 + 1)), hs(xs.size());
  fft.forward(xa, xs);
  fft.forward(ha, hs);
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] *= hs[i];
  fft.inverse(xs, xa);
  xa.resize(out_len);
  return xa;
}

std::vector<double> synth_source(std::uint64_t seed, std::size_t samples, int sample_rate_hz) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  const double fs = sample_rate_hz;
  const double nyquist = 0.5 * fs;
  std::vector<double> out(samples, 0.0);

  auto pos = static_cast<std::size_t>(uniform(rng, 0.02, 0.15) * fs);
  while (pos < samples) {
    const auto len = static_cast<std::size_t>(uniform(rng, 0.12, 0.40) * fs);
    const std::size_t end = std::min(samples, pos + len);
    const bool voiced = uniform(rng, 0.0, 1.0) < 0.8;
    const double formants[3] = {uniform(rng, 300.0, 900.0), uniform(rng, 900.0, 2300.0), uniform(rng, 2300.0, 3400.0)};
    auto spectral_gain = [&](double f) {
      double g = 0.03;
      for (double fc : formants) {
        const double z = (f - fc) / 180.0;
        g += std::exp(-0.5 * z * z);
      }
      return g;
    };
    const double seg = static_cast<double>(len);

    if (voiced) {
      const double f0_start = uniform(rng, 90.0, 220.0);
      const double f0_end = f0_start * uniform(rng, 0.8, 1.25);
      const int harmonics = static_cast<int>((nyquist - 100.0) / std::max(f0_start, f0_end));
      std::vector<double> phase(static_cast<std::size_t>(harmonics));
      for (auto& p : phase) p = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      double f0_phase = 0.0;
      for (std::size_t n = pos; n < end; ++n) {
        const double u = static_cast<double>(n - pos) / seg;
        const double f0 = f0_start + (f0_end - f0_start) * u;
        f0_phase += 2.0 * std::numbers::pi * f0 / fs;
        const double env = std::sin(std::numbers::pi * u);
        double v = 0.0;
        for (int k = 1; k <= harmonics; ++k) {
          const double fk = k * f0;
          if (fk >= nyquist) break;
          v += spectral_gain(fk) / std::sqrt(static_cast<double>(k)) *
               std::sin(k * f0_phase + phase[static_cast<std::size_t>(k - 1)]);
        }
        out[n] += env * env * v;
      }
    } else {
      double prev = 0.0;
      for (std::size_t n = pos; n < end; ++n) {
        const double u = static_cast<double>(n - pos) / seg;
        const double w = gauss(rng);
        out[n] += 0.6 * std::sin(std::numbers::pi * u) * (w - 0.7 * prev);
        prev = w;
      }
    }
    pos = end + static_cast<std::size_t>(uniform(rng, 0.03, 0.25) * fs);
  }

  const double e = energy(out);
  if (e > 0.0) {
    const double scale = 0.1 / std::sqrt(e / static_cast<double>(samples));
    for (double& v : out) v *= scale;
  }
  return out;
}

namespace {

void check_sources(const SceneSpec& spec, std::span<const TimeSignal> sources) {
  spec.validate();
  if (sources.empty()) throw data_error("scene: empty sources");
  if (static_cast<int>(sources.size()) != spec.num_speakers) throw data_error("scene: speaker count mismatch");
  const std::size_t n = sources.front().samples();
  for (const auto& s : sources) {
    if (s.channels() != 1 || s.samples() != n || n == 0) throw data_error("scene: sources must be equal-length mono");
  }
}

}  // namespace

Scene render_scene(const SceneSpec& spec, std::span<const TimeSignal> sources) {
  check_sources(spec, sources);
  const auto speakers = static_cast<std::size_t>(spec.num_speakers);
  const auto channels = static_cast<std::size_t>(spec.num_channels);
  const int fs = spec.sample_rate_hz;

  std::mt19937_64 delay_rng(derive_seed(spec.seed, kDelays));
  const auto tail = static_cast<std::size_t>(std::ceil(spec.t60_seconds * fs));
  std::vector<std::vector<std::vector<double>>> rirs(speakers);
  for (std::size_t c = 0; c < speakers; ++c) {
    const int base = uniform_int(delay_rng, 8, 24);
    for (std::size_t p = 0; p < channels; ++p) {
      const int delay = base + uniform_int(delay_rng, -2, 2);
      if (spec.t60_seconds > 0.0) {
        const std::size_t length = static_cast<std::size_t>(delay) + tail + 1;
        rirs[c].push_back(
            gen_rir(derive_seed(derive_seed(spec.seed, kRirs), c * channels + p), spec.t60_seconds, delay, length, fs));
      } else {
        std::vector<double> h(static_cast<std::size_t>(delay) + 1, 0.0);
        h.back() = 1.0;
        rirs[c].push_back(std::move(h));
      }
    }
  }
  return render_scene(spec, sources, std::move(rirs));
}

Scene render_scene(const SceneSpec& spec, std::span<const TimeSignal> sources,
                   std::vector<std::vector<std::vector<double>>> rirs) {
  check_sources(spec, sources);
  const auto speakers = static_cast<std::size_t>(spec.num_speakers);
  const auto channels = static_cast<std::size_t>(spec.num_channels);
  const std::size_t n = sources.front().samples();
  const int fs = spec.sample_rate_hz;
  if (rirs.size() != speakers) throw data_error("scene: need one RIR set per speaker");
  for (const auto& per_speaker : rirs) {
    if (per_speaker.size() != channels) throw data_error("scene: need one RIR per channel");
    for (const auto& h : per_speaker) {
      if (h.empty()) throw data_error("scene: empty RIR");
    }
  }

  Scene scene;
  scene.spec = spec;
  scene.mixture = TimeSignal(channels, n, fs);
  scene.noise = TimeSignal(channels, n, fs);
  for (std::size_t c = 0; c < speakers; ++c) {
    TimeSignal direct(channels, n, fs), reverberant(channels, n, fs);
    std::vector<int> delays;
    auto src = sources[c].channel(0);
    for (std::size_t p = 0; p < channels; ++p) {
      const auto& h = rirs[c][p];
      std::size_t d = 0;
      while (d + 1 < h.size() && h[d] == 0.0) ++d;
      delays.push_back(static_cast<int>(d));
      auto dst = direct.channel(p);
      for (std::size_t i = d; i < n; ++i) dst[i] = h[d] * src[i - d];
      const bool direct_only = std::all_of(h.begin(), h.end(), [&](const double& v) { return &v == &h[d] || v == 0.0; });
      if (direct_only) {
        std::copy(dst.begin(), dst.end(), reverberant.channel(p).begin());
      } else {
        const auto full = convolve(src, h);
        std::copy_n(full.begin(), n, reverberant.channel(p).begin());
      }
    }
    scene.direct.push_back(std::move(direct));
    scene.reverberant.push_back(std::move(reverberant));
    scene.direct_delays.push_back(std::move(delays));
  }
  scene.rirs = std::move(rirs);

  // Speech-only image first, noise scaled against it.
  TimeSignal speech(channels, n, fs);
  for (const auto& x : scene.reverberant) {
    for (std::size_t i = 0; i < speech.raw().size(); ++i) speech.raw()[i] += x.raw()[i];
  }
  if (std::isfinite(spec.noise_snr_db)) {
    std::mt19937_64 rng(derive_seed(spec.seed, kNoise));
    std::normal_distribution<double> gauss;
    for (double& v : scene.noise.raw()) v = gauss(rng);
    const double target = energy(speech.raw()) / std::pow(10.0, spec.noise_snr_db / 10.0);
    const double scale = std::sqrt(target / energy(scene.noise.raw()));
    for (double& v : scene.noise.raw()) v *= scale;
  }
  for (std::size_t i = 0; i < speech.raw().size(); ++i) {
    scene.mixture.raw()[i] = speech.raw()[i] + scene.noise.raw()[i];
  }
  return scene;
}

Scene make_scene(const SceneSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::size_t>(std::lround(spec.duration_seconds * spec.sample_rate_hz));
  std::vector<TimeSignal> sources;
  for (int c = 0; c < spec.num_speakers; ++c) {
    const auto seed = derive_seed(derive_seed(spec.seed, kSources), static_cast<std::uint64_t>(c));
    sources.push_back(TimeSignal::mono(synth_source(seed, n, spec.sample_rate_hz), spec.sample_rate_hz));
  }
  return render_scene(spec, sources);
}

SceneSpec draw_scene_spec(SceneSpec base, const SceneRanges& ranges) {
  std::mt19937_64 rng(derive_seed(base.seed, kDraw));
  base.t60_seconds = uniform(rng, ranges.t60_min, ranges.t60_max);
  base.noise_snr_db = uniform(rng, ranges.snr_min_db, ranges.snr_max_db);
  return base;
}

Spectrogram emulate_estimator(const Spectrogram& direct, const Spectrogram& reverberant, const EstimateQuality& quality,
                              std::uint64_t seed) {
  if (!direct.same_shape(reverberant)) throw data_error("estimator: shape mismatch");
  if (std::isnan(quality.est_snr_db) || quality.est_snr_db == -std::numeric_limits<double>::infinity()) {
    throw config_error("estimator: SNR must be finite or +inf");
  }
  if (quality.is_oracle()) return direct;
  const double target = direct.energy();
  if (target == 0.0) throw data_error("estimator: zero target");
  const double wanted = target / std::pow(10.0, quality.est_snr_db / 10.0);

  Spectrogram perturbation = direct.zeros_like(direct.channels());
  if (quality.kind == PerturbationKind::white) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    for (auto& v : perturbation.raw()) v = {gauss(rng), gauss(rng)};
  } else {
    perturbation = reverberant - direct;
  }
  const double have = perturbation.energy();
  if (have == 0.0) throw data_error("estimator: no reverberant residual to scale");
  perturbation *= std::sqrt(wanted / have);
  return direct + perturbation;
}

}  // namespace cpred
