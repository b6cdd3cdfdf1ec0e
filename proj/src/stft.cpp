#include "cpred/stft.hpp"

#include <cmath>
#include <numbers>

#include "fft.hpp"

namespace cpred {

void StftConfig::validate() const {
  const bool pow2 = fft_size > 0 && (fft_size & (fft_size - 1)) == 0;
  if (window_len <= 0 || hop <= 0 || hop > window_len || fft_size < window_len || !pow2 || sample_rate_hz <= 0) {
    throw config_error("bad config");
  }
}

StftConfig StftConfig::for_rate(int sample_rate_hz) {
  StftConfig c;
  c.sample_rate_hz = sample_rate_hz;
  c.window_len = static_cast<int>(std::lround(0.032 * sample_rate_hz));
  c.hop = static_cast<int>(std::lround(0.008 * sample_rate_hz));
  c.fft_size = detail::next_pow2(c.window_len);
  return c;
}

Spectrogram::Spectrogram(std::size_t channels, std::size_t frames, StftConfig config,
                         std::optional<std::size_t> signal_length)
    : channels_(channels),
      frames_(frames),
      bins_(static_cast<std::size_t>(config.num_bins())),
      config_(config),
      length_(signal_length),
      data_(channels * frames * bins_) {}

Spectrogram Spectrogram::extract(std::size_t c) const {
  if (c >= channels_) throw data_error("channel index out of range");
  Spectrogram out(1, frames_, config_, length_);
  auto first = data_.begin() + static_cast<std::ptrdiff_t>(c * frames_ * bins_);
  std::copy(first, first + static_cast<std::ptrdiff_t>(frames_ * bins_), out.data_.begin());
  return out;
}

Spectrogram Spectrogram::zeros_like(std::size_t channels) const {
  return Spectrogram(channels, frames_, config_, length_);
}

bool Spectrogram::all_finite() const noexcept {
  for (const auto& v : data_) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  }
  return true;
}

double Spectrogram::energy() const noexcept {
  double e = 0.0;
  for (const auto& v : data_) e += std::norm(v);
  return e;
}

Spectrogram& Spectrogram::operator+=(const Spectrogram& other) {
  if (!same_shape(other)) throw data_error("spectrogram shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Spectrogram& Spectrogram::operator-=(const Spectrogram& other) {
  if (!same_shape(other)) throw data_error("spectrogram shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Spectrogram& Spectrogram::operator*=(cdouble scale) {
  for (auto& v : data_) v *= scale;
  return *this;
}

Spectrogram operator+(Spectrogram a, const Spectrogram& b) { return a += b; }
Spectrogram operator-(Spectrogram a, const Spectrogram& b) { return a -= b; }
Spectrogram operator*(cdouble scale, Spectrogram a) { return a *= scale; }

std::size_t frame_count(std::size_t signal_length, const StftConfig& config) {
  const auto pad = static_cast<std::size_t>(config.edge_pad());
  return (pad + signal_length - 1) / static_cast<std::size_t>(config.hop) + 1;
}

std::vector<double> make_window(const StftConfig& config) {
  std::vector<double> w(static_cast<std::size_t>(config.window_len));
  const double n = static_cast<double>(config.window_len);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double hann = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n));
    w[i] = std::sqrt(hann);
  }
  return w;
}

Spectrogram analyze(const TimeSignal& signal, const StftConfig& config) {
  if (signal.empty()) throw data_error("empty input");
  config.validate();
  const auto n = signal.samples();
  const auto frames = frame_count(n, config);
  const auto pad = static_cast<std::ptrdiff_t>(config.edge_pad());
  const auto hop = static_cast<std::ptrdiff_t>(config.hop);
  const auto window = make_window(config);
  detail::RealFft fft(config.fft_size);

  Spectrogram out(signal.channels(), frames, config, n);
  std::vector<double> buf(static_cast<std::size_t>(config.fft_size));
  for (std::size_t c = 0; c < signal.channels(); ++c) {
    auto x = signal.channel(c);
    for (std::size_t t = 0; t < frames; ++t) {
      std::fill(buf.begin(), buf.end(), 0.0);
      const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t) * hop - pad;
      for (std::size_t i = 0; i < window.size(); ++i) {
        const std::ptrdiff_t idx = start + static_cast<std::ptrdiff_t>(i);
        if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(n)) buf[i] = window[i] * x[static_cast<std::size_t>(idx)];
      }
      fft.forward(buf, out.frame(c, t));
    }
  }
  return out;
}

TimeSignal synthesize(const Spectrogram& spec) {
  if (!spec.all_finite()) throw data_error("non-finite spectrogram");
  const auto& config = spec.config();
  config.validate();
  const auto frames = spec.frames();
  const auto pad = static_cast<std::size_t>(config.edge_pad());
  const auto hop = static_cast<std::size_t>(config.hop);
  const auto win_len = static_cast<std::size_t>(config.window_len);
  const std::size_t padded = frames == 0 ? 0 : (frames - 1) * hop + win_len;
  const std::size_t length = spec.signal_length().value_or(padded > pad ? padded - pad : 0);
  const auto window = make_window(config);
  detail::RealFft fft(config.fft_size);

  // Sum of squared windows at each padded sample; constant (= 2) in the interior for sqrt-Hann at 4x overlap.
  std::vector<double> norm(padded, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < win_len; ++i) norm[t * hop + i] += window[i] * window[i];
  }

  TimeSignal out(spec.channels(), length, config.sample_rate_hz);
  std::vector<double> acc(padded);
  std::vector<double> buf(static_cast<std::size_t>(config.fft_size));
  for (std::size_t c = 0; c < spec.channels(); ++c) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t t = 0; t < frames; ++t) {
      fft.inverse(spec.frame(c, t), buf);
      for (std::size_t i = 0; i < win_len; ++i) acc[t * hop + i] += window[i] * buf[i];
    }
    auto y = out.channel(c);
    for (std::size_t i = 0; i < length; ++i) {
      const std::size_t idx = i + pad;
      if (idx < padded && norm[idx] > 1e-12) y[i] = acc[idx] / norm[idx];
    }
  }
  return out;
}

}  // namespace cpred
