#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cpred/signal.hpp"

namespace cpred {

using cdouble = std::complex<double>;

enum class WindowKind { sqrt_hann };

struct StftConfig {
  int window_len = 256;  // 32 ms at 8 kHz
  int hop = 64;          // 8 ms at 8 kHz
  int fft_size = 256;
  WindowKind window = WindowKind::sqrt_hann;
  int sample_rate_hz = 8000;

  int num_bins() const noexcept { return fft_size / 2 + 1; }
  /// Zero samples prepended (and at most appended) so every input sample sees a full set of frames.
  int edge_pad() const noexcept { return window_len - hop; }

  /// Throws "bad config" when the invariants do not hold.
  void validate() const;

  /// Defaults scaled to a sample rate: 32 ms window, 8 ms hop, FFT size the next power of two.
  static StftConfig for_rate(int sample_rate_hz);

  bool operator==(const StftConfig&) const = default;
};

/// Complex tensor indexed [channel, frame, bin].
class Spectrogram {
 public:
  Spectrogram() = default;
  Spectrogram(std::size_t channels, std::size_t frames, StftConfig config,
              std::optional<std::size_t> signal_length = std::nullopt);

  std::size_t channels() const noexcept { return channels_; }
  std::size_t frames() const noexcept { return frames_; }
  std::size_t bins() const noexcept { return bins_; }
  const StftConfig& config() const noexcept { return config_; }
  std::optional<std::size_t> signal_length() const noexcept { return length_; }

  cdouble& at(std::size_t c, std::size_t t, std::size_t f) { return data_[(c * frames_ + t) * bins_ + f]; }
  const cdouble& at(std::size_t c, std::size_t t, std::size_t f) const {
    return data_[(c * frames_ + t) * bins_ + f];
  }

  /// One frame of one channel, all bins.
  std::span<cdouble> frame(std::size_t c, std::size_t t) { return {data_.data() + (c * frames_ + t) * bins_, bins_}; }
  std::span<const cdouble> frame(std::size_t c, std::size_t t) const {
    return {data_.data() + (c * frames_ + t) * bins_, bins_};
  }

  std::vector<cdouble>& raw() noexcept { return data_; }
  const std::vector<cdouble>& raw() const noexcept { return data_; }

  /// Single-channel copy of channel c.
  Spectrogram extract(std::size_t c) const;
  /// Same geometry, all zeros, with the given channel count.
  Spectrogram zeros_like(std::size_t channels) const;
  bool same_shape(const Spectrogram& other) const noexcept {
    return channels_ == other.channels_ && frames_ == other.frames_ && bins_ == other.bins_;
  }
  bool all_finite() const noexcept;
  double energy() const noexcept;

  Spectrogram& operator+=(const Spectrogram& other);
  Spectrogram& operator-=(const Spectrogram& other);
  Spectrogram& operator*=(cdouble scale);

 private:
  std::size_t channels_ = 0;
  std::size_t frames_ = 0;
  std::size_t bins_ = 0;
  StftConfig config_{};
  std::optional<std::size_t> length_;
  std::vector<cdouble> data_;
};

Spectrogram operator+(Spectrogram a, const Spectrogram& b);
Spectrogram operator-(Spectrogram a, const Spectrogram& b);
Spectrogram operator*(cdouble scale, Spectrogram a);

/// Number of frames analyze() produces for a signal of the given length.
std::size_t frame_count(std::size_t signal_length, const StftConfig& config);

/// The analysis/synthesis window (square-root periodic Hann).
std::vector<double> make_window(const StftConfig& config);

/// One-sided STFT of every channel. Frame t covers padded samples [t*hop, t*hop + window_len).
Spectrogram analyze(const TimeSignal& signal, const StftConfig& config);

/// Weighted overlap-add inverse of analyze(). Trims to the recorded signal length when known.
TimeSignal synthesize(const Spectrogram& spec);

}  // namespace cpred
