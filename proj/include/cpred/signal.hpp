#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cpred/error.hpp"

namespace cpred {

/// Multichannel sampled waveform. All channels have the same length.
class TimeSignal {
 public:
  TimeSignal() = default;
  TimeSignal(std::size_t channels, std::size_t samples, int sample_rate_hz)
      : channels_(channels), samples_(samples), rate_(sample_rate_hz), data_(channels * samples, 0.0) {}

  static TimeSignal mono(std::vector<double> samples, int sample_rate_hz) {
    TimeSignal s(1, samples.size(), sample_rate_hz);
    s.data_ = std::move(samples);
    return s;
  }

  std::size_t channels() const noexcept { return channels_; }
  std::size_t samples() const noexcept { return samples_; }
  int sample_rate() const noexcept { return rate_; }
  bool empty() const noexcept { return channels_ == 0 || samples_ == 0; }

  std::span<double> channel(std::size_t c) { return {data_.data() + c * samples_, samples_}; }
  std::span<const double> channel(std::size_t c) const { return {data_.data() + c * samples_, samples_}; }

  /// Copy of a single channel as a mono signal.
  TimeSignal extract(std::size_t c) const {
    if (c >= channels_) throw data_error("channel index out of range");
    auto ch = channel(c);
    return mono({ch.begin(), ch.end()}, rate_);
  }

  std::vector<double>& raw() noexcept { return data_; }
  const std::vector<double>& raw() const noexcept { return data_; }

 private:
  std::size_t channels_ = 0;
  std::size_t samples_ = 0;
  int rate_ = 8000;
  std::vector<double> data_;
};

}  // namespace cpred
