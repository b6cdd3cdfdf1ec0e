#pragma once

#include <complex>
#include <span>

namespace cpred::detail {

// Real-input FFT of a fixed size backed by FFTW. Plans are created once per size
// under a global lock; execution is reentrant.
class RealFft {
 public:
  explicit RealFft(int size);

  int size() const noexcept { return size_; }

  // in: size samples, out: size/2 + 1 bins. Unnormalized.
  void forward(std::span<const double> in, std::span<std::complex<double>> out) const;
  // in: size/2 + 1 bins, out: size samples. Scaled by 1/size.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out) const;

 private:
  int size_;
  void* forward_plan_;
  void* inverse_plan_;
};

int next_pow2(int n);

}  // namespace cpred::detail
