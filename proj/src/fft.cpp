#include "fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <utility>
#include <vector>

namespace cpred::detail {
namespace {

struct PlanPair {
  fftw_plan forward;
  fftw_plan inverse;
};

std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

// Plans live for the process lifetime.
PlanPair plans_for(int n) {
  static std::map<int, PlanPair> cache;
  std::lock_guard lock(plan_mutex());
  if (auto it = cache.find(n); it != cache.end()) return it->second;
  std::vector<double> re(static_cast<std::size_t>(n));
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(n / 2 + 1));
  auto* cplx = reinterpret_cast<fftw_complex*>(spec.data());
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  PlanPair p{fftw_plan_dft_r2c_1d(n, re.data(), cplx, flags), fftw_plan_dft_c2r_1d(n, cplx, re.data(), flags)};
  cache.emplace(n, p);
  return p;
}

}  // namespace

RealFft::RealFft(int size) : size_(size) {
  auto p = plans_for(size);
  forward_plan_ = p.forward;
  inverse_plan_ = p.inverse;
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) const {
  // r2c does not modify its input, the cast only satisfies the C signature.
  fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_), const_cast<double*>(in.data()),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) const {
  // c2r destroys its input.
  std::vector<std::complex<double>> scratch(in.begin(), in.end());
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_), reinterpret_cast<fftw_complex*>(scratch.data()),
                       out.data());
  const double scale = 1.0 / size_;
  for (auto& v : out) v *= scale;
}

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace cpred::detail
