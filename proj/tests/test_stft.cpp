#include <doctest.h>

#include <cmath>
#include <random>

#include "cpred/stft.hpp"
#include "oracles.hpp"

using namespace cpred;

namespace {

TimeSignal random_signal(std::size_t n, std::uint64_t seed, std::size_t channels = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  TimeSignal s(channels, n, 8000);
  for (double& v : s.raw()) v = g(rng);
  return s;
}

}  // namespace

TEST_CASE("default configuration is 32 ms / 8 ms at 8 kHz") {
  const StftConfig c;
  CHECK(c.window_len == 256);
  CHECK(c.hop == 64);
  CHECK(c.num_bins() == 129);
  CHECK(StftConfig::for_rate(8000) == c);
  CHECK(StftConfig::for_rate(16000).window_len == 512);
}

TEST_CASE("invalid configurations are rejected") {
  StftConfig c;
  c.hop = 300;
  CHECK_THROWS_WITH(c.validate(), "bad config");
  c = StftConfig{};
  c.fft_size = 300;
  CHECK_THROWS_WITH(c.validate(), "bad config");
  c = StftConfig{};
  c.fft_size = 128;
  CHECK_THROWS_WITH(analyze(random_signal(1000, 1), c), "bad config");
}

TEST_CASE("empty input is an error") {
  CHECK_THROWS_WITH(analyze(TimeSignal(1, 0, 8000), StftConfig{}), "empty input");
}

TEST_CASE("all-zero signal gives an all-zero spectrogram and back") {
  const TimeSignal x(1, 8000, 8000);
  const auto spec = analyze(x, StftConfig{});
  CHECK(spec.energy() == 0.0);
  CHECK(spec.bins() == 129);
  const auto y = synthesize(spec);
  CHECK(y.samples() == 8000);
  for (double v : y.raw()) CHECK(v == 0.0);
}

TEST_CASE("impulse magnitude equals the window value at its position") {
  const StftConfig cfg;
  TimeSignal x(1, 2000, 8000);
  const std::size_t n0 = 1000;
  x.channel(0)[n0] = 1.0;
  const auto spec = analyze(x, cfg);
  const auto w = make_window(cfg);
  for (std::size_t t = 0; t < spec.frames(); ++t) {
    const auto start = static_cast<long>(t * 64) - cfg.edge_pad();
    const long pos = static_cast<long>(n0) - start;
    const double expected = (pos >= 0 && pos < 256) ? w[static_cast<std::size_t>(pos)] : 0.0;
    for (std::size_t f = 0; f < spec.bins(); ++f) CHECK(std::abs(spec.at(0, t, f)) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("analysis followed by synthesis reconstructs the input") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t n = 256 + seed * 997;
    const auto x = random_signal(n, seed, 2);
    const auto y = synthesize(analyze(x, StftConfig{}));
    REQUIRE(y.samples() == n);
    REQUIRE(y.channels() == 2);
    CHECK(oracle::relative_error(y.raw(), x.raw()) <= 1e-6);
  }
}

TEST_CASE("synthesis without length metadata keeps the covered support") {
  const auto x = random_signal(1000, 3);
  const auto spec = analyze(x, StftConfig{});
  Spectrogram bare(1, spec.frames(), spec.config());
  bare.raw() = spec.raw();
  const auto y = synthesize(bare);
  REQUIRE(y.samples() >= 1000);
  for (std::size_t i = 0; i < 1000; ++i) CHECK(y.channel(0)[i] == doctest::Approx(x.channel(0)[i]).epsilon(1e-9));
}

TEST_CASE("both transforms are linear") {
  const auto a = random_signal(4000, 11);
  const auto b = random_signal(4000, 12);
  TimeSignal sum(1, 4000, 8000);
  for (std::size_t i = 0; i < 4000; ++i) sum.raw()[i] = 2.5 * a.raw()[i] - b.raw()[i];
  const auto sa = analyze(a, StftConfig{});
  const auto sb = analyze(b, StftConfig{});
  const auto ss = analyze(sum, StftConfig{});
  const auto combo = cdouble(2.5) * sa - sb;
  double num = 0.0;
  for (std::size_t i = 0; i < ss.raw().size(); ++i) num += std::norm(ss.raw()[i] - combo.raw()[i]);
  CHECK(std::sqrt(num / ss.energy()) <= 1e-9);

  const auto ya = synthesize(sa), yb = synthesize(sb), yc = synthesize(combo);
  std::vector<double> lin(4000);
  for (std::size_t i = 0; i < 4000; ++i) lin[i] = 2.5 * ya.raw()[i] - yb.raw()[i];
  CHECK(oracle::relative_error(yc.raw(), lin) <= 1e-9);
}

TEST_CASE("spectrogram energy is a fixed multiple of signal energy") {
  // Two-sided DFT energy of every frame sums to fft_size * sum_n x^2 * sum_k w^2(n - k hop),
  // and the squared sqrt-Hann windows overlap-add to 2.
  const StftConfig cfg;
  const auto x = random_signal(8000, 21);
  const auto spec = analyze(x, cfg);
  double spec_energy = 0.0;
  for (std::size_t t = 0; t < spec.frames(); ++t) {
    for (std::size_t f = 0; f < spec.bins(); ++f) {
      const double weight = (f == 0 || f + 1 == spec.bins()) ? 1.0 : 2.0;
      spec_energy += weight * std::norm(spec.at(0, t, f));
    }
  }
  double time_energy = 0.0;
  for (double v : x.raw()) time_energy += v * v;
  CHECK(spec_energy / (cfg.fft_size * 2.0 * time_energy) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("non-finite spectrograms are rejected") {
  auto spec = analyze(random_signal(1000, 5), StftConfig{});
  spec.at(0, 3, 7) = {std::nan(""), 0.0};
  CHECK_THROWS_WITH(synthesize(spec), "non-finite spectrogram");
}

TEST_CASE("frame t covers padded samples [t*hop, t*hop + window)") {
  const StftConfig cfg;
  CHECK(frame_count(1, cfg) == 4);
  CHECK(frame_count(64, cfg) == 4);
  CHECK(frame_count(65, cfg) == 5);
  CHECK(frame_count(8000, cfg) == (192 + 8000 - 1) / 64 + 1);
}
