#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "construct.hpp"
#include "cpred/linpred.hpp"
#include "cpred/metrics.hpp"
#include "cpred/simulate.hpp"
#include "oracles.hpp"

using namespace cpred;
namespace cs = cpred::construct;

namespace {

struct LsInstance {
  std::vector<cdouble> d;
  oracle::CMatrix x;
  std::vector<double> w;
  Eigen::MatrixXcd xe;
};

LsInstance random_ls(std::size_t t_len, std::size_t m, std::mt19937_64& rng) {
  LsInstance in;
  std::uniform_real_distribution<double> u(0.05, 5.0);
  in.xe.resize(static_cast<Eigen::Index>(t_len), static_cast<Eigen::Index>(m));
  in.x.assign(t_len, std::vector<cdouble>(m));
  for (std::size_t t = 0; t < t_len; ++t) {
    in.d.push_back(oracle::complex_gauss(rng));
    in.w.push_back(u(rng));
    for (std::size_t i = 0; i < m; ++i) in.xe(t, i) = in.x[t][i] = oracle::complex_gauss(rng);
  }
  return in;
}

double max_abs_diff(const Eigen::VectorXcd& a, const std::vector<cdouble>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) worst = std::max(worst, std::abs(a(static_cast<Eigen::Index>(i)) - b[i]));
  return worst;
}

double norm(const std::vector<cdouble>& v) {
  double s = 0.0;
  for (auto c : v) s += std::norm(c);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("weight_floor") {
  SUBCASE("documented example") {
    RealGrid p(1, 2);
    p(0, 0) = 4.0;
    p(0, 1) = 0.001;
    const auto w = weight_floor(p, 0.001);
    CHECK(w(0, 0) == 4.0);
    CHECK(w(0, 1) == doctest::Approx(0.004));
  }
  SUBCASE("entries above the floor are unchanged") {
    RealGrid p(2, 2);
    p.values = {1.0, 0.5, 0.001, 0.2};
    const auto w = weight_floor(p);
    CHECK(w.grid().values == p.values);
  }
  SUBCASE("invariant to changes below the floor") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RealGrid p(20, 7);
    for (double& v : p.values) v = u(rng);
    p(0, 0) = 2.0;
    RealGrid q = p;
    for (double& v : q.values) {
      if (v < 2e-3) v *= 0.5 * u(rng);
    }
    CHECK(weight_floor(p).grid().values == weight_floor(q).grid().values);
  }
  SUBCASE("floor taken from a reference peak") {
    RealGrid p(1, 3);
    p.values = {0.0, 0.5, 3.0};
    const auto w = weight_floor(p, 0.1, 10.0);
    CHECK(w.grid().values == std::vector<double>{1.0, 1.0, 3.0});
    CHECK(weight_floor(RealGrid(2, 2), 0.1, 1.0).grid().values == std::vector<double>(4, 0.1));
    CHECK_THROWS_WITH(weight_floor(p, 0.1, 0.0), "silent spectrogram");
  }
  SUBCASE("errors") {
    CHECK_THROWS_WITH(weight_floor(RealGrid(3, 3)), "silent spectrogram");
    RealGrid p(1, 1, 1.0);
    CHECK_THROWS_AS(weight_floor(p, 0.0), Error);
    CHECK_THROWS_AS(weight_floor(p, -1.0), Error);
  }
  CHECK(kDefaultEpsilon == 1e-3);
}

TEST_CASE("solve_weighted_ls trivial cases") {
  std::mt19937_64 rng(1);
  std::vector<cdouble> x(30);
  std::vector<double> w(30);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  Eigen::MatrixXcd xe(30, 1);
  for (std::size_t t = 0; t < 30; ++t) {
    x[t] = oracle::complex_gauss(rng);
    w[t] = u(rng);
    xe(static_cast<Eigen::Index>(t), 0) = x[t];
  }
  SUBCASE("self prediction") {
    const auto g = solve_weighted_ls(x, xe, w, 0.0);
    CHECK(std::abs(g(0) - 1.0) <= 1e-12);
  }
  SUBCASE("scaled relation") {
    const cdouble alpha(0.3, -1.7);
    std::vector<cdouble> d(x);
    for (auto& v : d) v *= alpha;
    const auto g = solve_weighted_ls(d, xe, w, 0.0);
    for (std::size_t t = 0; t < 30; ++t) CHECK(std::abs(std::conj(g(0)) * x[t] - d[t]) <= 1e-12);
  }
}

TEST_CASE("solve_weighted_ls matches the naive normal equations") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto in = random_ls(64, 5, rng);
    for (double loading : {0.0, 1e-5, 0.1}) {
      const auto g = solve_weighted_ls(in.d, in.xe, in.w, loading);
      const auto ref = oracle::naive_weighted_ls(in.d, in.x, in.w, loading);
      CHECK(max_abs_diff(g, ref) / norm(ref) <= 1e-10);
    }
  }
}

TEST_CASE("solve_weighted_ls returns a minimum of the loaded objective") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto in = random_ls(40, 6, rng);
    const double loading = 1e-3;
    const auto ge = solve_weighted_ls(in.d, in.xe, in.w, loading);
    std::vector<cdouble> g(ge.data(), ge.data() + ge.size());
    double trace = 0.0;
    for (std::size_t t = 0; t < in.d.size(); ++t) {
      for (auto v : in.x[t]) trace += std::norm(v) / in.w[t];
    }
    const double delta = loading * trace / 6.0;
    const double best = oracle::weighted_objective(in.d, in.x, in.w, g, delta);
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (cdouble step : {cdouble(1e-4, 0), cdouble(-1e-4, 0), cdouble(0, 1e-4), cdouble(0, -1e-4)}) {
        auto p = g;
        p[i] += step;
        CHECK(oracle::weighted_objective(in.d, in.x, in.w, p, delta) >= best);
      }
    }
  }
}

TEST_CASE("solve_weighted_ls degenerate inputs") {
  std::vector<cdouble> d(10, 1.0);
  std::vector<double> w(10, 1.0);
  Eigen::MatrixXcd x = Eigen::MatrixXcd::Zero(10, 2);
  x.col(0).setOnes();
  x.col(1).setOnes();
  CHECK_THROWS_WITH(solve_weighted_ls(d, x, w, 0.0), "rank-deficient normal equations");
  CHECK_NOTHROW(solve_weighted_ls(d, x, w, 1e-5));

  const Eigen::MatrixXcd zero = Eigen::MatrixXcd::Zero(10, 3);
  CHECK_THROWS_WITH(solve_weighted_ls(d, zero, w, 0.0), "rank-deficient normal equations");
  CHECK(solve_weighted_ls(d, zero, w, 1e-5).norm() == 0.0);

  std::vector<double> bad(10, 1.0);
  bad[3] = 0.0;
  CHECK_THROWS_AS(solve_weighted_ls(d, x, bad, 1e-5), Error);
  CHECK_THROWS_AS(solve_weighted_ls(d, x, std::span(w).first(9), 1e-5), Error);
}

TEST_CASE("stacked regressors follow the channel-interleaved lag layout") {
  const auto s = cs::white(2, 12, 4);
  const auto x = stacked_regressors(s, 3, 4, 2);
  REQUIRE(x.rows() == 12);
  REQUIRE(x.cols() == 8);
  for (int t = 0; t < 12; ++t) {
    for (int k = 0; k < 4; ++k) {
      for (int p = 0; p < 2; ++p) {
        const int src = t - 2 - k;
        const cdouble expected = src >= 0 ? s.at(p, src, 3) : cdouble{};
        CHECK(x(t, k * 2 + p) == expected);
      }
    }
  }
}

TEST_CASE("wpe recovers an exact delayed multichannel predictor") {
  const int taps = 8, delay = 3;
  const auto scene = cs::delayed_scene(2000, taps, delay, 11);
  const auto weights = WeightMap::uniform(2000, scene.mixture.bins());
  const auto filter = wpe_filter(scene.mixture, weights, 0, {taps, delay, 0.0});
  CHECK(filter.taps.cols() == 2 * taps);
  CHECK(filter.delay == delay);
  double worst = 0.0;
  for (std::size_t f = 0; f < scene.mixture.bins(); ++f) {
    const auto g0 = filter.channel_taps(f, 0);
    const auto g1 = filter.channel_taps(f, 1);
    for (int k = 0; k < taps; ++k) {
      worst = std::max(worst, std::abs(g0(k)));
      worst = std::max(worst, std::abs(std::conj(g1(k)) - scene.h[f][k]));
    }
  }
  CHECK(worst <= 1e-5);
  const auto out = wpe_dereverb(scene.mixture, filter, 0);
  CHECK(cs::relative_rms(out.output, scene.unpredictable) <= 1e-4);
  CHECK(out.algorithm == Algorithm::wpe);
}

TEST_CASE("wpe on a single-channel subband reverberation model") {
  // Y = S + sum_{k=D}^{D+7} h_k S(t-k). Fitting M taps to T frames of white S leaves an
  // estimation error of about sqrt(M / T) relative RMS, so the output is checked against that.
  const int delay = 3;
  const std::size_t frames = 2000;
  const auto s = cs::white(1, frames, 21);
  const auto h = cs::random_taps(s.bins(), 8, 22, false, 0.15);
  const auto y = s + cs::subband_convolve(s, h, delay);
  const auto filter = wpe_filter(y, WeightMap::uniform(frames, s.bins()), 0, {kDefaultWpeTaps, delay, 1e-5});
  const auto out = wpe_dereverb(y, filter, 0);
  const double floor = std::sqrt(static_cast<double>(kDefaultWpeTaps) / frames);
  CHECK(cs::relative_rms(out.output, s) <= 1.1 * floor);
  CHECK(cs::relative_rms(y, s) > 2.0 * floor);
}

TEST_CASE("wpe on uncorrelated frames predicts almost nothing") {
  const auto y = cs::white(1, 1500, 31);
  const auto filter = wpe_filter(y, WeightMap::uniform(1500, y.bins()), 0, {10, 5, 1e-5});
  const double mean_tap_power = filter.taps.squaredNorm() / static_cast<double>(filter.taps.size());
  CHECK(mean_tap_power < 0.01);
}

TEST_CASE("wpe_dereverb basics") {
  const auto y = cs::white(2, 50, 41);
  const auto zero = PredictionFilter::zeros(y.bins(), 4, 3, 2);
  const auto out = wpe_dereverb(y, zero, 1);
  CHECK(out.output.raw() == y.extract(1).raw());

  SUBCASE("linear in the mixture for a fixed filter") {
    auto f = PredictionFilter::zeros(y.bins(), 4, 3, 2);
    std::mt19937_64 rng(5);
    for (Eigen::Index i = 0; i < f.taps.size(); ++i) f.taps.data()[i] = oracle::complex_gauss(rng);
    const auto y2 = cs::white(2, 50, 42);
    const auto a = wpe_dereverb(y, f, 0).output;
    const auto b = wpe_dereverb(y2, f, 0).output;
    const auto c = wpe_dereverb(cdouble(2.0, 1.0) * y + y2, f, 0).output;
    CHECK(cs::relative_rms(c, cdouble(2.0, 1.0) * a + b) <= 1e-12);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(wpe_dereverb(y, zero, 2), Error);
    CHECK_THROWS_AS(wpe_dereverb(y, PredictionFilter::zeros(y.bins(), 4, 0, 2), 0), Error);
    CHECK_THROWS_AS(wpe_filter(y, WeightMap::uniform(50, y.bins()), 0, {4, 0, 1e-5}), Error);
    CHECK_THROWS_AS(wpe_filter(y, WeightMap::uniform(50, y.bins()), 5), Error);
    CHECK_THROWS_AS(wpe_filter(y, WeightMap::uniform(49, y.bins()), 0), Error);
  }
  CHECK(kDefaultWpeTaps == 37);
  CHECK(kDefaultWpeDelay == 3);
}

TEST_CASE("classic wpe") {
  const auto s = cs::white(1, 400, 51);
  const auto h = cs::random_taps(s.bins(), 12, 52, false, 0.5);
  const auto y = cs::stack({s + cs::subband_convolve(s, h, 2), cs::white(1, 400, 53)});
  const WpeParams params{6, 2, 1e-5};

  SUBCASE("one iteration is the unrolled definition") {
    const auto classic = wpe_classic(y, 0, params, 1);
    const auto filter = wpe_filter(y, weight_floor(power(y, 0)), 0, params);
    const auto direct = wpe_dereverb(y, filter, 0);
    CHECK(classic.result.output.raw() == direct.output.raw());
    CHECK(classic.objective_trace.size() == 2);
  }
  SUBCASE("objective does not increase") {
    const auto classic = wpe_classic(y, 0, {6, 2, 0.0}, 4);
    REQUIRE(classic.objective_trace.size() == 8);
    for (std::size_t i = 1; i < classic.objective_trace.size(); ++i) {
      CHECK(classic.objective_trace[i] <= classic.objective_trace[i - 1] + 1e-9 * std::abs(classic.objective_trace[i - 1]));
    }
  }
  CHECK_THROWS_AS(wpe_classic(y, 0, params, 0), Error);
}

TEST_CASE("classic wpe improves SI-SDR on a simulated reverberant utterance") {
  SceneSpec spec;
  spec.num_speakers = 1;
  spec.num_channels = 2;
  spec.t60_seconds = 0.4;
  spec.noise_snr_db = std::numeric_limits<double>::infinity();
  spec.duration_seconds = 3.0;
  spec.seed = 99;
  const auto scene = make_scene(spec);
  const auto y = analyze(scene.mixture, StftConfig{});
  const auto out = wpe_classic(y, 0, {10, 3, 1e-5}, 3);
  const auto enhanced = synthesize(out.result.output);
  const auto ref = scene.direct[0].extract(0);
  CHECK(si_sdr(enhanced, ref) > si_sdr(scene.mixture.extract(0), ref));
}

TEST_CASE("fcp filter recovery and dereverberation") {
  const auto s = cs::white(1, 2000, 61);
  const auto h = cs::random_taps(s.bins(), 8, 62, true);
  const auto y = cs::subband_convolve(s, h);
  const auto filter = fcp_filter(y, s, WeightMap::uniform(2000, s.bins()), {kDefaultFcpTaps, 0.0});
  REQUIRE(filter.taps.cols() == 40);
  double worst = 0.0;
  for (std::size_t f = 0; f < s.bins(); ++f) {
    for (int k = 0; k < 40; ++k) {
      const cdouble truth = k < 8 ? h[f][k] : cdouble{};
      worst = std::max(worst, std::abs(std::conj(filter.taps(f, k)) - truth));
    }
  }
  CHECK(worst <= 1e-6);
  const auto out = fcp_dereverb(y, s, filter, 0);
  CHECK(cs::relative_rms(out.output, s) <= 1e-4);
  CHECK(kDefaultFcpTaps == 40);
}

TEST_CASE("fcp trivial cases") {
  const auto y = cs::white(1, 80, 71);
  SUBCASE("self prediction") {
    const auto filter = fcp_filter(y, y, WeightMap::uniform(80, y.bins()), {1, 0.0});
    for (std::size_t f = 0; f < y.bins(); ++f) CHECK(std::abs(filter.taps(f, 0) - 1.0) <= 1e-12);
  }
  SUBCASE("lag-0 identity filter leaves the mixture") {
    const auto est = cs::white(1, 80, 72);
    const auto out = fcp_dereverb(y, est, PredictionFilter::identity(y.bins(), 5));
    CHECK(cs::relative_rms(out.output, y) <= 1e-15);
  }
  SUBCASE("residual depends only on the target speaker") {
    const auto est = cs::white(1, 80, 73);
    const auto filter = fcp_filter(y, est, weight_floor(power(y)));
    const auto other = cs::white(1, 80, 74);
    const auto a = fcp_dereverb(y, est, filter).output;
    const auto b = fcp_dereverb(y + other, est, filter).output;
    CHECK(cs::relative_rms(y - a, (y + other) - b) <= 1e-12);
  }
  SUBCASE("errors") {
    const auto zero = y.zeros_like(1);
    CHECK_THROWS_WITH(fcp_filter(y, zero, WeightMap::uniform(80, y.bins()), {4, 0.0}), "degenerate regressor");
    CHECK_NOTHROW(fcp_filter(y, zero, WeightMap::uniform(80, y.bins()), {4, 1e-5}));
    CHECK_THROWS_AS(fcp_filter(y, cs::white(1, 81, 1), WeightMap::uniform(80, y.bins())), Error);
    CHECK_THROWS_AS(fcp_dereverb(y, cs::white(1, 79, 1), PredictionFilter::identity(y.bins(), 2)), Error);
    CHECK_THROWS_AS(fcp_filter(y, y, WeightMap::uniform(80, y.bins()), {0, 1e-5}), Error);
    CHECK_THROWS_AS(fcp_filter(cs::white(2, 80, 1), y, WeightMap::uniform(80, y.bins())), Error);
  }
}

TEST_CASE("fcp filter is unaffected by regressor-orthogonal interference") {
  const int taps = 6;
  const auto s = cs::white(1, 300, 81);
  const auto x = cs::subband_convolve(s, cs::random_taps(s.bins(), 4, 82, true));
  auto n = cs::white(1, 300, 83);
  for (std::size_t f = 0; f < s.bins(); ++f) {
    const Eigen::MatrixXcd a = stacked_regressors(s, f, taps, 0);
    Eigen::VectorXcd v(300);
    for (int t = 0; t < 300; ++t) v(t) = n.at(0, t, f);
    v -= a * (a.adjoint() * a).ldlt().solve(a.adjoint() * v);
    for (int t = 0; t < 300; ++t) n.at(0, t, f) = v(t);
  }
  const auto w = WeightMap::uniform(300, s.bins());
  const auto clean = fcp_filter(x, s, w, {taps, 0.0});
  const auto noisy = fcp_filter(x + n, s, w, {taps, 0.0});
  CHECK((clean.taps - noisy.taps).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("cfcp") {
  const auto s1 = cs::white(1, 300, 91), s2 = cs::white(1, 300, 92);
  const auto y = cs::subband_convolve(s1, cs::random_taps(s1.bins(), 5, 93, true)) +
                 cs::subband_convolve(s2, cs::random_taps(s1.bins(), 5, 94, true));
  const std::vector<Spectrogram> est{s1, s2};
  SUBCASE("single speaker equals fcp") {
    const auto f = fcp_filter(y, s1, weight_floor(power(y)));
    const auto c = cfcp_dereverb(y, std::span(est).first(1), std::vector{f});
    CHECK(c[0].output.raw() == fcp_dereverb(y, s1, f).output.raw());
  }
  SUBCASE("identity filters leave the mixture") {
    const std::vector filters(2, PredictionFilter::identity(y.bins(), 3));
    const auto out = cfcp_dereverb(y, est, filters);
    REQUIRE(out.size() == 2);
    CHECK(cs::relative_rms(out[0].output, y) <= 1e-15);
    CHECK(out[0].output.raw() == out[1].output.raw());
    CHECK(out[1].speaker == 1);
    CHECK(out[1].algorithm == Algorithm::cfcp);
  }
  SUBCASE("speaker count mismatch") {
    const std::vector filters(1, PredictionFilter::identity(y.bins(), 3));
    CHECK_THROWS_AS(cfcp_dereverb(y, est, filters), Error);
  }
}

TEST_CASE("cfcp and msfcp on time-disjoint exact-subband speakers") {
  // Speaker 2 starts after speaker 1's regressors have fully decayed, so each fit is exact.
  const int taps = 10;
  const auto s1 = cs::gate(cs::white(1, 400, 101), 0, 150);
  const auto s2 = cs::gate(cs::white(1, 400, 102), 170, 320);
  const auto x1 = cs::subband_convolve(s1, cs::random_taps(s1.bins(), 6, 103, true));
  const auto x2 = cs::subband_convolve(s2, cs::random_taps(s1.bins(), 6, 104, true));
  const auto y = x1 + x2;
  const std::vector<Spectrogram> est{s1, s2};
  const FcpParams params{taps, 0.0};

  const auto f1 = fcp_run(y, s1, params);
  CHECK(cs::relative_rms(f1.output, s1 + x2) <= 1e-8);

  std::vector<PredictionFilter> filters{fcp_filter(y, s1, weight_floor(power(y)), params),
                                        fcp_filter(y, s2, weight_floor(power(y)), params)};
  const auto c = cfcp_dereverb(y, est, filters);
  CHECK(cs::relative_rms(c[0].output, s1 + s2) <= 1e-8);

  const auto ms = msfcp_run(y, est, params, kDefaultEpsilon, 2);
  CHECK(cs::relative_rms(ms[0].output, s1) <= 1e-8);
  CHECK(cs::relative_rms(ms[1].output, s2) <= 1e-8);
}

TEST_CASE("msfcp") {
  const auto s1 = cs::white(1, 500, 111), s2 = cs::white(1, 500, 112);
  const auto x1 = cs::subband_convolve(s1, cs::random_taps(s1.bins(), 5, 113, true));
  const auto x2 = cs::subband_convolve(s2, cs::random_taps(s1.bins(), 5, 114, true));
  const auto y = x1 + x2;
  const std::vector<Spectrogram> est{s1, s2};
  const FcpParams params{8, 1e-5};

  SUBCASE("one step is plain fcp") {
    const auto ms = msfcp_run(y, est, params, kDefaultEpsilon, 1);
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(ms[c].output.raw() == fcp_run(y, est[c], params, kDefaultEpsilon, static_cast<int>(c)).output.raw());
    }
  }
  SUBCASE("a single speaker refits the same filter") {
    const auto one = msfcp_run(y, std::span(est).first(1), params, kDefaultEpsilon, 1);
    const auto two = msfcp_run(y, std::span(est).first(1), params, kDefaultEpsilon, 2);
    CHECK((one[0].filter.taps - two[0].filter.taps).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("the second step removes the other speaker") {
    const auto fcp = msfcp_run(y, est, params, kDefaultEpsilon, 1);
    const auto ms = msfcp_run(y, est, params, kDefaultEpsilon, 2);
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(cs::relative_rms(ms[c].output, est[c]) < cs::relative_rms(fcp[c].output, est[c]));
      CHECK(ms[c].algorithm == Algorithm::msfcp);
    }
  }
  CHECK_THROWS_AS(msfcp_run(y, est, params, kDefaultEpsilon, 0), Error);
  CHECK_THROWS_AS(msfcp_run(y, {}, params), Error);
  CHECK(kDefaultMsFcpSteps == 2);
}

TEST_CASE("filter file round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "cpred_filter_test";
  std::filesystem::create_directories(dir);
  auto f = PredictionFilter::zeros(9, 3, 2, 2);
  std::mt19937_64 rng(1);
  for (Eigen::Index i = 0; i < f.taps.size(); ++i) f.taps.data()[i] = oracle::complex_gauss(rng);
  write_filter(dir / "f.bin", f);
  const auto g = read_filter(dir / "f.bin");
  CHECK(g.taps == f.taps);
  CHECK(g.taps_per_channel == 3);
  CHECK(g.delay == 2);
  CHECK(g.channels == 2);
  CHECK(std::filesystem::file_size(dir / "f.bin") == 4 + 6 * 4 + 9 * 6 * 16);

  std::ofstream(dir / "bad.bin") << "XXXX";
  CHECK_THROWS_AS(read_filter(dir / "bad.bin"), Error);
}
