#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cpred/wav.hpp"

using namespace cpred;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "cpred_wav_test";
  fs::create_directories(dir);
  return dir / name;
}

TimeSignal ramp(std::size_t channels, std::size_t n) {
  TimeSignal s(channels, n, 8000);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < n; ++i) s.channel(c)[i] = (static_cast<double>(i % 200) - 100.0) / 128.0 * (c + 1) / 2.0;
  }
  return s;
}

}  // namespace

TEST_CASE("float32 round trip is exact for float-representable samples") {
  const auto path = temp_path("f32.wav");
  const auto s = ramp(3, 1234);
  write_wav(path, s, SampleFormat::float32);
  const auto r = read_wav(path);
  CHECK(r.channels() == 3);
  CHECK(r.samples() == 1234);
  CHECK(r.sample_rate() == 8000);
  CHECK(r.raw() == s.raw());
}

TEST_CASE("pcm16 round trip is within one quantization step") {
  const auto path = temp_path("pcm.wav");
  auto s = ramp(2, 500);
  for (double& v : s.raw()) v *= 0.9;
  write_wav(path, s, SampleFormat::pcm16);
  const auto r = read_wav(path);
  REQUIRE(r.raw().size() == s.raw().size());
  for (std::size_t i = 0; i < s.raw().size(); ++i) CHECK(std::abs(r.raw()[i] - s.raw()[i]) <= 1.0 / 32768.0);
  CHECK(fs::file_size(path) == 44 + 500 * 2 * 2);
}

TEST_CASE("pcm16 output clips out-of-range samples") {
  const auto path = temp_path("clip.wav");
  auto s = TimeSignal::mono({2.0, -3.0, 0.5}, 16000);
  write_wav(path, s, SampleFormat::pcm16);
  const auto r = read_wav(path);
  CHECK(r.sample_rate() == 16000);
  CHECK(r.raw()[0] == doctest::Approx(32767.0 / 32768.0));
  CHECK(r.raw()[1] == -1.0);
}

TEST_CASE("malformed files are reported with their path") {
  const auto path = temp_path("junk.wav");
  std::ofstream(path) << "definitely not a wave file";
  CHECK_THROWS_AS(read_wav(path), Error);
  try {
    read_wav(path);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("junk.wav") != std::string::npos);
    CHECK(e.kind() == ErrorKind::data);
  }
  CHECK_THROWS_AS(read_wav(temp_path("missing.wav")), Error);
}
