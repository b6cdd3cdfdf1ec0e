#include "cpred/wav.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace cpred {
namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::vector<char>& bytes, std::size_t offset) {
  T v{};
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  return v;
}

template <typename T>
void put_le(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

TimeSignal read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  auto fail = [&](const std::string& why) { return data_error(path.string() + ": " + why); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw fail("not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t data_offset = 0, data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(bytes.data() + pos, 4);
    const auto size = read_le<std::uint32_t>(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size() && id != "data") throw fail("truncated chunk " + id);
    if (id == "fmt ") {
      if (size < 16) throw fail("short fmt chunk");
      format = read_le<std::uint16_t>(bytes, body);
      channels = read_le<std::uint16_t>(bytes, body + 2);
      rate = read_le<std::uint32_t>(bytes, body + 4);
      bits = read_le<std::uint16_t>(bytes, body + 14);
      if (format == kFormatExtensible && size >= 40) format = read_le<std::uint16_t>(bytes, body + 24);
      have_fmt = true;
    } else if (id == "data") {
      data_offset = body;
      data_size = std::min<std::size_t>(size, bytes.size() - body);
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw fail("missing fmt chunk");
  if (data_offset == 0) throw fail("missing data chunk");
  if (channels == 0 || rate == 0) throw fail("invalid channel count or sample rate");

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32) throw fail("unsupported sample format (need 16-bit PCM or 32-bit float)");

  const std::size_t width = bits / 8;
  const std::size_t frames = data_size / (width * channels);
  TimeSignal out(channels, frames, static_cast<int>(rate));
  for (std::size_t n = 0; n < frames; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t at = data_offset + (n * channels + c) * width;
      out.channel(c)[n] = pcm16 ? read_le<std::int16_t>(bytes, at) / 32768.0 : read_le<float>(bytes, at);
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const TimeSignal& signal, SampleFormat format) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot write " + path.string());
  const bool f32 = format == SampleFormat::float32;
  const auto channels = static_cast<std::uint16_t>(signal.channels());
  const std::uint16_t bits = f32 ? 32 : 16;
  const std::uint32_t block = channels * (bits / 8u);
  const auto data_size = static_cast<std::uint32_t>(signal.samples() * block);

  os.write("RIFF", 4);
  put_le<std::uint32_t>(os, 36 + data_size);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  put_le<std::uint32_t>(os, 16);
  put_le<std::uint16_t>(os, f32 ? kFormatFloat : kFormatPcm);
  put_le<std::uint16_t>(os, channels);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(signal.sample_rate()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(signal.sample_rate()) * block);
  put_le<std::uint16_t>(os, static_cast<std::uint16_t>(block));
  put_le<std::uint16_t>(os, bits);
  os.write("data", 4);
  put_le<std::uint32_t>(os, data_size);
  for (std::size_t n = 0; n < signal.samples(); ++n) {
    for (std::size_t c = 0; c < signal.channels(); ++c) {
      const double v = signal.channel(c)[n];
      if (f32) {
        put_le<float>(os, static_cast<float>(v));
      } else {
        const double clipped = std::clamp(v, -1.0, 32767.0 / 32768.0);
        put_le<std::int16_t>(os, static_cast<std::int16_t>(std::lround(clipped * 32768.0)));
      }
    }
  }
  if (!os) throw data_error("write failed: " + path.string());
}

}  // namespace cpred
