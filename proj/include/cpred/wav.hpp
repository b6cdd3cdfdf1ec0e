#pragma once

#include <filesystem>

#include "cpred/signal.hpp"

namespace cpred {

enum class SampleFormat { pcm16, float32 };

/// Reads a RIFF WAV file (16-bit PCM or 32-bit IEEE float, any channel count).
/// PCM samples are scaled to [-1, 1).
TimeSignal read_wav(const std::filesystem::path& path);

/// Writes a RIFF WAV file. pcm16 output is clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const TimeSignal& signal,
               SampleFormat format = SampleFormat::float32);

}  // namespace cpred
