#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cpred/metrics.hpp"
#include "cpred/pipeline.hpp"

namespace cpred {

/// One scene of a manifest. Paths are relative to the manifest's directory.
struct ManifestEntry {
  std::string id;
  std::uint64_t seed = 0;
  double t60_seconds = 0.0;
  double noise_snr_db = 0.0;
  int speakers = 0;
  int channels = 0;
  int sample_rate_hz = 0;
  std::filesystem::path mixture;
  std::filesystem::path noise;
  std::vector<std::filesystem::path> direct;
  std::vector<std::filesystem::path> reverberant;
  std::vector<std::filesystem::path> estimates;
  std::string checksum;  // FNV-1a 64 over the scene's WAV bytes, hex
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;
};

/// Text manifest, one key=value per line; each "scene=" line starts a new record.
/// Indexed keys use a dot suffix: direct.0, reverberant.1, estimate.0.
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

/// Loads the WAV files of an entry.
SceneData load_scene(const Manifest& manifest, const ManifestEntry& entry);

/// FNV-1a 64 of a file's bytes, as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

struct ReportRecord {
  std::string scene;
  std::string chain;
  int passes = 1;
  EvalReport eval;
};

/// One line per record, sorted by scene id, followed by a summary comment line:
/// scene=<id> chain=<a>b> passes=<n> si_sdr=<x,y> mean=<m> mixture=<u> improvement=<i> permutation=<0,1>
std::string format_report(std::vector<ReportRecord> records);
void write_report(const std::filesystem::path& path, const std::vector<ReportRecord>& records);
std::vector<ReportRecord> read_report(const std::filesystem::path& path);

}  // namespace cpred
