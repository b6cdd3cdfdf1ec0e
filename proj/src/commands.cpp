#include "cpred/commands.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include "cpred/wav.hpp"

namespace cpred {
namespace {

namespace fs = std::filesystem;

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw data_error("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string scene_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04d", i);
  return buf;
}

fs::path enhanced_path(const fs::path& out_dir, const std::string& scene, std::size_t speaker) {
  return out_dir / scene / ("enhanced_" + std::to_string(speaker) + ".wav");
}

/// Calls fn(i) for i in [0, n) on at most `jobs` threads; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

Manifest cmd_simulate(const SimulateOptions& options) {
  if (options.count < 1) throw config_error("simulate: count must be >= 1");
  options.base.validate();
  ensure_dir(options.out_dir);
  Manifest manifest;
  manifest.base_dir = options.out_dir;
  for (int i = 0; i < options.count; ++i) {
    SceneSpec spec = options.base;
    spec.seed = derive_seed(options.seed, static_cast<std::uint64_t>(i));
    spec = draw_scene_spec(spec, options.ranges);
    const Scene scene = make_scene(spec);

    ManifestEntry e;
    e.id = scene_name(i);
    e.seed = spec.seed;
    e.t60_seconds = spec.t60_seconds;
    e.noise_snr_db = spec.noise_snr_db;
    e.speakers = spec.num_speakers;
    e.channels = spec.num_channels;
    e.sample_rate_hz = spec.sample_rate_hz;
    const fs::path rel = e.id;
    ensure_dir(options.out_dir / rel);
    std::vector<fs::path> written;
    const auto put = [&](const fs::path& name, const TimeSignal& sig) {
      write_wav(options.out_dir / rel / name, sig, SampleFormat::float32);
      written.push_back(options.out_dir / rel / name);
      return rel / name;
    };
    e.mixture = put("mixture.wav", scene.mixture);
    e.noise = put("noise.wav", scene.noise);
    for (std::size_t c = 0; c < scene.direct.size(); ++c) {
      e.direct.push_back(put("direct_" + std::to_string(c) + ".wav", scene.direct[c]));
      e.reverberant.push_back(put("reverberant_" + std::to_string(c) + ".wav", scene.reverberant[c]));
    }
    std::string combined;
    for (const auto& p : written) combined += file_checksum(p);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : combined) {
      h ^= ch;
      h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    e.checksum = buf;
    manifest.entries.push_back(std::move(e));
  }
  write_manifest(options.out_dir / "manifest.txt", manifest);
  return manifest;
}

std::vector<ReportRecord> cmd_run(const RunOptions& options) {
  options.pipeline.validate();
  const Manifest manifest = read_manifest(options.manifest);
  ensure_dir(options.out_dir);
  const DefaultEstimateProvider provider(options.pipeline.seed);

  std::vector<std::optional<ReportRecord>> slots(manifest.entries.size());
  parallel_for(manifest.entries.size(), options.jobs, [&](std::size_t i) {
    const auto& entry = manifest.entries[i];
    const SceneData scene = load_scene(manifest, entry);
    const auto result = run_pipeline(options.pipeline, scene, provider);
    ensure_dir(options.out_dir / entry.id);
    for (std::size_t c = 0; c < result.enhanced.size(); ++c) {
      write_wav(enhanced_path(options.out_dir, entry.id, c), result.enhanced[c], SampleFormat::float32);
    }
    if (result.report) slots[i] = ReportRecord{entry.id, options.pipeline.chain(), options.pipeline.passes, *result.report};
  });

  std::vector<ReportRecord> records;
  for (auto& s : slots) {
    if (s) records.push_back(std::move(*s));
  }
  if (!records.empty()) write_report(options.out_dir / "report.txt", records);
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.scene < b.scene; });
  return records;
}

std::vector<ReportRecord> cmd_eval(const fs::path& manifest_path, const fs::path& out_dir, std::size_t ref_channel) {
  const Manifest manifest = read_manifest(manifest_path);
  std::vector<ReportRecord> records;
  for (const auto& entry : manifest.entries) {
    const SceneData scene = load_scene(manifest, entry);
    if (ref_channel >= scene.mixture.channels()) throw data_error("scene " + entry.id + ": reference channel out of range");
    std::vector<TimeSignal> enhanced;
    for (std::size_t c = 0; c < scene.speakers(); ++c) {
      TimeSignal sig = read_wav(enhanced_path(out_dir, entry.id, c));
      if (sig.samples() != scene.mixture.samples()) {
        throw data_error("scene " + entry.id + ": enhanced signal length differs from the mixture");
      }
      enhanced.push_back(sig.channels() == 1 ? std::move(sig) : sig.extract(ref_channel));
    }
    records.push_back({entry.id, "files", 1, evaluate_outputs(enhanced, scene, ref_channel)});
  }
  write_report(out_dir / "eval_report.txt", records);
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.scene < b.scene; });
  return records;
}

}  // namespace cpred
