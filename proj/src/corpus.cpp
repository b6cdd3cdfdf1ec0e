#include "cpred/corpus.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "cpred/wav.hpp"

namespace cpred {
namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_db(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& v, std::string (*fmt)(T)) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

std::string int_str(int v) { return std::to_string(v); }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) out.push_back(item);
  return out;
}

void set_indexed(std::vector<std::filesystem::path>& v, const std::string& index, const std::string& value,
                 const std::string& where) {
  std::size_t i = 0;
  try {
    i = std::stoul(index);
  } catch (const std::exception&) {
    throw data_error(where + ": bad index '" + index + "'");
  }
  if (i > 64) throw data_error(where + ": index too large");
  if (v.size() <= i) v.resize(i + 1);
  v[i] = value;
}

}  // namespace

std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::istreambuf_iterator<char> it(is), end; it != end; ++it) {
    h ^= static_cast<unsigned char>(*it);
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream os(path);
  if (!os) throw data_error("cannot write " + path.string());
  os << "# cpred scene manifest\n";
  for (const auto& e : manifest.entries) {
    os << "\nscene=" << e.id << "\nseed=" << e.seed << "\nt60=" << fmt_double(e.t60_seconds)
       << "\nsnr_db=" << fmt_double(e.noise_snr_db) << "\nspeakers=" << e.speakers << "\nchannels=" << e.channels
       << "\nsample_rate=" << e.sample_rate_hz << "\nmixture=" << e.mixture.generic_string() << "\n";
    if (!e.noise.empty()) os << "noise=" << e.noise.generic_string() << "\n";
    for (std::size_t c = 0; c < e.direct.size(); ++c) os << "direct." << c << "=" << e.direct[c].generic_string() << "\n";
    for (std::size_t c = 0; c < e.reverberant.size(); ++c) {
      os << "reverberant." << c << "=" << e.reverberant[c].generic_string() << "\n";
    }
    for (std::size_t c = 0; c < e.estimates.size(); ++c) {
      os << "estimate." << c << "=" << e.estimates[c].generic_string() << "\n";
    }
    if (!e.checksum.empty()) os << "checksum=" << e.checksum << "\n";
  }
  if (!os) throw data_error("write failed: " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw data_error("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  ManifestEntry* cur = nullptr;
  std::string line;
  for (int lineno = 1; std::getline(is, line); ++lineno) {
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw data_error(where + ": expected key=value");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "scene") {
      m.entries.push_back({});
      cur = &m.entries.back();
      cur->id = value;
      continue;
    }
    if (cur == nullptr) throw data_error(where + ": key before the first scene= line");
    try {
      const auto dot = key.find('.');
      const std::string base = key.substr(0, dot);
      const std::string index = dot == std::string::npos ? "" : key.substr(dot + 1);
      if (base == "seed") cur->seed = std::stoull(value);
      else if (base == "t60") cur->t60_seconds = std::stod(value);
      else if (base == "snr_db") cur->noise_snr_db = std::stod(value);
      else if (base == "speakers") cur->speakers = std::stoi(value);
      else if (base == "channels") cur->channels = std::stoi(value);
      else if (base == "sample_rate") cur->sample_rate_hz = std::stoi(value);
      else if (base == "mixture") cur->mixture = value;
      else if (base == "noise") cur->noise = value;
      else if (base == "checksum") cur->checksum = value;
      else if (base == "direct" && !index.empty()) set_indexed(cur->direct, index, value, where);
      else if (base == "reverberant" && !index.empty()) set_indexed(cur->reverberant, index, value, where);
      else if (base == "estimate" && !index.empty()) set_indexed(cur->estimates, index, value, where);
      else throw data_error(where + ": unknown key '" + key + "'");
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw data_error(where + ": bad value '" + value + "'");
    }
  }
  for (const auto& e : m.entries) {
    if (e.mixture.empty()) throw data_error(path.string() + ": scene " + e.id + " has no mixture");
    if (e.direct.empty()) throw data_error(path.string() + ": scene " + e.id + " has no direct-path references");
  }
  return m;
}

SceneData load_scene(const Manifest& manifest, const ManifestEntry& entry) {
  auto resolve = [&](const std::filesystem::path& p) { return p.is_absolute() ? p : manifest.base_dir / p; };
  SceneData s;
  s.id = entry.id;
  s.seed = entry.seed;
  s.mixture = read_wav(resolve(entry.mixture));
  for (const auto& p : entry.direct) s.direct.push_back(read_wav(resolve(p)));
  for (const auto& p : entry.reverberant) s.reverberant.push_back(read_wav(resolve(p)));
  for (const auto& p : entry.estimates) s.estimates.push_back(read_wav(resolve(p)));
  const auto check = [&](const TimeSignal& t, const char* what) {
    if (t.channels() != s.mixture.channels() || t.samples() != s.mixture.samples() ||
        t.sample_rate() != s.mixture.sample_rate()) {
      throw data_error("scene " + entry.id + ": " + what + " does not match the mixture's shape or rate");
    }
  };
  for (const auto& t : s.direct) check(t, "direct-path signal");
  for (const auto& t : s.reverberant) check(t, "reverberant signal");
  for (const auto& t : s.estimates) check(t, "estimate");
  if (!s.reverberant.empty() && s.reverberant.size() != s.direct.size()) {
    throw data_error("scene " + entry.id + ": reverberant count differs from speaker count");
  }
  return s;
}

std::string format_report(std::vector<ReportRecord> records) {
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.scene < b.scene; });
  std::ostringstream os;
  double mean = 0.0, mix = 0.0, imp = 0.0;
  for (const auto& r : records) {
    os << "scene=" << r.scene << " chain=" << r.chain << " passes=" << r.passes
       << " si_sdr=" << join(r.eval.per_speaker_si_sdr_db, fmt_db) << " mean=" << fmt_db(r.eval.mean_si_sdr_db)
       << " mixture=" << fmt_db(r.eval.mixture_mean_si_sdr_db)
       << " improvement=" << fmt_db(r.eval.improvement_over_mixture_db)
       << " permutation=" << join(r.eval.permutation, int_str) << "\n";
    mean += r.eval.mean_si_sdr_db;
    mix += r.eval.mixture_mean_si_sdr_db;
    imp += r.eval.improvement_over_mixture_db;
  }
  if (!records.empty()) {
    const double n = static_cast<double>(records.size());
    os << "# summary scenes=" << records.size() << " mean=" << fmt_db(mean / n) << " mixture=" << fmt_db(mix / n)
       << " improvement=" << fmt_db(imp / n) << "\n";
  }
  return os.str();
}

void write_report(const std::filesystem::path& path, const std::vector<ReportRecord>& records) {
  std::ofstream os(path);
  if (!os) throw data_error("cannot write " + path.string());
  os << format_report(records);
  if (!os) throw data_error("write failed: " + path.string());
}

std::vector<ReportRecord> read_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw data_error("cannot open report " + path.string());
  std::vector<ReportRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line.front() == '#') continue;
    std::map<std::string, std::string> kv;
    for (const auto& tok : split(line, ' ')) {
      const auto eq = tok.find('=');
      if (eq != std::string::npos) kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    try {
      ReportRecord r;
      r.scene = kv.at("scene");
      r.chain = kv.at("chain");
      r.passes = std::stoi(kv.at("passes"));
      for (const auto& v : split(kv.at("si_sdr"), ',')) r.eval.per_speaker_si_sdr_db.push_back(std::stod(v));
      for (const auto& v : split(kv.at("permutation"), ',')) r.eval.permutation.push_back(std::stoi(v));
      r.eval.mean_si_sdr_db = std::stod(kv.at("mean"));
      r.eval.mixture_mean_si_sdr_db = std::stod(kv.at("mixture"));
      r.eval.improvement_over_mixture_db = std::stod(kv.at("improvement"));
      out.push_back(std::move(r));
    } catch (const std::exception&) {
      throw data_error(path.string() + ": malformed report line");
    }
  }
  return out;
}

}  // namespace cpred
