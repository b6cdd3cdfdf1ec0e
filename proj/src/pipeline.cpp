#include "cpred/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cpred {
namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::optional<StageKind> stage_from_name(const std::string& name) {
  for (auto k : {StageKind::estimate, StageKind::wpe, StageKind::fcp, StageKind::cfcp, StageKind::msfcp,
                 StageKind::mvdr, StageKind::evaluate}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

double parse_double(const std::string& v, const std::string& where) {
  if (v == "inf" || v == "+inf" || v == "oracle") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw config_error(where + ": expected a number, got '" + v + "'");
  }
}

long long parse_int(const std::string& v, const std::string& where) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw config_error(where + ": expected an integer, got '" + v + "'");
  }
}

std::string format_number(double v) {
  if (v == std::numeric_limits<double>::infinity()) return "inf";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void apply_stage_key(StageConfig& st, const std::string& key, const std::string& value, const std::string& where) {
  const auto unknown = [&] {
    return config_error(where + ": unknown key '" + key + "' for stage " + to_string(st.kind));
  };
  switch (st.kind) {
    case StageKind::estimate:
      if (key == "source") {
        if (value == "emulated") st.source = EstimateSource::emulated;
        else if (value == "file") st.source = EstimateSource::file;
        else throw config_error(where + ": source must be emulated or file");
      } else if (key == "kind") {
        if (value == "white") st.perturbation = PerturbationKind::white;
        else if (value == "residual_reverb") st.perturbation = PerturbationKind::residual_reverb;
        else if (value == "oracle") st.snr_db_per_pass = {std::numeric_limits<double>::infinity()};
        else throw config_error(where + ": kind must be white, residual_reverb or oracle");
      } else if (key == "snr_db") {
        st.snr_db_per_pass.clear();
        std::stringstream ss(value);
        for (std::string item; std::getline(ss, item, ',');) st.snr_db_per_pass.push_back(parse_double(trim(item), where));
      } else {
        throw unknown();
      }
      return;
    case StageKind::wpe:
      if (key == "delay") { st.delay = static_cast<int>(parse_int(value, where)); return; }
      if (key == "iterations") { st.iterations = static_cast<int>(parse_int(value, where)); return; }
      if (key == "mode") {
        if (value == "classic") st.classic = true;
        else if (value == "estimate") st.classic = false;
        else throw config_error(where + ": mode must be estimate or classic");
        return;
      }
      [[fallthrough]];
    case StageKind::fcp:
    case StageKind::cfcp:
    case StageKind::msfcp:
      if (key == "taps") st.taps = static_cast<int>(parse_int(value, where));
      else if (key == "epsilon") st.epsilon = parse_double(value, where);
      else if (key == "loading") st.loading = parse_double(value, where);
      else if (key == "steps" && st.kind == StageKind::msfcp) st.steps = static_cast<int>(parse_int(value, where));
      else throw unknown();
      return;
    case StageKind::mvdr:
      if (key == "variant") {
        if (value == "dereverb_residual") st.variant = CovarianceVariant::dereverb_residual;
        else if (value == "mixture_residual") st.variant = CovarianceVariant::mixture_residual;
        else throw config_error(where + ": variant must be dereverb_residual or mixture_residual");
      } else if (key == "loading") {
        st.mvdr_loading = parse_double(value, where);
      } else {
        throw unknown();
      }
      return;
    case StageKind::evaluate:
      throw unknown();
  }
}

void put_channel(Spectrogram& dst, std::size_t c, const Spectrogram& src) {
  for (std::size_t t = 0; t < dst.frames(); ++t) {
    auto from = src.frame(0, t);
    std::copy(from.begin(), from.end(), dst.frame(c, t).begin());
  }
}

bool needs_estimates(const StageConfig& st) {
  switch (st.kind) {
    case StageKind::fcp:
    case StageKind::cfcp:
    case StageKind::msfcp:
    case StageKind::mvdr:
      return true;
    case StageKind::wpe:
      return !st.classic;
    default:
      return false;
  }
}

}  // namespace

const char* to_string(StageKind k) noexcept {
  switch (k) {
    case StageKind::estimate: return "estimate";
    case StageKind::wpe: return "wpe";
    case StageKind::fcp: return "fcp";
    case StageKind::cfcp: return "cfcp";
    case StageKind::msfcp: return "msfcp";
    case StageKind::mvdr: return "mvdr";
    case StageKind::evaluate: return "evaluate";
  }
  return "?";
}

EstimateQuality StageConfig::quality_for_pass(int pass) const {
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(std::max(pass, 0)), snr_db_per_pass.size() - 1);
  return {snr_db_per_pass[i], perturbation};
}

int StageConfig::effective_taps() const noexcept {
  if (taps > 0) return taps;
  return kind == StageKind::wpe ? kDefaultWpeTaps : kDefaultFcpTaps;
}

void PipelineConfig::validate() const {
  if (passes < 1) throw config_error("passes must be >= 1");
  if (stages.empty()) throw config_error("pipeline has no stages");
  bool have_estimate = false;
  for (const auto& st : stages) {
    const std::string name = std::string("stage ") + to_string(st.kind);
    if (st.kind == StageKind::estimate) {
      have_estimate = true;
      if (st.snr_db_per_pass.empty()) throw config_error(name + ": snr_db needs at least one value");
      for (double s : st.snr_db_per_pass) {
        if (std::isnan(s) || s == -std::numeric_limits<double>::infinity()) {
          throw config_error(name + ": snr_db must be finite or inf");
        }
      }
    }
    if (needs_estimates(st) && !have_estimate) throw config_error(name + ": requires a preceding estimate stage");
    if (st.taps < 0) throw config_error(name + ": taps must be >= 1");
    if (st.kind == StageKind::wpe && st.delay < 1) throw config_error(name + ": delay must be >= 1");
    if (st.kind == StageKind::wpe && st.iterations < 1) throw config_error(name + ": iterations must be >= 1");
    if (st.kind == StageKind::msfcp && st.steps < 1) throw config_error(name + ": steps must be >= 1");
    if (!(st.epsilon > 0.0)) throw config_error(name + ": epsilon must be positive");
    if (st.loading < 0.0 || st.mvdr_loading < 0.0) throw config_error(name + ": loading must be non-negative");
  }
}

std::string PipelineConfig::chain() const {
  std::string out;
  for (const auto& st : stages) {
    if (!out.empty()) out += '>';
    out += to_string(st.kind);
  }
  return out;
}

PipelineConfig parse_pipeline(std::istream& is) {
  PipelineConfig config;
  StageConfig* current = nullptr;
  std::string line;
  for (int lineno = 1; std::getline(is, line); ++lineno) {
    const std::string where = "line " + std::to_string(lineno);
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw config_error(where + ": malformed stage header");
      const auto name = trim(line.substr(1, line.size() - 2));
      const auto kind = stage_from_name(name);
      if (!kind) throw config_error(where + ": unknown stage '" + name + "'");
      config.stages.push_back(StageConfig{.kind = *kind});
      current = &config.stages.back();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw config_error(where + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (current != nullptr) {
      apply_stage_key(*current, key, value, where);
    } else if (key == "passes") {
      config.passes = static_cast<int>(parse_int(value, where));
    } else if (key == "ref_channel") {
      const auto r = parse_int(value, where);
      if (r < 0) throw config_error(where + ": ref_channel must be >= 0");
      config.ref_channel = static_cast<std::size_t>(r);
    } else if (key == "seed") {
      config.seed = static_cast<std::uint64_t>(parse_int(value, where));
    } else {
      throw config_error(where + ": unknown pipeline key '" + key + "'");
    }
  }
  config.validate();
  return config;
}

PipelineConfig load_pipeline(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot open config " + path.string());
  try {
    return parse_pipeline(is);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string format_pipeline(const PipelineConfig& config) {
  std::ostringstream os;
  os << "passes = " << config.passes << "\nref_channel = " << config.ref_channel << "\nseed = " << config.seed << "\n";
  for (const auto& st : config.stages) {
    os << "\n[" << to_string(st.kind) << "]\n";
    switch (st.kind) {
      case StageKind::estimate: {
        os << "source = " << (st.source == EstimateSource::file ? "file" : "emulated") << "\n";
        os << "kind = " << (st.perturbation == PerturbationKind::white ? "white" : "residual_reverb") << "\n";
        os << "snr_db = ";
        for (std::size_t i = 0; i < st.snr_db_per_pass.size(); ++i) {
          os << (i ? ", " : "") << format_number(st.snr_db_per_pass[i]);
        }
        os << "\n";
        break;
      }
      case StageKind::wpe:
        os << "mode = " << (st.classic ? "classic" : "estimate") << "\ndelay = " << st.delay
           << "\niterations = " << st.iterations << "\n";
        [[fallthrough]];
      case StageKind::fcp:
      case StageKind::cfcp:
      case StageKind::msfcp:
        os << "taps = " << st.effective_taps() << "\nepsilon = " << format_number(st.epsilon)
           << "\nloading = " << format_number(st.loading) << "\n";
        if (st.kind == StageKind::msfcp) os << "steps = " << st.steps << "\n";
        break;
      case StageKind::mvdr:
        os << "variant = "
           << (st.variant == CovarianceVariant::dereverb_residual ? "dereverb_residual" : "mixture_residual")
           << "\nloading = " << format_number(st.mvdr_loading) << "\n";
        break;
      case StageKind::evaluate:
        break;
    }
  }
  return os.str();
}

SceneData scene_data_from(const Scene& scene, std::string id) {
  return {std::move(id), scene.spec.seed, scene.mixture, scene.direct, scene.reverberant, {}};
}

SceneSpectra analyze_scene(const SceneData& scene, const StftConfig& config) {
  SceneSpectra out;
  out.mixture = analyze(scene.mixture, config);
  for (const auto& s : scene.direct) out.direct.push_back(analyze(s, config));
  for (const auto& s : scene.reverberant) out.reverberant.push_back(analyze(s, config));
  for (const auto& s : scene.estimates) out.estimates.push_back(analyze(s, config));
  return out;
}

std::vector<Spectrogram> DefaultEstimateProvider::estimate(const SceneData& scene, const SceneSpectra& spectra,
                                                           const StageConfig& stage, int pass,
                                                           std::span<const Spectrogram>) const {
  const std::size_t speakers = scene.speakers();
  if (stage.source == EstimateSource::file) {
    if (spectra.estimates.size() != speakers) throw data_error("scene has no estimate files for every speaker");
    for (const auto& e : spectra.estimates) {
      if (!e.same_shape(spectra.mixture)) throw data_error("estimate file shape does not match the mixture");
    }
    return spectra.estimates;
  }
  const auto quality = stage.quality_for_pass(pass);
  const bool need_reverb = !quality.is_oracle() && quality.kind == PerturbationKind::residual_reverb;
  if (spectra.direct.size() != speakers) throw data_error("scene lacks direct-path references");
  if (need_reverb && spectra.reverberant.size() != speakers) throw data_error("scene lacks reverberant images");
  std::vector<Spectrogram> out;
  for (std::size_t c = 0; c < speakers; ++c) {
    const auto seed = derive_seed(seed_ ^ fnv1a(scene.id) ^ scene.seed, c + 16 * static_cast<std::uint64_t>(pass));
    const Spectrogram& reverberant = need_reverb ? spectra.reverberant[c] : spectra.direct[c];
    out.push_back(emulate_estimator(spectra.direct[c], reverberant, quality, seed));
  }
  return out;
}

EvalReport evaluate_outputs(std::span<const TimeSignal> enhanced, const SceneData& scene, std::size_t ref_channel) {
  std::vector<TimeSignal> refs;
  for (const auto& d : scene.direct) refs.push_back(d.extract(ref_channel));
  return resolve_permutation(enhanced, refs, scene.mixture.extract(ref_channel));
}

PipelineResult run_pipeline(const PipelineConfig& config, const SceneData& scene, const EstimateProvider& provider) {
  config.validate();
  const std::size_t channels = scene.mixture.channels();
  const std::size_t speakers = scene.speakers();
  const std::size_t ref = config.ref_channel;
  const auto scene_error = [&](const std::string& what) { return data_error("scene " + scene.id + ": " + what); };
  if (speakers == 0) throw scene_error("no speakers");
  if (ref >= channels) throw scene_error("reference channel out of range");
  for (const auto& st : config.stages) {
    if (st.kind == StageKind::mvdr && channels < 2) {
      throw scene_error("stage mvdr requires at least 2 channels, scene has " + std::to_string(channels));
    }
  }

  const auto spectra = analyze_scene(scene, StftConfig::for_rate(scene.mixture.sample_rate()));
  const Spectrogram& mixture = spectra.mixture;
  std::vector<Spectrogram> estimates;
  std::vector<Spectrogram> outputs(speakers, mixture);
  std::vector<Spectrogram> previous;
  PipelineResult result;

  const auto mix_channel = [&](std::size_t q) { return mixture.extract(q); };
  const auto est_channels = [&](std::size_t q) {
    std::vector<Spectrogram> v;
    for (const auto& e : estimates) v.push_back(e.extract(q));
    return v;
  };

  for (int pass = 0; pass < config.passes; ++pass) {
    for (const auto& st : config.stages) {
      try {
        switch (st.kind) {
          case StageKind::estimate:
            estimates = provider.estimate(scene, spectra, st, pass, previous);
            if (estimates.size() != speakers) throw data_error("provider returned wrong speaker count");
            outputs = estimates;
            break;
          case StageKind::wpe: {
            const WpeParams params{st.effective_taps(), st.delay, st.loading};
            for (std::size_t c = 0; c < speakers; ++c) {
              Spectrogram out = mixture.zeros_like(channels);
              for (std::size_t q = 0; q < channels; ++q) {
                if (st.classic) {
                  put_channel(out, q, wpe_classic(mixture, q, params, st.iterations, st.epsilon).result.output);
                } else {
                  const auto psd = weight_floor(power(estimates[c], q), st.epsilon);
                  const auto filter = wpe_filter(mixture, psd, q, params);
                  put_channel(out, q, wpe_dereverb(mixture, filter, q, static_cast<int>(c)).output);
                }
              }
              outputs[c] = std::move(out);
            }
            break;
          }
          case StageKind::fcp: {
            const FcpParams params{st.effective_taps(), st.loading};
            for (std::size_t c = 0; c < speakers; ++c) {
              Spectrogram out = mixture.zeros_like(channels);
              for (std::size_t q = 0; q < channels; ++q) {
                put_channel(out, q,
                            fcp_run(mix_channel(q), estimates[c].extract(q), params, st.epsilon, static_cast<int>(c))
                                .output);
              }
              outputs[c] = std::move(out);
            }
            break;
          }
          case StageKind::cfcp: {
            const FcpParams params{st.effective_taps(), st.loading};
            for (std::size_t c = 0; c < speakers; ++c) outputs[c] = mixture.zeros_like(channels);
            for (std::size_t q = 0; q < channels; ++q) {
              const auto y = mix_channel(q);
              const auto est = est_channels(q);
              const auto weights = weight_floor(power(y), st.epsilon);
              std::vector<PredictionFilter> filters;
              for (const auto& e : est) filters.push_back(fcp_filter(y, e, weights, params));
              const auto res = cfcp_dereverb(y, est, filters);
              for (std::size_t c = 0; c < speakers; ++c) put_channel(outputs[c], q, res[c].output);
            }
            break;
          }
          case StageKind::msfcp: {
            const FcpParams params{st.effective_taps(), st.loading};
            for (std::size_t c = 0; c < speakers; ++c) outputs[c] = mixture.zeros_like(channels);
            for (std::size_t q = 0; q < channels; ++q) {
              const auto res = msfcp_run(mix_channel(q), est_channels(q), params, st.epsilon, st.steps);
              for (std::size_t c = 0; c < speakers; ++c) put_channel(outputs[c], q, res[c].output);
            }
            break;
          }
          case StageKind::mvdr: {
            for (std::size_t c = 0; c < speakers; ++c) {
              if (outputs[c].channels() != channels) throw data_error("input is already beamformed");
              const auto nontarget = nontarget_signal(outputs[c], estimates[c], mixture, st.variant);
              const auto steering = steering_vector(spatial_covariance(estimates[c]), ref);
              const auto bf = mvdr_weights(steering, spatial_covariance(nontarget), ref, st.mvdr_loading);
              const Spectrogram& input = st.variant == CovarianceVariant::dereverb_residual ? outputs[c] : mixture;
              outputs[c] = apply_beamformer(bf, input);
            }
            break;
          }
          case StageKind::evaluate:
            break;
        }
      } catch (const Error& e) {
        throw Error(e.kind(), std::string("stage ") + to_string(st.kind) + " (scene " + scene.id + "): " + e.what());
      }
    }
    previous = outputs;
  }

  result.outputs = outputs;
  for (const auto& out : outputs) {
    const std::size_t ch = out.channels() == 1 ? 0 : ref;
    result.enhanced.push_back(synthesize(out.extract(ch)));
  }
  const bool evaluate = std::any_of(config.stages.begin(), config.stages.end(),
                                    [](const StageConfig& s) { return s.kind == StageKind::evaluate; });
  if (evaluate) result.report = evaluate_outputs(result.enhanced, scene, ref);
  return result;
}

}  // namespace cpred
