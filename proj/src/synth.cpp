#include "scenewise/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "scenewise/common.hpp"
#include "scenewise/fft.hpp"
#include "scenewise/parallel.hpp"
#include "scenewise/rng.hpp"
#include "scenewise/wav.hpp"

namespace scenewise {

namespace {

constexpr int kIrTaps = 256;

double db_to_amp(double db) { return std::pow(10.0, db / 20.0); }

// Streams: keep the seed derivation paths disjoint per purpose.
constexpr uint64_t kStreamScenes = 0x5ce17e5ull;
constexpr uint64_t kStreamDevices = 0xde71ce5ull;

// Adds amp * sin(2*pi*freq*t/rate + phase) via phasor recurrence; when
// mod_hz > 0 the amplitude is modulated by (1 + 0.5 sin(2*pi*mod_hz*t/rate)).
void add_tone(std::vector<double>& buf, int rate, double freq_hz, double phase, double amp,
              double mod_hz = 0.0, double mod_phase = 0.0) {
  std::complex<double> step = std::polar(1.0, 2.0 * M_PI * freq_hz / rate);
  std::complex<double> cur = std::polar(amp, phase);
  if (mod_hz <= 0.0) {
    for (double& x : buf) {
      x += cur.imag();
      cur *= step;
    }
    return;
  }
  std::complex<double> mod_step = std::polar(1.0, 2.0 * M_PI * mod_hz / rate);
  std::complex<double> mod_cur = std::polar(1.0, mod_phase);
  for (double& x : buf) {
    x += (1.0 + 0.5 * mod_cur.imag()) * cur.imag();
    cur *= step;
    mod_cur *= mod_step;
  }
}

// grid of candidate band centers shared by every scene; intruder events are
// drawn from here, so clips carry ambiguous cross-scene evidence
double grid_slot_hz(int slot) { return 420.0 * std::pow(1.21, slot); }

void add_band(std::vector<double>& buf, int rate, double center_hz, double bandwidth_hz,
              double level_db, Rng& rng) {
  constexpr int kSinesPerBand = 6;
  const double amp = db_to_amp(level_db) / std::sqrt(double(kSinesPerBand));
  for (int s = 0; s < kSinesPerBand; ++s) {
    double f = rng.uniform(center_hz - bandwidth_hz / 2.0, center_hz + bandwidth_hz / 2.0);
    add_tone(buf, rate, f, rng.uniform(0.0, 2.0 * M_PI), amp);
  }
}

std::vector<float> render_base_clip(const SceneProfile& scene, int rate, int samples, Rng& rng) {
  std::vector<double> buf(static_cast<size_t>(samples), 0.0);

  const double noise_amp = db_to_amp(scene.noise_floor_db);
  for (double& x : buf) x = noise_amp * rng.uniform(-1.0, 1.0);

  // the signature band is always present; the rest of the scene's preferred
  // bands come and go per clip, with drifting centers and levels
  for (size_t p = 0; p < scene.peaks.size(); ++p) {
    const ScenePeak& peak = scene.peaks[p];
    if (p > 0 && !rng.bernoulli(0.85)) continue;
    add_band(buf, rate, peak.freq_hz * rng.uniform(0.96, 1.04), peak.bandwidth_hz,
             peak.level_db + rng.uniform(-3.0, 3.0), rng);
  }

  // intruder events borrowed from the shared slot grid (any scene's turf)
  for (int i = 0; i < 2; ++i) {
    if (!rng.bernoulli(0.3)) continue;
    const double f = grid_slot_hz(static_cast<int>(rng.index(10))) * rng.uniform(0.96, 1.04);
    add_band(buf, rate, f, 0.15 * f, rng.uniform(-27.0, -24.0), rng);
  }

  add_tone(buf, rate, scene.tone_hz * rng.uniform(0.97, 1.03), rng.uniform(0.0, 2.0 * M_PI),
           db_to_amp(scene.tone_level_db + rng.uniform(-2.0, 2.0)), scene.tone_mod_hz,
           rng.uniform(0.0, 2.0 * M_PI));

  // per-clip level jitter keeps absolute loudness from identifying the scene
  const double level = db_to_amp(rng.uniform(-4.0, 4.0));
  for (double& x : buf) x *= level;

  double peak_abs = 0.0;
  for (double x : buf) peak_abs = std::max(peak_abs, std::abs(x));
  double scale = peak_abs > 0.45 ? 0.45 / peak_abs : 1.0;

  std::vector<float> out(buf.size());
  for (size_t i = 0; i < buf.size(); ++i) out[i] = static_cast<float>(buf[i] * scale);
  return out;
}

}  // namespace

bool SyntheticDeviceProfile::is_identity() const {
  if (gain_db != 0.0) return false;
  if (impulse_response.empty() || impulse_response[0] != 1.0f) return false;
  for (size_t i = 1; i < impulse_response.size(); ++i) {
    if (impulse_response[i] != 0.0f) return false;
  }
  return true;
}

AudioClip apply_device_ir(const AudioClip& clip, const SyntheticDeviceProfile& profile) {
  validate_clip(clip);
  bool all_zero = true;
  for (float h : profile.impulse_response) {
    if (h != 0.0f) {
      all_zero = false;
      break;
    }
  }
  if (profile.impulse_response.empty() || all_zero) {
    raise(ErrorKind::Config, "device profile '" + profile.device_id + "' has an all-zero impulse response");
  }
  if (profile.is_identity()) return clip;

  const size_t n = clip.samples.size();
  const size_t taps = profile.impulse_response.size();
  AudioClip out;
  out.sample_rate_hz = clip.sample_rate_hz;
  out.samples.assign(n, 0.0f);
  for (size_t j = 0; j < taps; ++j) {
    const float h = profile.impulse_response[j];
    if (h == 0.0f) continue;
    const float* src = clip.samples.data();
    float* dst = out.samples.data() + j;
    for (size_t i = 0; i + j < n; ++i) dst[i] += h * src[i];
  }
  const float gain = static_cast<float>(db_to_amp(profile.gain_db));
  for (float& x : out.samples) x *= gain;
  return out;
}

std::vector<SceneProfile> make_scene_profiles(uint64_t seed, int scene_count) {
  if (scene_count < 2) raise(ErrorKind::Config, "scene_count must be >= 2");

  static const char* kSceneNames[10] = {
      "airport",       "bus",           "metro",             "metro_station",  "park",
      "public_square", "shopping_mall", "street_pedestrian", "street_traffic", "tram"};

  Rng rng(derive_seed(seed, {kStreamScenes}));

  // distinct signature slots: log-spaced band centers and tone frequencies
  std::vector<int> band_slot(static_cast<size_t>(scene_count));
  std::vector<int> tone_slot(static_cast<size_t>(scene_count));
  std::iota(band_slot.begin(), band_slot.end(), 0);
  std::iota(tone_slot.begin(), tone_slot.end(), 0);
  rng.shuffle(band_slot);
  rng.shuffle(tone_slot);

  std::vector<SceneProfile> scenes(static_cast<size_t>(scene_count));
  for (int s = 0; s < scene_count; ++s) {
    SceneProfile& scene = scenes[static_cast<size_t>(s)];
    scene.scene_label = s < 10 ? kSceneNames[s] : strprintf("scene%02d", s);

    const double band_center = 420.0 * std::pow(1.21, band_slot[static_cast<size_t>(s)]);
    ScenePeak signature;
    signature.freq_hz = band_center * rng.uniform(0.97, 1.03);
    signature.bandwidth_hz = signature.freq_hz * 0.15;
    signature.level_db = rng.uniform(-19.0, -16.0);
    scene.peaks.push_back(signature);

    // distractor bands overlap other scenes' signature slots
    const int extra = 2 + static_cast<int>(rng.index(2));  // 3..4 peaks total
    for (int p = 0; p < extra; ++p) {
      ScenePeak peak;
      peak.freq_hz = std::exp(rng.uniform(std::log(250.0), std::log(9000.0)));
      peak.bandwidth_hz = peak.freq_hz * rng.uniform(0.10, 0.30);
      peak.level_db = rng.uniform(-25.0, -21.0);
      scene.peaks.push_back(peak);
    }

    scene.tone_hz = 540.0 * std::pow(1.19, tone_slot[static_cast<size_t>(s)]) * rng.uniform(0.99, 1.01);
    scene.tone_mod_hz = rng.uniform(2.0, 6.0);
    scene.tone_level_db = rng.uniform(-19.0, -16.0);
    scene.noise_floor_db = rng.uniform(-28.0, -24.0);
  }
  return scenes;
}

namespace {

std::vector<float> design_device_ir(Rng& rng, int rate) {
  const int n = kIrTaps;
  const double tilt_db_oct = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(3.0, 7.0);
  const int notch_count = 3 + static_cast<int>(rng.index(2));
  struct Notch {
    double log2_f;
    double depth_db;
    double sigma_oct;
  };
  std::vector<Notch> notches;
  for (int i = 0; i < notch_count; ++i) {
    notches.push_back({rng.uniform(std::log2(300.0), std::log2(12000.0)),
                       rng.uniform(16.0, 34.0), rng.uniform(0.20, 0.50)});
  }
  // broad sinusoidal ripple across log-frequency, a crude tonal coloration
  const double ripple_db = rng.uniform(1.5, 3.5);
  const double ripple_rate = rng.uniform(0.8, 1.6);
  const double ripple_phase = rng.uniform(0.0, 2.0 * M_PI);

  Fft fft(n);
  std::vector<std::complex<double>> spectrum(static_cast<size_t>(n));
  for (int k = 0; k <= n / 2; ++k) {
    const double f = std::max(1.0, static_cast<double>(k) * rate / n);
    double db = std::clamp(tilt_db_oct * std::log2(f / 1000.0), -12.0, 12.0);
    const double log2f = std::log2(f);
    db += ripple_db * std::sin(ripple_rate * 2.0 * M_PI * log2f / 5.0 + ripple_phase);
    for (const Notch& notch : notches) {
      const double d = (log2f - notch.log2_f) / notch.sigma_oct;
      db -= notch.depth_db * std::exp(-0.5 * d * d);
    }
    spectrum[static_cast<size_t>(k)] = db_to_amp(db);
  }
  for (int k = 1; k < n / 2; ++k) {
    spectrum[static_cast<size_t>(n - k)] = std::conj(spectrum[static_cast<size_t>(k)]);
  }
  fft.inverse(spectrum.data());

  // linear phase: rotate the zero-phase kernel and taper it
  std::vector<float> taps(static_cast<size_t>(n));
  double peak_mag = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (n - 1));
    taps[static_cast<size_t>(i)] =
        static_cast<float>(spectrum[static_cast<size_t>((i + n / 2) % n)].real() * w);
  }

  // normalize so the strongest frequency response magnitude is ~1
  std::vector<std::complex<double>> check(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) check[static_cast<size_t>(i)] = taps[static_cast<size_t>(i)];
  fft.forward(check.data());
  for (int k = 0; k <= n / 2; ++k) peak_mag = std::max(peak_mag, std::abs(check[static_cast<size_t>(k)]));
  if (peak_mag > 0.0) {
    for (float& t : taps) t = static_cast<float>(t / peak_mag);
  }
  return taps;
}

}  // namespace

std::vector<SyntheticDeviceProfile> default_device_profiles(uint64_t seed) {
  const char* known_ids[] = {"a", "b", "c", "s1", "s2", "s3"};
  const char* unknown_ids[] = {"s4", "s5", "s6"};

  std::vector<SyntheticDeviceProfile> profiles;
  SyntheticDeviceProfile identity;
  identity.device_id = "a";
  identity.impulse_response = {1.0f};
  identity.gain_db = 0.0;
  identity.is_known = true;
  profiles.push_back(std::move(identity));

  int device_index = 1;
  for (const char* id : known_ids) {
    if (std::string(id) == "a") continue;
    Rng rng(derive_seed(seed, {kStreamDevices, static_cast<uint64_t>(device_index++)}));
    SyntheticDeviceProfile p;
    p.device_id = id;
    p.impulse_response = design_device_ir(rng, 32000);
    p.gain_db = rng.uniform(-5.0, 5.0);
    p.is_known = true;
    profiles.push_back(std::move(p));
  }
  for (const char* id : unknown_ids) {
    Rng rng(derive_seed(seed, {kStreamDevices, static_cast<uint64_t>(device_index++)}));
    SyntheticDeviceProfile p;
    p.device_id = id;
    p.impulse_response = design_device_ir(rng, 32000);
    p.gain_db = rng.uniform(-5.0, 5.0);
    p.is_known = false;
    profiles.push_back(std::move(p));
  }
  return profiles;
}

void save_device_profiles(const std::vector<SyntheticDeviceProfile>& profiles,
                          const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorKind::Io, "cannot write profiles " + path.string());
  out << "# device_id known gain_db tap0 tap1 ...\n";
  for (const SyntheticDeviceProfile& p : profiles) {
    out << p.device_id << ' ' << (p.is_known ? 1 : 0) << ' ' << strprintf("%.17g", p.gain_db);
    for (float t : p.impulse_response) out << ' ' << strprintf("%.9g", static_cast<double>(t));
    out << '\n';
  }
  if (!out) raise(ErrorKind::Io, "short write to " + path.string());
}

std::vector<SyntheticDeviceProfile> load_device_profiles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open profiles " + path.string());
  std::vector<SyntheticDeviceProfile> profiles;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    SyntheticDeviceProfile p;
    int known = 0;
    if (!(ls >> p.device_id)) continue;
    if (!(ls >> known >> p.gain_db)) {
      raise(ErrorKind::Format,
            strprintf("%s:%d: expected '<id> <known> <gain_db> taps...'", path.string().c_str(),
                      line_no));
    }
    p.is_known = known != 0;
    double tap;
    while (ls >> tap) p.impulse_response.push_back(static_cast<float>(tap));
    if (p.impulse_response.empty()) {
      raise(ErrorKind::Format,
            strprintf("%s:%d: device '%s' has no impulse response taps", path.string().c_str(),
                      line_no, p.device_id.c_str()));
    }
    profiles.push_back(std::move(p));
  }
  if (profiles.empty()) raise(ErrorKind::Format, path.string() + ": no device profiles found");
  return profiles;
}

void SynthSpec::validate(const std::vector<SyntheticDeviceProfile>& profiles) const {
  if (scene_count < 2) raise(ErrorKind::Config, "scene_count must be >= 2");
  if (train_clips_per_cell < 1) raise(ErrorKind::Config, "train_clips_per_cell must be >= 1");
  if (test_clips_per_cell_known < 0 || test_clips_per_cell_unknown < 0) {
    raise(ErrorKind::Config, "test clip counts must be >= 0");
  }
  if (sample_rate_hz <= 0 || clip_seconds <= 0.0) {
    raise(ErrorKind::Config, "sample rate and clip length must be positive");
  }

  bool have_known = false, have_unknown = false, have_identity = false;
  std::set<std::string> known_ids;
  for (const SyntheticDeviceProfile& p : profiles) {
    if (p.is_known) {
      have_known = true;
      known_ids.insert(p.device_id);
      if (p.is_identity()) have_identity = true;
    } else {
      have_unknown = true;
    }
  }
  if (!have_known || !have_unknown) {
    raise(ErrorKind::Config, "need at least one known and one unknown device profile");
  }
  if (!have_identity) {
    raise(ErrorKind::Config, "no identity (reference) profile among the known devices");
  }
  for (const std::string& id : train_devices) {
    if (known_ids.count(id) == 0) {
      raise(ErrorKind::Config,
            "device '" + id + "' requested for training is not a known-device profile");
    }
  }
}

SynthResult synth_generate(uint64_t seed, const SynthSpec& spec,
                           const std::vector<SyntheticDeviceProfile>& profiles,
                           const std::filesystem::path& out_dir, int workers) {
  spec.validate(profiles);

  std::vector<const SyntheticDeviceProfile*> known;
  std::vector<const SyntheticDeviceProfile*> unknown;
  for (const SyntheticDeviceProfile& p : profiles) {
    (p.is_known ? known : unknown).push_back(&p);
  }
  std::vector<const SyntheticDeviceProfile*> train_devs;
  if (spec.train_devices.empty()) {
    train_devs = known;
  } else {
    for (const std::string& id : spec.train_devices) {
      for (const SyntheticDeviceProfile* p : known) {
        if (p->device_id == id) train_devs.push_back(p);
      }
    }
  }

  const int samples = static_cast<int>(std::lround(spec.clip_seconds * spec.sample_rate_hz));
  std::vector<SceneProfile> scenes = make_scene_profiles(seed, spec.scene_count);

  std::filesystem::create_directories(out_dir / "audio");

  SynthResult result;
  result.dataset_dir = out_dir;

  struct Rendered {
    std::string file;
    std::string device_id;
    std::vector<float> samples;
  };

  auto render_split = [&](const char* split_tag, int base_count,
                          const std::vector<const SyntheticDeviceProfile*>& devices,
                          int per_device_count, Manifest& manifest, uint64_t split_stream) {
    for (int s = 0; s < spec.scene_count; ++s) {
      const SceneProfile& scene = scenes[static_cast<size_t>(s)];
      std::vector<std::vector<Rendered>> per_clip(static_cast<size_t>(base_count));

      parallel_for(static_cast<size_t>(base_count), workers, [&](size_t i) {
        Rng clip_rng(derive_seed(seed, {split_stream, static_cast<uint64_t>(s), i}));
        AudioClip base;
        base.sample_rate_hz = spec.sample_rate_hz;
        base.samples = render_base_clip(scene, spec.sample_rate_hz, samples, clip_rng);

        std::vector<Rendered>& renders = per_clip[i];
        for (size_t d = 0; d < devices.size(); ++d) {
          if (static_cast<int>(i) >= per_device_count) continue;
          AudioClip rendered = apply_device_ir(base, *devices[d]);
          float peak = 0.0f;
          for (float x : rendered.samples) peak = std::max(peak, std::abs(x));
          if (peak > 0.98f) {
            const float fix = 0.98f / peak;
            for (float& x : rendered.samples) x *= fix;
          }
          Rendered r;
          r.file = strprintf("audio/%s-%s%04zu-%s.wav", scene.scene_label.c_str(), split_tag, i,
                             devices[d]->device_id.c_str());
          r.device_id = devices[d]->device_id;
          r.samples = std::move(rendered.samples);
          renders.push_back(std::move(r));
        }
      });

      for (int i = 0; i < base_count; ++i) {
        for (Rendered& r : per_clip[static_cast<size_t>(i)]) {
          write_wav_mono(out_dir / r.file, r.samples, spec.sample_rate_hz, WavEncoding::Float32);
          ++result.files_written;
          RecordingEntry entry;
          entry.file = r.file;
          entry.scene_label = scene.scene_label;
          entry.identifier = strprintf("synth-%s%04d", split_tag, i);
          entry.device_id = r.device_id;
          manifest.entries.push_back(std::move(entry));
        }
      }
    }
  };

  render_split("t", spec.train_clips_per_cell, train_devs, spec.train_clips_per_cell,
               result.train_manifest, 0x7121a1ull);

  const int test_base = std::max(spec.test_clips_per_cell_known, spec.test_clips_per_cell_unknown);
  if (test_base > 0) {
    std::vector<const SyntheticDeviceProfile*> all_devices = known;
    all_devices.insert(all_devices.end(), unknown.begin(), unknown.end());
    // render known and unknown cells from the same parallel base recordings
    Manifest& tm = result.test_manifest;
    for (int s = 0; s < spec.scene_count; ++s) {
      const SceneProfile& scene = scenes[static_cast<size_t>(s)];
      std::vector<std::vector<Rendered>> per_clip(static_cast<size_t>(test_base));
      parallel_for(static_cast<size_t>(test_base), workers, [&](size_t i) {
        Rng clip_rng(derive_seed(seed, {0x7e57ull, static_cast<uint64_t>(s), i}));
        AudioClip base;
        base.sample_rate_hz = spec.sample_rate_hz;
        base.samples = render_base_clip(scene, spec.sample_rate_hz, samples, clip_rng);
        for (const SyntheticDeviceProfile* dev : all_devices) {
          const int cap = dev->is_known ? spec.test_clips_per_cell_known
                                        : spec.test_clips_per_cell_unknown;
          if (static_cast<int>(i) >= cap) continue;
          AudioClip rendered = apply_device_ir(base, *dev);
          float peak = 0.0f;
          for (float x : rendered.samples) peak = std::max(peak, std::abs(x));
          if (peak > 0.98f) {
            const float fix = 0.98f / peak;
            for (float& x : rendered.samples) x *= fix;
          }
          Rendered r;
          r.file = strprintf("audio/%s-e%04zu-%s.wav", scene.scene_label.c_str(), i,
                             dev->device_id.c_str());
          r.device_id = dev->device_id;
          r.samples = std::move(rendered.samples);
          per_clip[i].push_back(std::move(r));
        }
      });
      for (int i = 0; i < test_base; ++i) {
        for (Rendered& r : per_clip[static_cast<size_t>(i)]) {
          write_wav_mono(out_dir / r.file, r.samples, spec.sample_rate_hz, WavEncoding::Float32);
          ++result.files_written;
          RecordingEntry entry;
          entry.file = r.file;
          entry.scene_label = scene.scene_label;
          entry.identifier = strprintf("synth-e%04d", i);
          entry.device_id = r.device_id;
          tm.entries.push_back(std::move(entry));
        }
      }
    }
  }

  save_manifest(result.train_manifest, out_dir / "train.tsv");
  if (!result.test_manifest.entries.empty()) {
    save_manifest(result.test_manifest, out_dir / "test.tsv");
  }
  save_device_profiles(profiles, out_dir / "profiles.txt");
  return result;
}

}  // namespace scenewise
