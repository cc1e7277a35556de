#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scenewise/frontend.hpp"
#include "scenewise/manifest.hpp"

namespace scenewise {

struct SyntheticDeviceProfile {
  std::string device_id;
  std::vector<float> impulse_response;  // FIR taps; unit impulse = identity
  double gain_db = 0.0;
  bool is_known = true;

  bool is_identity() const;
};

struct ScenePeak {
  double freq_hz = 0.0;
  double bandwidth_hz = 0.0;
  double level_db = 0.0;
};

// Spectral recipe for one synthetic scene: a few resonant noise bands plus
// one amplitude-modulated tone over a broadband noise floor.
struct SceneProfile {
  std::string scene_label;
  std::vector<ScenePeak> peaks;  // 3..5 bands, first one is the signature peak
  double tone_hz = 0.0;
  double tone_mod_hz = 0.0;
  double tone_level_db = 0.0;
  double noise_floor_db = -40.0;
};

// output = (clip convolved with the IR, truncated to the clip length) scaled
// by 10^(gain_db/20). The identity profile returns the clip unchanged.
AudioClip apply_device_ir(const AudioClip& clip, const SyntheticDeviceProfile& profile);

// Scene recipes are seeded and pairwise distinct: every scene owns a
// different signature band and tone slot.
std::vector<SceneProfile> make_scene_profiles(uint64_t seed, int scene_count);

// Six known devices (a = identity reference, b, c, s1..s3) plus three unknown
// ones (s4..s6), with per-device spectral tilt, notches, and gain offsets.
std::vector<SyntheticDeviceProfile> default_device_profiles(uint64_t seed);

// Text round-trip: one line per device (id, known flag, gain, taps).
void save_device_profiles(const std::vector<SyntheticDeviceProfile>& profiles,
                          const std::filesystem::path& path);
std::vector<SyntheticDeviceProfile> load_device_profiles(const std::filesystem::path& path);

struct SynthSpec {
  int scene_count = 10;
  int train_clips_per_cell = 40;        // per (scene, known device)
  int test_clips_per_cell_known = 10;   // controls the known:unknown test ratio
  int test_clips_per_cell_unknown = 10;
  int sample_rate_hz = 32000;
  double clip_seconds = 1.0;
  // Devices allowed in the training split; empty means every known profile.
  std::vector<std::string> train_devices;

  void validate(const std::vector<SyntheticDeviceProfile>& profiles) const;
};

struct SynthResult {
  Manifest train_manifest;
  Manifest test_manifest;
  std::filesystem::path dataset_dir;
  size_t files_written = 0;
};

// Writes audio/*.wav, train.tsv, test.tsv, and profiles.txt under out_dir.
// Every clip is reproducible from (seed, scene, split, index); the same base
// recording is rendered through each device of its split, mirroring a
// multi-device parallel capture.
SynthResult synth_generate(uint64_t seed, const SynthSpec& spec,
                           const std::vector<SyntheticDeviceProfile>& profiles,
                           const std::filesystem::path& out_dir, int workers = 1);

}  // namespace scenewise
