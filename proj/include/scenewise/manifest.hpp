#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace scenewise {

inline constexpr const char* kUnknownDevice = "unknown";

struct RecordingEntry {
  std::string file;         // path relative to the dataset root
  std::string scene_label;  // empty when absent (unlabeled manifests)
  std::string identifier;   // e.g. "barcelona-0"; empty when absent
  std::string device_id;    // e.g. "a", "s1", or the literal "unknown"

  // city prefix of the identifier, empty when unavailable
  std::string city() const;
};

enum class ManifestKind { Train, Test };

struct Manifest {
  std::vector<RecordingEntry> entries;

  std::vector<std::string> labels() const;   // sorted distinct scene labels
  std::vector<std::string> devices() const;  // sorted distinct device ids
};

// Tab-separated with a header row; columns are looked up by name
// (filename, scene_label, identifier, source_label). Train manifests must
// carry scene_label and source_label; test manifests must carry source_label.
Manifest load_manifest(const std::filesystem::path& path, ManifestKind kind);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

struct DeviceRegistry {
  std::vector<std::string> known_devices;  // sorted, never contains "unknown"

  bool is_known(const std::string& device_id) const;
  size_t size() const { return known_devices.size(); }
};

DeviceRegistry build_registry(const Manifest& train_manifest);

}  // namespace scenewise
