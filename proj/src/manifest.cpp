#include "scenewise/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "scenewise/common.hpp"

namespace scenewise {

std::string RecordingEntry::city() const {
  size_t dash = identifier.find('-');
  if (dash == std::string::npos) return identifier;
  return identifier.substr(0, dash);
}

std::vector<std::string> Manifest::labels() const {
  std::set<std::string> set;
  for (const RecordingEntry& e : entries) {
    if (!e.scene_label.empty()) set.insert(e.scene_label);
  }
  return {set.begin(), set.end()};
}

std::vector<std::string> Manifest::devices() const {
  std::set<std::string> set;
  for (const RecordingEntry& e : entries) set.insert(e.device_id);
  return {set.begin(), set.end()};
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  for (;;) {
    size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') {
    out.back().pop_back();
  }
  return out;
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path, ManifestKind kind) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open manifest " + path.string());

  std::string header_line;
  if (!std::getline(in, header_line)) {
    raise(ErrorKind::Format, path.string() + ": empty manifest (no header)");
  }
  std::vector<std::string> header = split_tabs(header_line);

  auto column = [&header](const std::string& name) -> int {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int col_file = column("filename");
  const int col_scene = column("scene_label");
  const int col_ident = column("identifier");
  const int col_device = column("source_label");

  auto missing = [&path](const char* name) {
    raise(ErrorKind::Format,
          strprintf("%s: missing required column '%s'", path.string().c_str(), name));
  };
  if (col_file < 0) missing("filename");
  if (col_device < 0) missing("source_label");
  if (kind == ManifestKind::Train && col_scene < 0) missing("scene_label");

  Manifest manifest;
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> fields = split_tabs(line);
    auto field = [&](int idx) -> std::string {
      if (idx < 0 || idx >= static_cast<int>(fields.size())) return {};
      return fields[static_cast<size_t>(idx)];
    };

    RecordingEntry entry;
    entry.file = field(col_file);
    entry.scene_label = field(col_scene);
    entry.identifier = field(col_ident);
    entry.device_id = field(col_device);

    if (entry.file.empty()) {
      raise(ErrorKind::Format, strprintf("%s:%d: empty filename", path.string().c_str(), line_no));
    }
    if (entry.device_id.empty()) {
      raise(ErrorKind::Format,
            strprintf("%s:%d: empty source_label (device id)", path.string().c_str(), line_no));
    }
    if (kind == ManifestKind::Train && entry.scene_label.empty()) {
      raise(ErrorKind::Format,
            strprintf("%s:%d: train manifest row missing scene_label", path.string().c_str(),
                      line_no));
    }
    manifest.entries.push_back(std::move(entry));
  }

  if (manifest.entries.empty()) {
    raise(ErrorKind::Format, path.string() + ": manifest has no rows");
  }
  return manifest;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorKind::Io, "cannot write manifest " + path.string());
  out << "filename\tscene_label\tidentifier\tsource_label\n";
  for (const RecordingEntry& e : manifest.entries) {
    out << e.file << '\t' << e.scene_label << '\t' << e.identifier << '\t' << e.device_id << '\n';
  }
  if (!out) raise(ErrorKind::Io, "short write to " + path.string());
}

bool DeviceRegistry::is_known(const std::string& device_id) const {
  return std::binary_search(known_devices.begin(), known_devices.end(), device_id);
}

DeviceRegistry build_registry(const Manifest& train_manifest) {
  std::set<std::string> devices;
  for (const RecordingEntry& e : train_manifest.entries) {
    if (e.device_id != kUnknownDevice) devices.insert(e.device_id);
  }
  if (devices.empty()) {
    raise(ErrorKind::Data, "train manifest contains no usable device ids");
  }
  DeviceRegistry registry;
  registry.known_devices.assign(devices.begin(), devices.end());
  return registry;
}

}  // namespace scenewise
