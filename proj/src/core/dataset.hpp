#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "renderer.hpp"

namespace viewgen {

inline constexpr int kManifestVersion = 1;

struct ManifestRecord {
  std::string cls;
  std::uint64_t instance_seed = 0;
  double pitch = 0.0;
  double yaw = 0.0;
  // Relative to the dataset root.
  std::string rgb_path;
  std::string depth_path;
  std::string mask_path;

  bool operator==(const ManifestRecord&) const = default;
};

// Index of a rendered dataset: a key=value header, then one CSV record per
// sample, stored as <root>/manifest.txt.
struct DatasetManifest {
  std::filesystem::path root;
  int size = 64;
  double distance = 2.5;
  double fov = 40.0;
  int supersample = 2;
  GridSpec grid;
  std::vector<std::string> classes;
  std::vector<ManifestRecord> records;

  std::vector<std::uint64_t> instances(const std::string& cls) const;  // ascending
  std::vector<ManifestRecord> records_for(const std::string& cls, std::uint64_t seed) const;
  CameraPose camera(const ManifestRecord& record) const;
  RenderOptions render_options() const;

  std::string to_text() const;
  static DatasetManifest parse(const std::string& text, const std::filesystem::path& root);
  static DatasetManifest load(const std::filesystem::path& root);
};

// Reads the three images of a record back from disk.
RenderedView load_view(const DatasetManifest& manifest, const ManifestRecord& record);

struct DatasetOptions {
  std::vector<std::string> classes{"can", "mug"};
  int instances = 20;
  std::uint64_t first_seed = 1;  // instance seeds are first_seed, first_seed + 1, ...
  GridSpec grid = GridSpec::training();
  int size = 64;
  double distance = 2.5;
  double fov = 40.0;
  int supersample = 2;
  bool overwrite = false;
  int threads = 1;
};

// Renders every (class, instance, pose) under `root` and writes the manifest
// last. Refuses a non-empty root unless options.overwrite is set, in which
// case only the manifest and the directories of the requested classes are
// replaced.
DatasetManifest generate_dataset(const DatasetOptions& options, const std::filesystem::path& root);

}  // namespace viewgen
