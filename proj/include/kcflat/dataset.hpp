#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "kcflat/cloth.hpp"
#include "kcflat/kcnet.hpp"

namespace kcflat::dataset {

struct Record {
  std::string path;  // relative to the dataset root
  kcnet::KnownConfigLabel label;
  int instance_id = 0;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  std::vector<Record> records;
  std::map<int, int> counts;  // flat_code -> record count
  int width = 256, height = 256;
  std::string root;         // directory holding manifest.json
  std::string config_json;  // RunConfig that produced it

  std::string to_json() const;
  static DatasetManifest from_json(const std::string &text, const std::string &root);
};

struct GenOptions {
  int per_grasp_count = 100;
  std::uint64_t seed = 1;
  double resolution = 12.0;     // template lattice particles/m
  double size_jitter = 0.1;     // instance dimension jitter
  double anchor_jitter = 0.01;  // m, per-image pin anchor perturbation
  double depth_noise = 0.0;     // m, optional Gaussian depth jitter
  int image_size = 256;         // px, square, multiple of the 64-px input
  int jobs = 1;
  std::string config_json = "{}";
};

// Synthesizes the full database: for every (shape, instance, grasp) the
// garment is crumpled with a fresh seed, lifted by the grasp vertex to a
// jittered anchor, settled, and the hanging state rendered by the front
// camera to data/<shape>/<instance>/<grasp>/<seed>.dpth (+ JSON sidecar).
// Deterministic per seed, byte-identical on regeneration.
DatasetManifest generate(const std::string &out_dir, const GenOptions &opts);

DatasetManifest load_manifest(const std::string &dir_or_file);

// Leave-one-instance-out: test = all records with instance_id == fold.
struct Split {
  DatasetManifest train, test;
};
Split split_loocv(const DatasetManifest &manifest, int fold);

// Loads every record into a prepared 64x64 input tensor + flat label.
std::vector<kcnet::LabeledImage> load_samples(const DatasetManifest &manifest);

// Lift trajectory driver shared by dataset synthesis, the perception
// stream and the pipeline: pin the grasp vertex, raise it vertically at
// 0.5 m/s, translate horizontally at 0.4 m/s to the anchor, then settle.
// `on_interval` (optional) observes the state every `interval` simulated
// seconds — the camera shutter during the lift.
cloth::ClothState lift_to_anchor(const cloth::GarmentTemplate &tpl, cloth::ClothState state,
                                 int grasp_index, const Vec3 &anchor,
                                 const std::function<void(const cloth::ClothState &)> &on_interval = {},
                                 double interval = 0.08);

// Hanging-state synthesis shared with the pipeline: crumple -> lift to
// anchor -> settle -> canonicalize azimuth about the pin axis. Returns the
// settled state (pin kept at the anchor).
cloth::ClothState known_config_state(const cloth::GarmentTemplate &tpl, int grasp_index,
                                     std::uint64_t seed, const Vec3 &anchor);

extern const Vec3 kDefaultAnchor;  // (0, 0, 1.2)

}  // namespace kcflat::dataset
