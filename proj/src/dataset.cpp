#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "kcflat/dataset.hpp"
#include "kcflat/errors.hpp"
#include "kcflat/render.hpp"
#include "kcflat/rng.hpp"

namespace kcflat::dataset {

namespace fs = std::filesystem;
using nlohmann::json;

const Vec3 kDefaultAnchor{0.0, 0.0, 1.2};

namespace {

constexpr double kLiftSpeed = 0.5;       // m/s, vertical
constexpr double kTranslateSpeed = 0.4;  // m/s, horizontal
constexpr int kInstanceCount = 4;

// move_pin with a camera-shutter callback folded into the step loop
void move_pin_observed(const cloth::GarmentTemplate &tpl, cloth::ClothState &state, int pin,
                       const Vec3 &target, double duration, double dt,
                       const std::function<void(const cloth::ClothState &)> &on_interval,
                       int interval_steps, long &step_counter) {
  const Vec3 start = state.pinned.count(pin) ? state.pinned[pin]
                                             : state.positions[std::size_t(pin)];
  state.pinned[pin] = start;
  const int steps = std::max(1, int(std::ceil(duration / dt)));
  for (int k = 1; k <= steps; ++k) {
    const double t = double(k) / steps;
    state.pinned[pin] = (k == steps) ? target : Vec3{start + t * (target - start)};
    cloth::step_inplace(tpl, state, dt);
    ++step_counter;
    if (on_interval && step_counter % interval_steps == 0) on_interval(state);
  }
  if (!std::isfinite(cloth::kinetic_energy(tpl, state)))
    throw DivergenceError("lift diverged", step_counter);
}

}  // namespace

cloth::ClothState lift_to_anchor(const cloth::GarmentTemplate &tpl, cloth::ClothState state,
                                 int grasp_index, const Vec3 &anchor,
                                 const std::function<void(const cloth::ClothState &)> &on_interval,
                                 double interval) {
  if (grasp_index < 0 || grasp_index >= cloth::kGraspPointsPerShape)
    throw std::invalid_argument("grasp_index must be in [0,10)");
  const cloth::HangParams hang;
  const double dt = hang.dt;
  const int interval_steps = std::max(1, int(std::llround(interval / dt)));
  long counter = 0;

  const int pin = tpl.grasp_vertices[std::size_t(grasp_index)];
  const Vec3 p0 = state.positions[std::size_t(pin)];

  const double dz = std::abs(anchor.z - p0.z);
  if (dz > 1e-9)
    move_pin_observed(tpl, state, pin, {p0.x, p0.y, anchor.z}, dz / kLiftSpeed, dt, on_interval,
                      interval_steps, counter);
  const double dxy = std::hypot(anchor.x - p0.x, anchor.y - p0.y);
  if (dxy > 1e-9)
    move_pin_observed(tpl, state, pin, anchor, dxy / kTranslateSpeed, dt, on_interval,
                      interval_steps, counter);
  state.pinned[pin] = anchor;

  // settle, still observing at the same cadence
  cloth::SettleResult settled;
  if (on_interval) {
    for (int s = 0; s < hang.max_steps; ++s) {
      cloth::step_inplace(tpl, state, dt);
      ++counter;
      if (counter % interval_steps == 0) on_interval(state);
      const double ke = cloth::kinetic_energy(tpl, state);
      if (!std::isfinite(ke)) throw DivergenceError("settle diverged", counter);
      if (ke <= hang.ke_tolerance) break;
    }
    return state;
  }
  settled = cloth::settle(tpl, std::move(state), hang);
  return std::move(settled.state);
}

cloth::ClothState known_config_state(const cloth::GarmentTemplate &tpl, int grasp_index,
                                     std::uint64_t seed, const Vec3 &anchor) {
  cloth::ClothState state = cloth::crumple(tpl, seed);
  state = lift_to_anchor(tpl, std::move(state), grasp_index, anchor);
  cloth::canonicalize_azimuth(tpl, state, tpl.grasp_vertices[std::size_t(grasp_index)]);
  return state;
}

std::string DatasetManifest::to_json() const {
  json j;
  j["schema_version"] = 1;
  j["width"] = width;
  j["height"] = height;
  j["config"] = config_json.empty() ? json::object() : json::parse(config_json);
  auto recs = json::array();
  for (const Record &r : records) {
    recs.push_back({{"path", r.path},
                    {"shape", cloth::shape_name(r.label.shape)},
                    {"grasp_index", r.label.grasp_index},
                    {"instance_id", r.instance_id},
                    {"seed", r.seed}});
  }
  j["records"] = std::move(recs);
  json cnt = json::object();
  for (const auto &[code, n] : counts) cnt[std::to_string(code)] = n;
  j["counts"] = std::move(cnt);
  return j.dump(2);
}

DatasetManifest DatasetManifest::from_json(const std::string &text, const std::string &root) {
  const json j = json::parse(text);
  DatasetManifest m;
  m.root = root;
  m.width = j.at("width").get<int>();
  m.height = j.at("height").get<int>();
  m.config_json = j.at("config").dump();
  for (const json &r : j.at("records")) {
    Record rec;
    rec.path = r.at("path").get<std::string>();
    rec.label = {cloth::shape_from_name(r.at("shape").get<std::string>()),
                 r.at("grasp_index").get<int>()};
    rec.instance_id = r.at("instance_id").get<int>();
    rec.seed = r.at("seed").get<std::uint64_t>();
    m.records.push_back(std::move(rec));
    m.counts[m.records.back().label.flat_code()] += 1;
  }
  return m;
}

DatasetManifest generate(const std::string &out_dir, const GenOptions &opts) {
  if (opts.per_grasp_count < 1) throw std::invalid_argument("per_grasp_count must be >= 1");
  if (opts.anchor_jitter < 0 || opts.depth_noise < 0)
    throw std::invalid_argument("jitter amplitudes must be >= 0");
  if (opts.image_size < 64 || opts.image_size % 64 != 0)
    throw std::invalid_argument("image_size must be a positive multiple of 64");

  const std::vector<cloth::GarmentTemplate> templates =
      cloth::make_all_templates(opts.resolution, opts.size_jitter);

  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.config_json = opts.config_json;
  manifest.width = manifest.height = opts.image_size;

  long index = 0;
  for (int s = 0; s < cloth::kShapeCount; ++s) {
    for (int inst = 0; inst < kInstanceCount; ++inst) {
      for (int g = 0; g < cloth::kGraspPointsPerShape; ++g) {
        for (int i = 0; i < opts.per_grasp_count; ++i) {
          Record rec;
          rec.label = {cloth::ShapeClass(s), g};
          rec.instance_id = inst;
          rec.seed = mix_seed(opts.seed, std::uint64_t(index));
          rec.path = std::string("data/") + cloth::shape_name(cloth::ShapeClass(s)) + "/" +
                     std::to_string(inst) + "/" + std::to_string(g) + "/" +
                     std::to_string(rec.seed) + ".dpth";
          manifest.records.push_back(std::move(rec));
          manifest.counts[manifest.records.back().label.flat_code()] += 1;
          ++index;
        }
      }
    }
  }

  for (const Record &rec : manifest.records)
    fs::create_directories(fs::path(out_dir) / fs::path(rec.path).parent_path());

  std::string first_error;
#pragma omp parallel for schedule(dynamic) num_threads(opts.jobs)
  for (long r = 0; r < long(manifest.records.size()); ++r) {
    try {
      const Record &rec = manifest.records[std::size_t(r)];
      const cloth::GarmentTemplate &tpl =
          templates[std::size_t(int(rec.label.shape) * kInstanceCount + rec.instance_id)];

      Rng arng(mix_seed(rec.seed, 0xA0u));
      const Vec3 anchor{
          kDefaultAnchor.x + opts.anchor_jitter * (2.0 * arng.uniform() - 1.0),
          kDefaultAnchor.y + opts.anchor_jitter * (2.0 * arng.uniform() - 1.0),
          kDefaultAnchor.z + opts.anchor_jitter * (2.0 * arng.uniform() - 1.0)};

      const cloth::ClothState state =
          known_config_state(tpl, rec.label.grasp_index, rec.seed, anchor);
      // the physical field of view stays fixed: smaller images get a
      // coarser pitch, not a narrower view
      render::OrthoCamera cam = render::front_camera();
      cam.pitch *= double(render::kImageSize) / double(manifest.width);
      render::DepthImage img =
          render::render_depth(tpl, state, cam, manifest.width, manifest.height, 2);
      if (opts.depth_noise > 0) {
        Rng nrng(mix_seed(rec.seed, 0xD0u));
        for (float &d : img.data) {
          if (d == render::kDepthSentinel) continue;
          d = float(std::clamp(double(d) + nrng.gaussian() * opts.depth_noise, 0.01, 9.99));
        }
      }

      json side;
      side["label"] = {{"shape", cloth::shape_name(rec.label.shape)},
                       {"grasp_index", rec.label.grasp_index},
                       {"flat", rec.label.flat_code()}};
      side["instance_id"] = rec.instance_id;
      side["seed"] = rec.seed;
      side["anchor"] = {anchor.x, anchor.y, anchor.z};
      side["config"] = opts.config_json.empty() ? json::object() : json::parse(opts.config_json);
      render::save_dpth((fs::path(out_dir) / rec.path).string(), img, side.dump());
    } catch (const std::exception &e) {
#pragma omp critical
      if (first_error.empty()) first_error = e.what();
    }
  }
  if (!first_error.empty()) throw std::runtime_error("dataset generation failed: " + first_error);

  std::ofstream mf(fs::path(out_dir) / "manifest.json");
  if (!mf) throw std::runtime_error("cannot write manifest in " + out_dir);
  mf << manifest.to_json() << "\n";
  return manifest;
}

DatasetManifest load_manifest(const std::string &dir_or_file) {
  fs::path p(dir_or_file);
  if (fs::is_directory(p)) p /= "manifest.json";
  std::ifstream f(p);
  if (!f) throw std::runtime_error("cannot open manifest: " + p.string());
  const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return DatasetManifest::from_json(text, p.parent_path().string());
}

Split split_loocv(const DatasetManifest &manifest, int fold) {
  if (fold < 0 || fold >= kInstanceCount)
    throw std::invalid_argument("LOOCV fold must be in [0,4)");
  Split sp;
  for (DatasetManifest *m : {&sp.train, &sp.test}) {
    m->width = manifest.width;
    m->height = manifest.height;
    m->root = manifest.root;
    m->config_json = manifest.config_json;
  }
  for (const Record &r : manifest.records) {
    DatasetManifest &dst = (r.instance_id == fold) ? sp.test : sp.train;
    dst.records.push_back(r);
    dst.counts[r.label.flat_code()] += 1;
  }
  return sp;
}

std::vector<kcnet::LabeledImage> load_samples(const DatasetManifest &manifest) {
  std::vector<kcnet::LabeledImage> out(manifest.records.size());
  std::string first_error;
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < long(manifest.records.size()); ++i) {
    try {
      const Record &rec = manifest.records[std::size_t(i)];
      const render::DepthImage img =
          render::load_dpth((fs::path(manifest.root) / rec.path).string());
      if (img.width != manifest.width || img.height != manifest.height)
        throw std::runtime_error("record size mismatch: " + rec.path);
      out[std::size_t(i)] = {kcnet::depth_to_input(img), rec.label.flat_code(),
                             rec.instance_id};
    } catch (const std::exception &e) {
#pragma omp critical
      if (first_error.empty()) first_error = e.what();
    }
  }
  if (!first_error.empty()) throw std::runtime_error("loading samples failed: " + first_error);
  return out;
}

}  // namespace kcflat::dataset
