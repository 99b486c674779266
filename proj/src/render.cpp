#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "kcflat/render.hpp"

namespace kcflat::render {

using nlohmann::json;

namespace {

void check_camera(const OrthoCamera &cam) {
  if (!(cam.pitch > 0)) throw std::invalid_argument("camera pitch must be > 0");
  if (std::abs(cam.view.norm() - 1.0) > 1e-9 || std::abs(cam.up.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("camera axes must be unit length");
  if (std::abs(cam.view.dot(cam.up)) > 1e-9)
    throw std::invalid_argument("camera view and up must be orthogonal");
}

std::string sidecar_path(const std::string &path) { return path + ".json"; }

json camera_json(const OrthoCamera &cam) {
  return json{{"origin", {cam.origin.x, cam.origin.y, cam.origin.z}},
              {"view", {cam.view.x, cam.view.y, cam.view.z}},
              {"up", {cam.up.x, cam.up.y, cam.up.z}},
              {"pitch", cam.pitch}};
}

OrthoCamera camera_from_json(const json &j) {
  OrthoCamera cam;
  cam.origin = {j.at("origin").at(0).get<double>(), j.at("origin").at(1).get<double>(),
                j.at("origin").at(2).get<double>()};
  cam.view = {j.at("view").at(0).get<double>(), j.at("view").at(1).get<double>(),
              j.at("view").at(2).get<double>()};
  cam.up = {j.at("up").at(0).get<double>(), j.at("up").at(1).get<double>(),
            j.at("up").at(2).get<double>()};
  cam.pitch = j.at("pitch").get<double>();
  return cam;
}

}  // namespace

Vec3 OrthoCamera::to_camera(const Vec3 &world) const {
  const Vec3 d = world - origin;
  return {d.dot(right()), d.dot(up), d.dot(view)};
}

Vec3 OrthoCamera::to_world(const Vec3 &cam) const {
  return origin + cam.x * right() + cam.y * up + cam.z * view;
}

// Front camera: 2 m in front of the rig, optical axis +y, looking at the
// space between table plane and the 1.2 m hanging anchor.
OrthoCamera front_camera() {
  return {{0.0, -2.0, 0.66}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, 0.0055};
}

// Top camera: 2.5 m above the table, straight down; used for footprints.
OrthoCamera top_camera() {
  return {{0.0, 0.0, 2.5}, {0.0, 0.0, -1.0}, {0.0, 1.0, 0.0}, 0.006};
}

int DepthImage::foreground_count() const {
  int n = 0;
  for (float d : data)
    if (d != kDepthSentinel) ++n;
  return n;
}

DepthImage render_depth(const std::vector<Vec3> &points, const OrthoCamera &camera, int width,
                        int height, int splat_radius) {
  check_camera(camera);
  if (width <= 0 || height <= 0) throw std::invalid_argument("image size must be positive");
  if (splat_radius < 1) throw std::invalid_argument("splat_radius must be >= 1");

  DepthImage img;
  img.width = width;
  img.height = height;
  img.camera = camera;
  img.data.assign(std::size_t(width) * height, kDepthSentinel);

  const Vec3 r = camera.right();
  const double rr = double(splat_radius) * splat_radius;
  for (const Vec3 &p : points) {
    const Vec3 d = p - camera.origin;
    const double depth = d.dot(camera.view);
    if (depth <= 0 || depth >= 10.0) continue;  // outside the sensor range
    const double u = d.dot(r) / camera.pitch + 0.5 * width;
    const double v = 0.5 * height - d.dot(camera.up) / camera.pitch;
    const int c0 = int(std::floor(u - splat_radius)), c1 = int(std::floor(u + splat_radius));
    const int r0 = int(std::floor(v - splat_radius)), r1 = int(std::floor(v + splat_radius));
    for (int row = std::max(r0, 0); row <= std::min(r1, height - 1); ++row) {
      for (int col = std::max(c0, 0); col <= std::min(c1, width - 1); ++col) {
        const double du = col + 0.5 - u, dv = row + 0.5 - v;
        if (du * du + dv * dv >= rr) continue;  // strict: keeps splats invertible
        float &cell = img.at(row, col);
        const float fd = float(depth);
        if (cell == kDepthSentinel || fd < cell) cell = fd;
      }
    }
  }
  return img;
}

DepthImage render_depth(const cloth::GarmentTemplate &tpl, const cloth::ClothState &state,
                        const OrthoCamera &camera, int width, int height, int splat_radius) {
  return render_depth(cloth::sample_surface(tpl, state, camera.pitch * 0.7), camera, width,
                      height, splat_radius);
}

PointCloud depth_to_cloud(const DepthImage &img) {
  PointCloud cloud;
  cloud.points.reserve(std::size_t(img.foreground_count()));
  for (int row = 0; row < img.height; ++row) {
    for (int col = 0; col < img.width; ++col) {
      const float d = img.at(row, col);
      if (d == kDepthSentinel) continue;
      cloud.points.push_back({(col + 0.5 - 0.5 * img.width) * img.camera.pitch,
                              (0.5 * img.height - row - 0.5) * img.camera.pitch, double(d)});
    }
  }
  return cloud;
}

FootprintMask footprint_mask(const std::vector<Vec3> &points, const OrthoCamera &top_cam,
                             int width, int height) {
  check_camera(top_cam);
  FootprintMask m;
  m.width = width;
  m.height = height;
  m.mask.assign(std::size_t(width) * height, 0);
  const Vec3 r = top_cam.right();
  for (const Vec3 &p : points) {
    const Vec3 d = p - top_cam.origin;
    const int col = int(std::floor(d.dot(r) / top_cam.pitch + 0.5 * width));
    const int row = int(std::floor(0.5 * height - d.dot(top_cam.up) / top_cam.pitch));
    if (col < 0 || col >= width || row < 0 || row >= height) continue;
    std::uint8_t &cell = m.mask[std::size_t(row) * width + col];
    if (!cell) {
      cell = 1;
      ++m.area_px;
    }
  }
  return m;
}

FootprintMask footprint_mask(const cloth::GarmentTemplate &tpl, const cloth::ClothState &state,
                             const OrthoCamera &top_cam, int width, int height) {
  return footprint_mask(cloth::sample_surface(tpl, state, top_cam.pitch * 0.7), top_cam, width,
                        height);
}

double mask_iou(const FootprintMask &a, const FootprintMask &b) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("mask size mismatch");
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.mask.size(); ++i) {
    const bool pa = a.mask[i] != 0, pb = b.mask[i] != 0;
    inter += (pa && pb) ? 1 : 0;
    uni += (pa || pb) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

FootprintMask foreground_of(const DepthImage &img) {
  FootprintMask m;
  m.width = img.width;
  m.height = img.height;
  m.mask.assign(img.data.size(), 0);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    if (img.data[i] != kDepthSentinel) {
      m.mask[i] = 1;
      ++m.area_px;
    }
  }
  return m;
}

double silhouette_iou(const DepthImage &a, const DepthImage &b) {
  return mask_iou(foreground_of(a), foreground_of(b));
}

void save_dpth(const std::string &path, const DepthImage &img, const std::string &sidecar_json) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  const char magic[4] = {'D', 'P', 'T', 'H'};
  const std::uint32_t w = std::uint32_t(img.width), h = std::uint32_t(img.height), flags = 0;
  f.write(magic, 4);
  f.write(reinterpret_cast<const char *>(&w), 4);
  f.write(reinterpret_cast<const char *>(&h), 4);
  f.write(reinterpret_cast<const char *>(&flags), 4);
  f.write(reinterpret_cast<const char *>(img.data.data()),
          std::streamsize(img.data.size() * sizeof(float)));
  if (!f) throw std::runtime_error("short write: " + path);
  f.close();

  json side = sidecar_json.empty() ? json::object() : json::parse(sidecar_json);
  side["camera"] = camera_json(img.camera);
  std::ofstream s(sidecar_path(path));
  if (!s) throw std::runtime_error("cannot open for write: " + sidecar_path(path));
  s << side.dump(2) << "\n";
}

DepthImage load_dpth(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  std::uint32_t w = 0, h = 0, flags = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char *>(&w), 4);
  f.read(reinterpret_cast<char *>(&h), 4);
  f.read(reinterpret_cast<char *>(&flags), 4);
  if (!f || std::memcmp(magic, "DPTH", 4) != 0)
    throw std::runtime_error("not a depth file: " + path);
  if (w == 0 || h == 0 || w > 1u << 14 || h > 1u << 14)
    throw std::runtime_error("implausible depth image size: " + path);
  DepthImage img;
  img.width = int(w);
  img.height = int(h);
  img.data.resize(std::size_t(w) * h);
  f.read(reinterpret_cast<char *>(img.data.data()),
         std::streamsize(img.data.size() * sizeof(float)));
  if (!f) throw std::runtime_error("truncated depth file: " + path);

  img.camera = front_camera();
  if (std::filesystem::exists(sidecar_path(path))) {
    const json side = json::parse(load_sidecar(path));
    if (side.contains("camera")) img.camera = camera_from_json(side.at("camera"));
  }
  return img;
}

std::string load_sidecar(const std::string &path) {
  std::ifstream s(sidecar_path(path));
  if (!s) throw std::runtime_error("missing sidecar: " + sidecar_path(path));
  return std::string(std::istreambuf_iterator<char>(s), std::istreambuf_iterator<char>());
}

}  // namespace kcflat::render
