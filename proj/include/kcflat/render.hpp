#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kcflat/cloth.hpp"
#include "kcflat/geom.hpp"

namespace kcflat::render {

// Orthographic camera. Camera-frame coordinates are (x along `right`,
// y along `up`, z along `view`); z of a camera-frame point is its depth.
struct OrthoCamera {
  Vec3 origin;
  Vec3 view;     // unit, the optical axis
  Vec3 up;       // unit, orthogonal to view; image rows run against it
  double pitch;  // meters per pixel

  Vec3 right() const { return view.cross(up); }
  Vec3 to_camera(const Vec3 &world) const;
  Vec3 to_world(const Vec3 &cam) const;
};

// Fixed desk-scale rig: a front camera facing the hanging garment and a
// top-down camera over the table for footprint masks.
OrthoCamera front_camera();
OrthoCamera top_camera();

constexpr float kDepthSentinel = 0.0f;
constexpr int kImageSize = 256;

struct DepthImage {
  int width = 0, height = 0;
  std::vector<float> data;  // row-major depth in meters; 0 = background
  OrthoCamera camera{};

  float at(int row, int col) const { return data[std::size_t(row) * width + col]; }
  float &at(int row, int col) { return data[std::size_t(row) * width + col]; }
  bool foreground(int row, int col) const { return at(row, col) != kDepthSentinel; }
  int foreground_count() const;
};

struct PointCloud {
  std::vector<Vec3> points;  // camera frame
};

DepthImage render_depth(const std::vector<Vec3> &points, const OrthoCamera &camera, int width,
                        int height, int splat_radius = 2);

// Convenience overload that densely samples the cloth surface (particles
// plus bilinear interpolation inside lattice cells) before splatting, so
// coarse lattices still produce hole-free silhouettes.
DepthImage render_depth(const cloth::GarmentTemplate &tpl, const cloth::ClothState &state,
                        const OrthoCamera &camera, int width = kImageSize,
                        int height = kImageSize, int splat_radius = 2);

PointCloud depth_to_cloud(const DepthImage &img);

struct FootprintMask {
  int width = 0, height = 0;
  std::vector<std::uint8_t> mask;  // 1 = covered
  long area_px = 0;

  bool operator==(const FootprintMask &o) const = default;
};

FootprintMask footprint_mask(const std::vector<Vec3> &points, const OrthoCamera &top_camera,
                             int width = kImageSize, int height = kImageSize);
FootprintMask footprint_mask(const cloth::GarmentTemplate &tpl, const cloth::ClothState &state,
                             const OrthoCamera &top_camera, int width = kImageSize,
                             int height = kImageSize);

// Foreground masks as sets: intersection-over-union and exact equality.
double mask_iou(const FootprintMask &a, const FootprintMask &b);
FootprintMask foreground_of(const DepthImage &img);
double silhouette_iou(const DepthImage &a, const DepthImage &b);

// *.dpth file format: 16-byte header (magic "DPTH", u32 width, u32 height,
// u32 flags, little-endian) + float32 LE row-major meters. `sidecar` is
// written/read as <path>.json with the camera frame and any metadata.
void save_dpth(const std::string &path, const DepthImage &img, const std::string &sidecar_json);
DepthImage load_dpth(const std::string &path);
std::string load_sidecar(const std::string &path);

}  // namespace kcflat::render
