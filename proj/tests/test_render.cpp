#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "kcflat/cloth.hpp"
#include "kcflat/render.hpp"

using namespace kcflat;
using render::DepthImage;
using render::OrthoCamera;

TEST_CASE("single centered particle splats the center pixel, corners stay background") {
  const OrthoCamera cam = render::front_camera();
  // 1.0 m in front of the camera along its view axis
  const Vec3 p = cam.origin + cam.view * 1.0;
  const DepthImage img = render::render_depth(std::vector<Vec3>{p}, cam, render::kImageSize, render::kImageSize);

  CHECK(img.at(127, 127) == 1.0f);
  CHECK(img.at(128, 128) == 1.0f);
  CHECK(img.at(0, 0) == render::kDepthSentinel);
  CHECK(img.at(255, 255) == render::kDepthSentinel);
  CHECK(img.foreground_count() > 0);
  CHECK(img.foreground_count() <= 16);  // radius-2 splat stays local
}

TEST_CASE("z-buffer keeps the nearer of two particles on the same ray") {
  const OrthoCamera cam = render::front_camera();
  const std::vector<Vec3> pts = {cam.origin + cam.view * 2.0, cam.origin + cam.view * 1.0};
  const DepthImage img = render::render_depth(pts, cam, render::kImageSize, render::kImageSize);
  CHECK(img.at(127, 127) == 1.0f);
}

TEST_CASE("rendering twice is bit-identical") {
  const cloth::GarmentTemplate tpl = cloth::make_template(cloth::ShapeClass::tshirt, 0, 8.0, 0.0);
  const cloth::ClothState state = cloth::crumple(tpl, 5);
  const DepthImage a = render::render_depth(tpl, state, render::top_camera());
  const DepthImage b = render::render_depth(tpl, state, render::top_camera());
  CHECK(a.data == b.data);
}

TEST_CASE("zero pitch camera is rejected") {
  OrthoCamera cam = render::front_camera();
  cam.pitch = 0.0;
  CHECK_THROWS_AS(render::render_depth(std::vector<Vec3>{{0, 0, 1}}, cam, 16, 16), std::invalid_argument);
}

TEST_CASE("depth_to_cloud inverts isolated splats to within a pixel") {
  const OrthoCamera cam = render::front_camera();
  const std::vector<Vec3> pts = {cam.origin + cam.view * 1.5,
                                 cam.origin + cam.view * 2.0 + cam.right() * 0.3 +
                                     cam.up * (-0.2)};
  const DepthImage img = render::render_depth(pts, cam, render::kImageSize, render::kImageSize);
  const render::PointCloud cloud = render::depth_to_cloud(img);
  REQUIRE(int(cloud.points.size()) == img.foreground_count());

  for (const Vec3 &orig : pts) {
    const Vec3 cam_p = cam.to_camera(orig);
    double best = 1e9;
    for (const Vec3 &q : cloud.points) best = std::min(best, (q - cam_p).norm());
    CHECK(best <= cam.pitch * 1.5);
  }
}

TEST_CASE("empty image gives an empty cloud") {
  DepthImage img;
  img.width = 16;
  img.height = 16;
  img.data.assign(256, render::kDepthSentinel);
  img.camera = render::front_camera();
  CHECK(render::depth_to_cloud(img).points.empty());
}

TEST_CASE("cloud round-trip reproduces the foreground mask exactly") {
  // radius-1 re-render of the unprojected cloud hits exactly the original
  // pixels: each point sits at its pixel center, so the strict-circle splat
  // covers that single pixel
  const cloth::GarmentTemplate tpl = cloth::make_template(cloth::ShapeClass::towel, 0, 8.0, 0.0);
  cloth::ClothState state = cloth::rest_state(tpl);
  for (Vec3 &p : state.positions) p.z += 0.4;  // lift off the table plane
  const OrthoCamera cam = render::top_camera();
  const DepthImage img = render::render_depth(tpl, state, cam);
  REQUIRE(img.foreground_count() > 0);

  const render::PointCloud cloud = render::depth_to_cloud(img);
  std::vector<Vec3> world;
  world.reserve(cloud.points.size());
  for (const Vec3 &p : cloud.points) world.push_back(cam.to_world(p));
  const DepthImage again = render::render_depth(world, cam, img.width, img.height, 1);

  REQUIRE(again.foreground_count() == img.foreground_count());
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      CHECK((img.at(r, c) == render::kDepthSentinel) ==
            (again.at(r, c) == render::kDepthSentinel));
}

TEST_CASE("flat rectangle footprint matches its analytic pixel area") {
  const cloth::GarmentTemplate tpl = cloth::make_template(cloth::ShapeClass::towel, 0, 10.0, 0.0);
  const cloth::ClothState state = cloth::rest_state(tpl);
  const OrthoCamera top = render::top_camera();
  const render::FootprintMask m = render::footprint_mask(tpl, state, top);

  // bounding box of the rest lattice gives the physical rectangle
  double lo_x = 1e9, hi_x = -1e9, lo_y = 1e9, hi_y = -1e9;
  for (const Vec2 &p : tpl.rest_positions) {
    lo_x = std::min(lo_x, p.x);
    hi_x = std::max(hi_x, p.x);
    lo_y = std::min(lo_y, p.y);
    hi_y = std::max(hi_y, p.y);
  }
  const double analytic = ((hi_x - lo_x) / top.pitch) * ((hi_y - lo_y) / top.pitch);
  CHECK(double(m.area_px) > 0.98 * analytic);
  CHECK(double(m.area_px) < 1.02 * analytic + 4 * ((hi_x - lo_x) + (hi_y - lo_y)) / top.pitch);
}

TEST_CASE("footprint of a particle superset is never smaller") {
  const cloth::GarmentTemplate tpl = cloth::make_template(cloth::ShapeClass::jean, 0, 8.0, 0.0);
  const cloth::ClothState state = cloth::rest_state(tpl);

  std::vector<Vec3> half(state.positions.begin(),
                         state.positions.begin() + long(state.positions.size() / 2));
  const OrthoCamera top = render::top_camera();
  const render::FootprintMask part = render::footprint_mask(half, top);
  const render::FootprintMask full = render::footprint_mask(state.positions, top);
  CHECK(full.area_px >= part.area_px);
}

TEST_CASE("empty state has zero footprint") {
  const render::FootprintMask m = render::footprint_mask(std::vector<Vec3>{}, render::top_camera());
  CHECK(m.area_px == 0);
}

TEST_CASE("crumpled footprint is smaller than the flat one") {
  const cloth::GarmentTemplate tpl = cloth::make_template(cloth::ShapeClass::towel, 0, 10.0, 0.0);
  const OrthoCamera top = render::top_camera();
  const long flat = render::footprint_mask(tpl, cloth::rest_state(tpl), top).area_px;
  const long crumpled = render::footprint_mask(tpl, cloth::crumple(tpl, 11), top).area_px;
  CHECK(crumpled < flat);
}

TEST_CASE("occlusion correctness on overlapping splats") {
  const OrthoCamera cam = render::top_camera();
  // many particles on the same vertical ray at decreasing height
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({0.0, 0.0, 0.1 * (i + 1)});
  const DepthImage img = render::render_depth(pts, cam, render::kImageSize, render::kImageSize);
  // nearest to a top camera at z=2.5 is the highest point z=1.0 -> depth 1.5
  CHECK(img.at(127, 127) == doctest::Approx(1.5f));
}
