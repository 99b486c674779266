#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "kcflat/cloth.hpp"
#include "kcflat/rng.hpp"

namespace kcflat::cloth {

using nlohmann::json;

namespace {

constexpr double kStructStiffness = 180.0;  // N/m
constexpr double kShearStiffness = 60.0;    // N/m
constexpr double kArealDensity = 0.30;      // kg/m^2
constexpr double kEdgeEps = 1e-7;           // m, boundary containment slack

struct ShapeSpec {
  std::vector<Vec2> polygon;                          // rectilinear, CCW, centered
  std::array<Vec2, kGraspPointsPerShape> landmarks;   // canonical grasp points
};

// All polygons are rectilinear and mirror-symmetric about x=0 (the towel is
// additionally symmetric under 180-degree rotation). Landmarks live in one
// fundamental domain of the shape's symmetry group so that no two grasp
// points are related by a garment symmetry — symmetric pairs would settle
// into hanging poses that are indistinguishable after azimuth
// canonicalization.
ShapeSpec canonical_spec(ShapeClass s) {
  switch (s) {
    case ShapeClass::towel:
      return {{{-0.35, -0.25}, {0.35, -0.25}, {0.35, 0.25}, {-0.35, 0.25}},
              {{{-0.35, -0.25},
                {-0.175, -0.25},
                {0.0, -0.25},
                {-0.35, -0.125},
                {-0.35, 0.0},
                {0.0, 0.0},
                {-0.175, -0.125},
                {-0.2625, -0.0625},
                {-0.0875, -0.1875},
                {-0.30, -0.1875}}}};
    case ShapeClass::tshirt:
      return {{{-0.22, -0.32},
               {0.22, -0.32},
               {0.22, 0.12},
               {0.43, 0.12},
               {0.43, 0.32},
               {-0.43, 0.32},
               {-0.43, 0.12},
               {-0.22, 0.12}},
              {{{-0.43, 0.32},
                {-0.43, 0.12},
                {-0.20, 0.32},
                {0.0, 0.32},
                {-0.22, 0.12},
                {-0.22, -0.32},
                {0.0, -0.32},
                {-0.22, -0.10},
                {-0.11, 0.0},
                {-0.33, 0.12}}}};
    case ShapeClass::shirt:
      return {{{-0.24, -0.34},
               {0.24, -0.34},
               {0.24, 0.16},
               {0.48, 0.16},
               {0.48, 0.34},
               {0.07, 0.34},
               {0.07, 0.28},
               {-0.07, 0.28},
               {-0.07, 0.34},
               {-0.48, 0.34},
               {-0.48, 0.16},
               {-0.24, 0.16}},
              {{{-0.48, 0.34},
                {-0.48, 0.16},
                {-0.25, 0.34},
                {0.0, 0.28},
                {-0.24, 0.16},
                {-0.24, -0.34},
                {0.0, -0.34},
                {-0.10, -0.05},
                {-0.36, 0.25},
                {-0.07, 0.34}}}};
    case ShapeClass::sweater:
      return {{{-0.25, -0.31},
               {0.25, -0.31},
               {0.25, 0.05},
               {0.50, 0.05},
               {0.50, 0.31},
               {-0.50, 0.31},
               {-0.50, 0.05},
               {-0.25, 0.05}},
              {{{-0.50, 0.31},
                {-0.50, 0.05},
                {-0.25, 0.31},
                {0.0, 0.31},
                {-0.25, 0.05},
                {-0.25, -0.31},
                {0.0, -0.31},
                {-0.25, -0.13},
                {-0.12, -0.02},
                {-0.375, 0.18}}}};
    case ShapeClass::jean:
      return {{{-0.21, -0.35},
               {-0.05, -0.35},
               {-0.05, 0.07},
               {0.05, 0.07},
               {0.05, -0.35},
               {0.21, -0.35},
               {0.21, 0.35},
               {-0.21, 0.35}},
              {{{-0.21, 0.35},
                {0.0, 0.35},
                {-0.21, 0.20},
                {0.0, 0.07},
                {-0.21, -0.35},
                {-0.05, -0.35},
                {-0.13, -0.35},
                {-0.13, -0.14},
                {-0.13, 0.0},
                {-0.10, 0.27}}}};
  }
  throw std::invalid_argument("unsupported shape");
}

// Even-odd containment with an epsilon band around edges so lattice points
// sitting exactly on a boundary line count as garment.
bool point_on_segment(const Vec2 &p, const Vec2 &a, const Vec2 &b, double eps) {
  const Vec2 ab = b - a, ap = p - a;
  const double len2 = ab.x * ab.x + ab.y * ab.y;
  if (len2 == 0) return (p - a).norm() <= eps;
  double t = (ap.x * ab.x + ap.y * ab.y) / len2;
  t = std::clamp(t, 0.0, 1.0);
  const Vec2 c{a.x + t * ab.x, a.y + t * ab.y};
  return (p - c).norm() <= eps;
}

bool inside_polygon(const std::vector<Vec2> &poly, const Vec2 &p, double eps) {
  for (std::size_t i = 0; i < poly.size(); ++i) {
    if (point_on_segment(p, poly[i], poly[(i + 1) % poly.size()], eps)) return true;
  }
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2 &a = poly[i], &b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xint = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
      if (p.x < xint) in = !in;
    }
  }
  return in;
}

// One axis of the lattice fit: canonical coordinates are snapped onto
// multiples of the cell size with strictly increasing cell indices, so that
// every polygon edge lies exactly on a lattice line and the quads tile the
// polygon with no rasterization gap.
struct AxisMap {
  std::vector<double> from, to;
  double lo = 0, spacing = 0;
  int cells = 0;

  double map(double x) const {
    if (x <= from.front()) return to.front();
    if (x >= from.back()) return to.back();
    for (std::size_t i = 1; i < from.size(); ++i) {
      if (x <= from[i]) {
        const double t = (x - from[i - 1]) / (from[i] - from[i - 1]);
        return to[i - 1] + t * (to[i] - to[i - 1]);
      }
    }
    return to.back();
  }
};

AxisMap fit_axis(std::vector<double> coords, double resolution) {
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end(),
                           [](double a, double b) { return std::abs(a - b) < 1e-9; }),
               coords.end());
  const double width = coords.back() - coords.front();
  int cells = std::max<int>({int(std::llround(width * resolution)), int(coords.size()) - 1, 1});
  const double h = width / cells;
  std::vector<int> ks(coords.size());
  ks[0] = 0;
  for (std::size_t i = 1; i < coords.size(); ++i) {
    int k = int(std::llround((coords[i] - coords.front()) / h));
    ks[i] = std::max(k, ks[i - 1] + 1);
  }
  cells = std::max(cells, ks.back());
  AxisMap m;
  m.spacing = h;
  m.cells = cells;
  m.lo = -0.5 * cells * h;
  m.from = coords;
  for (int k : ks) m.to.push_back(m.lo + k * h);
  return m;
}

}  // namespace

const char *shape_name(ShapeClass s) {
  static const char *names[kShapeCount] = {"towel", "tshirt", "shirt", "sweater", "jean"};
  return names[int(s)];
}

ShapeClass shape_from_code(int code) {
  if (code < 0 || code >= kShapeCount) throw std::invalid_argument("unsupported shape code");
  return ShapeClass(code);
}

ShapeClass shape_from_name(const std::string &name) {
  for (int i = 0; i < kShapeCount; ++i) {
    if (name == shape_name(ShapeClass(i))) return ShapeClass(i);
  }
  throw std::invalid_argument("unsupported shape name: " + name);
}

double GarmentTemplate::max_stiffness() const {
  double k = 0;
  for (const Spring &s : springs) k = std::max(k, s.stiffness);
  return k;
}

double stable_dt_bound(const GarmentTemplate &tpl) {
  return 2.0 * std::sqrt(tpl.particle_mass / tpl.max_stiffness());
}

GarmentTemplate make_template(ShapeClass shape, int instance_id, double resolution,
                              double size_jitter) {
  if (resolution < 5) throw std::invalid_argument("resolution must be >= 5 particles/m");
  if (size_jitter < 0 || size_jitter > 0.2)
    throw std::invalid_argument("size_jitter must be in [0, 0.2]");
  if (instance_id < 0 || instance_id > 3) throw std::invalid_argument("instance_id must be 0-3");

  ShapeSpec spec = canonical_spec(shape);

  // Instance variation: a small common scale plus an aspect trade-off,
  // keyed by (shape, instance). Instance 0 is the canonical size.
  double wscale = 1.0, hscale = 1.0;
  if (instance_id != 0 && size_jitter > 0) {
    Rng jrng(mix_seed(0x5EED5EEDULL, std::uint64_t(int(shape)), std::uint64_t(instance_id)));
    const double dc = (size_jitter / 5.0) * (2.0 * jrng.uniform() - 1.0);
    const double da = (size_jitter / 2.0) * (2.0 * jrng.uniform() - 1.0);
    wscale = (1.0 + dc) * (1.0 + da);
    hscale = (1.0 + dc) * (1.0 - da);
  }
  for (Vec2 &v : spec.polygon) v = {v.x * wscale, v.y * hscale};
  for (Vec2 &v : spec.landmarks) v = {v.x * wscale, v.y * hscale};

  std::vector<double> xs, ys;
  for (const Vec2 &v : spec.polygon) {
    xs.push_back(v.x);
    ys.push_back(v.y);
  }
  const AxisMap mx = fit_axis(xs, resolution);
  const AxisMap my = fit_axis(ys, resolution);

  GarmentTemplate tpl;
  tpl.shape = shape;
  tpl.instance_id = instance_id;
  tpl.resolution = resolution;
  tpl.boundary.reserve(spec.polygon.size());
  for (const Vec2 &v : spec.polygon) tpl.boundary.push_back({mx.map(v.x), my.map(v.y)});

  tpl.grid_cols = mx.cells + 1;
  tpl.grid_rows = my.cells + 1;
  tpl.grid.assign(std::size_t(tpl.grid_cols) * tpl.grid_rows, -1);
  const double hx = mx.spacing, hy = my.spacing;

  for (int r = 0; r < tpl.grid_rows; ++r) {
    for (int c = 0; c < tpl.grid_cols; ++c) {
      const Vec2 p{mx.lo + c * hx, my.lo + r * hy};
      if (inside_polygon(tpl.boundary, p, kEdgeEps)) {
        tpl.grid[std::size_t(r) * tpl.grid_cols + c] = tpl.particle_count();
        tpl.rest_positions.push_back(p);
      }
    }
  }
  if (tpl.particle_count() < 4) throw std::invalid_argument("degenerate template lattice");

  auto at = [&](int r, int c) -> int {
    if (r < 0 || r >= tpl.grid_rows || c < 0 || c >= tpl.grid_cols) return -1;
    return tpl.grid[std::size_t(r) * tpl.grid_cols + c];
  };
  auto add_spring = [&](int a, int b, double rest, double k) {
    tpl.springs.push_back({a, b, rest, k});
  };

  for (int r = 0; r < tpl.grid_rows; ++r) {
    for (int c = 0; c < tpl.grid_cols; ++c) {
      const int i = at(r, c);
      if (i < 0) continue;
      const Vec2 p = tpl.rest_positions[std::size_t(i)];
      // structural springs, guarded by a midpoint test so no spring crosses
      // a notch or the gap between jean legs
      const int right = at(r, c + 1);
      if (right >= 0 &&
          inside_polygon(tpl.boundary, {p.x + 0.5 * hx, p.y}, kEdgeEps))
        add_spring(i, right, hx, kStructStiffness);
      const int up = at(r + 1, c);
      if (up >= 0 && inside_polygon(tpl.boundary, {p.x, p.y + 0.5 * hy}, kEdgeEps))
        add_spring(i, up, hy, kStructStiffness);
    }
  }
  const double diag = std::hypot(hx, hy);
  for (int r = 0; r + 1 < tpl.grid_rows; ++r) {
    for (int c = 0; c + 1 < tpl.grid_cols; ++c) {
      const int p00 = at(r, c), p10 = at(r, c + 1), p01 = at(r + 1, c), p11 = at(r + 1, c + 1);
      if (p00 < 0 || p10 < 0 || p01 < 0 || p11 < 0) continue;
      const Vec2 center{mx.lo + (c + 0.5) * hx, my.lo + (r + 0.5) * hy};
      if (!inside_polygon(tpl.boundary, center, 0)) continue;
      tpl.quads.push_back({p00, p10, p11, p01});
      add_spring(p00, p11, diag, kShearStiffness);
      add_spring(p10, p01, diag, kShearStiffness);
    }
  }

  tpl.incident.assign(std::size_t(tpl.particle_count()), {});
  for (int s = 0; s < int(tpl.springs.size()); ++s) {
    tpl.incident[std::size_t(tpl.springs[std::size_t(s)].a)].push_back(s);
    tpl.incident[std::size_t(tpl.springs[std::size_t(s)].b)].push_back(s);
  }

  tpl.particle_mass = kArealDensity * hx * hy;
  tpl.goal_area = polygon_area(tpl.boundary);

  // Landmarks snap to the nearest particle; collisions fall through to the
  // next-nearest unused particle so the ten grasp vertices stay distinct.
  std::vector<bool> used(std::size_t(tpl.particle_count()), false);
  for (int g = 0; g < kGraspPointsPerShape; ++g) {
    const Vec2 want{mx.map(spec.landmarks[std::size_t(g)].x),
                    my.map(spec.landmarks[std::size_t(g)].y)};
    int best = -1;
    double best_d = 0;
    for (int i = 0; i < tpl.particle_count(); ++i) {
      if (used[std::size_t(i)]) continue;
      const double d = (tpl.rest_positions[std::size_t(i)] - want).norm();
      if (best < 0 || d < best_d) {
        best = i;
        best_d = d;
      }
    }
    tpl.grasp_vertices[std::size_t(g)] = best;
    used[std::size_t(best)] = true;
  }
  return tpl;
}

std::vector<GarmentTemplate> make_all_templates(double resolution, double size_jitter) {
  std::vector<GarmentTemplate> out;
  out.reserve(std::size_t(kShapeCount) * 4);
  for (int s = 0; s < kShapeCount; ++s) {
    for (int inst = 0; inst < 4; ++inst) {
      out.push_back(make_template(ShapeClass(s), inst, resolution, size_jitter));
    }
  }
  return out;
}

std::string GarmentTemplate::to_json() const {
  json j;
  j["schema_version"] = 1;
  j["shape"] = shape_name(shape);
  j["instance_id"] = instance_id;
  j["resolution"] = resolution;
  j["particle_mass"] = particle_mass;
  j["goal_area"] = goal_area;
  j["grasp_vertices"] = grasp_vertices;
  auto pts = json::array();
  for (const Vec2 &p : rest_positions) pts.push_back({p.x, p.y});
  j["rest_positions"] = std::move(pts);
  auto spr = json::array();
  for (const Spring &s : springs) spr.push_back({s.a, s.b, s.rest_length, s.stiffness});
  j["springs"] = std::move(spr);
  auto bnd = json::array();
  for (const Vec2 &p : boundary) bnd.push_back({p.x, p.y});
  j["boundary"] = std::move(bnd);
  j["grid_cols"] = grid_cols;
  j["grid_rows"] = grid_rows;
  j["grid"] = grid;
  auto qd = json::array();
  for (const auto &q : quads) qd.push_back({q[0], q[1], q[2], q[3]});
  j["quads"] = std::move(qd);
  return j.dump(2);
}

GarmentTemplate GarmentTemplate::from_json(const std::string &text) {
  const json j = json::parse(text);
  GarmentTemplate t;
  t.shape = shape_from_name(j.at("shape").get<std::string>());
  t.instance_id = j.at("instance_id").get<int>();
  t.resolution = j.at("resolution").get<double>();
  t.particle_mass = j.at("particle_mass").get<double>();
  t.goal_area = j.at("goal_area").get<double>();
  const auto &gv = j.at("grasp_vertices");
  for (int g = 0; g < kGraspPointsPerShape; ++g) t.grasp_vertices[std::size_t(g)] = gv.at(std::size_t(g)).get<int>();
  for (const auto &p : j.at("rest_positions"))
    t.rest_positions.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  for (const auto &s : j.at("springs"))
    t.springs.push_back({s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<double>(),
                         s.at(3).get<double>()});
  for (const auto &p : j.at("boundary"))
    t.boundary.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  t.grid_cols = j.at("grid_cols").get<int>();
  t.grid_rows = j.at("grid_rows").get<int>();
  t.grid = j.at("grid").get<std::vector<int>>();
  for (const auto &q : j.at("quads"))
    t.quads.push_back({q.at(0).get<int>(), q.at(1).get<int>(), q.at(2).get<int>(),
                       q.at(3).get<int>()});
  t.incident.assign(std::size_t(t.particle_count()), {});
  for (int s = 0; s < int(t.springs.size()); ++s) {
    t.incident[std::size_t(t.springs[std::size_t(s)].a)].push_back(s);
    t.incident[std::size_t(t.springs[std::size_t(s)].b)].push_back(s);
  }
  return t;
}

}  // namespace kcflat::cloth
