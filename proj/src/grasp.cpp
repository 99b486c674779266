#include <algorithm>
#include <stdexcept>

#include "kcflat/grasp.hpp"

namespace kcflat::grasp {

render::PointCloud segment_garment(const render::PointCloud &cloud, const DepthBand &band) {
  if (!(band.near > 0) || !(band.far > band.near))
    throw std::invalid_argument("depth band must satisfy 0 < near < far");
  render::PointCloud out;
  for (const Vec3 &p : cloud.points) {
    if (p.z >= band.near && p.z <= band.far) out.points.push_back(p);
  }
  return out;
}

Neighbor brute_nearest(const std::vector<Vec3> &points, const Vec3 &query) {
  Neighbor best;
  for (int i = 0; i < int(points.size()); ++i) {
    const double d2 = (points[std::size_t(i)] - query).norm2();
    if (best.index < 0 || d2 < best.dist2) {
      best = {i, d2};
    }
  }
  return best;
}

KdTree::KdTree(const std::vector<Vec3> &points) : points_(points) {
  if (points_.empty()) return;
  std::vector<int> idx(points_.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = int(i);
  nodes_.reserve(points_.size());
  root_ = build(idx, 0, int(idx.size()), 0);
}

int KdTree::build(std::vector<int> &idx, int lo, int hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const int mid = (lo + hi) / 2;
  auto coord = [&](int i) {
    const Vec3 &p = points_[std::size_t(i)];
    return axis == 0 ? p.x : axis == 1 ? p.y : p.z;
  };
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi,
                   [&](int a, int b) { return coord(a) < coord(b); });
  const int id = int(nodes_.size());
  nodes_.push_back({idx[std::size_t(mid)], axis, -1, -1});
  const int left = build(idx, lo, mid, depth + 1);
  const int right = build(idx, mid + 1, hi, depth + 1);
  nodes_[std::size_t(id)].left = left;
  nodes_[std::size_t(id)].right = right;
  return id;
}

void KdTree::descend(int node, const Vec3 &q, Neighbor &best) const {
  if (node < 0) return;
  const KdNode &n = nodes_[std::size_t(node)];
  const Vec3 &p = points_[std::size_t(n.point)];
  const double d2 = (p - q).norm2();
  if (best.index < 0 || d2 < best.dist2 || (d2 == best.dist2 && n.point < best.index)) {
    best = {n.point, d2};
  }
  const double delta = (n.axis == 0 ? q.x - p.x : n.axis == 1 ? q.y - p.y : q.z - p.z);
  const int near = delta < 0 ? n.left : n.right;
  const int far = delta < 0 ? n.right : n.left;
  descend(near, q, best);
  // The far side may hold an equally distant, lower-index point, so prune
  // only when the splitting plane is strictly farther than the incumbent.
  if (best.index < 0 || delta * delta <= best.dist2) descend(far, q, best);
}

Neighbor KdTree::nearest(const Vec3 &query) const {
  Neighbor best;
  descend(root_, query, best);
  return best;
}

GraspPoint fine_tune(const GraspPoint &pre, const render::PointCloud &garment) {
  if (garment.points.empty()) throw NoGarmentVisibleError("empty garment cloud");
  const Neighbor n = brute_nearest(garment.points, pre.position);
  return {garment.points[std::size_t(n.index)], GraspSource::fine_tuned};
}

GraspPoint fine_tune(const GraspPoint &pre, const KdTree &index,
                     const std::vector<Vec3> &points) {
  if (index.size() == 0) throw NoGarmentVisibleError("empty garment cloud");
  const Neighbor n = index.nearest(pre.position);
  return {points[std::size_t(n.index)], GraspSource::fine_tuned};
}

}  // namespace kcflat::grasp
