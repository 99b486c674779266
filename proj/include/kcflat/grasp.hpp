#pragma once

#include <vector>

#include "kcflat/errors.hpp"
#include "kcflat/geom.hpp"
#include "kcflat/render.hpp"

namespace kcflat::grasp {

struct DepthBand {
  double near = 1.5, far = 2.5;  // meters along the camera view axis
};

enum class GraspSource { pre_designed, fine_tuned };

struct GraspPoint {
  Vec3 position;  // camera frame unless stated otherwise
  GraspSource source = GraspSource::pre_designed;
};

// Points whose view-axis depth (camera-frame z) lies in [near, far].
render::PointCloud segment_garment(const render::PointCloud &cloud, const DepthBand &band);

struct Neighbor {
  int index = -1;
  double dist2 = 0;
};

// Exact nearest neighbor with the lowest-index tie rule: among points at
// the minimal distance, the smallest point index wins.
Neighbor brute_nearest(const std::vector<Vec3> &points, const Vec3 &query);

// Immutable 3-d k-d tree; queries return exactly brute_nearest's answer
// (same tie rule), including duplicate and collinear point sets.
class KdTree {
 public:
  explicit KdTree(const std::vector<Vec3> &points);
  Neighbor nearest(const Vec3 &query) const;
  int size() const { return int(points_.size()); }

 private:
  struct KdNode {
    int point = -1;
    int axis = 0;
    int left = -1, right = -1;
  };
  int build(std::vector<int> &idx, int lo, int hi, int depth);
  void descend(int node, const Vec3 &q, Neighbor &best) const;

  std::vector<Vec3> points_;
  std::vector<KdNode> nodes_;
  int root_ = -1;
};

// Snaps a pre-designed grasp point to the closest garment point. Throws
// NoGarmentVisibleError on an empty cloud.
GraspPoint fine_tune(const GraspPoint &pre, const render::PointCloud &garment);
GraspPoint fine_tune(const GraspPoint &pre, const KdTree &index,
                     const std::vector<Vec3> &points);

}  // namespace kcflat::grasp
