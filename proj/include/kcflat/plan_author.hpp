#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kcflat/cloth.hpp"
#include "kcflat/plans.hpp"

namespace kcflat::plans {

// Authors one plan against the simulator's template geometry: the first
// grasp is the labeled grasp vertex itself (the point the garment hangs
// from), the second is chosen by simulating every candidate partner vertex
// through the full three-phase execution and keeping the one with the best
// worst-case final footprint. Candidates are replayed against fresh
// crumples of `tpl` and against the `siblings` (the shape's other
// instances, whose jittered dimensions the one plan must also serve).
ManipulationPlan author_plan(const cloth::GarmentTemplate &tpl, int grasp_index,
                             std::uint64_t seed,
                             const std::vector<cloth::GarmentTemplate> &siblings = {});

// Writes plans/v1/<shape>_<grasp>.json for every (shape, grasp) pair using
// instance 0 of each shape, plus templates/v1/<shape>_<instance>.json for
// the full catalog.
void author_library(const std::string &plans_dir, const std::string &templates_dir,
                    double resolution, double size_jitter, std::uint64_t seed,
                    const std::function<void(const std::string &)> &progress = {});

}  // namespace kcflat::plans
