#pragma once

#include <string>
#include <vector>

#include "kcflat/kcnet.hpp"
#include "kcflat/pipeline.hpp"

namespace kcflat::reports {

// Flattening results table (one row per shape plus an average row):
// Garment, Starting State, Shape Prediction, Grasping Point 1,
// Grasping Point 2, Flattening, Total Time, Final State, Success Rate.
std::string flatten_csv(const std::vector<pipeline::FlattenReport> &runs);

// Recognition accuracy table: one row per (fold, shape), per-fold average
// rows, and the cross-fold average.
std::string eval_csv(const std::vector<pipeline::FoldResult> &folds);

std::string ablation_csv(const kcnet::AblationReport &report);

// Reference-row round-trip used by the metrics format check: renders the
// published towel comparison row (start 23.85%, final 65.44%) through the
// same formatter as our runs.
std::string reference_flatten_row();

// Minimal hand-emitted SVG charts.
std::string polyline_svg(const std::vector<double> &xs, const std::vector<double> &ys,
                         const std::string &title, const std::string &x_label,
                         const std::string &y_label);
std::string histogram_svg(const std::vector<double> &values, int bins, const std::string &title,
                          const std::string &x_label);

void write_text(const std::string &path, const std::string &content);

}  // namespace kcflat::reports
