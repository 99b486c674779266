#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "kcflat/reports.hpp"

namespace kcflat::reports {

namespace {

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

const char *kFlattenHeader =
    "Garment,Starting State,Shape Prediction,Grasping Point 1,Grasping Point 2,"
    "Flattening,Total Time,Final State,Success Rate\n";

// Aggregated means for one table row.
struct RowAccum {
  int n = 0, successes = 0;
  double start = 0, t_shape = 0, t_g1 = 0, t_g2 = 0, t_flat = 0, t_total = 0, final_pct = 0;

  void add(const pipeline::FlattenReport &r) {
    n += 1;
    successes += r.success ? 1 : 0;
    start += r.starting_state;
    t_shape += r.times.shape_prediction;
    t_g1 += r.times.grasp1;
    t_g2 += r.times.grasp2;
    t_flat += r.times.flatten;
    t_total += r.times.total();
    final_pct += r.final_state;
  }

  std::string row(const std::string &name) const {
    const double k = n > 0 ? 1.0 / double(n) : 0.0;
    std::string s = name;
    s += "," + fmt2(start * k);
    s += "," + fmt2(t_shape * k);
    s += "," + fmt2(t_g1 * k);
    s += "," + fmt2(t_g2 * k);
    s += "," + fmt2(t_flat * k);
    s += "," + fmt2(t_total * k);
    s += "," + fmt2(final_pct * k);
    s += "," + fmt2(n > 0 ? 100.0 * double(successes) / double(n) : 0.0);
    s += "\n";
    return s;
  }
};

}  // namespace

std::string flatten_csv(const std::vector<pipeline::FlattenReport> &runs) {
  std::array<RowAccum, cloth::kShapeCount> per_shape{};
  RowAccum all;
  for (const pipeline::FlattenReport &r : runs) {
    per_shape[std::size_t(int(r.true_shape))].add(r);
    all.add(r);
  }
  std::string csv = kFlattenHeader;
  for (int s = 0; s < cloth::kShapeCount; ++s) {
    if (per_shape[std::size_t(s)].n == 0) continue;
    csv += per_shape[std::size_t(s)].row(cloth::shape_name(cloth::ShapeClass(s)));
  }
  csv += all.row("Average");
  return csv;
}

std::string reference_flatten_row() {
  // published towel comparison numbers: 2385 / 6544 covered pixels of a
  // 10000-pixel goal
  pipeline::FlattenReport r;
  r.s_start = 2385;
  r.s_ending = 6544;
  r.s_goal = 10000;
  const pipeline::Metrics m = pipeline::compute_metrics(r.s_start, r.s_ending, r.s_goal, 70.0);
  r.starting_state = m.starting_state;
  r.final_state = m.final_state;
  r.success = m.success;
  r.true_shape = cloth::ShapeClass::towel;
  RowAccum acc;
  acc.add(r);
  return std::string(kFlattenHeader) + acc.row("towel (reference)");
}

std::string eval_csv(const std::vector<pipeline::FoldResult> &folds) {
  std::string csv = "Fold,Shape,Accuracy,Support\n";
  double mean = 0;
  for (const pipeline::FoldResult &f : folds) {
    for (int s = 0; s < cloth::kShapeCount; ++s) {
      csv += std::to_string(f.fold) + "," + cloth::shape_name(cloth::ShapeClass(s)) + "," +
             fmt2(100.0 * f.eval.per_shape_accuracy[std::size_t(s)]) + "," +
             std::to_string(f.eval.per_shape_support[std::size_t(s)]) + "\n";
    }
    csv += std::to_string(f.fold) + ",all," + fmt2(100.0 * f.eval.overall_accuracy) + "," +
           std::to_string(f.eval.total) + "\n";
    mean += f.eval.overall_accuracy;
  }
  if (!folds.empty()) {
    mean /= double(folds.size());
    csv += "mean,all," + fmt2(100.0 * mean) + ",\n";
  }
  return csv;
}

std::string ablation_csv(const kcnet::AblationReport &report) {
  std::string csv = "Fold,With Prior,Without Prior\n";
  for (const kcnet::AblationFold &f : report.folds) {
    csv += std::to_string(f.fold) + "," + fmt2(f.with_prior_acc) + "," +
           fmt2(f.without_prior_acc) + "\n";
  }
  csv += "mean," + fmt2(report.with_prior_mean) + "," + fmt2(report.without_prior_mean) + "\n";
  csv += "reported," + fmt2(report.paper_with_prior) + "," + fmt2(report.paper_without_prior) +
         "\n";
  return csv;
}

namespace {

constexpr int kW = 640, kH = 400, kMargin = 56;

struct Scale {
  double lo = 0, hi = 1;
  double span() const { return hi > lo ? hi - lo : 1.0; }
  // data -> pixel, x flavour
  double px(double v) const { return kMargin + (v - lo) / span() * (kW - 2 * kMargin); }
  // data -> pixel, y flavour (flipped)
  double py(double v) const { return kH - kMargin - (v - lo) / span() * (kH - 2 * kMargin); }
};

std::string svg_open(const std::string &title, const std::string &x_label,
                     const std::string &y_label) {
  std::string s;
  s += "<svg xmlns='http://www.w3.org/2000/svg' width='" + std::to_string(kW) + "' height='" +
       std::to_string(kH) + "'>\n";
  s += "<rect width='100%' height='100%' fill='white'/>\n";
  s += "<text x='" + std::to_string(kW / 2) + "' y='24' text-anchor='middle' font-size='16'>" +
       title + "</text>\n";
  s += "<text x='" + std::to_string(kW / 2) + "' y='" + std::to_string(kH - 12) +
       "' text-anchor='middle' font-size='12'>" + x_label + "</text>\n";
  if (!y_label.empty()) {
    s += "<text x='16' y='" + std::to_string(kH / 2) +
         "' text-anchor='middle' font-size='12' transform='rotate(-90 16 " +
         std::to_string(kH / 2) + ")'>" + y_label + "</text>\n";
  }
  // axes
  const std::string m = std::to_string(kMargin);
  s += "<line x1='" + m + "' y1='" + std::to_string(kH - kMargin) + "' x2='" +
       std::to_string(kW - kMargin) + "' y2='" + std::to_string(kH - kMargin) +
       "' stroke='black'/>\n";
  s += "<line x1='" + m + "' y1='" + m + "' x2='" + m + "' y2='" +
       std::to_string(kH - kMargin) + "' stroke='black'/>\n";
  return s;
}

std::string axis_labels(const Scale &x, const Scale &y) {
  std::string s;
  s += "<text x='" + std::to_string(kMargin) + "' y='" + std::to_string(kH - kMargin + 16) +
       "' font-size='11'>" + fmt2(x.lo) + "</text>\n";
  s += "<text x='" + std::to_string(kW - kMargin) + "' y='" + std::to_string(kH - kMargin + 16) +
       "' text-anchor='end' font-size='11'>" + fmt2(x.hi) + "</text>\n";
  s += "<text x='" + std::to_string(kMargin - 4) + "' y='" + std::to_string(kH - kMargin) +
       "' text-anchor='end' font-size='11'>" + fmt2(y.lo) + "</text>\n";
  s += "<text x='" + std::to_string(kMargin - 4) + "' y='" + std::to_string(kMargin + 4) +
       "' text-anchor='end' font-size='11'>" + fmt2(y.hi) + "</text>\n";
  return s;
}

}  // namespace

std::string polyline_svg(const std::vector<double> &xs, const std::vector<double> &ys,
                         const std::string &title, const std::string &x_label,
                         const std::string &y_label) {
  if (xs.size() != ys.size()) throw std::invalid_argument("xs and ys must match");
  Scale sx, sy;
  if (!xs.empty()) {
    sx.lo = *std::min_element(xs.begin(), xs.end());
    sx.hi = *std::max_element(xs.begin(), xs.end());
    sy.lo = *std::min_element(ys.begin(), ys.end());
    sy.hi = *std::max_element(ys.begin(), ys.end());
    if (sx.hi == sx.lo) sx.hi = sx.lo + 1;
    if (sy.hi == sy.lo) sy.hi = sy.lo + 1;
  }
  std::string s = svg_open(title, x_label, y_label);
  s += axis_labels(sx, sy);
  if (!xs.empty()) {
    std::string pts;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      pts += fmt2(sx.px(xs[i])) + "," + fmt2(sy.py(ys[i])) + " ";
    }
    s += "<polyline points='" + pts + "' fill='none' stroke='steelblue' stroke-width='2'/>\n";
  }
  s += "</svg>\n";
  return s;
}

std::string histogram_svg(const std::vector<double> &values, int bins, const std::string &title,
                          const std::string &x_label) {
  if (bins < 1) throw std::invalid_argument("bins must be >= 1");
  Scale sx, sy;
  std::vector<int> counts(std::size_t(bins), 0);
  int peak = 1;
  if (!values.empty()) {
    sx.lo = *std::min_element(values.begin(), values.end());
    sx.hi = *std::max_element(values.begin(), values.end());
    if (sx.hi == sx.lo) sx.hi = sx.lo + 1;
    for (double v : values) {
      int b = int((v - sx.lo) / sx.span() * bins);
      b = std::clamp(b, 0, bins - 1);
      counts[std::size_t(b)] += 1;
    }
    peak = std::max(1, *std::max_element(counts.begin(), counts.end()));
  }
  sy.lo = 0;
  sy.hi = double(peak);
  std::string s = svg_open(title, x_label, "count");
  s += axis_labels(sx, sy);
  const double bw = double(kW - 2 * kMargin) / double(bins);
  for (int b = 0; b < bins; ++b) {
    const double h = double(counts[std::size_t(b)]) / double(peak) * double(kH - 2 * kMargin);
    if (h <= 0) continue;
    s += "<rect x='" + fmt2(kMargin + b * bw + 1) + "' y='" + fmt2(kH - kMargin - h) +
         "' width='" + fmt2(std::max(1.0, bw - 2)) + "' height='" + fmt2(h) +
         "' fill='steelblue'/>\n";
  }
  s += "</svg>\n";
  return s;
}

void write_text(const std::string &path, const std::string &content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

}  // namespace kcflat::reports
