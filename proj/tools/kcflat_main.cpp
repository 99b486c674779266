// kcflat command line: generate / train / evaluate / ablate / flatten /
// plan / report. Exit codes: 0 success, 1 runtime failure, 2 bad usage.
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kcflat/checkpoint.hpp"
#include "kcflat/dataset.hpp"
#include "kcflat/kcnet.hpp"
#include "kcflat/pipeline.hpp"
#include "kcflat/plan_author.hpp"
#include "kcflat/plans.hpp"
#include "kcflat/reports.hpp"
#include "kcflat/shapeid.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kcflat;

namespace {

std::string data_root() {
  const char *env = std::getenv("KCFLAT_DATA_DIR");
  return (env && *env) ? std::string(env) : std::string("data");
}

json load_config(const std::string &path) {
  if (path.empty()) return json::object();
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  return json::parse(f);
}

// config file values fill in whatever was not passed explicitly
template <class T>
void cfg_get(const json &j, const char *key, const CLI::Option *opt, T &var) {
  if (opt != nullptr && opt->count() > 0) return;
  if (j.contains(key)) var = j.at(key).get<T>();
}

void print_epoch(int fold, const kcnet::EpochStat &st, int epochs) {
  std::printf("fold %d epoch %2d/%d  lr %.2e  nll %.4f  acc %.4f\n", fold, st.epoch + 1, epochs,
              st.lr, st.nll, st.accuracy);
  std::fflush(stdout);
}

std::vector<kcnet::LabeledImage> shape_labeled(std::vector<kcnet::LabeledImage> samples) {
  for (kcnet::LabeledImage &s : samples) s.label /= cloth::kGraspPointsPerShape;
  return samples;
}

pipeline::FlattenReport flatten_report_from_json(const std::string &text) {
  const json j = json::parse(text);
  pipeline::FlattenReport r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.starting_state = j.at("starting_state").get<double>();
  r.final_state = j.at("final_state").get<double>();
  r.s_start = j.at("areas").at("start").get<long>();
  r.s_ending = j.at("areas").at("ending").get<long>();
  r.s_goal = j.at("areas").at("goal").get<long>();
  r.times.shape_prediction = j.at("times").at("shape_prediction").get<double>();
  r.times.grasp1 = j.at("times").at("grasp1").get<double>();
  r.times.grasp2 = j.at("times").at("grasp2").get<double>();
  r.times.flatten = j.at("times").at("flatten").get<double>();
  r.predicted_shape = cloth::shape_from_name(j.at("predicted_shape").get<std::string>());
  r.true_shape = cloth::shape_from_name(j.at("true_shape").get<std::string>());
  r.predicted_label = kcnet::KnownConfigLabel::from_flat(
      j.at("predicted_label").at("flat_code").get<int>());
  r.true_label = kcnet::KnownConfigLabel::from_flat(j.at("true_label").at("flat_code").get<int>());
  r.success = j.at("success").get<bool>();
  r.failed_stage = j.at("failed_stage").get<std::string>();
  r.error = j.at("error").get<std::string>();
  r.vote_frames = j.at("vote_frames").get<int>();
  return r;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"kcflat - desk-scale garment flattening pipeline"};
  app.require_subcommand(1);

  // ---- generate
  dataset::GenOptions gen_opts;
  std::string gen_out = data_root() + "/kc_depth";
  std::string gen_config;
  auto *gen = app.add_subcommand("generate", "synthesize the known-configuration depth database");
  auto *g_out = gen->add_option("--out", gen_out, "output directory")->required();
  auto *g_pg = gen->add_option("--per-grasp", gen_opts.per_grasp_count,
                               "depth images per (shape, instance, grasp)")
                   ->capture_default_str();
  auto *g_seed = gen->add_option("--seed", gen_opts.seed, "master seed")->capture_default_str();
  auto *g_res = gen->add_option("--resolution", gen_opts.resolution, "lattice particles per meter")
                    ->capture_default_str();
  auto *g_jit = gen->add_option("--jitter", gen_opts.size_jitter, "instance size jitter")
                    ->capture_default_str();
  auto *g_aj = gen->add_option("--anchor-jitter", gen_opts.anchor_jitter,
                               "hanging anchor jitter (m)")
                   ->capture_default_str();
  auto *g_dn = gen->add_option("--depth-noise", gen_opts.depth_noise, "depth noise sigma (m)")
                   ->capture_default_str();
  auto *g_jobs = gen->add_option("--jobs", gen_opts.jobs, "parallel workers")->capture_default_str();
  auto *g_isz = gen->add_option("--image-size", gen_opts.image_size,
                                "square depth image size (multiple of 64)")
                    ->capture_default_str();
  gen->add_option("--config", gen_config, "JSON config file (explicit flags win)");

  // ---- train
  std::string tr_data = data_root() + "/kc_depth";
  std::string tr_out;
  std::string tr_target = "kc";
  bool tr_no_prior = false;
  kcnet::TrainConfig tr_cfg;
  std::string tr_config;
  auto *train = app.add_subcommand("train", "train the classifier on the full database");
  auto *t_data = train->add_option("--data", tr_data, "dataset directory")->capture_default_str();
  auto *t_out = train->add_option("--out", tr_out, "checkpoint path");
  auto *t_target = train->add_option("--target", tr_target, "kc (50-way) or shape (5-way)")
                       ->check(CLI::IsMember({"kc", "shape"}))
                       ->capture_default_str();
  auto *t_np = train->add_flag("--no-prior", tr_no_prior, "drop the shape prior branch");
  auto *t_lr = train->add_option("--lr", tr_cfg.lr, "base learning rate")->capture_default_str();
  auto *t_ep = train->add_option("--epochs", tr_cfg.epochs, "epochs")->capture_default_str();
  auto *t_b = train->add_option("--batch", tr_cfg.batch, "batch size")->capture_default_str();
  auto *t_se = train->add_option("--step-epochs", tr_cfg.step_epochs, "lr decay period")
                   ->capture_default_str();
  auto *t_dc = train->add_option("--decay", tr_cfg.decay, "lr decay factor")->capture_default_str();
  auto *t_seed = train->add_option("--seed", tr_cfg.seed, "training seed")->capture_default_str();
  int tr_fold = -1;
  auto *t_fold = train->add_option("--fold", tr_fold, "hold out this instance (0-3); -1 = none")
                     ->check(CLI::Range(-1, 3))
                     ->capture_default_str();
  train->add_option("--config", tr_config, "JSON config file (explicit flags win)");

  // ---- evaluate
  std::string ev_data = data_root() + "/kc_depth";
  std::string ev_csv = "reports/eval.csv";
  std::string ev_ckpt_dir;
  bool ev_no_prior = false;
  kcnet::TrainConfig ev_cfg;
  std::string ev_config;
  auto *eval = app.add_subcommand("evaluate", "leave-one-instance-out cross-validation");
  auto *e_data = eval->add_option("--data", ev_data, "dataset directory")->capture_default_str();
  auto *e_csv = eval->add_option("--out-csv", ev_csv, "accuracy table path")->capture_default_str();
  auto *e_ck = eval->add_option("--checkpoint-dir", ev_ckpt_dir, "save per-fold checkpoints here");
  auto *e_np = eval->add_flag("--no-prior", ev_no_prior, "evaluate the without-prior variant");
  bool ev_hard_mask = false;
  auto *e_hm = eval->add_flag("--hard-mask", ev_hard_mask,
                              "score argmax within the prior shape's ten codes (reported only)");
  auto *e_lr = eval->add_option("--lr", ev_cfg.lr, "base learning rate")->capture_default_str();
  auto *e_ep = eval->add_option("--epochs", ev_cfg.epochs, "epochs")->capture_default_str();
  auto *e_b = eval->add_option("--batch", ev_cfg.batch, "batch size")->capture_default_str();
  auto *e_se = eval->add_option("--step-epochs", ev_cfg.step_epochs, "lr decay period")
                   ->capture_default_str();
  auto *e_dc = eval->add_option("--decay", ev_cfg.decay, "lr decay factor")->capture_default_str();
  auto *e_seed = eval->add_option("--seed", ev_cfg.seed, "training seed")->capture_default_str();
  eval->add_option("--config", ev_config, "JSON config file (explicit flags win)");

  // ---- ablate
  std::string ab_data = data_root() + "/kc_depth";
  std::string ab_csv = "reports/ablation.csv";
  kcnet::TrainConfig ab_cfg;
  std::string ab_config;
  auto *ablate = app.add_subcommand("ablate", "with-prior vs without-prior LOOCV comparison");
  auto *a_data = ablate->add_option("--data", ab_data, "dataset directory")->capture_default_str();
  auto *a_csv = ablate->add_option("--out-csv", ab_csv, "ablation table path")
                    ->capture_default_str();
  auto *a_lr = ablate->add_option("--lr", ab_cfg.lr, "base learning rate")->capture_default_str();
  auto *a_ep = ablate->add_option("--epochs", ab_cfg.epochs, "epochs")->capture_default_str();
  auto *a_b = ablate->add_option("--batch", ab_cfg.batch, "batch size")->capture_default_str();
  auto *a_se = ablate->add_option("--step-epochs", ab_cfg.step_epochs, "lr decay period")
                   ->capture_default_str();
  auto *a_dc = ablate->add_option("--decay", ab_cfg.decay, "lr decay factor")
                   ->capture_default_str();
  auto *a_seed = ablate->add_option("--seed", ab_cfg.seed, "training seed")->capture_default_str();
  ablate->add_option("--config", ab_config, "JSON config file (explicit flags win)");

  // ---- flatten
  std::uint64_t fl_seed = 1;
  int fl_runs = 1;
  std::string fl_plans = "plans/v1";
  std::string fl_out_dir = "reports/runs";
  std::string fl_mode = "oracle";
  std::string fl_kcnet, fl_shape_model;
  pipeline::RunConfig fl_cfg;
  std::string fl_config;
  auto *flat = app.add_subcommand("flatten", "run the end-to-end pipeline on seeded scenarios");
  auto *f_seed = flat->add_option("--seed", fl_seed, "first scenario seed")->capture_default_str();
  auto *f_runs = flat->add_option("--runs", fl_runs, "number of consecutive seeds")
                     ->capture_default_str();
  auto *f_plans = flat->add_option("--plans", fl_plans, "plan library directory")
                      ->capture_default_str();
  auto *f_out = flat->add_option("--out-dir", fl_out_dir, "per-run JSON + summary CSV directory")
                    ->capture_default_str();
  auto *f_mode = flat->add_option("--perception", fl_mode, "oracle or trained")
                     ->check(CLI::IsMember({"oracle", "trained"}))
                     ->capture_default_str();
  auto *f_kc = flat->add_option("--kcnet", fl_kcnet, "KCNet checkpoint (trained mode)");
  auto *f_sm = flat->add_option("--shape-model", fl_shape_model,
                                "shape classifier checkpoint (trained mode)");
  auto *f_res = flat->add_option("--resolution", fl_cfg.resolution, "lattice particles per meter")
                    ->capture_default_str();
  auto *f_jit = flat->add_option("--jitter", fl_cfg.size_jitter, "instance size jitter")
                    ->capture_default_str();
  auto *f_th = flat->add_option("--threshold", fl_cfg.success_threshold,
                                "success threshold (percent of goal area)")
                   ->capture_default_str();
  auto *f_mf = flat->add_option("--max-frames", fl_cfg.max_vote_frames, "voting frame budget")
                   ->capture_default_str();
  auto *f_dt = flat->add_option("--dt", fl_cfg.dt, "integrator step (s)")->capture_default_str();
  flat->add_option("--config", fl_config, "JSON config file (explicit flags win)");

  // ---- plan
  auto *plan = app.add_subcommand("plan", "manipulation plan library tools");
  plan->require_subcommand(1);
  std::string pl_dir = "plans/v1";
  auto *lint = plan->add_subcommand("lint", "validate every plan and library completeness");
  lint->add_option("--dir", pl_dir, "plan directory")->capture_default_str();
  std::string pa_plans = "plans/v1", pa_templates = "templates/v1";
  double pa_res = 12.0, pa_jitter = 0.1;
  std::uint64_t pa_seed = 7;
  auto *author = plan->add_subcommand("author", "author the 50-plan library from simulation");
  author->add_option("--plans-dir", pa_plans, "output plan directory")->capture_default_str();
  author->add_option("--templates-dir", pa_templates, "output template directory")
      ->capture_default_str();
  author->add_option("--resolution", pa_res, "lattice particles per meter")->capture_default_str();
  author->add_option("--jitter", pa_jitter, "instance size jitter")->capture_default_str();
  author->add_option("--seed", pa_seed, "authoring drape seed")->capture_default_str();

  // ---- report
  std::string rp_runs_dir = "reports/runs";
  std::string rp_out_dir = "reports";
  bool rp_reference = false;
  auto *report = app.add_subcommand("report", "summarize flatten runs into CSV + SVG");
  report->add_option("--runs-dir", rp_runs_dir, "directory of run_*.json files")
      ->capture_default_str();
  report->add_option("--out-dir", rp_out_dir, "output directory")->capture_default_str();
  report->add_flag("--reference", rp_reference, "also print the published towel reference row");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      const json j = load_config(gen_config);
      cfg_get(j, "out", g_out, gen_out);
      cfg_get(j, "per_grasp", g_pg, gen_opts.per_grasp_count);
      cfg_get(j, "seed", g_seed, gen_opts.seed);
      cfg_get(j, "resolution", g_res, gen_opts.resolution);
      cfg_get(j, "jitter", g_jit, gen_opts.size_jitter);
      cfg_get(j, "anchor_jitter", g_aj, gen_opts.anchor_jitter);
      cfg_get(j, "depth_noise", g_dn, gen_opts.depth_noise);
      cfg_get(j, "jobs", g_jobs, gen_opts.jobs);
      cfg_get(j, "image_size", g_isz, gen_opts.image_size);
      const json echo = {{"out", gen_out},
                         {"per_grasp", gen_opts.per_grasp_count},
                         {"seed", gen_opts.seed},
                         {"resolution", gen_opts.resolution},
                         {"jitter", gen_opts.size_jitter},
                         {"anchor_jitter", gen_opts.anchor_jitter},
                         {"depth_noise", gen_opts.depth_noise},
                         {"image_size", gen_opts.image_size}};
      gen_opts.config_json = echo.dump();
      std::printf("config: %s\n", echo.dump().c_str());
      const dataset::DatasetManifest m = dataset::generate(gen_out, gen_opts);
      std::printf("generated %zu depth images under %s\n", m.records.size(), m.root.c_str());
    }

    if (train->parsed()) {
      const json j = load_config(tr_config);
      cfg_get(j, "data", t_data, tr_data);
      cfg_get(j, "out", t_out, tr_out);
      cfg_get(j, "target", t_target, tr_target);
      cfg_get(j, "no_prior", t_np, tr_no_prior);
      cfg_get(j, "lr", t_lr, tr_cfg.lr);
      cfg_get(j, "epochs", t_ep, tr_cfg.epochs);
      cfg_get(j, "batch", t_b, tr_cfg.batch);
      cfg_get(j, "step_epochs", t_se, tr_cfg.step_epochs);
      cfg_get(j, "decay", t_dc, tr_cfg.decay);
      cfg_get(j, "seed", t_seed, tr_cfg.seed);
      cfg_get(j, "fold", t_fold, tr_fold);
      if (tr_out.empty())
        tr_out = data_root() + (tr_target == "kc" ? "/models/kcnet.kcn" : "/models/shape5.kcn");
      const json echo = {{"target", tr_target},   {"data", tr_data},
                         {"out", tr_out},         {"with_prior", !tr_no_prior},
                         {"lr", tr_cfg.lr},       {"epochs", tr_cfg.epochs},
                         {"batch", tr_cfg.batch}, {"step_epochs", tr_cfg.step_epochs},
                         {"decay", tr_cfg.decay}, {"seed", tr_cfg.seed},
                         {"fold", tr_fold}};
      std::printf("config: %s\n", echo.dump().c_str());

      dataset::DatasetManifest manifest = dataset::load_manifest(tr_data);
      if (tr_fold >= 0) manifest = dataset::split_loocv(manifest, tr_fold).train;
      std::vector<kcnet::LabeledImage> samples = dataset::load_samples(manifest);
      const fs::path outp(tr_out);
      if (outp.has_parent_path()) fs::create_directories(outp.parent_path());
      std::vector<kcnet::EpochStat> trace;
      if (tr_target == "kc") {
        kcnet::KCNetModel model = kcnet::build_kcnet(!tr_no_prior, tr_cfg.seed);
        trace = kcnet::train(model, samples, tr_cfg,
                             [&](const kcnet::EpochStat &st) { print_epoch(0, st, tr_cfg.epochs); });
        kcnet::save_kcnet(tr_out, model, echo.dump());
      } else {
        samples = shape_labeled(std::move(samples));
        nn::ModelGraph graph = shapeid::build_shape_model(tr_cfg.seed);
        trace = kcnet::train_classifier(
            graph, samples, cloth::kShapeCount, false, tr_cfg,
            [&](const kcnet::EpochStat &st) { print_epoch(0, st, tr_cfg.epochs); });
        nn::save_checkpoint(tr_out, graph, echo.dump());
      }
      std::printf("saved %s\n", tr_out.c_str());
      std::vector<double> xs, ys;
      for (const kcnet::EpochStat &st : trace) {
        xs.push_back(double(st.epoch));
        ys.push_back(st.nll);
      }
      const std::string curve = tr_out + ".loss.svg";
      reports::write_text(curve, reports::polyline_svg(xs, ys, "training loss", "epoch", "NLL"));
      std::printf("wrote %s\n", curve.c_str());
    }

    if (eval->parsed()) {
      const json j = load_config(ev_config);
      cfg_get(j, "data", e_data, ev_data);
      cfg_get(j, "out_csv", e_csv, ev_csv);
      cfg_get(j, "checkpoint_dir", e_ck, ev_ckpt_dir);
      cfg_get(j, "no_prior", e_np, ev_no_prior);
      cfg_get(j, "hard_mask", e_hm, ev_hard_mask);
      cfg_get(j, "lr", e_lr, ev_cfg.lr);
      cfg_get(j, "epochs", e_ep, ev_cfg.epochs);
      cfg_get(j, "batch", e_b, ev_cfg.batch);
      cfg_get(j, "step_epochs", e_se, ev_cfg.step_epochs);
      cfg_get(j, "decay", e_dc, ev_cfg.decay);
      cfg_get(j, "seed", e_seed, ev_cfg.seed);

      const dataset::DatasetManifest manifest = dataset::load_manifest(ev_data);
      const pipeline::LoocvReport rep = pipeline::loocv_run(
          manifest, ev_cfg, !ev_no_prior,
          [&](int fold, const kcnet::EpochStat &st) { print_epoch(fold, st, ev_cfg.epochs); },
          ev_ckpt_dir, ev_hard_mask);
      if (ev_hard_mask) std::printf("argmax hard-masked to the prior shape's codes\n");
      for (const pipeline::FoldResult &f : rep.folds)
        std::printf("fold %d held-out accuracy: %.2f%% (%d samples)\n", f.fold,
                    100.0 * f.eval.overall_accuracy, f.eval.total);
      std::printf("mean held-out accuracy: %.2f%%\n", 100.0 * rep.mean_accuracy);
      reports::write_text(ev_csv, reports::eval_csv(rep.folds));
      std::printf("wrote %s\n", ev_csv.c_str());
    }

    if (ablate->parsed()) {
      const json j = load_config(ab_config);
      cfg_get(j, "data", a_data, ab_data);
      cfg_get(j, "out_csv", a_csv, ab_csv);
      cfg_get(j, "lr", a_lr, ab_cfg.lr);
      cfg_get(j, "epochs", a_ep, ab_cfg.epochs);
      cfg_get(j, "batch", a_b, ab_cfg.batch);
      cfg_get(j, "step_epochs", a_se, ab_cfg.step_epochs);
      cfg_get(j, "decay", a_dc, ab_cfg.decay);
      cfg_get(j, "seed", a_seed, ab_cfg.seed);

      const dataset::DatasetManifest manifest = dataset::load_manifest(ab_data);
      kcnet::AblationReport rep;
      std::printf("with prior:\n");
      const pipeline::LoocvReport with = pipeline::loocv_run(
          manifest, ab_cfg, true,
          [&](int fold, const kcnet::EpochStat &st) { print_epoch(fold, st, ab_cfg.epochs); });
      std::printf("without prior:\n");
      const pipeline::LoocvReport without = pipeline::loocv_run(
          manifest, ab_cfg, false,
          [&](int fold, const kcnet::EpochStat &st) { print_epoch(fold, st, ab_cfg.epochs); });
      for (std::size_t f = 0; f < with.folds.size(); ++f) {
        kcnet::AblationFold af;
        af.fold = int(f);
        af.with_prior_acc = 100.0 * with.folds[f].eval.overall_accuracy;
        af.without_prior_acc = 100.0 * without.folds[f].eval.overall_accuracy;
        af.with_prior_shape = with.folds[f].eval.per_shape_accuracy;
        af.without_prior_shape = without.folds[f].eval.per_shape_accuracy;
        for (double &v : af.with_prior_shape) v *= 100.0;
        for (double &v : af.without_prior_shape) v *= 100.0;
        rep.folds.push_back(af);
      }
      rep.with_prior_mean = 100.0 * with.mean_accuracy;
      rep.without_prior_mean = 100.0 * without.mean_accuracy;
      std::printf("mean accuracy  with prior: %.2f%%  without prior: %.2f%%\n",
                  rep.with_prior_mean, rep.without_prior_mean);
      std::printf("reported       with prior: %.2f%%  without prior: %.2f%%\n",
                  rep.paper_with_prior, rep.paper_without_prior);
      reports::write_text(ab_csv, reports::ablation_csv(rep));
      std::printf("wrote %s\n", ab_csv.c_str());
    }

    if (flat->parsed()) {
      const json j = load_config(fl_config);
      cfg_get(j, "seed", f_seed, fl_seed);
      cfg_get(j, "runs", f_runs, fl_runs);
      cfg_get(j, "plans", f_plans, fl_plans);
      cfg_get(j, "out_dir", f_out, fl_out_dir);
      cfg_get(j, "perception", f_mode, fl_mode);
      cfg_get(j, "kcnet", f_kc, fl_kcnet);
      cfg_get(j, "shape_model", f_sm, fl_shape_model);
      cfg_get(j, "resolution", f_res, fl_cfg.resolution);
      cfg_get(j, "jitter", f_jit, fl_cfg.size_jitter);
      cfg_get(j, "threshold", f_th, fl_cfg.success_threshold);
      cfg_get(j, "max_frames", f_mf, fl_cfg.max_vote_frames);
      cfg_get(j, "dt", f_dt, fl_cfg.dt);
      fl_cfg.config_json = json{{"perception", fl_mode},
                                {"seed", fl_seed},
                                {"runs", fl_runs},
                                {"plans", fl_plans},
                                {"out_dir", fl_out_dir},
                                {"resolution", fl_cfg.resolution},
                                {"jitter", fl_cfg.size_jitter},
                                {"threshold", fl_cfg.success_threshold},
                                {"max_frames", fl_cfg.max_vote_frames},
                                {"dt", fl_cfg.dt}}
                               .dump();

      const plans::PlanLibrary library = plans::load_library(fl_plans);
      const std::vector<cloth::GarmentTemplate> templates =
          cloth::make_all_templates(fl_cfg.resolution, fl_cfg.size_jitter);

      kcnet::KCNetModel kc_model;
      nn::ModelGraph shape_model;
      std::function<pipeline::Predictors(const kcnet::KnownConfigLabel &)> make_preds;
      if (fl_mode == "trained") {
        if (fl_kcnet.empty() || fl_shape_model.empty())
          throw std::runtime_error("trained mode needs --kcnet and --shape-model");
        kc_model = kcnet::load_kcnet(fl_kcnet);
        shape_model = nn::load_checkpoint(fl_shape_model).graph;
        make_preds = [&](const kcnet::KnownConfigLabel &) {
          return pipeline::trained_predictors(shape_model, kc_model);
        };
      } else {
        make_preds = [](const kcnet::KnownConfigLabel &truth) {
          return pipeline::oracle_predictors(truth.shape, truth);
        };
      }

      fs::create_directories(fl_out_dir);
      std::vector<pipeline::FlattenReport> runs;
      for (int r = 0; r < fl_runs; ++r) {
        const std::uint64_t seed = fl_seed + std::uint64_t(r);
        const pipeline::FlattenReport rep =
            pipeline::run_flatten(templates, library, make_preds, seed, fl_cfg);
        std::printf("seed %llu  %-7s grasp %d  start %6.2f%%  final %6.2f%%  %s%s\n",
                    static_cast<unsigned long long>(seed), cloth::shape_name(rep.true_shape),
                    rep.true_label.grasp_index, rep.starting_state, rep.final_state,
                    rep.success ? "success" : "failure",
                    rep.failed_stage.empty() ? "" : (" (" + rep.failed_stage + ")").c_str());
        std::fflush(stdout);
        reports::write_text(fl_out_dir + "/run_" + std::to_string(seed) + ".json", rep.to_json());
        runs.push_back(rep);
      }
      reports::write_text(fl_out_dir + "/flatten.csv", reports::flatten_csv(runs));
      int ok = 0;
      for (const pipeline::FlattenReport &r : runs) ok += r.success ? 1 : 0;
      std::printf("%d/%d runs ended above the %.0f%% threshold\n", ok, int(runs.size()),
                  fl_cfg.success_threshold);
    }

    if (lint->parsed()) {
      const plans::LintReport rep = plans::lint_library(pl_dir);
      std::printf("%d plans, %.2f commands on average\n", rep.plan_count, rep.mean_commands);
      for (const std::string &w : rep.warnings) std::printf("warning: %s\n", w.c_str());
      for (const std::string &e : rep.errors) std::printf("error: %s\n", e.c_str());
      if (!rep.ok()) throw std::runtime_error("plan library lint failed");
      std::printf("library OK\n");
    }

    if (author->parsed()) {
      plans::author_library(pa_plans, pa_templates, pa_res, pa_jitter, pa_seed,
                            [](const std::string &path) {
                              std::printf("wrote %s\n", path.c_str());
                              std::fflush(stdout);
                            });
      std::printf("plan library authored in %s\n", pa_plans.c_str());
    }

    if (report->parsed()) {
      if (rp_reference) std::printf("%s", reports::reference_flatten_row().c_str());
      std::vector<pipeline::FlattenReport> runs;
      if (fs::is_directory(rp_runs_dir)) {
        std::vector<fs::path> files;
        for (const auto &entry : fs::directory_iterator(rp_runs_dir)) {
          const std::string name = entry.path().filename().string();
          if (entry.is_regular_file() && name.rfind("run_", 0) == 0 &&
              entry.path().extension() == ".json")
            files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const fs::path &p : files) {
          std::ifstream f(p);
          const std::string text((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
          runs.push_back(flatten_report_from_json(text));
        }
      }
      if (runs.empty() && !rp_reference)
        throw std::runtime_error("no run_*.json files under " + rp_runs_dir);
      if (!runs.empty()) {
        reports::write_text(rp_out_dir + "/flatten.csv", reports::flatten_csv(runs));
        std::vector<double> finals;
        for (const pipeline::FlattenReport &r : runs) finals.push_back(r.final_state);
        reports::write_text(rp_out_dir + "/final_states.svg",
                            reports::histogram_svg(finals, 10, "final coverage over runs",
                                                   "percent of goal area"));
        std::printf("wrote %s/flatten.csv and %s/final_states.svg from %zu runs\n",
                    rp_out_dir.c_str(), rp_out_dir.c_str(), runs.size());
      }
    }
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
