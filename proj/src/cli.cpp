/* Copyright 2026 The dsir Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "dsir/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "dsir/contrastive.hpp"
#include "dsir/descriptors.hpp"
#include "dsir/io.hpp"
#include "dsir/metrics.hpp"
#include "dsir/parallel.hpp"
#include "dsir/phantom.hpp"
#include "dsir/registration.hpp"

namespace dsir {

namespace {

namespace fs = std::filesystem;

std::string indexed(const std::string& dir, const std::string& stem, int i,
                    const std::string& suffix) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%03d", i);
  return (fs::path(dir) / (stem + buf + suffix)).string();
}

int cmd_phantom(const std::string& out_dir, int count, int dim, std::uint64_t seed, bool pairs,
                double amplitude, double field_sigma) {
  fs::create_directories(out_dir);
  const Dims dims{dim, dim, dim};
  for (int i = 0; i < count; ++i) {
    const std::uint64_t item_seed = seed + static_cast<std::uint64_t>(i);
    const Phantom ph = generate_phantom(item_seed, dims);
    write_container(to_container(ph.intensity), indexed(out_dir, "p", i, "_intensity.vol"));
    write_container(to_container(ph.labels), indexed(out_dir, "p", i, "_labels.vol"));
    if (pairs) {
      const auto [orig, inverted] = make_modality_pair(ph, item_seed + 1000003);
      const DisplacementField gt =
          synth_deformation(item_seed + 2000003, dims, amplitude, field_sigma);
      const Volume fixed = warp(inverted, gt);
      LabelVolume fixed_labels = warp_labels(ph.labels, gt);
      write_container(to_container(fixed), indexed(out_dir, "p", i, "_fixed.vol"));
      write_container(to_container(fixed_labels), indexed(out_dir, "p", i, "_fixed_labels.vol"));
      write_container(to_container(gt), indexed(out_dir, "p", i, "_gt.vol"));
      (void)orig;  // the moving image is the phantom intensity itself
    }
    std::printf("phantom %03d seed %llu written\n", i,
                static_cast<unsigned long long>(item_seed));
  }
  return 0;
}

std::vector<Volume> load_corpus(const std::string& dir) {
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string p = entry.path().string();
    if (p.size() >= 4 && p.compare(p.size() - 4, 4, ".vol") == 0) {
      std::ifstream sidecar(p + ".json");
      if (!sidecar) continue;
      paths.push_back(p);
    }
  }
  std::sort(paths.begin(), paths.end());
  std::vector<Volume> corpus;
  for (const auto& p : paths) {
    const Container c = read_container(p);
    if (c.kind == ValueKind::intensity && c.channels == 1) corpus.push_back(volume_from(c));
  }
  return corpus;
}

int cmd_train(const TrainConfig& cfg, const std::string& corpus_dir, const std::string& out,
              const std::string& best_out, const std::string& trace_path) {
  const std::vector<Volume> corpus = load_corpus(corpus_dir);
  if (corpus.empty()) {
    std::fprintf(stderr, "train: no intensity volumes found in %s\n", corpus_dir.c_str());
    return 1;
  }
  std::printf("training on %zu volumes, %d epochs, n_k=%lld, tau=%.3f, c_h=%d\n", corpus.size(),
              cfg.epochs, static_cast<long long>(cfg.n_k), cfg.tau, cfg.net.c_h);
  const TrainResult result = train(corpus, cfg);
  save_checkpoint(result.last.to_checkpoint(), out);
  if (!best_out.empty()) save_checkpoint(result.best.to_checkpoint(), best_out);
  if (!trace_path.empty()) write_train_trace_csv(result.trace, trace_path);
  if (!result.trace.empty())
    std::printf("final loss %.6f (first %.6f)\n", result.trace.back().loss,
                result.trace.front().loss);
  return 0;
}

int cmd_register(const RegistrationConfig& cfg, const std::string& fixed_path,
                 const std::string& moving_path, const std::string& out,
                 const std::string& trace_path) {
  const Volume fixed = read_volume(fixed_path);
  const Volume moving = read_volume(moving_path);
  const RegistrationResult result = register_pair(fixed, moving, cfg);
  write_container(to_container(result.field), out);
  if (!trace_path.empty()) write_trace_csv(result.trace, trace_path);
  const JacobianResult jac = jacobian_folding(result.field);
  std::printf("registered %s <- %s metric=%s folding=%.4f%% wall=%.1fs\n", fixed_path.c_str(),
              moving_path.c_str(), metric_name(cfg.metric).c_str(), jac.folding_percent,
              result.wall_seconds);
  return 0;
}

int cmd_eval(const std::string& fixed_labels_path, const std::string& moving_labels_path,
             const std::string& field_path) {
  const LabelVolume fixed_labels = labels_from(read_container(fixed_labels_path));
  LabelVolume moving_labels = labels_from(read_container(moving_labels_path));
  if (!field_path.empty()) {
    const DisplacementField field = displacement_from(read_container(field_path));
    moving_labels = warp_labels(moving_labels, field);
    const JacobianResult jac = jacobian_folding(field);
    std::printf("folding %.4f%%\n", jac.folding_percent);
  }
  std::vector<int> labels;
  for (const int l : fixed_labels.legend)
    if (l != 0) labels.push_back(l);
  for (const int label : labels) {
    const BinaryMask a = fixed_labels.mask_for(label);
    const BinaryMask b = moving_labels.mask_for(label);
    const double d = dice(a, b);
    if (a.count_true() == 0 || b.count_true() == 0) {
      std::printf("label %d dice %.4f hd95 n/a\n", label, d);
    } else {
      std::printf("label %d dice %.4f hd95 %.4f\n", label, d,
                  hd95(a, b, fixed_labels.spacing));
    }
  }
  return 0;
}

int cmd_heatmap(const std::string& source_path, const std::string& target_path,
                const std::string& metric_name_str, const std::string& checkpoint,
                std::vector<int> point, const std::string& out) {
  const Metric metric = metric_from_string(metric_name_str);
  const Volume source = read_volume(source_path);
  const Volume target = read_volume(target_path);
  Field src_rep, tgt_rep;
  if (metric == Metric::dns) {
    const NetParams params = NetParams::from_checkpoint(load_checkpoint(checkpoint));
    NoGradGuard ng;
    src_rep = dsir_to_field(net_forward(source, params), source.spacing);
    tgt_rep = dsir_to_field(net_forward(target, params), target.spacing);
  } else if (metric == Metric::mind) {
    src_rep = mind(source);
    tgt_rep = mind(target);
  } else {
    throw std::runtime_error("heatmap: supported metrics are dns and mind");
  }
  const Volume heat = similarity_heatmap(src_rep, tgt_rep, point[0], point[1], point[2]);
  write_container(to_container(heat), out);
  const std::string csv = out + ".csv";
  std::ofstream os(csv);
  os << "i,j,k,similarity\n";
  for (int i = 0; i < heat.dims.h; ++i)
    for (int j = 0; j < heat.dims.w; ++j)
      for (int k = 0; k < heat.dims.d; ++k)
        os << i << ',' << j << ',' << k << ',' << heat.at(i, j, k) << '\n';
  std::printf("heatmap written to %s and %s\n", out.c_str(), csv.c_str());
  return 0;
}

int cmd_landscape(const std::string& fixed_path, const std::string& moving_path,
                  const std::string& metric_name_str, const std::string& checkpoint,
                  double angle_min, double angle_max, double angle_step, double sigma,
                  int nmi_bins, double nmi_parzen, const std::string& out) {
  const Metric metric = metric_from_string(metric_name_str);
  const Volume fixed = read_volume(fixed_path);
  const Volume moving = read_volume(moving_path);
  std::vector<double> angles;
  for (double a = angle_min; a <= angle_max + 1e-9; a += angle_step) angles.push_back(a);
  NetParams params;
  const NetParams* net = nullptr;
  if (metric == Metric::dns) {
    params = NetParams::from_checkpoint(load_checkpoint(checkpoint));
    net = &params;
  }
  const auto rows = loss_landscape(fixed, moving, metric, net, angles, sigma, nmi_bins,
                                   nmi_parzen);
  write_landscape_csv(rows, out);
  const auto best = std::min_element(rows.begin(), rows.end(),
                                     [](const auto& a, const auto& b) { return a.cost < b.cost; });
  std::printf("landscape written to %s; minimum cost %.6f at (%g, %g)\n", out.c_str(),
              best->cost, best->angle0, best->angle1);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"deformable multimodal registration with learned structural representations"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  int threads = 0;
  app.add_option("--seed", seed, "global random seed");
  app.add_option("--threads", threads, "worker threads (0 = hardware)");

  // phantom
  auto* sc_phantom = app.add_subcommand("phantom", "generate a synthetic labelled corpus");
  std::string ph_out = "phantoms";
  int ph_count = 1, ph_dim = 48;
  bool ph_pairs = false;
  double ph_amplitude = 6.0, ph_sigma = 8.0;
  sc_phantom->add_option("--out", ph_out, "output directory");
  sc_phantom->add_option("--count", ph_count, "number of phantoms");
  sc_phantom->add_option("--dim", ph_dim, "cubic volume extent (divisible by 8)");
  sc_phantom->add_flag("--pairs", ph_pairs,
                       "also write deformed contrast-inverted fixed images and ground truth");
  sc_phantom->add_option("--amplitude", ph_amplitude, "max ground-truth displacement (voxels)");
  sc_phantom->add_option("--field-sigma", ph_sigma, "ground-truth field smoothness (voxels)");

  // train
  auto* sc_train = app.add_subcommand("train", "contrastive training of the representation");
  std::string tr_corpus, tr_out = "last.ckpt", tr_best, tr_trace, tr_config;
  TrainConfig tr_cfg;
  sc_train->add_option("--corpus", tr_corpus, "directory of .vol intensity volumes")
      ->required();
  sc_train->add_option("--out", tr_out, "checkpoint path (last parameters)");
  sc_train->add_option("--best-out", tr_best, "checkpoint path (best running loss)");
  sc_train->add_option("--trace", tr_trace, "loss trace CSV");
  sc_train->add_option("--config", tr_config, "JSON config file");
  sc_train->add_option("--epochs", tr_cfg.epochs, "training epochs");
  sc_train->add_option("--n-k", tr_cfg.n_k, "sampled vectors per step");
  sc_train->add_option("--tau", tr_cfg.tau, "temperature");
  sc_train->add_option("--delta", tr_cfg.delta, "inversion threshold");
  sc_train->add_option("--bezier-n", tr_cfg.bezier_n, "control points minus one");
  sc_train->add_option("--lr", tr_cfg.lr, "learning rate");
  sc_train->add_option("--c-h", tr_cfg.net.c_h, "feature channels");
  sc_train->add_option("--c-d", tr_cfg.net.c_d, "representation channels");

  // register
  auto* sc_register = app.add_subcommand("register", "multiresolution instance optimisation");
  std::string rg_fixed, rg_moving, rg_metric = "dns", rg_checkpoint, rg_out = "field.vol",
              rg_trace, rg_config;
  sc_register->add_option("--fixed", rg_fixed, "fixed volume")->required();
  sc_register->add_option("--moving", rg_moving, "moving volume")->required();
  sc_register->add_option("--metric", rg_metric, "dns | mind | nmi");
  sc_register->add_option("--checkpoint", rg_checkpoint, "trained network (dns metric)");
  sc_register->add_option("--out", rg_out, "output displacement field (.vol)");
  sc_register->add_option("--trace", rg_trace, "per-iteration loss CSV");
  sc_register->add_option("--config", rg_config, "JSON config file");

  // eval
  auto* sc_eval = app.add_subcommand("eval", "Dice / HD95 / folding of a propagated labelling");
  std::string ev_fixed, ev_moving, ev_field;
  sc_eval->add_option("--fixed-labels", ev_fixed, "fixed label volume")->required();
  sc_eval->add_option("--moving-labels", ev_moving, "moving label volume")->required();
  sc_eval->add_option("--field", ev_field, "displacement field to apply to the moving labels");

  // heatmap
  auto* sc_heatmap = app.add_subcommand("heatmap", "similarity of one marked point");
  std::string hm_source, hm_target, hm_metric = "dns", hm_checkpoint, hm_out = "heatmap.vol";
  std::vector<int> hm_point;
  sc_heatmap->add_option("--source", hm_source, "source volume")->required();
  sc_heatmap->add_option("--target", hm_target, "target volume")->required();
  sc_heatmap->add_option("--metric", hm_metric, "dns | mind");
  sc_heatmap->add_option("--checkpoint", hm_checkpoint, "trained network (dns metric)");
  sc_heatmap->add_option("--point", hm_point, "marked voxel i j k")->expected(3)->required();
  sc_heatmap->add_option("--out", hm_out, "output volume (.vol)");

  // landscape
  auto* sc_landscape = app.add_subcommand("landscape", "cost over a two-axis rotation grid");
  std::string ls_fixed, ls_moving, ls_metric = "dns", ls_checkpoint, ls_out = "landscape.csv";
  double ls_min = -30, ls_max = 30, ls_step = 5, ls_sigma = 1.0, ls_parzen = 1.0;
  int ls_bins = 32;
  sc_landscape->add_option("--fixed", ls_fixed, "fixed volume")->required();
  sc_landscape->add_option("--moving", ls_moving, "moving volume")->required();
  sc_landscape->add_option("--metric", ls_metric, "dns | mind | nmi");
  sc_landscape->add_option("--checkpoint", ls_checkpoint, "trained network (dns metric)");
  sc_landscape->add_option("--angle-min", ls_min, "first angle (degrees)");
  sc_landscape->add_option("--angle-max", ls_max, "last angle (degrees)");
  sc_landscape->add_option("--angle-step", ls_step, "grid step (degrees)");
  sc_landscape->add_option("--sigma", ls_sigma, "representation smoothing");
  sc_landscape->add_option("--nmi-bins", ls_bins, "histogram bins");
  sc_landscape->add_option("--nmi-parzen", ls_parzen, "window width in bins");
  sc_landscape->add_option("--out", ls_out, "output CSV");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  set_thread_count(threads);

  try {
    if (*sc_phantom)
      return cmd_phantom(ph_out, ph_count, ph_dim, seed, ph_pairs, ph_amplitude, ph_sigma);

    if (*sc_train) {
      TrainConfig cfg = tr_config.empty() ? TrainConfig{} : load_train_config(tr_config);
      // explicit flags override config-file values
      if (sc_train->count("--epochs")) cfg.epochs = tr_cfg.epochs;
      if (sc_train->count("--n-k")) cfg.n_k = tr_cfg.n_k;
      if (sc_train->count("--tau")) cfg.tau = tr_cfg.tau;
      if (sc_train->count("--delta")) cfg.delta = tr_cfg.delta;
      if (sc_train->count("--bezier-n")) cfg.bezier_n = tr_cfg.bezier_n;
      if (sc_train->count("--lr")) cfg.lr = tr_cfg.lr;
      if (sc_train->count("--c-h")) cfg.net.c_h = tr_cfg.net.c_h;
      if (sc_train->count("--c-d")) cfg.net.c_d = tr_cfg.net.c_d;
      if (app.count("--seed")) cfg.seed = seed;
      return cmd_train(cfg, tr_corpus, tr_out, tr_best, tr_trace);
    }

    if (*sc_register) {
      RegistrationConfig cfg =
          rg_config.empty() ? RegistrationConfig{} : load_registration_config(rg_config);
      if (sc_register->count("--metric")) cfg.metric = metric_from_string(rg_metric);
      if (sc_register->count("--checkpoint")) cfg.checkpoint = rg_checkpoint;
      if (cfg.metric == Metric::dns && cfg.checkpoint.empty()) {
        std::cerr << "register: --checkpoint is required with --metric dns\n";
        return 2;
      }
      return cmd_register(cfg, rg_fixed, rg_moving, rg_out, rg_trace);
    }

    if (*sc_eval) return cmd_eval(ev_fixed, ev_moving, ev_field);

    if (*sc_heatmap) {
      if (hm_metric == "dns" && hm_checkpoint.empty()) {
        std::cerr << "heatmap: --checkpoint is required with --metric dns\n";
        return 2;
      }
      return cmd_heatmap(hm_source, hm_target, hm_metric, hm_checkpoint, hm_point, hm_out);
    }

    if (*sc_landscape) {
      if (ls_metric == "dns" && ls_checkpoint.empty()) {
        std::cerr << "landscape: --checkpoint is required with --metric dns\n";
        return 2;
      }
      return cmd_landscape(ls_fixed, ls_moving, ls_metric, ls_checkpoint, ls_min, ls_max,
                           ls_step, ls_sigma, ls_bins, ls_parzen, ls_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace dsir
