#include "metainv/experiments.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "metainv/bilevel.hpp"
#include "metainv/checkpoint.hpp"
#include "metainv/csv.hpp"
#include "metainv/dataset.hpp"
#include "metainv/linear_model.hpp"
#include "metainv/npy.hpp"
#include "metainv/pdnet.hpp"

namespace metainv {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void write_manifest(const ExperimentConfig& cfg, const std::string& outdir,
                    nlohmann::json extra, double ms) {
  nlohmann::json manifest;
  manifest["kind"] = cfg.kind;
  manifest["seed"] = cfg.seed;
  manifest["config_hash"] = fnv1a_hash(canonical_config(cfg));
  manifest["version"] = "0.1.0";
  manifest["elapsed_ms"] = ms;
  manifest["report"] = std::move(extra);
  std::ofstream out(outdir + "/manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + outdir);
  out << manifest.dump(2) << "\n";
}

std::string prepare_outdir(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  return cfg.output_dir;
}

double cosine_similarity(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return (a.array() * b.array()).sum() / (na * nb);
}

// Submatrix of theta mapping observed coordinates (mask 1) into occluded
// coordinates (mask 0).
Eigen::MatrixXd occlusion_block(const Eigen::MatrixXd& theta, const Tensor& mask) {
  std::vector<Index> ker, im;
  for (Index i = 0; i < mask.size(); ++i)
    (mask[i] == 0.0 ? ker : im).push_back(i);
  Eigen::MatrixXd block(static_cast<Index>(ker.size()), static_cast<Index>(im.size()));
  for (std::size_t r = 0; r < ker.size(); ++r)
    for (std::size_t c = 0; c < im.size(); ++c)
      block(static_cast<Index>(r), static_cast<Index>(c)) = theta(ker[r], im[c]);
  return block;
}

Task make_toy_task(const std::string& name, const Tensor& mask, const GaussianPrior& prior,
                   int train_count, int test_count, Rng rng) {
  Task task;
  task.name = name;
  task.op = make_mask(mask);
  std::vector<Tensor> xs = sample_prior(prior, train_count + test_count, rng);
  for (int i = 0; i < train_count + test_count; ++i) {
    Pair pair;
    pair.x = xs[static_cast<std::size_t>(i)];
    pair.y = task.op.apply(pair.x);
    if (i < train_count)
      task.train.push_back(std::move(pair));
    else
      task.test.push_back(std::move(pair));
  }
  return task;
}

Tensor load_or_make_kernel(const ExperimentConfig& cfg) {
  if (!cfg.t3_kernel_path.empty()) return load_npy(cfg.t3_kernel_path);
  return motion_kernel(cfg.t3_kernel_size);
}

}  // namespace

ToyGeometry toy_geometry(Index grid, Index mask_size) {
  ToyGeometry geo;
  Index last = grid - mask_size;  // last valid anchor coordinate
  geo.test_anchor = {last, last};
  Index anchor_max = last - 1;  // training anchors stay strictly inside
  for (Index r = 0; r <= anchor_max; ++r)
    for (Index c = 0; c <= anchor_max; ++c) {
      bool overlaps_test = (r + mask_size > geo.test_anchor.first) &&
                           (c + mask_size > geo.test_anchor.second);
      if (!overlaps_test) geo.train_anchors.emplace_back(r, c);
    }
  return geo;
}

Tensor toy_occlusion_mask(Index grid, Index mask_size, std::pair<Index, Index> anchor) {
  Tensor mask = Tensor::constant({grid * grid}, 1.0);
  for (Index r = 0; r < mask_size; ++r)
    for (Index c = 0; c < mask_size; ++c)
      mask[(anchor.first + r) * grid + (anchor.second + c)] = 0.0;
  return mask;
}

GaussianPrior toy_prior(Index grid, double length_scale) {
  Index n = grid * grid;
  GaussianPrior prior;
  prior.mu = Eigen::VectorXd::Zero(n);
  prior.sigma.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    double ri = static_cast<double>(i / grid), ci = static_cast<double>(i % grid);
    for (Index j = 0; j < n; ++j) {
      double rj = static_cast<double>(j / grid), cj = static_cast<double>(j % grid);
      double dist = std::hypot(ri - rj, ci - cj);
      prior.sigma(i, j) = std::exp(-dist / length_scale);
    }
  }
  return prior;
}

ToyReport run_toy(const ExperimentConfig& cfg) {
  auto start = Clock::now();
  std::string outdir = prepare_outdir(cfg);
  MetricsWriter metrics(outdir + "/metrics.csv");
  Rng rng(cfg.seed);

  GaussianPrior prior = toy_prior(cfg.toy_grid, cfg.toy_length_scale);
  ToyGeometry geo = toy_geometry(cfg.toy_grid, cfg.toy_mask_size);

  std::vector<Task> tasks;
  std::vector<Tensor> masks;
  for (std::size_t a = 0; a < geo.train_anchors.size(); ++a) {
    Tensor mask = toy_occlusion_mask(cfg.toy_grid, cfg.toy_mask_size, geo.train_anchors[a]);
    tasks.push_back(make_toy_task("train" + std::to_string(a), mask, prior,
                                  cfg.toy_train_samples, cfg.toy_test_samples,
                                  rng.derive(100 + a)));
    masks.push_back(std::move(mask));
  }
  Tensor test_mask = toy_occlusion_mask(cfg.toy_grid, cfg.toy_mask_size, geo.test_anchor);
  Task test_task = make_toy_task("test", test_mask, prior, cfg.toy_train_samples,
                                 cfg.toy_test_samples, rng.derive(99));

  Index n = cfg.toy_grid * cfg.toy_grid;
  LinearFamily family(n, n);
  Rng train_rng = rng.derive(7);
  MetaState meta = maml_train(family, tasks, cfg.inner, cfg.outer, train_rng);

  for (std::size_t e = 0; e < meta.history.size(); ++e)
    metrics.write({"toy", "all", static_cast<long>(e), "outer", meta.history[e].outer_loss,
                   0.0});

  // Per-task inner-adapted weights at the final meta state, compared with the
  // analytic estimator blocks.
  ToyReport report;
  if (!meta.history.empty()) {
    report.initial_outer_loss = meta.history.front().outer_loss;
    report.final_outer_loss = meta.history.back().outer_loss;
  }
  double cos_sum = 0.0, fro_sum = 0.0;
  Eigen::MatrixXd first_learned, first_analytic;
  for (std::size_t a = 0; a < tasks.size(); ++a) {
    auto ctx = family.prepare(tasks[a]);
    Eigen::VectorXd theta_i = inner_solve(family, meta.theta_star, ctx, cfg.inner);
    Eigen::MatrixXd learned = occlusion_block(family.unpack(theta_i), masks[a]);
    BayesAffineMap bayes = bayes_linear_map(prior, tasks[a].op);
    Eigen::MatrixXd analytic = occlusion_block(bayes.map, masks[a]);
    cos_sum += cosine_similarity(learned, analytic);
    fro_sum += (learned - analytic).norm() / std::max(analytic.norm(), 1e-300);
    if (a == 0) {
      first_learned = learned;
      first_analytic = analytic;
    }
  }
  report.mean_train_cosine = cos_sum / static_cast<double>(tasks.size());
  report.mean_train_relfro = fro_sum / static_cast<double>(tasks.size());

  FineTuneResult ft = fine_tune(family, meta.theta_star, test_task, cfg.inner);
  for (const FineTuneStep& s : ft.steps)
    metrics.write({"toy", "test", s.step, "finetune_" + loss_mode_name(cfg.inner.mode),
                   s.inner_loss, s.test_psnr});
  Eigen::MatrixXd test_learned = occlusion_block(family.unpack(ft.params), test_mask);
  BayesAffineMap test_bayes = bayes_linear_map(prior, test_task.op);
  Eigen::MatrixXd test_analytic = occlusion_block(test_bayes.map, test_mask);
  report.test_cosine = cosine_similarity(test_learned, test_analytic);
  report.test_relfro =
      (test_learned - test_analytic).norm() / std::max(test_analytic.norm(), 1e-300);

  save_npy(outdir + "/theta_star.npy",
           Tensor({meta.theta_star.size()}, meta.theta_star.array()));
  save_npy(outdir + "/train_block_learned.npy", Tensor::from_matrix(first_learned));
  save_npy(outdir + "/train_block_analytic.npy", Tensor::from_matrix(first_analytic));
  save_npy(outdir + "/test_block_learned.npy", Tensor::from_matrix(test_learned));
  save_npy(outdir + "/test_block_analytic.npy", Tensor::from_matrix(test_analytic));

  nlohmann::json extra{{"mean_train_cosine", report.mean_train_cosine},
                       {"test_cosine", report.test_cosine},
                       {"mean_train_relfro", report.mean_train_relfro},
                       {"test_relfro", report.test_relfro},
                       {"train_tasks", tasks.size()},
                       {"final_outer_loss", report.final_outer_loss}};
  write_manifest(cfg, outdir, extra, elapsed_ms(start));
  return report;
}

std::vector<Task> build_imaging_tasks(const ExperimentConfig& cfg,
                                      const std::vector<std::string>& kinds,
                                      const std::vector<Tensor>& images, Rng& rng) {
  std::vector<Task> tasks;
  for (const std::string& name : kinds) {
    TaskKind kind = task_kind_from_name(name);
    TaskParams params;
    params.sigma = cfg.t1_sigma;
    params.strength = cfg.t2_strength;
    params.factor = cfg.sr_factor;
    Rng task_rng = rng.derive(fnv1a_hash("task:" + name));
    switch (kind) {
      case TaskKind::T3:
        params.kernel = load_or_make_kernel(cfg);
        break;
      case TaskKind::T4:
        params.mask = cfg.t4_mask_path.empty()
                          ? random_drop_mask(images.front().shape(), cfg.t4_drop_fraction,
                                             task_rng)
                          : load_npy(cfg.t4_mask_path);
        break;
      case TaskKind::MRI:
        params.freq_mask =
            cfg.mri_mask_path.empty()
                ? mri_column_mask(images.front().dim(0), images.front().dim(1),
                                  cfg.mri_acceleration, cfg.mri_center_fraction, task_rng)
                : load_npy(cfg.mri_mask_path);
        break;
      default:
        break;
    }
    tasks.push_back(make_task(kind, params, images,
                              static_cast<std::size_t>(cfg.train_count), task_rng));
  }
  return tasks;
}

namespace {

double max_operator_norm(const std::vector<Task>& tasks, Rng& rng) {
  double amax = 1.0;
  for (const Task& task : tasks) {
    Rng r = rng.derive(fnv1a_hash("specnorm:" + task.name));
    amax = std::max(amax, spectral_norm(task.op, 100, r));
  }
  return amax;
}

template <class Family>
void train_with_family(const ExperimentConfig& cfg, const Family& family,
                       const std::vector<Task>& tasks, Rng& rng, MetricsWriter& metrics,
                       Checkpoint ckpt_proto, const std::string& outdir) {
  Rng train_rng = rng.derive(3);
  MetaState state;
  int done = 0;
  bool started = false;
  while (done < cfg.outer.epochs) {
    int chunk = cfg.checkpoint_every > 0
                    ? std::min(cfg.checkpoint_every, cfg.outer.epochs - done)
                    : cfg.outer.epochs;
    OuterConfig chunk_cfg = cfg.outer;
    chunk_cfg.epochs = chunk;
    state = maml_train(family, tasks, cfg.inner, chunk_cfg, train_rng,
                       started ? &state : nullptr);
    started = true;
    done += chunk;
    if (cfg.checkpoint_every > 0 && done < cfg.outer.epochs) {
      ckpt_proto.params = state.theta_star;
      save_checkpoint(outdir + "/checkpoint_epoch" + std::to_string(done), ckpt_proto);
    }
  }
  for (std::size_t e = 0; e < state.history.size(); ++e) {
    const EpochRecord& rec = state.history[e];
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      metrics.write({"train", tasks[t].name, static_cast<long>(e), "meta",
                     rec.meta_losses[t], rec.meta_psnr[t]});
      metrics.write({"train", tasks[t].name, static_cast<long>(e), "inner",
                     rec.inner_losses[t], rec.test_psnr[t]});
    }
  }
  ckpt_proto.params = state.theta_star;
  save_checkpoint(outdir + "/checkpoint", ckpt_proto);
}

}  // namespace

void run_train(const ExperimentConfig& cfg) {
  auto start = Clock::now();
  std::string outdir = prepare_outdir(cfg);
  MetricsWriter metrics(outdir + "/metrics.csv");
  Rng rng(cfg.seed);
  Rng data_rng = rng.derive(1);
  std::vector<Tensor> images =
      load_dataset(cfg.data_path, cfg.patch_size, cfg.train_count + cfg.test_count, data_rng);
  Rng task_rng = rng.derive(2);
  std::vector<Task> tasks = build_imaging_tasks(cfg, cfg.task_kinds, images, task_rng);

  if (cfg.model_family == "pdnet") {
    Rng norm_rng = rng.derive(4);
    double amax = max_operator_norm(tasks, norm_rng);
    double step = 0.5 / amax;
    PdnetFamily family(cfg.depth, tasks.front().op.in_shape(), step, step, cfg.channels);
    Checkpoint proto;
    proto.model_family = "pdnet";
    proto.depth = cfg.depth;
    proto.channels = cfg.channels;
    proto.ksize = family.ksize();
    proto.tau = step;
    proto.gamma = step;
    proto.image_shape = tasks.front().op.in_shape();
    train_with_family(cfg, family, tasks, rng, metrics, proto, outdir);
  } else {
    LinearFamily family(tasks.front().op.in_size(), tasks.front().op.out_size());
    for (const Task& task : tasks)
      if (task.op.in_size() != family.rows() || task.op.out_size() != family.cols())
        throw ConfigError("run_train: linear model requires tasks with one measurement shape");
    Checkpoint proto;
    proto.model_family = "linear";
    proto.rows = family.rows();
    proto.cols = family.cols();
    train_with_family(cfg, family, tasks, rng, metrics, proto, outdir);
  }
  write_manifest(cfg, outdir, {{"tasks", cfg.task_kinds}, {"epochs", cfg.outer.epochs}},
                 elapsed_ms(start));
}

namespace {

template <class Family>
FinetuneReport finetune_with_family(const ExperimentConfig& cfg, const Family& family,
                                    const Eigen::VectorXd& theta_star, const Task& task,
                                    MetricsWriter& metrics, const std::string& outdir,
                                    Checkpoint ckpt_proto) {
  FineTuneResult ft = fine_tune(family, theta_star, task, cfg.inner);
  std::string kind = "finetune_" + loss_mode_name(cfg.inner.mode);
  for (const FineTuneStep& s : ft.steps)
    metrics.write({"finetune", task.name, s.step, kind, s.inner_loss, s.test_psnr});

  FinetuneReport report;
  report.loss_step0 = ft.steps.front().inner_loss;
  report.loss_final = ft.steps.back().inner_loss;
  report.psnr_step0 = ft.steps.front().test_psnr;
  report.psnr_final = ft.steps.back().test_psnr;

  // Classical reference reconstructions on the evaluation split.
  double adj_psnr = 0.0, pinv_psnr = 0.0, adj_loss = 0.0, pinv_loss = 0.0;
  for (const Pair& pair : task.test) {
    Tensor adj = task.op.adjoint(pair.y);
    Tensor pin = pinv_apply(task.op, pair.y);
    adj_psnr += psnr(adj, pair.x, 1.0);
    pinv_psnr += psnr(pin, pair.x, 1.0);
    Tensor ra = task.op.apply(adj);
    ra -= pair.y;
    adj_loss += 0.5 * ra.flat().square().sum();
    Tensor rp = task.op.apply(pin);
    rp -= pair.y;
    pinv_loss += 0.5 * rp.flat().square().sum();
  }
  double nt = static_cast<double>(task.test.size());
  report.adjoint_psnr = adj_psnr / nt;
  report.pinv_psnr = pinv_psnr / nt;
  metrics.write({"finetune", task.name, 0, "baseline_adjoint", adj_loss, report.adjoint_psnr});
  metrics.write({"finetune", task.name, 0, "baseline_pinv", pinv_loss, report.pinv_psnr});

  // Reconstruction of the first evaluation sample, before/after adaptation.
  if (!task.test.empty()) {
    const Pair& pair = task.test.front();
    Tensor before = family.reconstruct(theta_star, pair.y, task.op);
    Tensor after = family.reconstruct(ft.params, pair.y, task.op);
    auto to_image = [](const Tensor& t) {
      return t.rank() == 3 ? Tensor(Shape{t.dim(1), t.dim(2)},
                                    t.flat().segment(0, t.dim(1) * t.dim(2)))
                           : t;
    };
    save_pgm(outdir + "/recon_meta.pgm", to_image(before));
    save_pgm(outdir + "/recon_finetuned.pgm", to_image(after));
    save_pgm(outdir + "/ground_truth.pgm", to_image(pair.x));
    save_npy(outdir + "/recon_finetuned.npy", after);
  }
  ckpt_proto.params = ft.params;
  save_checkpoint(outdir + "/checkpoint_finetuned", ckpt_proto);
  return report;
}

}  // namespace

FinetuneReport run_finetune(const ExperimentConfig& cfg) {
  auto start = Clock::now();
  std::string outdir = prepare_outdir(cfg);
  MetricsWriter metrics(outdir + "/metrics.csv");
  Rng rng(cfg.seed);
  Checkpoint ckpt = load_checkpoint(cfg.checkpoint_path);

  Rng data_rng = rng.derive(1);
  std::vector<Tensor> images =
      load_dataset(cfg.data_path, cfg.patch_size, cfg.train_count + cfg.test_count, data_rng);
  Rng task_rng = rng.derive(2);
  std::vector<Task> tasks = build_imaging_tasks(cfg, {cfg.finetune_task}, images, task_rng);
  Task& task = tasks.front();

  FinetuneReport report;
  if (ckpt.model_family == "pdnet") {
    PdnetFamily family(ckpt.depth, task.op.in_shape(), ckpt.tau, ckpt.gamma, ckpt.channels,
                       ckpt.ksize);
    if (family.param_count() != ckpt.params.size())
      throw ConfigError("run_finetune: checkpoint does not match the pdnet architecture");
    report = finetune_with_family(cfg, family, ckpt.params, task, metrics, outdir, ckpt);
  } else {
    LinearFamily family(task.op.in_size(), task.op.out_size());
    if (family.rows() != ckpt.rows || family.cols() != ckpt.cols)
      throw ConfigError("run_finetune: linear checkpoint does not match the task shapes");
    report = finetune_with_family(cfg, family, ckpt.params, task, metrics, outdir, ckpt);
  }
  nlohmann::json extra{{"task", cfg.finetune_task},
                       {"loss_step0", report.loss_step0},
                       {"loss_final", report.loss_final},
                       {"psnr_step0", report.psnr_step0},
                       {"psnr_final", report.psnr_final}};
  write_manifest(cfg, outdir, extra, elapsed_ms(start));
  return report;
}

void run_eval(const ExperimentConfig& cfg) {
  auto start = Clock::now();
  std::string outdir = prepare_outdir(cfg);
  MetricsWriter metrics(outdir + "/metrics.csv");
  Rng rng(cfg.seed);
  Checkpoint ckpt = load_checkpoint(cfg.checkpoint_path);
  Rng data_rng = rng.derive(1);
  std::vector<Tensor> images =
      load_dataset(cfg.data_path, cfg.patch_size, cfg.train_count + cfg.test_count, data_rng);
  Rng task_rng = rng.derive(2);
  std::vector<Task> tasks = build_imaging_tasks(cfg, cfg.task_kinds, images, task_rng);

  for (const Task& task : tasks) {
    double model_psnr = 0.0, model_loss = 0.0, adj_psnr = 0.0, pinv_psnr = 0.0;
    for (const Pair& pair : task.test) {
      Tensor rec;
      if (ckpt.model_family == "pdnet") {
        PdnetFamily family(ckpt.depth, task.op.in_shape(), ckpt.tau, ckpt.gamma,
                           ckpt.channels, ckpt.ksize);
        rec = family.reconstruct(ckpt.params, pair.y, task.op);
      } else {
        LinearFamily family(task.op.in_size(), task.op.out_size());
        if (family.param_count() != ckpt.params.size())
          throw ConfigError("run_eval: linear checkpoint does not match the task shapes");
        rec = family.reconstruct(ckpt.params, pair.y, task.op);
      }
      model_psnr += psnr(rec, pair.x, 1.0);
      model_loss += 0.5 * (rec.flat() - pair.x.flat()).square().sum();
      adj_psnr += psnr(task.op.adjoint(pair.y), pair.x, 1.0);
      pinv_psnr += psnr(pinv_apply(task.op, pair.y), pair.x, 1.0);
    }
    double nt = static_cast<double>(task.test.size());
    metrics.write({"eval", task.name, 0, "meta", model_loss / nt, model_psnr / nt});
    metrics.write({"eval", task.name, 0, "baseline_adjoint", 0.0, adj_psnr / nt});
    metrics.write({"eval", task.name, 0, "baseline_pinv", 0.0, pinv_psnr / nt});
  }
  write_manifest(cfg, outdir, {{"tasks", cfg.task_kinds}}, elapsed_ms(start));
}

BayesReport run_bayes_check(const ExperimentConfig& cfg) {
  auto start = Clock::now();
  std::string outdir = prepare_outdir(cfg);
  MetricsWriter metrics(outdir + "/metrics.csv");
  Rng rng(cfg.seed);
  Index n = cfg.bayes_dim;
  BayesReport report;

  auto random_prior = [&](Rng& r, bool diagonal) {
    GaussianPrior prior;
    prior.mu = r.normal_vector(n);
    if (diagonal) {
      prior.sigma = Eigen::MatrixXd::Zero(n, n);
      for (Index i = 0; i < n; ++i) prior.sigma(i, i) = 0.2 + r.uniform();
    } else {
      Eigen::MatrixXd b(n, n);
      for (Index i = 0; i < n; ++i) b.row(i) = r.normal_vector(n).transpose();
      prior.sigma = b * b.transpose() / static_cast<double>(n) +
                    0.1 * Eigen::MatrixXd::Identity(n, n);
    }
    return prior;
  };

  auto random_operator = [&](Rng& r, int trial) {
    if (trial % 2 == 1 && n % 2 == 0) return make_decimation({n}, 2);
    double drop = 0.2 + 0.4 * r.uniform();
    Tensor mask = random_drop_mask({n}, drop, r);
    return make_mask(mask);
  };

  for (int trial = 0; trial < cfg.bayes_trials; ++trial) {
    Rng r = rng.derive(1000 + static_cast<std::uint64_t>(trial));
    GaussianPrior prior = random_prior(r, false);
    LinearOp op = random_operator(r, trial);
    Tensor x = sample_prior(prior, 1, r).front();
    Tensor y = op.apply(x);
    Tensor est = bayes_estimate(prior, op, y);
    Tensor oracle = gaussian_condition_oracle(prior, op, y);
    double rel = (est.flat() - oracle.flat()).matrix().norm() /
                 std::max(oracle.flat().matrix().norm(), 1e-12);
    report.max_rel_err = std::max(report.max_rel_err, rel);
    metrics.write({"bayes-check", op_kind_name(op.kind()), trial, "rel_err", rel, 0.0});
  }

  for (int trial = 0; trial < cfg.bayes_diag_trials; ++trial) {
    Rng r = rng.derive(5000 + static_cast<std::uint64_t>(trial));
    GaussianPrior prior = random_prior(r, true);
    Tensor mask = random_drop_mask({n}, 0.4, r);
    LinearOp op = make_mask(mask);
    Tensor x = sample_prior(prior, 1, r).front();
    Tensor est = bayes_estimate(prior, op, op.apply(x));
    double err = 0.0;
    for (Index i = 0; i < n; ++i)
      if (mask[i] == 0.0) err = std::max(err, std::abs(est[i] - prior.mu[i]));
    report.max_diag_err = std::max(report.max_diag_err, err);
    metrics.write({"bayes-check", "diag", trial, "ker_mu_err", err, 0.0});
  }

  for (int trial = 0; trial < 10; ++trial) {
    Rng r = rng.derive(9000 + static_cast<std::uint64_t>(trial));
    GaussianPrior prior = random_prior(r, false);
    LinearOp op = make_identity({n});
    Tensor x = sample_prior(prior, 1, r).front();
    Tensor y = op.apply(x);
    Tensor est = bayes_estimate(prior, op, y);
    Tensor oracle = gaussian_condition_oracle(prior, op, y);
    double rel = (est.flat() - oracle.flat()).matrix().norm() /
                 std::max(oracle.flat().matrix().norm(), 1e-12);
    report.max_identity_err = std::max(report.max_identity_err, rel);
    metrics.write({"bayes-check", "identity", trial, "rel_err", rel, 0.0});
  }

  report.trials = cfg.bayes_trials;
  nlohmann::json extra{{"max_rel_err", report.max_rel_err},
                       {"max_diag_err", report.max_diag_err},
                       {"max_identity_err", report.max_identity_err},
                       {"trials", report.trials}};
  write_manifest(cfg, outdir, extra, elapsed_ms(start));
  if (report.max_rel_err > 1e-8)
    throw NumericalError("bayes-check: estimator/oracle disagreement " +
                         format_double(report.max_rel_err) + " exceeds 1e-8");
  return report;
}

void run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.kind == "toy") {
    run_toy(cfg);
  } else if (cfg.kind == "train") {
    run_train(cfg);
  } else if (cfg.kind == "finetune") {
    run_finetune(cfg);
  } else if (cfg.kind == "eval") {
    run_eval(cfg);
  } else if (cfg.kind == "bayes-check") {
    run_bayes_check(cfg);
  } else {
    throw ConfigError("unknown experiment kind: " + cfg.kind);
  }
}

}  // namespace metainv
