#pragma once

#include <utility>
#include <vector>

#include "metainv/config.hpp"
#include "metainv/gaussian.hpp"
#include "metainv/task.hpp"

namespace metainv {

/// Toy-problem geometry: square occlusion masks anchored inside a training
/// region, with one held-out test anchor in the opposite corner.
struct ToyGeometry {
  std::vector<std::pair<Index, Index>> train_anchors;
  std::pair<Index, Index> test_anchor;
};

ToyGeometry toy_geometry(Index grid, Index mask_size);

/// Flat binary mask over a grid*grid image, zero on the mask_size square at
/// the anchor.
Tensor toy_occlusion_mask(Index grid, Index mask_size, std::pair<Index, Index> anchor);

/// Zero-mean prior with exponential-decay covariance exp(-dist/length_scale)
/// over grid positions.
GaussianPrior toy_prior(Index grid, double length_scale);

struct ToyReport {
  double mean_train_cosine = 0.0;
  double test_cosine = 0.0;
  double mean_train_relfro = 0.0;
  double test_relfro = 0.0;
  double initial_outer_loss = 0.0;
  double final_outer_loss = 0.0;
};

struct FinetuneReport {
  double loss_step0 = 0.0;
  double loss_final = 0.0;
  double psnr_step0 = 0.0;
  double psnr_final = 0.0;
  double adjoint_psnr = 0.0;
  double pinv_psnr = 0.0;
};

struct BayesReport {
  double max_rel_err = 0.0;
  double max_diag_err = 0.0;
  double max_identity_err = 0.0;
  int trials = 0;
};

ToyReport run_toy(const ExperimentConfig& cfg);
void run_train(const ExperimentConfig& cfg);
FinetuneReport run_finetune(const ExperimentConfig& cfg);
void run_eval(const ExperimentConfig& cfg);
BayesReport run_bayes_check(const ExperimentConfig& cfg);

/// Dispatches on cfg.kind. Throws ConfigError for configuration problems and
/// NumericalError for numerical failures.
void run_experiment(const ExperimentConfig& cfg);

/// Imaging tasks named in `kinds`, built from the config's task parameters.
std::vector<Task> build_imaging_tasks(const ExperimentConfig& cfg,
                                      const std::vector<std::string>& kinds,
                                      const std::vector<Tensor>& images, Rng& rng);

}  // namespace metainv
