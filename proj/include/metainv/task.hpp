#pragma once

#include <string>
#include <vector>

#include "metainv/linear_op.hpp"
#include "metainv/rng.hpp"
#include "metainv/tensor.hpp"

namespace metainv {

enum class TaskKind { T1, T2, T3, T4, SR, MRI };

std::string task_kind_name(TaskKind kind);
TaskKind task_kind_from_name(const std::string& name);

enum class TargetTransform { identity, tv_prox };

struct Pair {
  Tensor x;  // target image
  Tensor y;  // measurement
};

/// An inverse-problem task: measurement operator, noise level, and paired
/// train/test datasets.
struct Task {
  std::string name;
  LinearOp op;
  double noise_sigma = 0.0;
  TargetTransform target = TargetTransform::identity;
  std::vector<Pair> train;
  std::vector<Pair> test;

  const std::vector<Pair>& split(bool test_split) const { return test_split ? test : train; }
};

struct TaskParams {
  double sigma = 0.1;        // T1 noise level
  double strength = 0.1;     // T2 TV strength
  Tensor kernel;             // T3 convolution kernel
  Tensor mask;               // T4 image mask
  Index factor = 2;          // SR decimation factor
  Tensor freq_mask;          // MRI frequency mask
  double tv_tol = 1e-6;
  int tv_max_iter = 500;
};

/// Builds a task with generated (x, y) pairs from normalized images.
/// The first train_count images form the train split, the rest the test
/// split. MRI images are embedded as 2-channel complex with zero imaginary
/// part.
Task make_task(TaskKind kind, const TaskParams& params, const std::vector<Tensor>& images,
               std::size_t train_count, Rng& rng);

/// Separable motion-like blur: a horizontal line kernel of odd size,
/// normalized to unit sum.
Tensor motion_kernel(Index size);

/// Random binary mask dropping the given fraction of pixels.
Tensor random_drop_mask(const Shape& shape, double drop_fraction, Rng& rng);

/// fastMRI-style column undersampling mask: fully sampled low frequencies
/// (center_fraction of columns around DC) plus random columns so that close
/// to 1/acceleration of all columns are kept.
Tensor mri_column_mask(Index h, Index w, int acceleration, double center_fraction, Rng& rng);

}  // namespace metainv
