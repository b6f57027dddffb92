#pragma once

#include <string>

#include "metainv/tensor.hpp"

namespace metainv {

/// Persisted model state: a directory holding theta_star.npy plus a JSON
/// manifest describing the architecture and parameter layout.
struct Checkpoint {
  std::string model_family;  // linear | pdnet
  int layout_version = 1;
  // pdnet
  Index depth = 0;
  Index channels = 0;
  Index ksize = 3;
  double tau = 0.0;
  double gamma = 0.0;
  Shape image_shape;
  // linear
  Index rows = 0;
  Index cols = 0;

  Eigen::VectorXd params;
};

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace metainv
