#pragma once

#include <string>

#include "metainv/tensor.hpp"

namespace metainv {

/// Writes a tensor as a NumPy .npy file (version 1.0, little-endian float64,
/// C order) so artifacts stay inspectable with standard tools.
void save_npy(const std::string& path, const Tensor& t);

/// Reads a .npy file written with float64 C-order layout.
Tensor load_npy(const std::string& path);

}  // namespace metainv
