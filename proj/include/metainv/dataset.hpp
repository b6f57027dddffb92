#pragma once

#include <string>
#include <vector>

#include "metainv/rng.hpp"
#include "metainv/tensor.hpp"

namespace metainv {

/// 8-bit binary PGM (P5), values scaled to [0, 1].
Tensor load_pgm(const std::string& path);
void save_pgm(const std::string& path, const Tensor& image);

/// Piecewise-smooth synthetic image: a few smooth bumps plus constant-offset
/// rectangles and ellipses, min-max normalized to [0, 1].
Tensor synthetic_image(Index size, Rng& rng);

/// Grayscale patches in [0, 1]. With an empty path the synthetic generator
/// supplies the images; otherwise *.pgm files under the directory are read in
/// sorted order and patches are cut at seeded random offsets.
std::vector<Tensor> load_dataset(const std::string& path, Index patch_size, int count,
                                 Rng& rng);

}  // namespace metainv
