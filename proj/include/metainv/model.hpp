#pragma once

#include <stdexcept>
#include <string>

namespace metainv {

/// Task-adaptation loss: supervised 0.5*||f(y) - x||^2 or measurement
/// consistency 0.5*||A f(y) - y||^2 summed over a dataset split.
enum class LossMode { sup, unsup };

enum class Split { train, test };

inline std::string loss_mode_name(LossMode m) { return m == LossMode::sup ? "sup" : "unsup"; }

inline LossMode loss_mode_from_name(const std::string& s) {
  if (s == "sup") return LossMode::sup;
  if (s == "unsup") return LossMode::unsup;
  throw std::invalid_argument("unknown loss mode: " + s);
}

}  // namespace metainv
