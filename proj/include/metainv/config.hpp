#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "metainv/bilevel.hpp"
#include "metainv/errors.hpp"

namespace metainv {

/// Minimal TOML reader covering the configuration surface: [section] tables,
/// string / integer / float / boolean scalars, flat arrays, # comments.
struct TomlValue {
  std::string raw;
  bool is_string = false;
  std::vector<std::string> array;  // set for array values
  bool is_array = false;
};

using TomlTable = std::map<std::string, std::map<std::string, TomlValue>>;

TomlTable parse_toml(const std::string& text);
TomlTable parse_toml_file(const std::string& path);

/// Fully describes one experiment. Unknown configuration keys are rejected;
/// a seed must always be given.
struct ExperimentConfig {
  // [experiment]
  std::string kind;  // toy | train | finetune | eval | bayes-check
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  // [model]
  std::string model_family = "pdnet";  // linear | pdnet
  int depth = 10;                      // network depth for pdnet
  int channels = 40;

  // [inner]
  InnerConfig inner;

  // [outer]
  OuterConfig outer;
  int checkpoint_every = 0;  // 0: final checkpoint only

  // [data]
  std::string data_path;  // empty: synthetic piecewise-smooth images
  Index patch_size = 32;
  int train_count = 8;
  int test_count = 8;

  // [tasks]
  std::vector<std::string> task_kinds{"T1", "T2", "T3", "T4"};
  double t1_sigma = 0.1;
  double t2_strength = 0.1;
  Index t3_kernel_size = 5;
  std::string t3_kernel_path;  // optional NPY kernel
  double t4_drop_fraction = 0.3;
  std::string t4_mask_path;  // optional NPY mask
  Index sr_factor = 2;
  int mri_acceleration = 4;
  double mri_center_fraction = 0.08;
  std::string mri_mask_path;  // optional NPY frequency mask

  // [toy]
  Index toy_grid = 8;
  double toy_length_scale = 2.0;
  Index toy_mask_size = 3;
  int toy_train_samples = 64;
  int toy_test_samples = 32;

  // [finetune]
  std::string checkpoint_path;
  std::string finetune_task = "SR";

  // [bayes_check]
  int bayes_trials = 100;
  Index bayes_dim = 16;
  int bayes_diag_trials = 20;

  void validate() const;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_toml(const TomlTable& table);

/// Deterministic key=value rendering used for the manifest hash.
std::string canonical_config(const ExperimentConfig& cfg);

std::uint64_t fnv1a_hash(const std::string& text);

}  // namespace metainv
