#include "metainv/checkpoint.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "metainv/npy.hpp"

namespace metainv {

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["model"] = ckpt.model_family;
  manifest["layout_version"] = ckpt.layout_version;
  manifest["param_count"] = ckpt.params.size();
  if (ckpt.model_family == "pdnet") {
    manifest["depth"] = ckpt.depth;
    manifest["channels"] = ckpt.channels;
    manifest["ksize"] = ckpt.ksize;
    manifest["tau"] = ckpt.tau;
    manifest["gamma"] = ckpt.gamma;
    manifest["image_shape"] = ckpt.image_shape;
  } else {
    manifest["rows"] = ckpt.rows;
    manifest["cols"] = ckpt.cols;
  }
  std::ofstream mf(dir + "/manifest.json");
  if (!mf) throw std::runtime_error("save_checkpoint: cannot write manifest in " + dir);
  mf << manifest.dump(2) << "\n";
  save_npy(dir + "/theta_star.npy", Tensor({ckpt.params.size()}, ckpt.params.array()));
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw std::runtime_error("load_checkpoint: cannot open manifest in " + dir);
  nlohmann::json manifest;
  mf >> manifest;
  Checkpoint ckpt;
  ckpt.model_family = manifest.at("model").get<std::string>();
  ckpt.layout_version = manifest.value("layout_version", 1);
  if (ckpt.layout_version != 1)
    throw std::runtime_error("load_checkpoint: unsupported layout version in " + dir);
  if (ckpt.model_family == "pdnet") {
    ckpt.depth = manifest.at("depth").get<Index>();
    ckpt.channels = manifest.at("channels").get<Index>();
    ckpt.ksize = manifest.at("ksize").get<Index>();
    ckpt.tau = manifest.at("tau").get<double>();
    ckpt.gamma = manifest.at("gamma").get<double>();
    ckpt.image_shape = manifest.at("image_shape").get<Shape>();
  } else if (ckpt.model_family == "linear") {
    ckpt.rows = manifest.at("rows").get<Index>();
    ckpt.cols = manifest.at("cols").get<Index>();
  } else {
    throw std::runtime_error("load_checkpoint: unknown model family in " + dir);
  }
  Tensor params = load_npy(dir + "/theta_star.npy");
  ckpt.params = params.vec();
  Index expected = manifest.at("param_count").get<Index>();
  if (ckpt.params.size() != expected)
    throw std::runtime_error("load_checkpoint: parameter count mismatch in " + dir);
  return ckpt;
}

}  // namespace metainv
