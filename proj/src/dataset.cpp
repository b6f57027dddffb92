#include "metainv/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace metainv {

namespace {

void skip_pgm_whitespace(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

}  // namespace

Tensor load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_pgm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw std::runtime_error("load_pgm: " + path + " is not binary PGM (P5)");
  skip_pgm_whitespace(in);
  long w = 0, h = 0, maxval = 0;
  in >> w;
  skip_pgm_whitespace(in);
  in >> h;
  skip_pgm_whitespace(in);
  in >> maxval;
  if (!in || w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
    throw std::runtime_error("load_pgm: bad header in " + path);
  in.get();  // single whitespace after maxval
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w * h));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw std::runtime_error("load_pgm: truncated data in " + path);
  Tensor img({h, w});
  for (Index i = 0; i < img.size(); ++i)
    img[i] = static_cast<double>(bytes[static_cast<std::size_t>(i)]) /
             static_cast<double>(maxval);
  return img;
}

void save_pgm(const std::string& path, const Tensor& image) {
  if (image.rank() != 2) throw std::invalid_argument("save_pgm: image must be rank 2");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_pgm: cannot open " + path);
  out << "P5\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
  for (Index i = 0; i < image.size(); ++i) {
    double v = std::clamp(image[i], 0.0, 1.0);
    out.put(static_cast<char>(std::lround(v * 255.0)));
  }
}

Tensor synthetic_image(Index size, Rng& rng) {
  Tensor img({size, size});
  double s = static_cast<double>(size);
  int bumps = 3 + static_cast<int>(rng.next_u64() % 4);
  for (int b = 0; b < bumps; ++b) {
    double cx = rng.uniform(0.0, s), cy = rng.uniform(0.0, s);
    double width = rng.uniform(0.15 * s, 0.5 * s);
    double amp = rng.uniform(-1.0, 1.0);
    for (Index i = 0; i < size; ++i)
      for (Index j = 0; j < size; ++j) {
        double dx = (static_cast<double>(i) - cy) / width;
        double dy = (static_cast<double>(j) - cx) / width;
        img.at2(i, j) += amp * std::exp(-0.5 * (dx * dx + dy * dy));
      }
  }
  int shapes = 1 + static_cast<int>(rng.next_u64() % 3);
  for (int k = 0; k < shapes; ++k) {
    bool ellipse = rng.uniform() < 0.5;
    double cx = rng.uniform(0.15 * s, 0.85 * s), cy = rng.uniform(0.15 * s, 0.85 * s);
    double rx = rng.uniform(0.08 * s, 0.3 * s), ry = rng.uniform(0.08 * s, 0.3 * s);
    double offset = rng.uniform(-0.8, 0.8);
    for (Index i = 0; i < size; ++i)
      for (Index j = 0; j < size; ++j) {
        double dx = (static_cast<double>(i) - cy) / ry;
        double dy = (static_cast<double>(j) - cx) / rx;
        bool in = ellipse ? (dx * dx + dy * dy <= 1.0)
                          : (std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0);
        if (in) img.at2(i, j) += offset;
      }
  }
  double lo = img.flat().minCoeff(), hi = img.flat().maxCoeff();
  if (hi - lo < 1e-12) return Tensor::constant({size, size}, 0.5);
  img.flat() = (img.flat() - lo) / (hi - lo);
  return img;
}

std::vector<Tensor> load_dataset(const std::string& path, Index patch_size, int count,
                                 Rng& rng) {
  std::vector<Tensor> patches;
  patches.reserve(static_cast<std::size_t>(count));
  if (path.empty()) {
    for (int i = 0; i < count; ++i) patches.push_back(synthetic_image(patch_size, rng));
    return patches;
  }
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(path))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("load_dataset: no .pgm files under " + path);
  std::vector<Tensor> images;
  for (const std::string& f : files) images.push_back(load_pgm(f));
  for (int i = 0; i < count; ++i) {
    const Tensor& img = images[static_cast<std::size_t>(i) % images.size()];
    if (img.dim(0) < patch_size || img.dim(1) < patch_size)
      throw std::runtime_error("load_dataset: image smaller than patch size in " + path);
    Index max_r = img.dim(0) - patch_size;
    Index max_c = img.dim(1) - patch_size;
    Index r = max_r > 0 ? static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(max_r + 1)) : 0;
    Index c = max_c > 0 ? static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(max_c + 1)) : 0;
    Tensor patch({patch_size, patch_size});
    for (Index a = 0; a < patch_size; ++a)
      for (Index b = 0; b < patch_size; ++b) patch.at2(a, b) = img.at2(r + a, c + b);
    patches.push_back(std::move(patch));
  }
  return patches;
}

}  // namespace metainv
