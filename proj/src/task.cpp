#include "metainv/task.hpp"

#include <algorithm>

#include "metainv/errors.hpp"
#include "metainv/tv.hpp"

namespace metainv {

std::string task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::T1: return "T1";
    case TaskKind::T2: return "T2";
    case TaskKind::T3: return "T3";
    case TaskKind::T4: return "T4";
    case TaskKind::SR: return "SR";
    case TaskKind::MRI: return "MRI";
  }
  return "?";
}

TaskKind task_kind_from_name(const std::string& name) {
  if (name == "T1") return TaskKind::T1;
  if (name == "T2") return TaskKind::T2;
  if (name == "T3") return TaskKind::T3;
  if (name == "T4") return TaskKind::T4;
  if (name == "SR") return TaskKind::SR;
  if (name == "MRI") return TaskKind::MRI;
  throw std::invalid_argument("unknown task kind: " + name);
}

namespace {

Tensor embed_complex(const Tensor& img) {
  Tensor z({2, img.dim(0), img.dim(1)});
  for (Index i = 0; i < img.dim(0); ++i)
    for (Index j = 0; j < img.dim(1); ++j) z.at3(0, i, j) = img.at2(i, j);
  return z;
}

}  // namespace

Task make_task(TaskKind kind, const TaskParams& params, const std::vector<Tensor>& images,
               std::size_t train_count, Rng& rng) {
  if (images.empty()) throw std::invalid_argument("make_task: no images given");
  if (train_count > images.size())
    throw std::invalid_argument("make_task: train_count exceeds image count");
  const Shape& ishape = images.front().shape();

  Task task;
  task.name = task_kind_name(kind);
  switch (kind) {
    case TaskKind::T1:
      task.op = make_identity(ishape);
      task.noise_sigma = params.sigma;
      break;
    case TaskKind::T2:
      task.op = make_identity(ishape);
      task.target = TargetTransform::tv_prox;
      break;
    case TaskKind::T3:
      if (params.kernel.size() == 0) throw std::invalid_argument("make_task: T3 needs a kernel");
      task.op = make_conv(ishape, params.kernel);
      break;
    case TaskKind::T4:
      if (params.mask.size() == 0) throw std::invalid_argument("make_task: T4 needs a mask");
      task.op = make_mask(params.mask);
      break;
    case TaskKind::SR:
      task.op = make_decimation(ishape, params.factor);
      break;
    case TaskKind::MRI:
      if (params.freq_mask.size() == 0)
        throw std::invalid_argument("make_task: MRI needs a frequency mask");
      task.op = make_fourier_mask(params.freq_mask);
      break;
  }

  for (std::size_t idx = 0; idx < images.size(); ++idx) {
    const Tensor& img = images[idx];
    if (img.shape() != ishape)
      throw std::invalid_argument("make_task: images must share one shape");
    Pair pair;
    if (kind == TaskKind::MRI) {
      pair.x = embed_complex(img);
      pair.y = task.op.apply(pair.x);
    } else if (kind == TaskKind::T2) {
      pair.y = img;
      pair.x = tv_prox(img, params.strength, params.tv_tol, params.tv_max_iter);
    } else {
      pair.x = img;
      pair.y = task.op.apply(img);
      if (kind == TaskKind::T1 && params.sigma > 0.0) {
        Tensor noise = rng.normal_tensor(pair.y.shape());
        pair.y.flat() += params.sigma * noise.flat();
      }
    }
    pair.x.check_finite("make_task target");
    pair.y.check_finite("make_task measurement");
    if (idx < train_count)
      task.train.push_back(std::move(pair));
    else
      task.test.push_back(std::move(pair));
  }
  return task;
}

Tensor motion_kernel(Index size) {
  if (size % 2 == 0) throw std::invalid_argument("motion_kernel: size must be odd");
  Tensor k({1, size});
  k.flat().setConstant(1.0 / static_cast<double>(size));
  return k;
}

Tensor random_drop_mask(const Shape& shape, double drop_fraction, Rng& rng) {
  Tensor mask = Tensor::constant(shape, 1.0);
  for (Index i = 0; i < mask.size(); ++i)
    if (rng.uniform() < drop_fraction) mask[i] = 0.0;
  return mask;
}

Tensor mri_column_mask(Index h, Index w, int acceleration, double center_fraction, Rng& rng) {
  if (acceleration < 1) throw std::invalid_argument("mri_column_mask: acceleration must be >= 1");
  std::vector<char> keep(static_cast<std::size_t>(w), 0);
  Index center = std::max<Index>(1, static_cast<Index>(center_fraction * static_cast<double>(w)));
  // DC sits at column 0 for an unshifted DFT; the low-frequency band wraps.
  for (Index c = 0; c < center; ++c) {
    Index col = (c % 2 == 0) ? c / 2 : w - (c + 1) / 2;
    keep[static_cast<std::size_t>(col)] = 1;
  }
  Index want = std::max<Index>(center, w / acceleration);
  Index have = center;
  // Seeded rejection sampling over the remaining columns.
  while (have < want) {
    Index col = static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(w));
    if (!keep[static_cast<std::size_t>(col)]) {
      keep[static_cast<std::size_t>(col)] = 1;
      ++have;
    }
  }
  Tensor mask({h, w});
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j) mask.at2(i, j) = keep[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
  return mask;
}

}  // namespace metainv
