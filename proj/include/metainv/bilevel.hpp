#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "metainv/errors.hpp"
#include "metainv/metrics.hpp"
#include "metainv/model.hpp"
#include "metainv/rng.hpp"
#include "metainv/task.hpp"

namespace metainv {

enum class InnerOptimizer { gd, adam };

inline InnerOptimizer inner_optimizer_from_name(const std::string& s) {
  if (s == "gd") return InnerOptimizer::gd;
  if (s == "adam") return InnerOptimizer::adam;
  throw std::invalid_argument("unknown inner optimizer: " + s);
}

/// Configuration of the task-adaptation (inner) problem: loss mode, number
/// of optimizer steps, and the proximal weight pulling parameters toward the
/// meta state.
struct InnerConfig {
  LossMode mode = LossMode::unsup;
  int steps = 1;
  InnerOptimizer optimizer = InnerOptimizer::adam;
  double step_size = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double reg_lambda = 1.0;

  void validate() const {
    if (steps < 0) throw std::invalid_argument("InnerConfig: steps must be >= 0");
    if (!(step_size > 0)) throw std::invalid_argument("InnerConfig: step_size must be > 0");
    if (reg_lambda < 0) throw std::invalid_argument("InnerConfig: reg_lambda must be >= 0");
  }
};

struct AdamState {
  Eigen::VectorXd m, v;
  long t = 0;

  static AdamState zeros(Index n) {
    AdamState s;
    s.m = Eigen::VectorXd::Zero(n);
    s.v = Eigen::VectorXd::Zero(n);
    return s;
  }
};

/// Standard bias-corrected Adam update (epsilon outside the square root).
/// Entries with zero gradient and zero moment history stay unchanged.
inline void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state,
                      double step_size, double beta1 = 0.9, double beta2 = 0.999,
                      double epsilon = 1e-8) {
  state.t += 1;
  state.m = beta1 * state.m + (1.0 - beta1) * grad;
  state.v = beta2 * state.v + (1.0 - beta2) * grad.cwiseProduct(grad);
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (Index i = 0; i < params.size(); ++i) {
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    params[i] -= step_size * mhat / (std::sqrt(vhat) + epsilon);
  }
}

template <class Family>
double sup_loss(const Family& family, const Eigen::VectorXd& params,
                const typename Family::TaskCtx& ctx, Split split) {
  return family.loss(params, ctx, split, LossMode::sup);
}

template <class Family>
double unsup_loss(const Family& family, const Eigen::VectorXd& params,
                  const typename Family::TaskCtx& ctx, Split split) {
  return family.loss(params, ctx, split, LossMode::unsup);
}

/// Inner objective: split data loss plus the proximal pull toward the meta
/// parameters.
template <class Family>
double inner_objective(const Family& family, const Eigen::VectorXd& phi,
                       const Eigen::VectorXd& theta_star,
                       const typename Family::TaskCtx& ctx, const InnerConfig& cfg) {
  double data = family.loss(phi, ctx, Split::train, cfg.mode);
  return data + 0.5 * cfg.reg_lambda * (phi - theta_star).squaredNorm();
}

template <class Family>
Eigen::VectorXd inner_objective_grad(const Family& family, const Eigen::VectorXd& phi,
                                     const Eigen::VectorXd& theta_star,
                                     const typename Family::TaskCtx& ctx,
                                     const InnerConfig& cfg) {
  Eigen::VectorXd g = family.grad(phi, ctx, Split::train, cfg.mode);
  if (cfg.reg_lambda != 0.0) g += cfg.reg_lambda * (phi - theta_star);
  return g;
}

/// Per-step record of the inner optimization, sufficient to replay the
/// recursion in reverse for the hypergradient.
struct InnerTrace {
  std::vector<Eigen::VectorXd> thetas;  // theta_0..theta_T
  std::vector<Eigen::VectorXd> grads;   // inner gradient used at each step
  std::vector<Eigen::VectorXd> ms, vs;  // Adam first/second moments after each step
  std::vector<double> losses;           // inner objective before each step
};

/// Runs cfg.steps optimizer steps on the inner objective starting from the
/// meta parameters; returns the final iterate and the whole trace.
template <class Family>
Eigen::VectorXd inner_solve(const Family& family, const Eigen::VectorXd& theta_star,
                            const typename Family::TaskCtx& ctx, const InnerConfig& cfg,
                            InnerTrace* trace = nullptr) {
  cfg.validate();
  Eigen::VectorXd theta = theta_star;
  if (trace) {
    trace->thetas.clear();
    trace->grads.clear();
    trace->ms.clear();
    trace->vs.clear();
    trace->losses.clear();
    trace->thetas.push_back(theta);
  }
  AdamState state = AdamState::zeros(theta.size());
  for (int t = 0; t < cfg.steps; ++t) {
    Eigen::VectorXd g = inner_objective_grad(family, theta, theta_star, ctx, cfg);
    if (!g.allFinite())
      throw NumericalError("inner_solve: non-finite gradient at step " + std::to_string(t));
    if (cfg.optimizer == InnerOptimizer::gd) {
      theta -= cfg.step_size * g;
    } else {
      adam_step(theta, g, state, cfg.step_size, cfg.beta1, cfg.beta2, cfg.epsilon);
    }
    if (!theta.allFinite())
      throw NumericalError("inner_solve: non-finite iterate at step " + std::to_string(t));
    if (trace) {
      trace->thetas.push_back(theta);
      trace->grads.push_back(std::move(g));
      if (cfg.optimizer == InnerOptimizer::adam) {
        trace->ms.push_back(state.m);
        trace->vs.push_back(state.v);
      }
    }
  }
  return theta;
}

/// Reverse-mode derivative of outer_cot -> d(outer)/d(theta_star) through the
/// unrolled inner recursion of one task. `outer_cot` is the outer-loss
/// gradient at the final inner iterate. GD steps are differentiated exactly;
/// Adam steps differentiate the full moment recursion.
template <class Family>
Eigen::VectorXd backprop_inner_trace(const Family& family, const Eigen::VectorXd& theta_star,
                                     const typename Family::TaskCtx& ctx,
                                     const InnerConfig& cfg, const InnerTrace& trace,
                                     const Eigen::VectorXd& outer_cot) {
  Index n = theta_star.size();
  int steps = static_cast<int>(trace.grads.size());
  Eigen::VectorXd zeta = outer_cot;  // cotangent on theta_t
  Eigen::VectorXd hg = Eigen::VectorXd::Zero(n);
  if (cfg.optimizer == InnerOptimizer::gd) {
    for (int t = steps - 1; t >= 0; --t) {
      const Eigen::VectorXd& theta_t = trace.thetas[static_cast<std::size_t>(t)];
      Eigen::VectorXd hv = family.hvp(theta_t, ctx, Split::train, cfg.mode, zeta);
      hg += cfg.step_size * cfg.reg_lambda * zeta;
      zeta -= cfg.step_size * (hv + cfg.reg_lambda * zeta);
    }
    return zeta + hg;
  }

  Eigen::VectorXd mbar = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd vbar = Eigen::VectorXd::Zero(n);
  for (int t = steps - 1; t >= 0; --t) {
    const Eigen::VectorXd& theta_prev = trace.thetas[static_cast<std::size_t>(t)];
    const Eigen::VectorXd& g = trace.grads[static_cast<std::size_t>(t)];
    const Eigen::VectorXd& m = trace.ms[static_cast<std::size_t>(t)];
    const Eigen::VectorXd& v = trace.vs[static_cast<std::size_t>(t)];
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t + 1));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t + 1));

    // theta_{t+1} = theta_t - a * (m/bc1) / (sqrt(v/bc2) + eps)
    Eigen::VectorXd mbar_t = mbar;
    Eigen::VectorXd vbar_t = vbar;
    for (Index i = 0; i < n; ++i) {
      double vhat = v[i] / bc2;
      double root = std::sqrt(vhat);
      double denom = root + cfg.epsilon;
      mbar_t[i] += zeta[i] * (-cfg.step_size / (bc1 * denom));
      if (v[i] > 0.0) {
        double mhat = m[i] / bc1;
        vbar_t[i] += zeta[i] * (cfg.step_size * mhat / (2.0 * root * denom * denom * bc2));
      }
      // v == 0 means the coordinate never received gradient; the update is
      // identically zero there and so is its derivative.
    }

    // m_t = b1 m_{t-1} + (1-b1) g ; v_t = b2 v_{t-1} + (1-b2) g^2
    Eigen::VectorXd gbar =
        (1.0 - cfg.beta1) * mbar_t + 2.0 * (1.0 - cfg.beta2) * g.cwiseProduct(vbar_t);
    mbar = cfg.beta1 * mbar_t;
    vbar = cfg.beta2 * vbar_t;

    // g = grad L(theta_t) + reg * (theta_t - theta_star)
    Eigen::VectorXd hv = family.hvp(theta_prev, ctx, Split::train, cfg.mode, gbar);
    zeta += hv + cfg.reg_lambda * gbar;
    hg -= cfg.reg_lambda * gbar;
  }
  return zeta + hg;
}

/// Hypergradient of the summed outer losses with respect to the meta
/// parameters; also reports per-task outer losses when requested.
template <class Family>
Eigen::VectorXd hypergradient(const Family& family, const Eigen::VectorXd& theta_star,
                              const std::vector<typename Family::TaskCtx>& ctxs,
                              const InnerConfig& cfg,
                              std::vector<double>* outer_losses = nullptr) {
  if (cfg.steps > 50)
    throw std::invalid_argument("hypergradient: inner trace limited to 50 steps");
  Eigen::VectorXd total = Eigen::VectorXd::Zero(theta_star.size());
  if (outer_losses) outer_losses->assign(ctxs.size(), 0.0);
  for (std::size_t i = 0; i < ctxs.size(); ++i) {
    InnerTrace trace;
    Eigen::VectorXd theta_i = inner_solve(family, theta_star, ctxs[i], cfg, &trace);
    Eigen::VectorXd outer_cot = family.grad(theta_i, ctxs[i], Split::test, LossMode::sup);
    total += backprop_inner_trace(family, theta_star, ctxs[i], cfg, trace, outer_cot);
    if (outer_losses)
      (*outer_losses)[i] = family.loss(theta_i, ctxs[i], Split::test, LossMode::sup);
  }
  return total;
}

struct OuterConfig {
  double step_size = 1e-3;
  int epochs = 100;
  int batch_size = 0;  // 0: all tasks per outer step
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct EpochRecord {
  double outer_loss = 0.0;
  std::vector<double> inner_losses;  // final inner objective per task
  std::vector<double> test_psnr;     // adapted-model test PSNR per task
  std::vector<double> meta_losses;   // end-of-epoch meta-model sup test loss per task
  std::vector<double> meta_psnr;     // end-of-epoch meta-model test PSNR per task
};

struct MetaState {
  Eigen::VectorXd theta_star;
  AdamState outer_state;
  std::vector<EpochRecord> history;
};

template <class Family>
double task_test_psnr(const Family& family, const Eigen::VectorXd& params, const Task& task,
                      double peak = 1.0) {
  if (task.test.empty()) return kPsnrCap;
  double acc = 0.0;
  for (const Pair& pair : task.test) {
    Tensor rec = family.reconstruct(params, pair.y, task.op);
    acc += psnr(rec, pair.x, peak);
  }
  return acc / static_cast<double>(task.test.size());
}

/// Meta-training: every epoch visits the tasks (full sum, or seeded random
/// minibatches of tasks when batch_size is set), takes one outer Adam step
/// per batch on the summed hypergradient, and records per-epoch metrics.
template <class Family>
MetaState maml_train(const Family& family, const std::vector<Task>& tasks,
                     const InnerConfig& inner_cfg, const OuterConfig& outer_cfg, Rng& rng,
                     MetaState* warm_start = nullptr) {
  if (tasks.empty()) throw std::invalid_argument("maml_train: at least one task required");
  std::vector<typename Family::TaskCtx> ctxs;
  ctxs.reserve(tasks.size());
  for (const Task& task : tasks) ctxs.push_back(family.prepare(task));

  MetaState state;
  if (warm_start) {
    state = *warm_start;
  } else {
    Rng init_rng = rng.derive(0xA11CE);
    state.theta_star = family.init_params(init_rng);
    state.outer_state = AdamState::zeros(state.theta_star.size());
  }

  std::size_t ntasks = tasks.size();
  std::size_t batch = outer_cfg.batch_size > 0
                          ? std::min<std::size_t>(static_cast<std::size_t>(outer_cfg.batch_size),
                                                  ntasks)
                          : ntasks;

  for (int epoch = 0; epoch < outer_cfg.epochs; ++epoch) {
    // Seed-derived task order; batches partition the epoch. The global epoch
    // index keeps warm-started chunks on the same shuffle sequence.
    std::uint64_t global_epoch = state.history.size();
    std::vector<std::size_t> order(ntasks);
    for (std::size_t i = 0; i < ntasks; ++i) order[i] = i;
    Rng shuffle_rng = rng.derive(0x5EED00 + global_epoch);
    for (std::size_t i = ntasks; i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(shuffle_rng.next_u64() % i);
      std::swap(order[i - 1], order[j]);
    }

    EpochRecord record;
    record.inner_losses.assign(ntasks, 0.0);
    record.test_psnr.assign(ntasks, 0.0);
    record.meta_losses.assign(ntasks, 0.0);
    record.meta_psnr.assign(ntasks, 0.0);

    for (std::size_t start = 0; start < ntasks; start += batch) {
      std::size_t stop = std::min(start + batch, ntasks);
      // Contributions are summed in ascending task index for determinism.
      std::vector<std::size_t> members(order.begin() + static_cast<std::ptrdiff_t>(start),
                                       order.begin() + static_cast<std::ptrdiff_t>(stop));
      std::sort(members.begin(), members.end());
      Eigen::VectorXd hg = Eigen::VectorXd::Zero(state.theta_star.size());
      for (std::size_t i : members) {
        InnerTrace trace;
        Eigen::VectorXd theta_i = inner_solve(family, state.theta_star, ctxs[i], inner_cfg,
                                              &trace);
        Eigen::VectorXd outer_cot =
            family.grad(theta_i, ctxs[i], Split::test, LossMode::sup);
        hg += backprop_inner_trace(family, state.theta_star, ctxs[i], inner_cfg, trace,
                                   outer_cot);
        record.outer_loss += family.loss(theta_i, ctxs[i], Split::test, LossMode::sup);
        record.inner_losses[i] =
            inner_objective(family, theta_i, state.theta_star, ctxs[i], inner_cfg);
        record.test_psnr[i] = task_test_psnr(family, theta_i, tasks[i]);
      }
      adam_step(state.theta_star, hg, state.outer_state, outer_cfg.step_size, outer_cfg.beta1,
                outer_cfg.beta2, outer_cfg.epsilon);
    }
    for (std::size_t i = 0; i < ntasks; ++i) {
      record.meta_losses[i] = family.loss(state.theta_star, ctxs[i], Split::test, LossMode::sup);
      record.meta_psnr[i] = task_test_psnr(family, state.theta_star, tasks[i]);
    }
    if (!(record.outer_loss < 1e12) || !state.theta_star.allFinite())
      throw NumericalError("maml_train: diverged at epoch " + std::to_string(epoch) +
                           " (outer loss " + std::to_string(record.outer_loss) + ")");
    state.history.push_back(std::move(record));
  }
  return state;
}

struct FineTuneStep {
  int step = 0;
  double inner_loss = 0.0;  // data loss of the configured mode on the tune split
  double test_psnr = 0.0;
};

struct FineTuneResult {
  Eigen::VectorXd params;
  std::vector<FineTuneStep> steps;  // entry 0 is the meta state
};

/// Task adaptation from the meta parameters; the trace records the data loss
/// and test PSNR before any step and after each step.
template <class Family>
FineTuneResult fine_tune(const Family& family, const Eigen::VectorXd& theta_star,
                         const Task& task, const InnerConfig& cfg) {
  cfg.validate();
  typename Family::TaskCtx ctx = family.prepare(task);
  FineTuneResult result;
  result.params = theta_star;
  AdamState state = AdamState::zeros(theta_star.size());
  auto record = [&](int step) {
    FineTuneStep s;
    s.step = step;
    s.inner_loss = family.loss(result.params, ctx, Split::train, cfg.mode);
    s.test_psnr = task_test_psnr(family, result.params, task);
    result.steps.push_back(s);
  };
  record(0);
  for (int t = 0; t < cfg.steps; ++t) {
    Eigen::VectorXd g = inner_objective_grad(family, result.params, theta_star, ctx, cfg);
    if (!g.allFinite())
      throw NumericalError("fine_tune: non-finite gradient at step " + std::to_string(t));
    if (cfg.optimizer == InnerOptimizer::gd) {
      result.params -= cfg.step_size * g;
    } else {
      adam_step(result.params, g, state, cfg.step_size, cfg.beta1, cfg.beta2, cfg.epsilon);
    }
    if (!result.params.allFinite())
      throw NumericalError("fine_tune: non-finite iterate at step " + std::to_string(t));
    record(t + 1);
  }
  return result;
}

}  // namespace metainv
