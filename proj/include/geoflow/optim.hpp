#pragma once

// AdamW with linear warmup + cosine decay, plus an exponential moving average
// of the weights that inference reads from.

#include <cmath>
#include <cstdint>

#include "geoflow/error.hpp"
#include "geoflow/net.hpp"

namespace geoflow {

struct OptimConfig {
  double lr = 8e-4;  // peak learning rate
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;  // decoupled; weight matrices only
  long warmup_steps = 500;
  long total_steps = 20000;  // cosine decays to zero here
  double ema_decay = 0.999;
};

struct TrainState {
  ModelParams params;
  ModelParams ema;   // tracks params, used at inference
  ModelParams m, v;  // AdamW moments
  long step = 0;
};

inline TrainState make_train_state(const NetConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  TrainState st;
  st.params = init_params(cfg, rng);
  st.ema = st.params;
  st.m = make_params(cfg);
  st.v = make_params(cfg);
  return st;
}

// Piecewise schedule on 1-based step index: linear ramp over the warmup, then
// cosine from the peak down to zero at total_steps.
inline double lr_at(const OptimConfig& c, long step) {
  if (c.warmup_steps > 0 && step <= c.warmup_steps) {
    return c.lr * static_cast<double>(step) / static_cast<double>(c.warmup_steps);
  }
  if (c.total_steps <= c.warmup_steps) return c.lr;
  double progress = static_cast<double>(step - c.warmup_steps) /
                    static_cast<double>(c.total_steps - c.warmup_steps);
  if (progress > 1.0) progress = 1.0;
  return c.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

inline void optimizer_step(TrainState& st, const ModelParams& grads,
                           const OptimConfig& c) {
  ++st.step;
  const double lr = lr_at(c, st.step);
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.step));

  auto* gp = const_cast<ModelParams*>(&grads);
  // Walk all four tensor sets in lockstep; layouts are identical by
  // construction.
  struct Cursor {
    std::vector<Tensor*> ts;
  };
  Cursor pc, mc, vc, ec, gc;
  st.params.for_each_tensor([&](const char*, Tensor& t) { pc.ts.push_back(&t); });
  st.m.for_each_tensor([&](const char*, Tensor& t) { mc.ts.push_back(&t); });
  st.v.for_each_tensor([&](const char*, Tensor& t) { vc.ts.push_back(&t); });
  st.ema.for_each_tensor([&](const char*, Tensor& t) { ec.ts.push_back(&t); });
  gp->for_each_tensor([&](const char*, Tensor& t) { gc.ts.push_back(&t); });

  for (std::size_t ti = 0; ti < pc.ts.size(); ++ti) {
    Tensor& p = *pc.ts[ti];
    Tensor& m = *mc.ts[ti];
    Tensor& v = *vc.ts[ti];
    Tensor& e = *ec.ts[ti];
    const Tensor& g = *gc.ts[ti];
    const bool decay = p.cols > 1;  // matrices only, not biases/embeddings
    for (std::size_t i = 0; i < p.a.size(); ++i) {
      m.a[i] = c.beta1 * m.a[i] + (1.0 - c.beta1) * g.a[i];
      v.a[i] = c.beta2 * v.a[i] + (1.0 - c.beta2) * g.a[i] * g.a[i];
      const double mh = m.a[i] / bc1;
      const double vh = v.a[i] / bc2;
      double upd = mh / (std::sqrt(vh) + c.eps);
      if (decay) upd += c.weight_decay * p.a[i];
      p.a[i] -= lr * upd;
      e.a[i] += (1.0 - c.ema_decay) * (p.a[i] - e.a[i]);
    }
  }
}

}  // namespace geoflow
