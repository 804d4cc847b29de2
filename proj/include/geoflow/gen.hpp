#pragma once

// Training-pair construction for all three formulations plus a small
// sequential trainer with exact mid-epoch resume.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "geoflow/checkpoint.hpp"
#include "geoflow/error.hpp"
#include "geoflow/formulation.hpp"
#include "geoflow/heads.hpp"
#include "geoflow/net.hpp"
#include "geoflow/optim.hpp"
#include "geoflow/rng.hpp"
#include "geoflow/sched.hpp"
#include "geoflow/sphere.hpp"

namespace geoflow {

struct TrainPair {
  Vec3 x;       // noised input fed to the network
  Vec3 target;  // regression target for the field head
};

// Diffusion: x_t = sqrt(1-k) x0 + sqrt(k) eps, the net predicts eps.
inline TrainPair diffusion_pair(const Vec3& x0, const Vec3& eps, double kappa) {
  TrainPair p;
  const double a = std::sqrt(1.0 - kappa);
  const double b = std::sqrt(kappa);
  p.x = a * x0 + b * eps;
  p.target = eps;
  return p;
}

// Euclidean flow matching: x_t = (1-k) x0 + k eps, the net predicts the
// constant path velocity kdot * (eps - x0).
inline TrainPair fm_pair(const Vec3& x0, const Vec3& eps, double kappa,
                         double kappa_dot) {
  TrainPair p;
  p.x = (1.0 - kappa) * x0 + kappa * eps;
  p.target = kappa_dot * (eps - x0);
  return p;
}

// Spherical flow matching: x_t walks the geodesic from x0 toward a uniform
// noise point eps. The target is tangent at x_t, points along the geodesic
// toward eps, and has length kdot * d(x0, eps).
//
// Degenerate cases: if eps lands (numerically) on x0 the whole path collapses
// and the target is zero. If x_t reaches eps exactly (kappa == 1) the forward
// log map is 0/0, but the geodesic direction is still well defined as
// "away from x0", so we use -log_{x_t}(x0) normalized.
inline TrainPair rfm_pair(const UnitVec3& x0, const UnitVec3& eps,
                          double kappa, double kappa_dot) {
  TrainPair p;
  const double dist = geodesic_distance(x0, eps);
  if (dist < 1e-9) {
    p.x = x0.vec();
    p.target = Vec3{0.0, 0.0, 0.0};
    return p;
  }
  const TangentVec path = log_map(x0, eps);
  const UnitVec3 xt = exp_map({x0, kappa * path.v});
  p.x = xt.vec();

  const double speed = kappa_dot * dist;
  Vec3 dir = log_map(xt, eps).v;
  double n = norm(dir);
  if (n < 1e-9) {
    dir = -1.0 * log_map(xt, x0).v;
    n = norm(dir);
  }
  p.target = (speed / n) * dir;
  return p;
}

// Draws noise suitable for the formulation. For the spherical path the noise
// must not be antipodal to x0 (the geodesic would be ambiguous), so those
// draws are rejected and retried.
inline Vec3 draw_noise(Formulation form, const UnitVec3& x0, Rng& rng) {
  if (form == Formulation::kRfmS2) {
    for (;;) {
      UnitVec3 eps = sample_uniform_sphere(rng);
      if (geodesic_distance(x0, eps) < kPi - 1e-6) return eps.vec();
    }
  }
  return Vec3{rng.gaussian(), rng.gaussian(), rng.gaussian()};
}

// One labeled training example: a point on the sphere plus its conditioning
// vector (class embedding or similar).
struct TrainItem {
  UnitVec3 y;
  std::vector<double> cond;
};

struct TrainerConfig {
  Formulation form = Formulation::kRfmS2;
  Scheduler sched;
  OptimConfig optim;
  int batch_size = 256;
  double drop_prob = 0.1;  // probability of training a row unconditionally
};

// Fills one row of the batch. Draw order is fixed (time, then noise, then the
// dropout coin) so a restored RNG replays the identical sequence.
inline void fill_batch_row(Batch& batch, int row, const TrainItem& item,
                           const TrainerConfig& cfg, bool is_head, Rng& rng) {
  const double t = rng.uniform();
  if (is_head) {
    // Parametric heads regress the clean point directly; no noising.
    batch.x[3 * row + 0] = item.y.vec().x;
    batch.x[3 * row + 1] = item.y.vec().y;
    batch.x[3 * row + 2] = item.y.vec().z;
    batch.k[row] = 0.0;
    batch.target[3 * row + 0] = item.y.vec().x;
    batch.target[3 * row + 1] = item.y.vec().y;
    batch.target[3 * row + 2] = item.y.vec().z;
  } else {
    const double kap = kappa(cfg.sched, t);
    const double kdot = kappa_dot(cfg.sched, t);
    const Vec3 noise = draw_noise(cfg.form, item.y, rng);
    TrainPair p;
    switch (cfg.form) {
      case Formulation::kDiffusionR3:
        p = diffusion_pair(item.y.vec(), noise, kap);
        break;
      case Formulation::kFlowR3:
        p = fm_pair(item.y.vec(), noise, kap, kdot);
        break;
      case Formulation::kRfmS2:
        p = rfm_pair(item.y, UnitVec3::assume_normalized(noise), kap, kdot);
        break;
    }
    batch.x[3 * row + 0] = p.x.x;
    batch.x[3 * row + 1] = p.x.y;
    batch.x[3 * row + 2] = p.x.z;
    batch.k[row] = kap;
    batch.target[3 * row + 0] = p.target.x;
    batch.target[3 * row + 1] = p.target.y;
    batch.target[3 * row + 2] = p.target.z;
  }
  for (int j = 0; j < batch.cond_dim; ++j) {
    batch.cond[static_cast<size_t>(batch.cond_dim) * row + j] = item.cond[j];
  }
  batch.use_null[row] = rng.uniform() < cfg.drop_prob ? 1 : 0;
}

// Sequential minibatch trainer. Owns the parameters, optimizer state, RNG,
// and the current epoch permutation; everything needed to resume mid-epoch
// is captured by save() and restored by the resume constructor.
class Trainer {
 public:
  Trainer(const NetConfig& net_cfg, const TrainerConfig& cfg,
          std::vector<TrainItem> items, uint64_t seed)
      : cfg_(cfg), items_(std::move(items)), rng_(seed) {
    validate_items(net_cfg);
    state_ = TrainState{};
    state_.params = init_params(net_cfg, rng_);
    state_.ema = state_.params;
    state_.m = make_params(net_cfg);
    state_.v = make_params(net_cfg);
    state_.step = 0;
    grads_ = make_params(net_cfg);
  }

  Trainer(const TrainerConfig& cfg, std::vector<TrainItem> items,
          ResumeState resume)
      : cfg_(cfg),
        items_(std::move(items)),
        rng_(0),
        state_(std::move(resume.train)),
        perm_(std::move(resume.epoch_perm)),
        pos_(resume.epoch_pos) {
    validate_items(state_.params.cfg);
    rng_.restore_state(resume.rng_state);
    if (pos_ > perm_.size() || (!perm_.empty() && perm_.size() != items_.size())) {
      throw ParseError("training state does not match the dataset size");
    }
    grads_ = make_params(state_.params.cfg);
  }

  // One optimizer step on the next minibatch; returns the batch loss
  // (mean squared residual for fields, mean nats for parametric heads).
  double step() {
    const size_t n = items_.size();
    if (pos_ >= perm_.size()) {
      perm_.resize(n);
      for (size_t i = 0; i < n; ++i) perm_[i] = i;
      rng_.shuffle(perm_);
      pos_ = 0;
    }
    const int bs =
        static_cast<int>(std::min<size_t>(cfg_.batch_size, n - pos_));
    const NetConfig& nc = state_.params.cfg;
    batch_.resize(bs, nc.cond_dim);
    const bool is_head = nc.head != HeadKind::kField;
    for (int r = 0; r < bs; ++r) {
      fill_batch_row(batch_, r, items_[perm_[pos_ + r]], cfg_, is_head, rng_);
    }
    pos_ += bs;

    double loss;
    if (is_head) {
      loss = head_loss_and_grads(state_.params, ws_, batch_, grads_);
    } else {
      loss = field_loss_and_grads(state_.params, ws_, batch_, grads_);
    }
    optimizer_step(state_, grads_, cfg_.optim);
    return loss;
  }

  // Runs exactly one full pass over the data (from an epoch boundary) and
  // returns the sample-weighted mean loss.
  double epoch() {
    pos_ = perm_.size();  // force a reshuffle on the first step
    const size_t n = items_.size();
    double total = 0.0;
    size_t seen = 0;
    while (seen < n) {
      const size_t before = std::min<size_t>(cfg_.batch_size, n - seen);
      total += step() * static_cast<double>(before);
      seen += before;
    }
    return total / static_cast<double>(n);
  }

  void save(const std::string& checkpoint_path,
            const std::string& state_path) const {
    save_checkpoint(checkpoint_path, state_.params, state_.ema);
    save_train_state(state_path, state_, rng_, perm_, pos_);
  }

  long step_count() const { return state_.step; }
  const TrainState& state() const { return state_; }
  TrainState& state() { return state_; }
  const Rng& rng() const { return rng_; }

 private:
  void validate_items(const NetConfig& nc) const {
    if (items_.empty()) throw InputError("trainer: empty dataset");
    for (const TrainItem& it : items_) {
      if (static_cast<int>(it.cond.size()) != nc.cond_dim) {
        throw InputError("trainer: conditioning dim mismatch");
      }
    }
    if (cfg_.batch_size < 1) throw InputError("trainer: batch_size must be >= 1");
    if (cfg_.drop_prob < 0.0 || cfg_.drop_prob > 1.0) {
      throw InputError("trainer: drop_prob must lie in [0, 1]");
    }
  }

  TrainerConfig cfg_;
  std::vector<TrainItem> items_;
  Rng rng_;
  TrainState state_;
  std::vector<uint64_t> perm_;
  size_t pos_ = 0;
  ModelParams grads_;
  Workspace ws_;
  Batch batch_;
};

}  // namespace geoflow
