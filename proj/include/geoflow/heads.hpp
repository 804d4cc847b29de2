#pragma once

// Training glue for the parametric baseline heads: negative log-likelihood of
// the batch targets under the head's distribution, with gradients pushed
// through the raw head outputs into the shared trunk.

#include "geoflow/error.hpp"
#include "geoflow/net.hpp"
#include "geoflow/sphere.hpp"
#include "geoflow/vmf.hpp"

namespace geoflow {

// Mean NLL (nats) of the batch's target points under the head distribution.
// Targets are unit vectors stored in Batch::target. Gradients land in `grads`.
inline double head_loss_and_grads(const ModelParams& p, Workspace& ws,
                                  const Batch& in, ModelParams& grads) {
  const HeadKind head = p.cfg.head;
  if (head == HeadKind::kField) {
    throw InputError("head_loss_and_grads: field-head net");
  }
  forward_batch(p, ws, in);
  grads.for_each_tensor([](const char*, Tensor& t) {
    std::fill(t.a.begin(), t.a.end(), 0.0);
  });
  const int n = in.n;
  const int od = p.cfg.out_dim();
  ws.dout.assign(static_cast<std::size_t>(n) * od, 0.0);

  double loss = 0.0;
  std::vector<double> d_raw(od);
  for (int i = 0; i < n; ++i) {
    const UnitVec3 y = UnitVec3::project(
        {in.target[3 * static_cast<std::size_t>(i)],
         in.target[3 * static_cast<std::size_t>(i) + 1],
         in.target[3 * static_cast<std::size_t>(i) + 2]});
    const double* raw = ws.out.data() + static_cast<std::size_t>(i) * od;
    double nll;
    if (head == HeadKind::kVmf) {
      nll = vmf_head_nll_grad(raw, y, d_raw.data());
    } else {
      nll = vmf_mixture_head_nll_grad(raw, p.cfg.mixture_comps, y, d_raw.data());
    }
    loss += nll;
    double* douti = ws.dout.data() + static_cast<std::size_t>(i) * od;
    for (int c = 0; c < od; ++c) douti[c] = d_raw[c] / n;
  }
  backward_batch(p, ws, in, grads);
  return loss / n;
}

// The head's distribution for a conditioning vector (nullptr = unconditional).
inline VmfParams head_vmf(const ModelParams& p, Workspace& ws, const double* cond) {
  std::vector<double> raw;
  eval_head_raw(p, ws, cond, raw);
  return vmf_head(raw.data());
}

inline VmfMixture head_vmf_mixture(const ModelParams& p, Workspace& ws,
                                   const double* cond) {
  std::vector<double> raw;
  eval_head_raw(p, ws, cond, raw);
  return vmf_mixture_head(raw.data(), p.cfg.mixture_comps);
}

}  // namespace geoflow
