#pragma once

#include <string>

#include "geoflow/error.hpp"

namespace geoflow {

// The three ways the generative field is parameterized and integrated.
enum class Formulation {
  kDiffusionR3,  // noise prediction in R^3, deterministic reverse updates
  kFlowR3,       // velocity field in R^3, straight-line noising path
  kRfmS2,        // tangent velocity field on the sphere, geodesic noising path
};

inline std::string to_string(Formulation f) {
  switch (f) {
    case Formulation::kDiffusionR3:
      return "diffusion_r3";
    case Formulation::kFlowR3:
      return "fm_r3";
    case Formulation::kRfmS2:
      return "rfm_s2";
  }
  throw InputError("to_string: bad formulation");
}

inline Formulation formulation_from_string(const std::string& s) {
  if (s == "diffusion_r3") return Formulation::kDiffusionR3;
  if (s == "fm_r3") return Formulation::kFlowR3;
  if (s == "rfm_s2") return Formulation::kRfmS2;
  throw InputError("unknown formulation '" + s +
                   "' (expected diffusion_r3, fm_r3, or rfm_s2)");
}

}  // namespace geoflow
