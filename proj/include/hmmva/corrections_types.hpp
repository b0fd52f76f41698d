#pragma once

#include <functional>
#include <vector>

#include "hmmva/model.hpp"

namespace hmmva {

// additive correction for one state's emission parameters
struct EmissionDelta {
  double dmean = 0.0;
  double dvar = 0.0;
  std::vector<double> dprobs;
};

// Limiting values mu_l(psi), q_ij(psi) with the corrections
// Delta_l = theta_l - mu_l and R_ij = p_ij - q_ij. The identities
// mu_l + Delta_l = theta_l and q_ij + R_ij = p_ij hold bit-exactly.
struct CorrectionTable {
  enum class Method { Analytic, MonteCarlo };
  Method method = Method::Analytic;
  std::vector<Emission> mu;
  std::vector<EmissionDelta> delta;
  Matrix q;
  Matrix R;
  // replica-spread standard errors (Monte Carlo only; empty for analytic)
  std::vector<EmissionDelta> mu_se;
  Matrix q_se;
};

// Supplies corrections for any queried parameter vector; must be
// deterministic and safe for concurrent queries.
using CorrectionProvider = std::function<CorrectionTable(const HmmParams&)>;

}  // namespace hmmva
