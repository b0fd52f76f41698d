#pragma once

#include <span>
#include <vector>

#include "hmmva/corrections_types.hpp"
#include "hmmva/viterbi.hpp"

namespace hmmva {

// Alignment-based empirical estimators (transition frequencies, per-class
// empirical measures, per-class MLEs). Degenerate rows/classes copy the
// fallback parameters and are flagged.
struct EmpiricalEstimates {
  Matrix trans;
  std::vector<bool> row_fallback;    // state never occurred in v_{1:n-1}
  std::vector<Emission> emissions;
  std::vector<bool> class_fallback;  // state never occurred in v_{1:n}
  std::vector<WeightedSample> class_samples;
  std::vector<std::int64_t> occupancy;  // over v_{1:n}
};

EmpiricalEstimates empirical_estimates(std::span<const double> x, std::span<const int> v,
                                       const HmmParams& fallback,
                                       double var_floor = 1e-8);

struct TrainOptions {
  int max_iters = 100;
  double param_tol = 1e-8;   // VA stopping: sup-norm parameter change
  double em_rel_tol = 1e-9;  // EM stopping: relative log-likelihood increase
  double var_floor = 1e-8;   // Gaussian variance floor in M-steps
  int history_cap = 1000;
};

struct TrainState {
  HmmParams params;
  int iterations = 0;  // parameter updates performed
  bool converged = false;
  std::vector<int> alignment;        // final canonical alignment (empty for EM)
  std::vector<double> loglik_trace;  // joint (VT/VA) or observed-data (EM)
  std::vector<HmmParams> history;    // psi^(0), psi^(1), ... capped
  std::vector<bool> last_row_fallback;
  std::vector<bool> last_class_fallback;
};

// Baseline Viterbi training: alignment -> empirical estimates -> update.
// The initial distribution stays fixed at psi0's pi throughout (the update
// rules only touch P and theta), which keeps the joint likelihood ascent
// exact. Stops when the canonical alignment repeats exactly.
TrainState vt_train(const HmmParams& psi0, std::span<const double> x,
                    const TrainOptions& options = {});

// Adjusted Viterbi training: the VT update plus additive corrections
// R_ij(psi^(k)) and Delta_l(psi^(k)). Corrected transition rows that leave
// the simplex are clipped to [0,1] and renormalized. Stops when the sup-norm
// parameter change drops below param_tol.
TrainState va_train(const HmmParams& psi0, std::span<const double> x,
                    const CorrectionProvider& corrections,
                    const TrainOptions& options = {});

// Baum-Welch baseline: scaled forward-backward E-step, closed-form M-step.
// Stops when the relative log-likelihood increase drops below em_rel_tol.
TrainState em_train(const HmmParams& psi0, std::span<const double> x,
                    const TrainOptions& options = {});

// sup-norm distance over transition entries and emission parameters
// (the initial distribution is not compared)
double param_distance(const HmmParams& a, const HmmParams& b);

}  // namespace hmmva
