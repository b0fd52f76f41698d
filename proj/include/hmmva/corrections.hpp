#pragma once

#include <optional>
#include <span>

#include "hmmva/corrections_types.hpp"
#include "hmmva/stream.hpp"

namespace hmmva {

// Generalized Voronoi partition of the line for 1-D Gaussian families with
// positive weights w_l: S_1 = {x : w_1 f_1 >= w_j f_j for all j}, later states
// take their dominance region minus everything already assigned, so boundary
// points belong to the smallest-index owner. Identical components leave the
// larger index with the empty set.
struct VoronoiPartition1D {
  std::vector<double> boundaries;      // sorted, finite
  std::vector<int> interval_owner;     // boundaries.size() + 1 entries
  std::vector<bool> interval_unique;   // strict dominance inside the interval
  std::vector<int> point_owner;        // owner of each boundary point

  int classify(double x) const;
};

VoronoiPartition1D weighted_partition_1d(const std::vector<Emission>& emissions,
                                         std::span<const double> weights);

// mixture special case: weights are the mixing probabilities pi
VoronoiPartition1D mixture_partition_1d(const HmmParams& params);

// p_ij == pi_j for all i, j (within the row-sum tolerance)
bool is_mixture(const HmmParams& params);

// Limiting values for a 1-D Gaussian mixture: q_l from Gaussian CDF
// differences over the partition intervals, mu_l from truncated-normal first
// (and second) moments in closed form. q_l = 0 leaves mu_l undefined.
struct MixtureLimits {
  std::vector<double> q;
  std::vector<std::optional<Emission>> mu;
};

MixtureLimits mixture_limits(const HmmParams& params);

// Delta_l = theta_l - mu_l, R_ij = p_ij - q_ij, identities bit-exact.
// Throws EmptyCell when some mu_l is undefined.
CorrectionTable corrections_from_limits(const HmmParams& params, const MixtureLimits& limits);

// mixture_limits + corrections_from_limits; throws CorrectionUnavailable
// unless the model is a Gaussian mixture
CorrectionTable analytic_corrections(const HmmParams& params);

// Monte Carlo limits for general HMMs: per replica, sample a realization,
// take the canonical alignment, form the empirical estimates; average across
// replicas and report replica-spread standard errors.
CorrectionTable mc_limits(const HmmParams& params, std::size_t length, int replicas,
                          std::uint64_t seed, int threads = 1);

CorrectionProvider analytic_provider();
// deterministic: the per-query seed is derived from (seed, hash of psi)
CorrectionProvider mc_provider(std::size_t length, int replicas, std::uint64_t seed,
                               int threads = 1);
CorrectionProvider zero_provider();

// Empirical limiting measures from one long realization decoded by the
// streaming canonical alignment: class histograms Q_l (fixed equal-width bins
// over the data range; exact atoms for categorical) and transition
// frequencies q_lj. With a barrier, additionally the regenerative cycle
// estimates m_l/w_l and w_lj/w_l.
struct LimitMeasureEstimate {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  bool atoms = false;
  int bins = 0;
  double lo = 0.0, hi = 0.0;  // bin range (ignored for atoms)
  std::vector<std::vector<double>> Q;  // K x bins; visited rows sum exactly 1
  Matrix q;                            // K x K; rows sum exactly 1
  std::vector<std::int64_t> occupancy;        // per state over 1..n
  std::vector<std::int64_t> occupancy_trans;  // per state over 1..n-1
  std::vector<bool> visited;

  bool has_regen = false;
  std::vector<std::vector<double>> Q_regen;
  Matrix q_regen;
  RegenStats regen;

  int bin_index(double x) const;
};

LimitMeasureEstimate estimate_limit_measures(const HmmParams& params, std::size_t n,
                                             std::uint64_t seed,
                                             const std::optional<BarrierSpec>& barrier,
                                             int bins = 200);

// Per-state check that the dominance region {x : w_l f_l > max_{i!=l} w_i f_i}
// carries positive P_l-probability.
std::vector<bool> dominance_nonempty(const std::vector<Emission>& emissions,
                                     std::span<const double> weights);

// The barrier-existence assumption with weights max_j p_jl, checked for every
// state.
bool assumption_311_holds(const HmmParams& params);

// FNV-1a hash of the parameter bytes; keys deterministic MC correction seeds
std::uint64_t hash_params(const HmmParams& params);

// total variation distance between two mass vectors over the same bins
double total_variation(std::span<const double> a, std::span<const double> b);

}  // namespace hmmva
