#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hmmva/errors.hpp"
#include "hmmva/rng.hpp"

namespace hmmva {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Tolerance under which two log-domain scores are considered tied.
// Floating rounding must not split mathematically exact ties (symmetric
// models); 1e-12 is far below any model-driven score gap at desk scale.
inline constexpr double kTieTol = 1e-12;

// a >= b up to the tie tolerance; exact on +-infinity
inline bool ge_tol(double a, double b) { return a >= b || (b - a) <= kTieTol; }
// a > b beyond the tie tolerance
inline bool gt_strict(double a, double b) { return a > b + kTieTol; }
// |a - b| within the tie tolerance; exact on +-infinity
inline bool tied(double a, double b) { return a == b || std::abs(a - b) <= kTieTol; }

using Matrix = std::vector<std::vector<double>>;

enum class EmissionKind { GaussianKnownVar, Gaussian, Categorical };

const char* emission_kind_name(EmissionKind kind);
EmissionKind emission_kind_from_name(const std::string& name);

// One per-state emission distribution. Gaussian kinds use (mean, var);
// Categorical uses probs over symbols 0..probs.size()-1 (observations carry
// the symbol index as a double). GaussianKnownVar treats var as known: it is
// part of the family, not an estimated parameter.
struct Emission {
  EmissionKind kind = EmissionKind::Gaussian;
  double mean = 0.0;
  double var = 1.0;
  std::vector<double> probs;

  int alphabet() const { return static_cast<int>(probs.size()); }
  // log-density wrt the family reference measure (Lebesgue / counting);
  // out-of-support observations give -inf
  double log_pdf(double x) const;
  double sample(Rng& rng) const;
  void validate() const;  // throws BadEmissionParam
};

// Full parameter vector: transition matrix P, initial distribution pi and
// per-state emissions. Immutable by convention once validated.
struct HmmParams {
  std::size_t K = 0;
  Matrix transition;            // K x K, row-stochastic
  std::vector<double> initial;  // length K
  std::vector<Emission> emissions;
  bool stationary = true;  // when set, pi must satisfy pi P = pi
};

inline constexpr double kRowSumTol = 1e-12;
inline constexpr double kStationaryTol = 1e-10;
inline constexpr std::size_t kMaxStates = 64;  // predecessor sets are 64-bit masks

// Checks all HmmParams invariants; never renormalizes. Throws Error with
// codes NonStochasticRow, NegativeEntry, NonStationaryInitial,
// BadEmissionParam, BadDimensions, TooManyStates.
const HmmParams& validate_params(const HmmParams& candidate);

// Unique pi with pi P = pi for an irreducible aperiodic P.
// Throws Reducible / Periodic when the structure check fails
// (positivity of some power P^m, m <= K^2, entries compared against 0 exactly).
std::vector<double> stationary_distribution(const Matrix& transition);

struct Realization {
  std::vector<int> hidden;      // states, 0-based
  std::vector<double> observed;
  std::uint64_t seed = 0;
};

// Hidden chain from (pi, P), then x_k ~ P_{y_k} independently given y_k.
// Identical seed => bit-identical output.
Realization sample_hmm(const HmmParams& params, std::size_t n, std::uint64_t seed);

struct WeightedSample {
  std::vector<std::pair<double, double>> points;  // (value, weight >= 0)
  double total_weight = 0.0;

  void add(double value, double weight) {
    points.emplace_back(value, weight);
    total_weight += weight;
  }
};

// Weighted maximum-likelihood fit within the family of `family` (closed
// forms: weighted mean / mean+variance / relative frequencies). var_floor = 0
// means strict: a degenerate Gaussian sample throws DegenerateVariance;
// trainers pass a positive floor instead. Throws EmptyClass on zero weight.
Emission weighted_mle(const Emission& family, const WeightedSample& sample,
                      double var_floor = 0.0);

struct ClusterCheck {
  bool is_cluster = false;
  std::string reason;  // "ok" or why not
};

// Definition test for a cluster C: the common support is detectable exactly
// by the states of C, and the substochastic matrix (p_ij)_{i,j in C} has a
// strictly positive power m <= m_max.
ClusterCheck check_cluster(const HmmParams& params, std::span<const int> states,
                           int m_max);

// exact row-stochastic vector from nonnegative counts: entries are
// count/total except the last nonzero one, which absorbs rounding so the
// left-to-right double sum is exactly 1
std::vector<double> normalize_exact(std::span<const std::int64_t> counts);

}  // namespace hmmva
