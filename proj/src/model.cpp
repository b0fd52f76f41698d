#include "hmmva/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

namespace hmmva {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // ln(2*pi)

// categorical observations are symbol indices stored as doubles
int symbol_of(double x, int alphabet) {
  double r = std::nearbyint(x);
  if (std::abs(x - r) > 1e-9) return -1;
  if (r < 0 || r >= static_cast<double>(alphabet)) return -1;
  return static_cast<int>(r);
}

}  // namespace

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonStochasticRow: return "NonStochasticRow";
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::NonStationaryInitial: return "NonStationaryInitial";
    case ErrorCode::BadEmissionParam: return "BadEmissionParam";
    case ErrorCode::BadDimensions: return "BadDimensions";
    case ErrorCode::TooManyStates: return "TooManyStates";
    case ErrorCode::Reducible: return "Reducible";
    case ErrorCode::Periodic: return "Periodic";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::AllPathsImpossible: return "AllPathsImpossible";
    case ErrorCode::InstanceTooLarge: return "InstanceTooLarge";
    case ErrorCode::CorrectionUnavailable: return "CorrectionUnavailable";
    case ErrorCode::EmptyCell: return "EmptyCell";
    case ErrorCode::EmptyClassInAllReplicas: return "EmptyClassInAllReplicas";
    case ErrorCode::NoRegenerations: return "NoRegenerations";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

const char* emission_kind_name(EmissionKind kind) {
  switch (kind) {
    case EmissionKind::GaussianKnownVar: return "gaussian_known_var";
    case EmissionKind::Gaussian: return "gaussian";
    case EmissionKind::Categorical: return "categorical";
  }
  return "unknown";
}

EmissionKind emission_kind_from_name(const std::string& name) {
  if (name == "gaussian_known_var") return EmissionKind::GaussianKnownVar;
  if (name == "gaussian") return EmissionKind::Gaussian;
  if (name == "categorical") return EmissionKind::Categorical;
  throw Error(ErrorCode::BadEmissionParam, "unknown emission kind '" + name + "'");
}

double Emission::log_pdf(double x) const {
  if (kind == EmissionKind::Categorical) {
    int s = symbol_of(x, alphabet());
    if (s < 0 || probs[s] <= 0.0) return kNegInf;
    return std::log(probs[s]);
  }
  double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var)) - d * d / (2.0 * var);
}

double Emission::sample(Rng& rng) const {
  if (kind == EmissionKind::Categorical) {
    return static_cast<double>(rng.discrete(probs));
  }
  return rng.normal(mean, std::sqrt(var));
}

void Emission::validate() const {
  if (kind == EmissionKind::Categorical) {
    if (probs.empty())
      throw Error(ErrorCode::BadEmissionParam, "categorical needs a nonempty probs vector");
    double sum = 0.0;
    for (double p : probs) {
      if (p < 0.0) throw Error(ErrorCode::BadEmissionParam, "negative categorical probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowSumTol)
      throw Error(ErrorCode::BadEmissionParam, "categorical probabilities sum to " + std::to_string(sum));
    return;
  }
  if (!(var > 0.0) || !std::isfinite(var))
    throw Error(ErrorCode::BadEmissionParam, "gaussian variance must be > 0");
  if (!std::isfinite(mean))
    throw Error(ErrorCode::BadEmissionParam, "gaussian mean must be finite");
}

const HmmParams& validate_params(const HmmParams& candidate) {
  const std::size_t K = candidate.K;
  if (K < 1) throw Error(ErrorCode::BadDimensions, "K must be >= 1");
  if (K > kMaxStates)
    throw Error(ErrorCode::TooManyStates, "at most " + std::to_string(kMaxStates) + " states supported");
  if (candidate.transition.size() != K || candidate.initial.size() != K ||
      candidate.emissions.size() != K)
    throw Error(ErrorCode::BadDimensions, "transition/initial/emissions sizes must match K");

  for (std::size_t i = 0; i < K; ++i) {
    const auto& row = candidate.transition[i];
    if (row.size() != K) throw Error(ErrorCode::BadDimensions, "transition row has wrong length");
    double sum = 0.0;
    for (double p : row) {
      if (p < 0.0)
        throw Error(ErrorCode::NegativeEntry, "transition entry in row " + std::to_string(i + 1));
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowSumTol)
      throw Error(ErrorCode::NonStochasticRow,
                  "row " + std::to_string(i + 1) + " sums to " + std::to_string(sum));
  }

  double isum = 0.0;
  for (double p : candidate.initial) {
    if (p < 0.0) throw Error(ErrorCode::NegativeEntry, "initial distribution entry");
    isum += p;
  }
  if (std::abs(isum - 1.0) > kRowSumTol)
    throw Error(ErrorCode::NonStochasticRow, "initial distribution sums to " + std::to_string(isum));

  bool any_categorical = false, any_gaussian = false;
  for (const auto& e : candidate.emissions) {
    e.validate();
    (e.kind == EmissionKind::Categorical ? any_categorical : any_gaussian) = true;
  }
  if (any_categorical && any_gaussian)
    throw Error(ErrorCode::BadEmissionParam,
                "cannot mix categorical and gaussian emissions (distinct reference measures)");
  if (any_categorical) {
    int alphabet = candidate.emissions[0].alphabet();
    for (const auto& e : candidate.emissions)
      if (e.alphabet() != alphabet)
        throw Error(ErrorCode::BadEmissionParam,
                    "categorical emissions must share one alphabet");
  }

  if (candidate.stationary) {
    for (std::size_t j = 0; j < K; ++j) {
      double pj = 0.0;
      for (std::size_t i = 0; i < K; ++i) pj += candidate.initial[i] * candidate.transition[i][j];
      if (std::abs(pj - candidate.initial[j]) > kStationaryTol)
        throw Error(ErrorCode::NonStationaryInitial,
                    "pi P != pi at component " + std::to_string(j + 1));
    }
  }
  return candidate;
}

namespace {

// boolean adjacency of positive entries
std::vector<std::vector<bool>> positive_mask(const Matrix& P) {
  std::size_t K = P.size();
  std::vector<std::vector<bool>> b(K, std::vector<bool>(K, false));
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j) b[i][j] = P[i][j] > 0.0;
  return b;
}

bool strongly_connected(const std::vector<std::vector<bool>>& adj) {
  const std::size_t K = adj.size();
  auto reach = [&](bool transpose) {
    std::vector<bool> seen(K, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      std::size_t v = stack.back();
      stack.pop_back();
      for (std::size_t w = 0; w < K; ++w) {
        bool edge = transpose ? adj[w][v] : adj[v][w];
        if (edge && !seen[w]) {
          seen[w] = true;
          stack.push_back(w);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](bool s) { return s; });
  };
  return reach(false) && reach(true);
}

// some power B^m strictly positive with m <= limit?
bool primitive_within(std::vector<std::vector<bool>> b, std::size_t limit) {
  const std::size_t K = b.size();
  auto all_true = [&](const std::vector<std::vector<bool>>& m) {
    for (const auto& row : m)
      for (bool v : row)
        if (!v) return false;
    return true;
  };
  std::vector<std::vector<bool>> cur = b;
  for (std::size_t m = 1; m <= limit; ++m) {
    if (all_true(cur)) return true;
    std::vector<std::vector<bool>> next(K, std::vector<bool>(K, false));
    for (std::size_t i = 0; i < K; ++i)
      for (std::size_t k = 0; k < K; ++k)
        if (cur[i][k])
          for (std::size_t j = 0; j < K; ++j)
            if (b[k][j]) next[i][j] = true;
    cur = std::move(next);
  }
  return all_true(cur);
}

}  // namespace

std::vector<double> stationary_distribution(const Matrix& transition) {
  const std::size_t K = transition.size();
  if (K == 0) throw Error(ErrorCode::BadDimensions, "empty transition matrix");
  for (const auto& row : transition)
    if (row.size() != K) throw Error(ErrorCode::BadDimensions, "transition matrix not square");

  auto mask = positive_mask(transition);
  if (!strongly_connected(mask))
    throw Error(ErrorCode::Reducible, "transition graph is not strongly connected");
  if (!primitive_within(mask, K * K))
    throw Error(ErrorCode::Periodic, "no positive power P^m with m <= K^2");

  // solve (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
  std::size_t n = K;
  std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
  for (std::size_t r = 0; r + 1 < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) a[r][c] = transition[c][r] - (r == c ? 1.0 : 0.0);
    a[r][n] = 0.0;
  }
  for (std::size_t c = 0; c < n; ++c) a[n - 1][c] = 1.0;
  a[n - 1][n] = 1.0;

  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    if (std::abs(a[col][col]) < 1e-14)
      throw Error(ErrorCode::NumericalFailure, "singular system for stationary distribution");
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      double f = a[r][col] / a[col][col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c <= n; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::vector<double> pi(n);
  for (std::size_t i = 0; i < n; ++i) pi[i] = a[i][n] / a[i][i];

  double sum = std::accumulate(pi.begin(), pi.end(), 0.0);
  for (double& p : pi) p /= sum;
  for (std::size_t j = 0; j < n; ++j) {
    double pj = 0.0;
    for (std::size_t i = 0; i < n; ++i) pj += pi[i] * transition[i][j];
    if (std::abs(pj - pi[j]) > kStationaryTol || !(pi[j] > 0.0))
      throw Error(ErrorCode::NumericalFailure, "stationary solve did not converge");
  }
  return pi;
}

Realization sample_hmm(const HmmParams& params, std::size_t n, std::uint64_t seed) {
  validate_params(params);
  if (n < 1) throw Error(ErrorCode::BadDimensions, "n must be >= 1");
  Rng rng(seed);
  Realization out;
  out.seed = seed;
  out.hidden.resize(n);
  out.observed.resize(n);
  out.hidden[0] = rng.discrete(params.initial);
  for (std::size_t k = 1; k < n; ++k)
    out.hidden[k] = rng.discrete(params.transition[out.hidden[k - 1]]);
  for (std::size_t k = 0; k < n; ++k)
    out.observed[k] = params.emissions[out.hidden[k]].sample(rng);
  return out;
}

Emission weighted_mle(const Emission& family, const WeightedSample& sample,
                      double var_floor) {
  if (!(sample.total_weight > 0.0))
    throw Error(ErrorCode::EmptyClass, "total weight is zero");

  Emission out = family;
  if (family.kind == EmissionKind::Categorical) {
    const int A = family.alphabet();
    std::vector<double> w(A, 0.0);
    for (const auto& [x, wt] : sample.points) {
      if (wt <= 0.0) continue;
      int s = symbol_of(x, A);
      if (s < 0)
        throw Error(ErrorCode::BadEmissionParam, "observation outside categorical alphabet");
      w[s] += wt;
    }
    for (int s = 0; s < A; ++s) out.probs[s] = w[s] / sample.total_weight;
    // absorb rounding into the largest cell so the vector stays stochastic
    int jmax = static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
    double rest = 0.0;
    for (int s = 0; s < A; ++s)
      if (s != jmax) rest += out.probs[s];
    out.probs[jmax] = 1.0 - rest;
    return out;
  }

  double mean = 0.0;
  for (const auto& [x, wt] : sample.points) mean += wt * x;
  mean /= sample.total_weight;
  out.mean = mean;
  if (family.kind == EmissionKind::Gaussian) {
    std::set<double> distinct;
    for (const auto& [x, wt] : sample.points)
      if (wt > 0.0) distinct.insert(x);
    double ss = 0.0;
    for (const auto& [x, wt] : sample.points) ss += wt * (x - mean) * (x - mean);
    double var = ss / sample.total_weight;
    if (var_floor > 0.0) {
      out.var = std::max(var, var_floor);
    } else {
      if (distinct.size() < 2)
        throw Error(ErrorCode::DegenerateVariance, "fewer than two distinct support points");
      out.var = var;
    }
  }
  return out;
}

ClusterCheck check_cluster(const HmmParams& params, std::span<const int> states,
                           int m_max) {
  if (states.empty()) throw Error(ErrorCode::BadDimensions, "cluster candidate is empty");
  std::vector<bool> in_c(params.K, false);
  for (int s : states) {
    if (s < 0 || static_cast<std::size_t>(s) >= params.K)
      throw Error(ErrorCode::BadDimensions, "state index out of range");
    in_c[s] = true;
  }

  const bool categorical = params.emissions[0].kind == EmissionKind::Categorical;
  if (categorical) {
    // common support = intersection of positive-probability symbol sets
    const int A = params.emissions[0].alphabet();
    std::vector<bool> common(A, true);
    for (std::size_t l = 0; l < params.K; ++l) {
      if (!in_c[l]) continue;
      for (int s = 0; s < A; ++s)
        if (!(params.emissions[l].probs[s] > 0.0)) common[s] = false;
    }
    for (std::size_t j = 0; j < params.K; ++j) {
      double mass = 0.0;
      for (int s = 0; s < A; ++s)
        if (common[s]) mass += params.emissions[j].probs[s];
      if (in_c[j] && !(mass > 0.0))
        return {false, "common support has zero probability under a member state"};
      if (!in_c[j] && mass > 0.0)
        return {false, "common support is visible to a state outside the candidate"};
    }
  } else {
    // gaussian supports are the whole line: every state sees the common
    // support, so only C = S can qualify
    for (std::size_t j = 0; j < params.K; ++j)
      if (!in_c[j]) return {false, "full-line supports are visible outside the candidate"};
  }

  // substochastic restriction must have a strictly positive power
  std::vector<int> idx(states.begin(), states.end());
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  const std::size_t m = idx.size();
  std::vector<std::vector<bool>> b(m, std::vector<bool>(m, false));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      b[i][j] = params.transition[idx[i]][idx[j]] > 0.0;
  if (!primitive_within(b, static_cast<std::size_t>(m_max)))
    return {false, "no strictly positive power of the substochastic restriction"};
  return {true, "ok"};
}

std::vector<double> normalize_exact(std::span<const std::int64_t> counts) {
  std::int64_t total = 0;
  for (auto c : counts) total += c;
  if (total <= 0) throw Error(ErrorCode::EmptyClass, "normalize_exact on empty counts");
  std::vector<double> out(counts.size(), 0.0);
  std::size_t last_nonzero = 0;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    out[j] = static_cast<double>(counts[j]) / static_cast<double>(total);
    if (counts[j] > 0) last_nonzero = j;
  }
  // the last nonzero cell absorbs rounding: summing left to right then
  // adding fl(1 - s) lands exactly on 1
  double s = 0.0;
  for (std::size_t j = 0; j < last_nonzero; ++j) s += out[j];
  out[last_nonzero] = 1.0 - s;
  return out;
}

}  // namespace hmmva
