#include "hmmva/corrections.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <thread>

#include "hmmva/training.hpp"

namespace hmmva {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488016887242097;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

double norm_cdf(double z) {
  if (std::isinf(z)) return z > 0 ? 1.0 : 0.0;
  return 0.5 * std::erfc(-z / kSqrt2);
}

double norm_pdf(double z) {
  if (std::isinf(z)) return 0.0;
  return kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

double z_times_pdf(double z) { return std::isinf(z) ? 0.0 : z * norm_pdf(z); }

// mass / first / second moment of N(mean, var) over [a, b]
struct TruncMoments {
  double p = 0.0, e1 = 0.0, e2 = 0.0;
};

TruncMoments truncated_moments(double mean, double var, double a, double b) {
  double sd = std::sqrt(var);
  double alpha = std::isinf(a) ? a : (a - mean) / sd;
  double beta = std::isinf(b) ? b : (b - mean) / sd;
  double p = norm_cdf(beta) - norm_cdf(alpha);
  double dphi = norm_pdf(alpha) - norm_pdf(beta);  // E[Z 1]
  double ez2 = p + z_times_pdf(alpha) - z_times_pdf(beta);
  TruncMoments m;
  m.p = p;
  m.e1 = mean * p + sd * dphi;
  m.e2 = mean * mean * p + 2.0 * mean * sd * dphi + var * ez2;
  return m;
}

// log weighted density, common ln(2 pi) term dropped
double log_weighted_density(const Emission& e, double log_w, double x) {
  double d = x - e.mean;
  return log_w - 0.5 * std::log(e.var) - d * d / (2.0 * e.var);
}

}  // namespace

int VoronoiPartition1D::classify(double x) const {
  auto it = std::lower_bound(boundaries.begin(), boundaries.end(), x);
  if (it != boundaries.end() && *it == x)
    return point_owner[static_cast<std::size_t>(it - boundaries.begin())];
  return interval_owner[static_cast<std::size_t>(it - boundaries.begin())];
}

VoronoiPartition1D weighted_partition_1d(const std::vector<Emission>& emissions,
                                         std::span<const double> weights) {
  const std::size_t K = emissions.size();
  if (weights.size() != K) throw Error(ErrorCode::BadDimensions, "one weight per state");
  for (const auto& e : emissions)
    if (e.kind == EmissionKind::Categorical)
      throw Error(ErrorCode::CorrectionUnavailable, "partition requires 1-D Gaussian emissions");

  std::vector<double> log_w(K);
  bool any_active = false;
  for (std::size_t l = 0; l < K; ++l) {
    log_w[l] = weights[l] > 0.0 ? std::log(weights[l]) : kNegInf;
    any_active |= weights[l] > 0.0;
  }
  if (!any_active) throw Error(ErrorCode::NumericalFailure, "all partition weights are zero");

  auto diff = [&](std::size_t i, std::size_t j, double x) {
    return log_weighted_density(emissions[i], log_w[i], x) -
           log_weighted_density(emissions[j], log_w[j], x);
  };

  // bisection polish of a closed-form root
  auto refine = [&](std::size_t i, std::size_t j, double x0) {
    double h = 1e-9 * std::max(1.0, std::abs(x0));
    double lo = x0 - h, hi = x0 + h;
    for (int k = 0; k < 60 && diff(i, j, lo) * diff(i, j, hi) > 0.0; ++k) {
      h *= 2.0;
      lo = x0 - h;
      hi = x0 + h;
    }
    if (diff(i, j, lo) * diff(i, j, hi) > 0.0) return x0;  // tangency
    while (hi - lo > 1e-12) {
      double mid = 0.5 * (lo + hi);
      if (mid == lo || mid == hi) break;
      if (diff(i, j, lo) * diff(i, j, mid) <= 0.0)
        hi = mid;
      else
        lo = mid;
    }
    return 0.5 * (lo + hi);
  };

  std::vector<double> roots;
  for (std::size_t i = 0; i < K; ++i) {
    if (weights[i] <= 0.0) continue;
    for (std::size_t j = i + 1; j < K; ++j) {
      if (weights[j] <= 0.0) continue;
      const Emission &ei = emissions[i], &ej = emissions[j];
      double A = 0.5 / ej.var - 0.5 / ei.var;
      double B = ei.mean / ei.var - ej.mean / ej.var;
      double C = (log_w[i] - 0.5 * std::log(ei.var) - ei.mean * ei.mean / (2.0 * ei.var)) -
                 (log_w[j] - 0.5 * std::log(ej.var) - ej.mean * ej.mean / (2.0 * ej.var));
      if (A == 0.0) {
        if (B != 0.0) roots.push_back(refine(i, j, -C / B));
        continue;  // identical shapes -> no crossing; ties resolve to the smaller index
      }
      double disc = B * B - 4.0 * A * C;
      if (disc < 0.0) continue;
      double s = std::sqrt(disc);
      if (B == 0.0) {
        roots.push_back(refine(i, j, s / (2.0 * A)));
        if (s != 0.0) roots.push_back(refine(i, j, -s / (2.0 * A)));
      } else {
        double q = -0.5 * (B + std::copysign(s, B));
        roots.push_back(refine(i, j, q / A));
        if (q != 0.0 && s != 0.0) roots.push_back(refine(i, j, C / q));
      }
    }
  }
  std::sort(roots.begin(), roots.end());
  std::vector<double> bounds;
  for (double r : roots) {
    if (!std::isfinite(r)) continue;
    if (bounds.empty() || r - bounds.back() > 1e-12 * std::max(1.0, std::abs(r)))
      bounds.push_back(r);
  }

  auto owner_at = [&](double x) {
    double best = kNegInf;
    for (std::size_t l = 0; l < K; ++l) {
      if (weights[l] <= 0.0) continue;
      best = std::max(best, log_weighted_density(emissions[l], log_w[l], x));
    }
    int owner = -1, count = 0;
    for (std::size_t l = 0; l < K; ++l) {
      if (weights[l] <= 0.0) continue;
      if (tied(log_weighted_density(emissions[l], log_w[l], x), best)) {
        if (owner < 0) owner = static_cast<int>(l);
        ++count;
      }
    }
    return std::pair<int, bool>(owner, count == 1);
  };

  VoronoiPartition1D part;
  double span = bounds.empty() ? 1.0 : std::max(1.0, bounds.back() - bounds.front());
  for (std::size_t k = 0; k <= bounds.size(); ++k) {
    double probe;
    if (bounds.empty())
      probe = 0.0;
    else if (k == 0)
      probe = bounds.front() - span;
    else if (k == bounds.size())
      probe = bounds.back() + span;
    else
      probe = 0.5 * (bounds[k - 1] + bounds[k]);
    auto [owner, unique] = owner_at(probe);
    part.interval_owner.push_back(owner);
    part.interval_unique.push_back(unique);
  }
  for (double b : bounds) part.point_owner.push_back(owner_at(b).first);
  part.boundaries = std::move(bounds);

  // coalesce adjacent intervals with one owner (drops interior boundaries
  // coming from comparisons between non-winning states)
  VoronoiPartition1D merged;
  merged.interval_owner.push_back(part.interval_owner[0]);
  merged.interval_unique.push_back(part.interval_unique[0]);
  for (std::size_t k = 0; k < part.boundaries.size(); ++k) {
    int left = merged.interval_owner.back();
    bool lu = merged.interval_unique.back();
    if (part.interval_owner[k + 1] == left && part.point_owner[k] == left &&
        part.interval_unique[k + 1] == lu)
      continue;
    merged.boundaries.push_back(part.boundaries[k]);
    merged.point_owner.push_back(part.point_owner[k]);
    merged.interval_owner.push_back(part.interval_owner[k + 1]);
    merged.interval_unique.push_back(part.interval_unique[k + 1]);
  }
  return merged;
}

bool is_mixture(const HmmParams& params) {
  for (std::size_t i = 0; i < params.K; ++i)
    for (std::size_t j = 0; j < params.K; ++j)
      if (std::abs(params.transition[i][j] - params.initial[j]) > kRowSumTol) return false;
  return true;
}

VoronoiPartition1D mixture_partition_1d(const HmmParams& params) {
  validate_params(params);
  if (!is_mixture(params))
    throw Error(ErrorCode::CorrectionUnavailable, "model is not a mixture (p_ij != pi_j)");
  return weighted_partition_1d(params.emissions, params.initial);
}

MixtureLimits mixture_limits(const HmmParams& params) {
  VoronoiPartition1D part = mixture_partition_1d(params);
  const std::size_t K = params.K;

  MixtureLimits out;
  out.q.assign(K, 0.0);
  out.mu.assign(K, std::nullopt);
  std::vector<double> m1(K, 0.0), m2(K, 0.0);

  const std::size_t cells = part.interval_owner.size();
  for (std::size_t c = 0; c < cells; ++c) {
    int l = part.interval_owner[c];
    double a = c == 0 ? kNegInf : part.boundaries[c - 1];
    double b = c == cells - 1 ? std::numeric_limits<double>::infinity() : part.boundaries[c];
    for (std::size_t comp = 0; comp < K; ++comp) {
      if (!(params.initial[comp] > 0.0)) continue;
      TruncMoments tm =
          truncated_moments(params.emissions[comp].mean, params.emissions[comp].var, a, b);
      out.q[l] += params.initial[comp] * tm.p;
      m1[l] += params.initial[comp] * tm.e1;
      m2[l] += params.initial[comp] * tm.e2;
    }
  }

  for (std::size_t l = 0; l < K; ++l) {
    if (!(out.q[l] > 0.0)) continue;  // empty cell: mu undefined
    Emission mu = params.emissions[l];
    mu.mean = m1[l] / out.q[l];
    if (mu.kind == EmissionKind::Gaussian) {
      double var = m2[l] / out.q[l] - mu.mean * mu.mean;
      if (!(var > 0.0)) continue;
      mu.var = var;
    }
    out.mu[l] = mu;
  }
  return out;
}

namespace {

// returns (value', delta) with value' within an ulp of value and
// value' + delta == target exactly
std::pair<double, double> exact_complement(double target, double value) {
  double v = value;
  for (int it = 0; it < 16; ++it) {
    double d = target - v;
    if (v + d == target) return {v, d};
    v = target - d;
  }
  throw Error(ErrorCode::NumericalFailure, "could not split correction exactly");
}

}  // namespace

CorrectionTable corrections_from_limits(const HmmParams& params, const MixtureLimits& limits) {
  const std::size_t K = params.K;
  CorrectionTable table;
  table.method = CorrectionTable::Method::Analytic;
  table.q.assign(K, std::vector<double>(K, 0.0));
  table.R.assign(K, std::vector<double>(K, 0.0));
  table.mu.resize(K);
  table.delta.resize(K);

  for (std::size_t l = 0; l < K; ++l) {
    if (!limits.mu[l])
      throw Error(ErrorCode::EmptyCell, "state " + std::to_string(l + 1) + " has q_l = 0");
    Emission mu = *limits.mu[l];
    const Emission& theta = params.emissions[l];
    EmissionDelta delta;
    std::tie(mu.mean, delta.dmean) = exact_complement(theta.mean, mu.mean);
    if (theta.kind == EmissionKind::Gaussian)
      std::tie(mu.var, delta.dvar) = exact_complement(theta.var, mu.var);
    table.mu[l] = std::move(mu);
    table.delta[l] = std::move(delta);
  }
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j)
      std::tie(table.q[i][j], table.R[i][j]) =
          exact_complement(params.transition[i][j], limits.q[j]);
  return table;
}

CorrectionTable analytic_corrections(const HmmParams& params) {
  return corrections_from_limits(params, mixture_limits(params));
}

namespace {

struct ReplicaStats {
  Matrix trans;
  std::vector<bool> row_ok;
  std::vector<Emission> emissions;
  std::vector<bool> class_ok;
};

ReplicaStats mc_replica(const HmmParams& params, std::size_t length, std::uint64_t seed) {
  Realization real = sample_hmm(params, length, seed);
  std::vector<int> path;
  if (length <= 65536) {
    path = canonical_alignment(params, real.observed).path;
  } else {
    path = streaming_decode(params, real.observed).path;  // bounded memory
  }
  EmpiricalEstimates est = empirical_estimates(real.observed, path, params, 1e-12);
  ReplicaStats out;
  out.trans = std::move(est.trans);
  out.emissions = std::move(est.emissions);
  out.row_ok.resize(params.K);
  out.class_ok.resize(params.K);
  for (std::size_t l = 0; l < params.K; ++l) {
    out.row_ok[l] = !est.row_fallback[l];
    out.class_ok[l] = !est.class_fallback[l];
  }
  return out;
}

double replica_se(std::span<const double> values, double mean) {
  const std::size_t m = values.size();
  if (m < 2) return 0.0;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(m - 1) / static_cast<double>(m));
}

}  // namespace

CorrectionTable mc_limits(const HmmParams& params, std::size_t length, int replicas,
                          std::uint64_t seed, int threads) {
  validate_params(params);
  if (length < 1000) throw Error(ErrorCode::BadDimensions, "mc_limits needs length >= 1000");
  if (replicas < 2) throw Error(ErrorCode::BadDimensions, "mc_limits needs >= 2 replicas");
  const std::size_t K = params.K;

  std::vector<ReplicaStats> stats(replicas);
  int workers = std::max(1, std::min(threads, replicas));
  if (workers == 1) {
    for (int r = 0; r < replicas; ++r) stats[r] = mc_replica(params, length, derive_seed(seed, r));
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int r = next.fetch_add(1); r < replicas; r = next.fetch_add(1))
          stats[r] = mc_replica(params, length, derive_seed(seed, r));
      });
    for (auto& t : pool) t.join();
  }

  CorrectionTable table;
  table.method = CorrectionTable::Method::MonteCarlo;
  table.q.assign(K, std::vector<double>(K, 0.0));
  table.R.assign(K, std::vector<double>(K, 0.0));
  table.q_se.assign(K, std::vector<double>(K, 0.0));
  table.mu.resize(K);
  table.delta.resize(K);
  table.mu_se.resize(K);

  std::vector<double> vals;
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = 0; j < K; ++j) {
      vals.clear();
      for (const auto& s : stats)
        if (s.row_ok[i]) vals.push_back(s.trans[i][j]);
      if (vals.empty())
        throw Error(ErrorCode::EmptyClassInAllReplicas,
                    "state " + std::to_string(i + 1) + " never occupied");
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      table.q_se[i][j] = replica_se(vals, mean);
      std::tie(table.q[i][j], table.R[i][j]) =
          exact_complement(params.transition[i][j], mean);
    }
  }

  for (std::size_t l = 0; l < K; ++l) {
    const Emission& theta = params.emissions[l];
    auto collect = [&](auto getter) {
      vals.clear();
      for (const auto& s : stats)
        if (s.class_ok[l]) vals.push_back(getter(s.emissions[l]));
      if (vals.empty())
        throw Error(ErrorCode::EmptyClassInAllReplicas,
                    "class " + std::to_string(l + 1) + " empty in every replica");
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      return std::pair<double, double>(mean, replica_se(vals, mean));
    };

    Emission mu = theta;
    EmissionDelta delta, se;
    if (theta.kind == EmissionKind::Categorical) {
      delta.dprobs.resize(theta.probs.size());
      se.dprobs.resize(theta.probs.size());
      for (std::size_t sym = 0; sym < theta.probs.size(); ++sym) {
        auto [mean, sd] = collect([&](const Emission& e) { return e.probs[sym]; });
        se.dprobs[sym] = sd;
        std::tie(mu.probs[sym], delta.dprobs[sym]) = exact_complement(theta.probs[sym], mean);
      }
    } else {
      auto [mmean, mse] = collect([](const Emission& e) { return e.mean; });
      se.dmean = mse;
      std::tie(mu.mean, delta.dmean) = exact_complement(theta.mean, mmean);
      if (theta.kind == EmissionKind::Gaussian) {
        auto [vmean, vse] = collect([](const Emission& e) { return e.var; });
        se.dvar = vse;
        std::tie(mu.var, delta.dvar) = exact_complement(theta.var, vmean);
      }
    }
    table.mu[l] = std::move(mu);
    table.delta[l] = std::move(delta);
    table.mu_se[l] = std::move(se);
  }
  return table;
}

CorrectionProvider analytic_provider() {
  return [](const HmmParams& psi) { return analytic_corrections(psi); };
}

CorrectionProvider mc_provider(std::size_t length, int replicas, std::uint64_t seed,
                               int threads) {
  return [=](const HmmParams& psi) {
    return mc_limits(psi, length, replicas, derive_seed(seed, hash_params(psi)), threads);
  };
}

CorrectionProvider zero_provider() {
  return [](const HmmParams& psi) {
    CorrectionTable table;
    const std::size_t K = psi.K;
    table.q = psi.transition;
    table.R.assign(K, std::vector<double>(K, 0.0));
    table.mu.resize(K);
    table.delta.resize(K);
    for (std::size_t l = 0; l < K; ++l) {
      table.mu[l] = psi.emissions[l];
      table.delta[l].dprobs.assign(psi.emissions[l].probs.size(), 0.0);
    }
    return table;
  };
}

int LimitMeasureEstimate::bin_index(double x) const {
  if (atoms) return static_cast<int>(std::nearbyint(x));
  double u = (x - lo) / (hi - lo);
  int idx = static_cast<int>(std::floor(u * static_cast<double>(bins)));
  return std::clamp(idx, 0, bins - 1);
}

LimitMeasureEstimate estimate_limit_measures(const HmmParams& params, std::size_t n,
                                             std::uint64_t seed,
                                             const std::optional<BarrierSpec>& barrier,
                                             int bins) {
  validate_params(params);
  if (n < 10000) throw Error(ErrorCode::BadDimensions, "estimate_limit_measures needs n >= 10^4");
  if (barrier) barrier->validate(params.K);
  const std::size_t K = params.K;

  Realization real = sample_hmm(params, n, seed);
  StreamResult sres = streaming_decode(params, real.observed);
  const std::vector<int>& path = sres.path;

  LimitMeasureEstimate out;
  out.n = n;
  out.seed = seed;
  out.atoms = params.emissions[0].kind == EmissionKind::Categorical;
  if (out.atoms) {
    out.bins = params.emissions[0].alphabet();
  } else {
    out.bins = bins;
    auto [mn, mx] = std::minmax_element(real.observed.begin(), real.observed.end());
    out.lo = *mn;
    out.hi = *mx > *mn ? *mx : *mn + 1.0;
  }

  std::vector<std::vector<std::int64_t>> cQ(K, std::vector<std::int64_t>(out.bins, 0));
  std::vector<std::vector<std::int64_t>> cq(K, std::vector<std::int64_t>(K, 0));
  out.occupancy.assign(K, 0);
  out.occupancy_trans.assign(K, 0);
  for (std::size_t i = 0; i < n; ++i) {
    cQ[path[i]][out.bin_index(real.observed[i])] += 1;
    out.occupancy[path[i]] += 1;
    if (i + 1 < n) {
      cq[path[i]][path[i + 1]] += 1;
      out.occupancy_trans[path[i]] += 1;
    }
  }

  std::vector<std::int64_t> ones(K, 1);
  out.visited.resize(K);
  out.Q.assign(K, std::vector<double>(out.bins, 0.0));
  out.q.assign(K, std::vector<double>(K, 0.0));
  for (std::size_t l = 0; l < K; ++l) {
    out.visited[l] = out.occupancy[l] > 0;
    if (out.visited[l]) out.Q[l] = normalize_exact(cQ[l]);
    out.q[l] = out.occupancy_trans[l] > 0 ? normalize_exact(cq[l]) : normalize_exact(ones);
  }

  if (barrier) {
    try {
      out.regen = regeneration_summary(sres.events, *barrier, real.observed, real.hidden);
      if (out.regen.tau.size() >= 2) {
        std::vector<std::vector<std::int64_t>> rQ(K, std::vector<std::int64_t>(out.bins, 0));
        std::vector<std::vector<std::int64_t>> rq(K, std::vector<std::int64_t>(K, 0));
        const std::int64_t start = out.regen.tau.front();
        const std::int64_t stop = out.regen.tau.back();
        for (std::int64_t i = start + 1; i <= stop; ++i) {
          const std::size_t z = static_cast<std::size_t>(i - 1);
          rQ[path[z]][out.bin_index(real.observed[z])] += 1;
          if (i < static_cast<std::int64_t>(n)) rq[path[z]][path[z + 1]] += 1;
        }
        out.Q_regen.assign(K, std::vector<double>(out.bins, 0.0));
        out.q_regen.assign(K, std::vector<double>(K, 0.0));
        for (std::size_t l = 0; l < K; ++l) {
          std::int64_t qtot = 0, qtrans = 0;
          for (auto c : rQ[l]) qtot += c;
          for (auto c : rq[l]) qtrans += c;
          out.Q_regen[l] = qtot > 0 ? normalize_exact(rQ[l])
                                    : std::vector<double>(out.bins, 0.0);
          out.q_regen[l] = qtrans > 0 ? normalize_exact(rq[l]) : normalize_exact(ones);
        }
        out.has_regen = true;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoRegenerations) throw;
    }
  }
  return out;
}

std::vector<bool> dominance_nonempty(const std::vector<Emission>& emissions,
                                     std::span<const double> weights) {
  const std::size_t K = emissions.size();
  std::vector<bool> out(K, false);

  if (!emissions.empty() && emissions[0].kind == EmissionKind::Categorical) {
    const int A = emissions[0].alphabet();
    for (std::size_t l = 0; l < K; ++l) {
      for (int s = 0; s < A && !out[l]; ++s) {
        double mine = weights[l] * emissions[l].probs[s];
        if (!(emissions[l].probs[s] > 0.0)) continue;
        double other = 0.0;
        for (std::size_t i = 0; i < K; ++i)
          if (i != l) other = std::max(other, weights[i] * emissions[i].probs[s]);
        if (mine > other) out[l] = true;
      }
    }
    return out;
  }

  VoronoiPartition1D part = weighted_partition_1d(emissions, weights);
  for (std::size_t c = 0; c < part.interval_owner.size(); ++c)
    if (part.interval_owner[c] >= 0 && part.interval_unique[c])
      out[static_cast<std::size_t>(part.interval_owner[c])] = true;
  return out;
}

bool assumption_311_holds(const HmmParams& params) {
  std::vector<double> colmax(params.K, 0.0);
  for (std::size_t l = 0; l < params.K; ++l)
    for (std::size_t j = 0; j < params.K; ++j)
      colmax[l] = std::max(colmax[l], params.transition[j][l]);
  auto dom = dominance_nonempty(params.emissions, colmax);
  return std::all_of(dom.begin(), dom.end(), [](bool b) { return b; });
}

std::uint64_t hash_params(const HmmParams& params) {
  std::uint64_t h = 14695981039346656037ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffULL;
      h *= 1099511628211ULL;
    }
  };
  auto mixd = [&](double d) { mix(std::bit_cast<std::uint64_t>(d)); };
  mix(params.K);
  for (const auto& row : params.transition)
    for (double p : row) mixd(p);
  for (double p : params.initial) mixd(p);
  for (const auto& e : params.emissions) {
    mix(static_cast<std::uint64_t>(e.kind));
    mixd(e.mean);
    mixd(e.var);
    mix(e.probs.size());
    for (double p : e.probs) mixd(p);
  }
  return h;
}

double total_variation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::BadDimensions, "mismatched bin counts");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

}  // namespace hmmva
