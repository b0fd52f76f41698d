#include "hmmva/training.hpp"

#include <algorithm>
#include <cmath>

namespace hmmva {

EmpiricalEstimates empirical_estimates(std::span<const double> x, std::span<const int> v,
                                       const HmmParams& fallback, double var_floor) {
  const std::size_t n = x.size();
  if (v.size() != n || n == 0)
    throw Error(ErrorCode::BadDimensions, "observations and alignment must have equal length");
  const std::size_t K = fallback.K;

  EmpiricalEstimates out;
  out.occupancy.assign(K, 0);
  out.class_samples.resize(K);
  std::vector<std::vector<std::int64_t>> counts(K, std::vector<std::int64_t>(K, 0));
  for (std::size_t m = 0; m + 1 < n; ++m) counts[v[m]][v[m + 1]] += 1;
  for (std::size_t m = 0; m < n; ++m) {
    out.occupancy[v[m]] += 1;
    out.class_samples[v[m]].add(x[m], 1.0);
  }

  out.trans.resize(K);
  out.row_fallback.assign(K, false);
  for (std::size_t i = 0; i < K; ++i) {
    std::int64_t row_total = 0;
    for (std::size_t j = 0; j < K; ++j) row_total += counts[i][j];
    if (row_total > 0) {
      out.trans[i] = normalize_exact(counts[i]);
    } else {
      out.trans[i] = fallback.transition[i];
      out.row_fallback[i] = true;
    }
  }

  out.emissions.resize(K);
  out.class_fallback.assign(K, false);
  for (std::size_t l = 0; l < K; ++l) {
    if (out.occupancy[l] > 0) {
      out.emissions[l] = weighted_mle(fallback.emissions[l], out.class_samples[l], var_floor);
    } else {
      out.emissions[l] = fallback.emissions[l];
      out.class_fallback[l] = true;
    }
  }
  return out;
}

namespace {

void push_history(TrainState& state, const HmmParams& params, int cap) {
  if (static_cast<int>(state.history.size()) < cap) state.history.push_back(params);
}

std::vector<double> clip_renormalize(std::vector<double> row) {
  bool clipped = false;
  double sum = 0.0;
  for (double& p : row) {
    if (p < 0.0) {
      p = 0.0;
      clipped = true;
    } else if (p > 1.0) {
      p = 1.0;
      clipped = true;
    }
    sum += p;
  }
  if (!clipped && std::abs(sum - 1.0) <= kRowSumTol) return row;
  if (!(sum > 0.0))
    throw Error(ErrorCode::NumericalFailure, "corrected transition row collapsed to zero");
  for (double& p : row) p /= sum;
  return row;
}

Emission apply_delta(const Emission& base, const EmissionDelta& delta, double var_floor) {
  Emission out = base;
  if (base.kind == EmissionKind::Categorical) {
    if (!delta.dprobs.empty()) {
      if (delta.dprobs.size() != out.probs.size())
        throw Error(ErrorCode::BadDimensions, "correction has wrong alphabet size");
      for (std::size_t s = 0; s < out.probs.size(); ++s) out.probs[s] += delta.dprobs[s];
      out.probs = clip_renormalize(std::move(out.probs));
    }
    return out;
  }
  out.mean += delta.dmean;
  if (base.kind == EmissionKind::Gaussian)
    out.var = std::max(out.var + delta.dvar, var_floor);
  return out;
}

}  // namespace

double param_distance(const HmmParams& a, const HmmParams& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.K; ++i)
    for (std::size_t j = 0; j < a.K; ++j)
      d = std::max(d, std::abs(a.transition[i][j] - b.transition[i][j]));
  for (std::size_t l = 0; l < a.K; ++l) {
    const Emission& ea = a.emissions[l];
    const Emission& eb = b.emissions[l];
    if (ea.kind == EmissionKind::Categorical) {
      for (std::size_t s = 0; s < ea.probs.size(); ++s)
        d = std::max(d, std::abs(ea.probs[s] - eb.probs[s]));
    } else {
      d = std::max(d, std::abs(ea.mean - eb.mean));
      if (ea.kind == EmissionKind::Gaussian) d = std::max(d, std::abs(ea.var - eb.var));
    }
  }
  return d;
}

TrainState vt_train(const HmmParams& psi0, std::span<const double> x,
                    const TrainOptions& options) {
  validate_params(psi0);
  if (options.max_iters < 1) throw Error(ErrorCode::BadDimensions, "max_iters must be >= 1");

  TrainState state;
  HmmParams psi = psi0;
  psi.stationary = false;  // pi stays fixed while P moves
  push_history(state, psi, options.history_cap);

  std::vector<int> v_prev;
  for (int k = 0; k <= options.max_iters; ++k) {
    Alignment align = canonical_alignment(psi, x);
    state.loglik_trace.push_back(align.log_likelihood);
    if (k > 0 && align.path == v_prev) {
      state.converged = true;
      state.alignment = std::move(align.path);
      break;
    }
    if (k == options.max_iters) {
      state.alignment = std::move(align.path);
      break;
    }
    EmpiricalEstimates est = empirical_estimates(x, align.path, psi, options.var_floor);
    psi.transition = est.trans;
    psi.emissions = est.emissions;
    state.last_row_fallback = est.row_fallback;
    state.last_class_fallback = est.class_fallback;
    state.iterations = k + 1;
    push_history(state, psi, options.history_cap);
    v_prev = std::move(align.path);
  }
  state.params = std::move(psi);
  return state;
}

TrainState va_train(const HmmParams& psi0, std::span<const double> x,
                    const CorrectionProvider& corrections, const TrainOptions& options) {
  validate_params(psi0);
  if (options.max_iters < 1) throw Error(ErrorCode::BadDimensions, "max_iters must be >= 1");
  if (!corrections) throw Error(ErrorCode::CorrectionUnavailable, "no correction provider");

  TrainState state;
  HmmParams psi = psi0;
  psi.stationary = false;
  push_history(state, psi, options.history_cap);

  for (int k = 0; k < options.max_iters; ++k) {
    Alignment align = canonical_alignment(psi, x);
    state.loglik_trace.push_back(align.log_likelihood);
    CorrectionTable table = corrections(psi);
    EmpiricalEstimates est = empirical_estimates(x, align.path, psi, options.var_floor);

    HmmParams next = psi;
    for (std::size_t i = 0; i < psi.K; ++i) {
      std::vector<double> row = est.trans[i];
      for (std::size_t j = 0; j < psi.K; ++j) row[j] += table.R[i][j];
      next.transition[i] = clip_renormalize(std::move(row));
    }
    for (std::size_t l = 0; l < psi.K; ++l)
      next.emissions[l] = apply_delta(est.emissions[l], table.delta[l], options.var_floor);

    state.last_row_fallback = est.row_fallback;
    state.last_class_fallback = est.class_fallback;
    state.alignment = std::move(align.path);
    state.iterations = k + 1;
    double move = param_distance(next, psi);
    psi = std::move(next);
    push_history(state, psi, options.history_cap);
    if (move < options.param_tol) {
      state.converged = true;
      break;
    }
  }
  state.params = std::move(psi);
  return state;
}

namespace {

struct EmStats {
  double loglik = 0.0;
  std::vector<double> gamma1;
  Matrix trans_num;                      // sum_t xi_t(i,j)
  std::vector<double> trans_den;         // sum_{t<n} gamma_t(i)
  std::vector<double> w_sum, wx_sum, wxx_sum;  // gaussian stats
  std::vector<std::vector<double>> wsym;       // categorical stats
};

EmStats em_e_step(const HmmParams& psi, std::span<const double> x) {
  const std::size_t n = x.size();
  const std::size_t K = psi.K;
  EmStats s;
  s.gamma1.assign(K, 0.0);
  s.trans_num.assign(K, std::vector<double>(K, 0.0));
  s.trans_den.assign(K, 0.0);
  s.w_sum.assign(K, 0.0);
  s.wx_sum.assign(K, 0.0);
  s.wxx_sum.assign(K, 0.0);
  s.wsym.resize(K);
  for (std::size_t l = 0; l < K; ++l)
    if (psi.emissions[l].kind == EmissionKind::Categorical)
      s.wsym[l].assign(psi.emissions[l].alphabet(), 0.0);

  std::vector<double> dens(n * K);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t l = 0; l < K; ++l)
      dens[t * K + l] = std::exp(psi.emissions[l].log_pdf(x[t]));

  // scaled forward pass
  std::vector<double> alpha(n * K);
  std::vector<double> c(n);
  for (std::size_t l = 0; l < K; ++l) alpha[l] = psi.initial[l] * dens[l];
  c[0] = 0.0;
  for (std::size_t l = 0; l < K; ++l) c[0] += alpha[l];
  if (!(c[0] > 0.0)) throw Error(ErrorCode::AllPathsImpossible, "zero likelihood at t=1");
  for (std::size_t l = 0; l < K; ++l) alpha[l] /= c[0];
  for (std::size_t t = 1; t < n; ++t) {
    double* cur = alpha.data() + t * K;
    const double* prev = alpha.data() + (t - 1) * K;
    for (std::size_t j = 0; j < K; ++j) {
      double a = 0.0;
      for (std::size_t i = 0; i < K; ++i) a += prev[i] * psi.transition[i][j];
      cur[j] = a * dens[t * K + j];
    }
    c[t] = 0.0;
    for (std::size_t j = 0; j < K; ++j) c[t] += cur[j];
    if (!(c[t] > 0.0))
      throw Error(ErrorCode::AllPathsImpossible, "zero likelihood at t=" + std::to_string(t + 1));
    for (std::size_t j = 0; j < K; ++j) cur[j] /= c[t];
  }
  for (std::size_t t = 0; t < n; ++t) s.loglik += std::log(c[t]);

  // backward pass accumulating sufficient statistics on the fly
  std::vector<double> beta(K, 1.0), beta_prev(K);
  auto accumulate_gamma = [&](std::size_t t, const std::vector<double>& b) {
    for (std::size_t l = 0; l < K; ++l) {
      double g = alpha[t * K + l] * b[l];
      if (t == 0) s.gamma1[l] = g;
      if (t + 1 < n) s.trans_den[l] += g;
      s.w_sum[l] += g;
      if (psi.emissions[l].kind == EmissionKind::Categorical) {
        int sym = static_cast<int>(std::nearbyint(x[t]));
        if (sym >= 0 && sym < psi.emissions[l].alphabet()) s.wsym[l][sym] += g;
      } else {
        s.wx_sum[l] += g * x[t];
        s.wxx_sum[l] += g * x[t] * x[t];
      }
    }
  };
  accumulate_gamma(n - 1, beta);
  for (std::size_t t = n - 1; t >= 1; --t) {
    beta_prev.assign(K, 0.0);
    for (std::size_t i = 0; i < K; ++i) {
      for (std::size_t j = 0; j < K; ++j) {
        double link = psi.transition[i][j] * dens[t * K + j] * beta[j] / c[t];
        beta_prev[i] += link;
        s.trans_num[i][j] += alpha[(t - 1) * K + i] * link;
      }
    }
    beta.swap(beta_prev);
    accumulate_gamma(t - 1, beta);
  }
  return s;
}

}  // namespace

TrainState em_train(const HmmParams& psi0, std::span<const double> x,
                    const TrainOptions& options) {
  validate_params(psi0);
  if (options.max_iters < 1) throw Error(ErrorCode::BadDimensions, "max_iters must be >= 1");

  TrainState state;
  HmmParams psi = psi0;
  psi.stationary = false;
  push_history(state, psi, options.history_cap);
  state.last_row_fallback.assign(psi.K, false);
  state.last_class_fallback.assign(psi.K, false);

  double prev_ll = kNegInf;
  for (int k = 0; k <= options.max_iters; ++k) {
    EmStats s = em_e_step(psi, x);
    state.loglik_trace.push_back(s.loglik);
    if (k > 0 && s.loglik - prev_ll < options.em_rel_tol * (1.0 + std::abs(prev_ll))) {
      state.converged = true;
      break;
    }
    if (k == options.max_iters) break;
    prev_ll = s.loglik;

    psi.initial = s.gamma1;
    for (std::size_t i = 0; i < psi.K; ++i) {
      if (s.trans_den[i] > 0.0) {
        for (std::size_t j = 0; j < psi.K; ++j)
          psi.transition[i][j] = s.trans_num[i][j] / s.trans_den[i];
        state.last_row_fallback[i] = false;
      } else {
        state.last_row_fallback[i] = true;
      }
    }
    for (std::size_t l = 0; l < psi.K; ++l) {
      Emission& e = psi.emissions[l];
      if (!(s.w_sum[l] > 0.0)) {
        state.last_class_fallback[l] = true;
        continue;
      }
      state.last_class_fallback[l] = false;
      if (e.kind == EmissionKind::Categorical) {
        double total = 0.0;
        for (double w : s.wsym[l]) total += w;
        for (std::size_t sym = 0; sym < e.probs.size(); ++sym)
          e.probs[sym] = s.wsym[l][sym] / total;
      } else {
        double mean = s.wx_sum[l] / s.w_sum[l];
        e.mean = mean;
        if (e.kind == EmissionKind::Gaussian)
          e.var = std::max(s.wxx_sum[l] / s.w_sum[l] - mean * mean, options.var_floor);
      }
    }
    state.iterations = k + 1;
    push_history(state, psi, options.history_cap);
  }
  state.params = std::move(psi);
  return state;
}

}  // namespace hmmva
