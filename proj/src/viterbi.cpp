#include "hmmva/viterbi.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace hmmva {

std::shared_ptr<const LogModel> LogModel::make(const HmmParams& params) {
  auto m = std::make_shared<LogModel>();
  m->K = params.K;
  m->log_pi.resize(params.K);
  m->log_trans.resize(params.K * params.K);
  for (std::size_t i = 0; i < params.K; ++i) {
    m->log_pi[i] = params.initial[i] > 0.0 ? std::log(params.initial[i]) : kNegInf;
    for (std::size_t j = 0; j < params.K; ++j)
      m->log_trans[i * params.K + j] =
          params.transition[i][j] > 0.0 ? std::log(params.transition[i][j]) : kNegInf;
  }
  m->emissions = params.emissions;
  return m;
}

Trellis::Trellis(std::shared_ptr<const LogModel> model, InitMode mode, int init_row,
                 std::int64_t window_origin)
    : model_(std::move(model)), mode_(mode), init_row_(init_row), origin_(window_origin) {
  if (mode_ == InitMode::Row &&
      (init_row_ < 0 || static_cast<std::size_t>(init_row_) >= model_->K))
    throw Error(ErrorCode::BadDimensions, "init row out of range");
}

bool Trellis::push(double x) {
  const std::size_t K = model_->K;
  const std::size_t u = n_;
  scores_.resize((u + 1) * K);
  double* cur = scores_.data() + u * K;
  bool any_finite = false;

  if (u == 0) {
    for (std::size_t l = 0; l < K; ++l) {
      double init = mode_ == InitMode::Pi ? model_->log_pi[l]
                                          : model_->lt(init_row_, static_cast<int>(l));
      cur[l] = init + model_->emissions[l].log_pdf(x);
      any_finite |= cur[l] > kNegInf;
    }
  } else {
    pred_.resize(u * K);
    const double* prev = scores_.data() + (u - 1) * K;
    std::uint64_t* mask_row = pred_.data() + (u - 1) * K;
    for (std::size_t j = 0; j < K; ++j) {
      double best = kNegInf;
      for (std::size_t l = 0; l < K; ++l) {
        double v = prev[l] + model_->log_trans[l * K + j];
        if (v > best) best = v;
      }
      std::uint64_t mask = 0;
      for (std::size_t l = 0; l < K; ++l) {
        double v = prev[l] + model_->log_trans[l * K + j];
        if (v == best || best - v <= kTieTol) mask |= (1ULL << l);
      }
      mask_row[j] = mask;
      cur[j] = best + model_->emissions[j].log_pdf(x);
      any_finite |= cur[j] > kNegInf;
    }
  }
  obs_.push_back(x);
  ++n_;
  return any_finite;
}

double Trellis::max_final_score() const {
  double best = kNegInf;
  for (std::size_t l = 0; l < model_->K; ++l) best = std::max(best, score(n_, static_cast<int>(l)));
  return best;
}

Trellis forward_trellis(const HmmParams& params, std::span<const double> obs,
                        InitMode mode, int init_row, std::int64_t window_origin) {
  if (obs.empty()) throw Error(ErrorCode::BadDimensions, "empty observation window");
  Trellis t(LogModel::make(params), mode, init_row, window_origin);
  for (double x : obs) t.push(x);
  if (t.max_final_score() == kNegInf)
    throw Error(ErrorCode::AllPathsImpossible, "window has zero likelihood");
  return t;
}

namespace {

int lowest_set(std::uint64_t mask) { return std::countr_zero(mask); }

}  // namespace

Alignment backtrack_canonical(const Trellis& trellis) {
  const std::size_t n = trellis.length();
  const std::size_t K = trellis.num_states();
  if (n == 0) throw Error(ErrorCode::BadDimensions, "empty trellis");

  double best = trellis.max_final_score();
  if (best == kNegInf)
    throw Error(ErrorCode::AllPathsImpossible, "no positive-likelihood path");
  int vn = -1;
  for (std::size_t l = 0; l < K; ++l) {
    double s = trellis.score(n, static_cast<int>(l));
    if (s == best || best - s <= kTieTol) {
      vn = static_cast<int>(l);
      break;
    }
  }

  Alignment out;
  out.path = backtrack_constrained(trellis, n, vn);
  out.log_likelihood = trellis.score(n, vn);
  return out;
}

std::vector<int> backtrack_constrained(const Trellis& trellis, std::size_t u, int l) {
  if (u < 1 || u > trellis.length())
    throw Error(ErrorCode::BadDimensions, "backtrack position out of range");
  std::vector<int> path(u);
  path[u - 1] = l;
  for (std::size_t k = u - 1; k >= 1; --k)
    path[k - 1] = lowest_set(trellis.pred_mask(k, path[k]));
  return path;
}

double path_log_likelihood(const HmmParams& params, std::span<const double> obs,
                           std::span<const int> path, InitMode mode, int init_row) {
  if (obs.size() != path.size() || obs.empty())
    throw Error(ErrorCode::BadDimensions, "observations and path must have equal length >= 1");
  auto logp = [&](double p) { return p > 0.0 ? std::log(p) : kNegInf; };
  double ll = mode == InitMode::Pi ? logp(params.initial[path[0]])
                                   : logp(params.transition[init_row][path[0]]);
  ll += params.emissions[path[0]].log_pdf(obs[0]);
  for (std::size_t i = 1; i < path.size(); ++i) {
    ll += logp(params.transition[path[i - 1]][path[i]]);
    ll += params.emissions[path[i]].log_pdf(obs[i]);
    if (ll == kNegInf) return kNegInf;
  }
  return ll;
}

std::vector<std::vector<int>> brute_force_optimal_set(const HmmParams& params,
                                                      std::span<const double> obs,
                                                      InitMode mode, int init_row) {
  const std::size_t K = params.K;
  const std::size_t n = obs.size();
  if (n == 0) throw Error(ErrorCode::BadDimensions, "empty observation window");
  double total = std::pow(static_cast<double>(K), static_cast<double>(n));
  if (total > 1e6) throw Error(ErrorCode::InstanceTooLarge, "K^n exceeds 10^6");

  std::vector<int> path(n, 0);
  double best = kNegInf;
  // pass 1: maximum
  for (;;) {
    best = std::max(best, path_log_likelihood(params, obs, path, mode, init_row));
    std::size_t d = 0;
    while (d < n && ++path[d] == static_cast<int>(K)) path[d++] = 0;
    if (d == n) break;
  }
  if (best == kNegInf)
    throw Error(ErrorCode::AllPathsImpossible, "no positive-likelihood path");
  // pass 2: collect the argmax set under the shared tie tolerance
  std::vector<std::vector<int>> out;
  std::fill(path.begin(), path.end(), 0);
  for (;;) {
    double ll = path_log_likelihood(params, obs, path, mode, init_row);
    if (ll == best || best - ll <= kTieTol) out.push_back(path);
    std::size_t d = 0;
    while (d < n && ++path[d] == static_cast<int>(K)) path[d++] = 0;
    if (d == n) break;
  }
  return out;
}

std::vector<int> reverse_lex_min(const std::vector<std::vector<int>>& paths) {
  if (paths.empty()) throw Error(ErrorCode::BadDimensions, "empty path set");
  const std::vector<int>* min = &paths[0];
  for (const auto& p : paths) {
    for (std::size_t k = p.size(); k >= 1; --k) {
      if (p[k - 1] != (*min)[k - 1]) {
        if (p[k - 1] < (*min)[k - 1]) min = &p;
        break;
      }
    }
  }
  return *min;
}

Alignment canonical_alignment(const HmmParams& params, std::span<const double> obs) {
  return backtrack_canonical(forward_trellis(params, obs));
}

}  // namespace hmmva
