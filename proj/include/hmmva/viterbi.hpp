#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hmmva/model.hpp"

namespace hmmva {

// Initial row of a trellis: ln pi + ln f (batch), or ln p_{row,.} + ln f
// (segment restarted after a node in state `row`).
enum class InitMode { Pi, Row };

// Log-domain view of the parameters shared by trellises of one model.
struct LogModel {
  std::size_t K = 0;
  std::vector<double> log_pi;
  std::vector<double> log_trans;  // K*K row-major
  std::vector<Emission> emissions;

  static std::shared_ptr<const LogModel> make(const HmmParams& params);
  double lt(int i, int j) const { return log_trans[static_cast<std::size_t>(i) * K + j]; }
};

// Log-domain forward trellis over one observation window. Stores the score
// rows ln delta_u(l) and the full maximizing-predecessor sets t(u, j) as
// bitmasks (node detection and the oracle need whole sets, not one pointer).
// Rows are appended one observation at a time so the streaming decoder can
// reuse it as its buffer.
class Trellis {
 public:
  Trellis(std::shared_ptr<const LogModel> model, InitMode mode = InitMode::Pi,
          int init_row = -1, std::int64_t window_origin = 1);

  // Appends the row for observation x. Returns false when the new row is
  // identically -inf (the window has zero likelihood from this initial row;
  // -inf keeps propagating on further pushes).
  bool push(double x);

  std::size_t length() const { return n_; }
  std::size_t num_states() const { return model_->K; }
  // u is 1-based within the window
  double score(std::size_t u, int l) const { return scores_[(u - 1) * model_->K + l]; }
  std::span<const double> row(std::size_t u) const {
    return {scores_.data() + (u - 1) * model_->K, model_->K};
  }
  // t(u, j): set of l maximizing delta_u(l) p_lj, valid for 1 <= u < n
  std::uint64_t pred_mask(std::size_t u, int j) const {
    return pred_[(u - 1) * model_->K + j];
  }
  double observation(std::size_t u) const { return obs_[u - 1]; }
  std::span<const double> observations() const { return obs_; }
  std::int64_t window_origin() const { return origin_; }
  InitMode init_mode() const { return mode_; }
  int init_row() const { return init_row_; }
  const LogModel& model() const { return *model_; }
  std::shared_ptr<const LogModel> model_ptr() const { return model_; }
  double max_final_score() const;

 private:
  std::shared_ptr<const LogModel> model_;
  InitMode mode_;
  int init_row_;
  std::int64_t origin_;
  std::size_t n_ = 0;
  std::vector<double> scores_;
  std::vector<std::uint64_t> pred_;
  std::vector<double> obs_;
};

Trellis forward_trellis(const HmmParams& params, std::span<const double> obs,
                        InitMode mode = InitMode::Pi, int init_row = -1,
                        std::int64_t window_origin = 1);

struct Alignment {
  std::vector<int> path;  // 0-based states
  double log_likelihood = kNegInf;
  std::string tie_policy_id = "reverse-lex-min";
};

// Canonical backtracking: v_n = smallest state attaining max delta_n, then
// v_u = smallest member of t(u, v_{u+1}).  Realizes the reverse-lexicographic
// minimum of the optimal set; the single tie policy used everywhere.
Alignment backtrack_canonical(const Trellis& trellis);

// Same selection constrained to end in state l at position u (the canonical
// member of the constrained maximizer set W^l).
std::vector<int> backtrack_constrained(const Trellis& trellis, std::size_t u, int l);

// ln pi_{y_1} + sum ln p + sum ln f; -inf when any factor is zero.
double path_log_likelihood(const HmmParams& params, std::span<const double> obs,
                           std::span<const int> path, InitMode mode = InitMode::Pi,
                           int init_row = -1);

// Exhaustive small-instance oracle: exactly the set of paths attaining the
// maximum likelihood (ties compared in log domain with the shared tolerance).
// Enforces K^n <= 10^6.
std::vector<std::vector<int>> brute_force_optimal_set(const HmmParams& params,
                                                      std::span<const double> obs,
                                                      InitMode mode = InitMode::Pi,
                                                      int init_row = -1);

// smallest path when compared from the last coordinate backward
std::vector<int> reverse_lex_min(const std::vector<std::vector<int>>& paths);

// batch canonical alignment (forward trellis + backtracking)
Alignment canonical_alignment(const HmmParams& params, std::span<const double> obs);

}  // namespace hmmva
