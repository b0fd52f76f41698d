#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hmmva/viterbi.hpp"

namespace hmmva {

// ln p^(r)_ij(u): maximal likelihood over r-step bridges from state i at u to
// state j at u+r+1 through observations x_{u+1:u+r}.
struct SegmentScores {
  std::int64_t base_u = 0;
  int order = 0;
  std::size_t K = 0;
  std::vector<double> m;  // K*K log-domain

  double at(int i, int j) const { return m[static_cast<std::size_t>(i) * K + j]; }
};

SegmentScores segment_scores(const LogModel& model, std::span<const double> bridge,
                             std::int64_t u, int r);
SegmentScores segment_scores(const HmmParams& params, std::span<const double> bridge,
                             std::int64_t u, int r);

struct NodeEvent {
  std::int64_t u = 0;      // absolute position of the node (1-based)
  int state = 0;           // l
  int order = 0;           // r
  bool strong = false;     // strict inequalities for all i != l
  std::int64_t detected_at = 0;  // u + r
};

// Weak/strong pass sets of the order-r node condition
// delta_u(l) p^(r)_lj >= delta_u(i) p^(r)_ij for all i, j (log domain, shared
// tie tolerance). Bit l of `weak` is set iff l qualifies.
struct NodePassSets {
  std::uint64_t weak = 0;
  std::uint64_t strong = 0;
};
NodePassSets node_pass_sets(std::span<const double> delta, const SegmentScores& seg);

// Smallest l satisfying the node condition at window position u_local, or
// nothing. The caller supplies matching segment scores (base_u, order).
std::optional<NodeEvent> detect_node(const Trellis& trellis, const SegmentScores& seg,
                                     std::size_t u_local);

// Batch scan over one trellis: for every position u the minimal order
// r <= min(r_max, n-u) at which the node condition fires, if any.
std::vector<NodeEvent> scan_nodes(const HmmParams& params, std::span<const double> obs,
                                  int r_max);

// Exact barrier decision by the max-plus basis test: the block is an
// l-barrier of order r iff the order-r node condition at block position M-r
// holds from every basis initial row i (delta after an arbitrary prefix is a
// max-plus combination of basis rows, and the node inequalities are monotone
// under max-plus combination). Returns (l, strong).
std::optional<std::pair<int, bool>> is_barrier(const HmmParams& params,
                                               std::span<const double> block, int r);

// acceptance set for one barrier position: interval for continuous
// observations, finite symbol set for categorical ones
struct ObsSet {
  bool symbolic = false;
  double lo = kNegInf;
  double hi = std::numeric_limits<double>::infinity();
  std::vector<int> symbols;  // sorted

  bool contains(double x) const;
};

struct BarrierSpec {
  int length = 0;  // M
  int order = 0;   // r
  int state = 0;   // l
  std::vector<ObsSet> sets;  // size M
  std::vector<int> witness;  // hidden witness path q_{1:M}

  void validate(std::size_t K) const;  // M > r >= 0, witness[M-1-r] == state
};

// separation condition (3.14): two blocks of B cannot occur at offsets <= r
bool barrier_sets_separated(const BarrierSpec& spec);

struct Segment {
  std::int64_t u_start = 0;
  std::int64_t u_end = 0;
  std::vector<int> states;
};

struct StreamStats {
  std::size_t arrivals = 0;
  std::size_t max_buffer = 0;
  std::uint64_t buffer_sum = 0;

  double mean_buffer() const {
    return arrivals ? static_cast<double>(buffer_sum) / static_cast<double>(arrivals) : 0.0;
  }
};

// Bounded-memory decoder. Keeps a trellis since the last emitted node; after
// each arrival at time t it tests positions u = t - r for orders r = 0..r_max
// (smallest r first, smallest l on ties). A detection at u -- respecting the
// separation u > u_prev + r_prev -- emits the segment up to u by canonical
// backtracking constrained to end in l, then restarts the trellis at u+1 with
// initial row p_{l.}, discarding the emitted buffer.
class StreamingDecoder {
 public:
  explicit StreamingDecoder(const HmmParams& params, int r_max = -1);  // default 2K

  std::optional<Segment> push(double x);
  std::optional<Segment> flush();  // residual segment, unconstrained backtracking

  const std::vector<NodeEvent>& events() const { return events_; }
  const StreamStats& stats() const { return stats_; }
  std::size_t buffer_size() const { return trellis_ ? trellis_->length() : 0; }
  std::int64_t time() const { return t_; }
  int r_max() const { return r_max_; }

 private:
  void restart(std::int64_t start, int row, std::span<const double> carry);

  std::shared_ptr<const LogModel> model_;
  int r_max_;
  std::int64_t t_ = 0;
  std::int64_t u_prev_ = 0;
  int r_prev_ = 0;
  std::unique_ptr<Trellis> trellis_;
  std::vector<NodeEvent> events_;
  StreamStats stats_;
  bool flushed_ = false;
};

struct StreamResult {
  std::vector<Segment> segments;  // includes the flush tail, if any
  std::vector<NodeEvent> events;
  StreamStats stats;
  std::vector<int> path;  // concatenation of all segments
};

StreamResult streaming_decode(const HmmParams& params, std::span<const double> obs,
                              int r_max = -1, bool flush = true);

// Regeneration bookkeeping: node times whose surrounding M-block lies in the
// barrier's acceptance sets become the observable regeneration times tau_i
// (theta-style detection). The hidden-path nu-style condition is recorded
// separately when the true hidden path is supplied.
struct RegenStats {
  std::vector<std::int64_t> node_positions;  // every detected node
  std::vector<std::int64_t> tau;             // barrier-certified subset
  std::vector<std::int64_t> tau_hidden;      // also matching the witness path
  std::vector<std::int64_t> cycle_lengths;   // T_i = tau_i - tau_{i-1}, i >= 1
  std::int64_t first_cycle = 0;              // T_0 = tau_0
  std::size_t k_n = 0;                       // number of certified times
  double mean_cycle = 0.0;
  double sd_cycle = 0.0;
};

RegenStats regeneration_summary(std::span<const NodeEvent> events,
                                const BarrierSpec& barrier, std::span<const double> obs,
                                std::span<const int> hidden = {});

}  // namespace hmmva
