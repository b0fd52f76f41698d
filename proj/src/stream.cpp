#include "hmmva/stream.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace hmmva {

SegmentScores segment_scores(const LogModel& model, std::span<const double> bridge,
                             std::int64_t u, int r) {
  if (r < 0 || bridge.size() != static_cast<std::size_t>(r))
    throw Error(ErrorCode::BadDimensions, "bridge window must hold exactly r observations");
  const std::size_t K = model.K;
  SegmentScores out;
  out.base_u = u;
  out.order = r;
  out.K = K;
  out.m = model.log_trans;  // p^(0)_ij = p_ij
  std::vector<double> next(K * K), logf(K);
  for (int step = 0; step < r; ++step) {
    double x = bridge[step];
    for (std::size_t q = 0; q < K; ++q) logf[q] = model.emissions[q].log_pdf(x);
    for (std::size_t i = 0; i < K; ++i) {
      for (std::size_t j = 0; j < K; ++j) {
        double best = kNegInf;
        for (std::size_t q = 0; q < K; ++q) {
          double v = out.m[i * K + q] + logf[q] + model.log_trans[q * K + j];
          if (v > best) best = v;
        }
        next[i * K + j] = best;
      }
    }
    out.m.swap(next);
  }
  return out;
}

SegmentScores segment_scores(const HmmParams& params, std::span<const double> bridge,
                             std::int64_t u, int r) {
  return segment_scores(*LogModel::make(params), bridge, u, r);
}

NodePassSets node_pass_sets(std::span<const double> delta, const SegmentScores& seg) {
  const std::size_t K = seg.K;
  NodePassSets out;
  for (std::size_t l = 0; l < K; ++l) {
    bool weak = true, strong = true;
    for (std::size_t i = 0; i < K && weak; ++i) {
      for (std::size_t j = 0; j < K; ++j) {
        double lhs = delta[l] + seg.at(static_cast<int>(l), static_cast<int>(j));
        double rhs = delta[i] + seg.at(static_cast<int>(i), static_cast<int>(j));
        if (!ge_tol(lhs, rhs)) {
          weak = false;
          strong = false;
          break;
        }
        if (i != l && !gt_strict(lhs, rhs)) strong = false;
      }
    }
    if (weak) out.weak |= (1ULL << l);
    if (strong) out.strong |= (1ULL << l);
  }
  return out;
}

std::optional<NodeEvent> detect_node(const Trellis& trellis, const SegmentScores& seg,
                                     std::size_t u_local) {
  if (u_local < 1 || u_local > trellis.length())
    throw Error(ErrorCode::BadDimensions, "node position outside the trellis window");
  NodePassSets sets = node_pass_sets(trellis.row(u_local), seg);
  if (sets.weak == 0) return std::nullopt;
  int l = std::countr_zero(sets.weak);
  NodeEvent ev;
  ev.u = trellis.window_origin() + static_cast<std::int64_t>(u_local) - 1;
  ev.state = l;
  ev.order = seg.order;
  ev.strong = (sets.strong >> l) & 1ULL;
  ev.detected_at = ev.u + seg.order;
  return ev;
}

std::vector<NodeEvent> scan_nodes(const HmmParams& params, std::span<const double> obs,
                                  int r_max) {
  Trellis trellis = forward_trellis(params, obs);
  auto model = trellis.model_ptr();
  const std::size_t n = obs.size();
  std::vector<NodeEvent> out;
  for (std::size_t u = 1; u <= n; ++u) {
    int rcap = std::min<int>(r_max, static_cast<int>(n - u));
    for (int r = 0; r <= rcap; ++r) {
      SegmentScores seg = segment_scores(*model, obs.subspan(u, static_cast<std::size_t>(r)),
                                         static_cast<std::int64_t>(u), r);
      if (auto ev = detect_node(trellis, seg, u)) {
        out.push_back(*ev);
        break;
      }
    }
  }
  return out;
}

std::optional<std::pair<int, bool>> is_barrier(const HmmParams& params,
                                               std::span<const double> block, int r) {
  const int M = static_cast<int>(block.size());
  if (M <= r || r < 0) throw Error(ErrorCode::BadDimensions, "barrier test needs M > r >= 0");
  auto model = LogModel::make(params);
  const std::size_t K = model->K;
  const int u_local = M - r;

  SegmentScores seg =
      segment_scores(*model, block.subspan(static_cast<std::size_t>(u_local), r), u_local, r);

  std::uint64_t weak = ~0ULL >> (64 - K);
  std::uint64_t strong = weak;
  for (std::size_t i = 0; i < K; ++i) {
    Trellis basis(model, InitMode::Row, static_cast<int>(i));
    for (int p = 0; p < u_local; ++p) basis.push(block[p]);  // dead rows pass trivially
    NodePassSets sets = node_pass_sets(basis.row(u_local), seg);
    weak &= sets.weak;
    strong &= sets.strong;
    if (weak == 0) return std::nullopt;
  }
  int l = std::countr_zero(weak);
  return std::make_pair(l, static_cast<bool>((strong >> l) & 1ULL));
}

bool ObsSet::contains(double x) const {
  if (!symbolic) return x >= lo && x <= hi;
  double r = std::nearbyint(x);
  if (std::abs(x - r) > 1e-9) return false;
  return std::binary_search(symbols.begin(), symbols.end(), static_cast<int>(r));
}

void BarrierSpec::validate(std::size_t K) const {
  if (length <= order || order < 0)
    throw Error(ErrorCode::BadDimensions, "barrier spec needs M > r >= 0");
  if (sets.size() != static_cast<std::size_t>(length))
    throw Error(ErrorCode::BadDimensions, "barrier spec needs one acceptance set per position");
  if (state < 0 || static_cast<std::size_t>(state) >= K)
    throw Error(ErrorCode::BadDimensions, "barrier target state out of range");
  if (!witness.empty()) {
    if (witness.size() != static_cast<std::size_t>(length))
      throw Error(ErrorCode::BadDimensions, "witness path must have length M");
    for (int q : witness)
      if (q < 0 || static_cast<std::size_t>(q) >= K)
        throw Error(ErrorCode::BadDimensions, "witness state out of range");
    if (witness[static_cast<std::size_t>(length - 1 - order)] != state)
      throw Error(ErrorCode::BadDimensions, "witness must pass through l at position M - r");
  }
}

namespace {

bool sets_disjoint(const ObsSet& a, const ObsSet& b) {
  if (a.symbolic != b.symbolic) return true;  // different observation kinds
  if (a.symbolic) {
    for (int s : a.symbols)
      if (std::binary_search(b.symbols.begin(), b.symbols.end(), s)) return false;
    return true;
  }
  return a.lo > b.hi || b.lo > a.hi;
}

}  // namespace

bool barrier_sets_separated(const BarrierSpec& spec) {
  for (int s = 1; s <= spec.order; ++s) {
    bool blocked = false;
    for (int m = 0; m + s < spec.length; ++m) {
      if (sets_disjoint(spec.sets[m], spec.sets[m + s])) {
        blocked = true;
        break;
      }
    }
    if (!blocked) return false;
  }
  return true;
}

StreamingDecoder::StreamingDecoder(const HmmParams& params, int r_max)
    : model_(LogModel::make(validate_params(params))),
      r_max_(r_max < 0 ? 2 * static_cast<int>(params.K) : r_max) {
  trellis_ = std::make_unique<Trellis>(model_, InitMode::Pi, -1, 1);
}

void StreamingDecoder::restart(std::int64_t start, int row, std::span<const double> carry) {
  trellis_ = std::make_unique<Trellis>(model_, InitMode::Row, row, start);
  for (double x : carry) trellis_->push(x);
}

std::optional<Segment> StreamingDecoder::push(double x) {
  if (flushed_) throw Error(ErrorCode::ConfigError, "push after flush");
  ++t_;
  if (!trellis_->push(x))
    throw Error(ErrorCode::AllPathsImpossible,
                "observation at t=" + std::to_string(t_) + " has zero likelihood");
  stats_.arrivals += 1;
  stats_.buffer_sum += trellis_->length();
  stats_.max_buffer = std::max(stats_.max_buffer, trellis_->length());

  const std::int64_t origin = trellis_->window_origin();
  for (int r = 0; r <= r_max_; ++r) {
    const std::int64_t u = t_ - r;
    if (u < origin) break;
    if (u <= u_prev_ + r_prev_) break;  // separation (3.14) discipline
    const std::size_t u_local = static_cast<std::size_t>(u - origin + 1);
    SegmentScores seg = segment_scores(
        *model_, trellis_->observations().subspan(u_local, static_cast<std::size_t>(r)), u, r);
    auto ev = detect_node(*trellis_, seg, u_local);
    if (!ev) continue;
    ev->detected_at = t_;
    events_.push_back(*ev);

    Segment out;
    out.u_start = origin;
    out.u_end = u;
    out.states = backtrack_constrained(*trellis_, u_local, ev->state);

    std::vector<double> carry(trellis_->observations().begin() + u_local,
                              trellis_->observations().end());
    restart(u + 1, ev->state, carry);
    u_prev_ = u;
    r_prev_ = r;
    return out;
  }
  return std::nullopt;
}

std::optional<Segment> StreamingDecoder::flush() {
  if (flushed_) return std::nullopt;
  flushed_ = true;
  if (!trellis_ || trellis_->length() == 0) return std::nullopt;
  Alignment tail = backtrack_canonical(*trellis_);
  Segment out;
  out.u_start = trellis_->window_origin();
  out.u_end = t_;
  out.states = std::move(tail.path);
  trellis_.reset();
  return out;
}

StreamResult streaming_decode(const HmmParams& params, std::span<const double> obs,
                              int r_max, bool flush) {
  StreamingDecoder dec(params, r_max);
  StreamResult out;
  for (double x : obs) {
    if (auto seg = dec.push(x)) out.segments.push_back(std::move(*seg));
  }
  if (flush) {
    if (auto tail = dec.flush()) out.segments.push_back(std::move(*tail));
  }
  out.events = dec.events();
  out.stats = dec.stats();
  for (const auto& seg : out.segments)
    out.path.insert(out.path.end(), seg.states.begin(), seg.states.end());
  return out;
}

RegenStats regeneration_summary(std::span<const NodeEvent> events,
                                const BarrierSpec& barrier, std::span<const double> obs,
                                std::span<const int> hidden) {
  if (!hidden.empty() && hidden.size() != obs.size())
    throw Error(ErrorCode::BadDimensions, "hidden path length must match observations");
  const std::int64_t n = static_cast<std::int64_t>(obs.size());
  const int M = barrier.length;
  const int r = barrier.order;

  RegenStats out;
  for (const auto& ev : events) {
    out.node_positions.push_back(ev.u);
    if (ev.state != barrier.state) continue;
    const std::int64_t nu = ev.u - (M - 1) + r;  // tau_i = nu_i + (M-1) - r
    if (nu < 1 || nu + M - 1 > n) continue;
    bool inside = true;
    for (int m = 0; m < M && inside; ++m)
      inside = barrier.sets[m].contains(obs[static_cast<std::size_t>(nu - 1 + m)]);
    if (!inside) continue;
    out.tau.push_back(ev.u);
    if (!hidden.empty() && !barrier.witness.empty()) {
      bool match = true;
      for (int m = 0; m < M && match; ++m)
        match = hidden[static_cast<std::size_t>(nu - 1 + m)] == barrier.witness[m];
      if (match) out.tau_hidden.push_back(ev.u);
    }
  }
  if (out.tau.empty())
    throw Error(ErrorCode::NoRegenerations, "no barrier-certified node times");

  out.k_n = out.tau.size();
  out.first_cycle = out.tau.front();
  for (std::size_t i = 1; i < out.tau.size(); ++i)
    out.cycle_lengths.push_back(out.tau[i] - out.tau[i - 1]);
  if (!out.cycle_lengths.empty()) {
    double mean = 0.0;
    for (auto t : out.cycle_lengths) mean += static_cast<double>(t);
    mean /= static_cast<double>(out.cycle_lengths.size());
    double ss = 0.0;
    for (auto t : out.cycle_lengths) {
      double d = static_cast<double>(t) - mean;
      ss += d * d;
    }
    out.mean_cycle = mean;
    out.sd_cycle = out.cycle_lengths.size() > 1
                       ? std::sqrt(ss / static_cast<double>(out.cycle_lengths.size() - 1))
                       : 0.0;
  }
  return out;
}

}  // namespace hmmva
