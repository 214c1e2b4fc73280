#pragma once
// Coherent MLSE over the CPM trellis.
//
// Every implemented code factors the phase memory of antenna m at slot n as
//   theta_m(n) = psi(n) + offset_m(n),
// where psi(n) = (h/2) * sum of symbols that have left the pulse window (a
// multiple of 1/p) and offset_m(n) is data independent. The trellis state is
// therefore (psi index mod p, last gamma-1 symbols) for all antennas at once,
// giving p * M^(gamma-1) states; candidate signals are precomputed base
// waveforms rotated by exp(j 2 pi (psi + offset)).

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <vector>

#include "stccpm/channel.hpp"
#include "stccpm/stc.hpp"

namespace stccpm {

enum class Metric {
  Joint,       // D1: full block distance with cross terms, M^Lt hypotheses per state
  Blockwise,   // D2: per-antenna distances, cross terms dropped (orthogonal codes)
  Symbolwise,  // D3: per-slot distance with the summed hypothesis (parallel codes)
};

inline std::string metric_name(Metric m) {
  switch (m) {
    case Metric::Joint: return "joint";
    case Metric::Blockwise: return "blockwise";
    case Metric::Symbolwise: return "symbolwise";
  }
  return "?";
}

inline std::optional<Metric> parse_metric(const std::string& s) {
  for (auto m : {Metric::Joint, Metric::Blockwise, Metric::Symbolwise})
    if (metric_name(m) == s) return m;
  return std::nullopt;
}

struct DecoderConfig {
  Metric metric = Metric::Blockwise;
  int truncation = 10;  // survivor depth in code blocks

  void validate() const {
    if (truncation < 1) throw std::invalid_argument("truncation must be >= 1");
  }
};

struct DecodeCounters {
  std::uint64_t branch_metrics = 0;  // (state, hypothesis) metric evaluations
  std::uint64_t correlations = 0;    // inner products of y with a candidate base waveform
  std::uint64_t state_steps = 0;     // survivors summed over trellis steps
  std::uint64_t steps = 0;
  std::uint64_t blocks = 0;

  /// Branch-metric evaluations per trellis state per code block.
  double evaluations_per_state_block() const {
    if (state_steps == 0 || blocks == 0) return 0.0;
    return static_cast<double>(branch_metrics) / static_cast<double>(state_steps) * static_cast<double>(steps) /
           static_cast<double>(blocks);
  }
};

// ---------------------------------------------------------------------------
// Direct-form distances (oracle side; the decoder uses expanded forms)

namespace detail {
inline double slot_distance(std::span<const cplx> y, std::span<const cplx> x, double dt) {
  std::vector<cplx> e(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) e[k] = y[k] - x[k];
  return energy(e, dt);
}
}  // namespace detail

/// D1: sum over Rx antennas and slots of integral |y - sum_m alpha_m s_m|^2.
inline double metric_joint(const ReceivedBlock& y, const ChannelRealization& ch, const SignalBlock& cand) {
  double acc = 0.0;
  for (int n = 0; n < ch.Lr; ++n)
    for (std::size_t r = 0; r < cand.slots.front().size(); ++r) {
      const auto& yr = y.y[static_cast<std::size_t>(n)][r];
      std::vector<cplx> x(yr.size());
      for (int m = 0; m < cand.Lt; ++m) {
        const auto& s = cand.slots[static_cast<std::size_t>(m)][r].samples;
        for (std::size_t k = 0; k < x.size(); ++k) x[k] += ch(n, m) * s[k];
      }
      acc += detail::slot_distance(yr, x, y.dt);
    }
  return acc;
}

/// D2: sum over Rx antennas, Tx antennas and slots of integral |y - alpha_m s_{m,r}|^2.
inline double metric_blockwise(const ReceivedBlock& y, const ChannelRealization& ch, const SignalBlock& cand) {
  double acc = 0.0;
  for (int n = 0; n < ch.Lr; ++n)
    for (int m = 0; m < cand.Lt; ++m)
      for (std::size_t r = 0; r < cand.slots.front().size(); ++r) {
        const auto& yr = y.y[static_cast<std::size_t>(n)][r];
        const auto& s = cand.slots[static_cast<std::size_t>(m)][r].samples;
        std::vector<cplx> x(yr.size());
        for (std::size_t k = 0; k < x.size(); ++k) x[k] = ch(n, m) * s[k];
        acc += detail::slot_distance(yr, x, y.dt);
      }
  return acc;
}

/// D3 over one slot r of a block, summed hypothesis across antennas.
inline double metric_symbolwise(const StCode& code, const ReceivedBlock& y, const ChannelRealization& ch,
                                const SignalBlock& cand, int r) {
  if (code.mapping() != MappingScheme::Parallel)
    throw std::invalid_argument("metric_symbolwise: requires a parallel-mapping code");
  double acc = 0.0;
  for (int n = 0; n < ch.Lr; ++n) {
    const auto& yr = y.y[static_cast<std::size_t>(n)][static_cast<std::size_t>(r)];
    std::vector<cplx> x(yr.size());
    for (int m = 0; m < cand.Lt; ++m) {
      const auto& s = cand.slots[static_cast<std::size_t>(m)][static_cast<std::size_t>(r)].samples;
      for (std::size_t k = 0; k < x.size(); ++k) x[k] += ch(n, m) * s[k];
    }
    acc += detail::slot_distance(yr, x, y.dt);
  }
  return acc;
}

/// Integral of |y|^2 over the block, summed over Rx antennas.
inline double received_energy(const ReceivedBlock& y) {
  double acc = 0.0;
  for (const auto& rx : y.y)
    for (const auto& slot : rx) acc += energy(slot, y.dt);
  return acc;
}

// ---------------------------------------------------------------------------
// Trellis

class Trellis {
 public:
  /// Candidate signals of one slot for a given window, per antenna, before
  /// the (psi + offset) rotation, plus their mutual inner products.
  struct SlotCandidate {
    std::vector<std::vector<cplx>> base;  // [m]
    std::vector<cplx> gram;               // [m * Lt + m']
  };

  /// Candidate signals of one block for a given (history, block symbols)
  /// context, started from zero phase memory.
  struct BlockCandidate {
    std::vector<std::vector<std::vector<cplx>>> base;  // [m][r]
    std::vector<std::vector<cplx>> gram;               // [r][m * Lt + m']
  };

  Trellis(StCode code, CpmParams params, bool with_block_candidates = true)
      : code_(std::move(code)), params_(params) {
    code_.validate();
    params_.validate();
    alphabet_ = params_.alphabet();
    radix_ = params_.M + 1;
    residual_ = xi_residuals(code_, params_);
    for (auto& row : residual_) {
      double s = 0.0;
      for (double v : row) s += v;
      block_residual_.push_back(wrap_cycles(s));
    }
    if (code_.causal()) build_slot_candidates();
    if (with_block_candidates || !code_.causal()) build_block_candidates();
  }

  const StCode& code() const { return code_; }
  const CpmParams& params() const { return params_; }
  int Lt() const { return code_.Lt; }

  std::size_t state_count() const {
    std::size_t n = static_cast<std::size_t>(params_.p);
    for (int i = 0; i < params_.gamma - 1; ++i) n *= static_cast<std::size_t>(params_.M);
    return n;
  }
  int branches_per_state() const { return params_.M; }
  bool has_slot_candidates() const { return !slot_.empty(); }
  bool has_block_candidates() const { return !block_.empty(); }

  /// Data-independent phase offset of antenna m at the start of absolute slot n.
  double offset(int m, long long n) const {
    const auto mi = static_cast<std::size_t>(m);
    const long long blocks = n / code_.Lt;
    double acc = code_.theta0[mi] + wrap_cycles(static_cast<double>(blocks % (1LL << 40)) * block_residual_[mi]);
    for (long long r = 0; r < n - blocks * code_.Lt; ++r) acc += residual_[mi][static_cast<std::size_t>(r)];
    return wrap_cycles(acc);
  }

  /// Data-independent part of xi at the end of slot position r.
  double residual(int m, int r) const { return residual_[static_cast<std::size_t>(m)][static_cast<std::size_t>(r)]; }

  /// Key of a symbol sequence (0 = padding before the stream start).
  std::size_t encode_symbols(std::span<const int> s) const {
    std::size_t key = 0;
    for (auto it = s.rbegin(); it != s.rend(); ++it) key = key * radix_ + digit(*it);
    return key;
  }

  const SlotCandidate& slot_candidate(int r, std::span<const int> window) const {
    const std::size_t key = static_cast<std::size_t>(r) * slot_stride_ + encode_symbols(window);
    const auto idx = slot_index_.at(key);
    if (idx < 0) throw std::out_of_range("slot candidate not in trellis");
    return slot_[static_cast<std::size_t>(idx)];
  }

  /// `context`: gamma-1 history symbols newest first, then the Lt block symbols.
  const BlockCandidate& block_candidate(std::span<const int> hist_newest_first, std::span<const int> block) const {
    std::vector<int> ctx(hist_newest_first.begin(), hist_newest_first.end());
    ctx.insert(ctx.end(), block.begin(), block.end());
    const auto idx = block_index_.at(encode_symbols(ctx));
    if (idx < 0) throw std::out_of_range("block candidate not in trellis");
    return block_[static_cast<std::size_t>(idx)];
  }

  // Integer-key access used by the decoder. Keys weight element i of a
  // sequence by radix^i, radix = M + 1, digit 0 being padding.
  std::size_t radix() const { return radix_; }
  std::size_t digit(int s) const {
    if (s == 0) return 0;
    return static_cast<std::size_t>((s + params_.M - 1) / 2 + 1);
  }
  int symbol_of_digit(std::size_t dg) const { return dg == 0 ? 0 : alphabet_[dg - 1]; }
  std::size_t window_keys() const { return slot_stride_; }
  const SlotCandidate* slot_candidate_at(int r, std::size_t wkey) const {
    const int idx = slot_index_[static_cast<std::size_t>(r) * slot_stride_ + wkey];
    return idx < 0 ? nullptr : &slot_[static_cast<std::size_t>(idx)];
  }
  const BlockCandidate* block_candidate_at(std::size_t key) const {
    const int idx = block_index_[key];
    return idx < 0 ? nullptr : &block_[static_cast<std::size_t>(idx)];
  }

  /// Reconstruct the absolute candidate of antenna m in slot n from a trellis
  /// state: base * exp(j 2 pi (psi + offset)).
  std::vector<cplx> rotated_slot(int m, long long n, int psi_index, std::span<const int> window) const {
    const auto& c = slot_candidate(static_cast<int>(n % code_.Lt), window);
    const cplx u = phasor(static_cast<double>(psi_index) / params_.p + offset(m, n));
    std::vector<cplx> out(c.base[static_cast<std::size_t>(m)]);
    for (auto& v : out) v *= u;
    return out;
  }

 private:

  // All windows: full-alphabet ones plus those with a zero-padded tail.
  std::vector<std::vector<int>> windows(int length, int min_real) const {
    std::vector<std::vector<int>> out;
    for (int real = min_real; real <= length; ++real) {
      std::vector<int> idx(static_cast<std::size_t>(real), 0);
      while (true) {
        std::vector<int> w(static_cast<std::size_t>(length), 0);
        for (int i = 0; i < real; ++i) w[static_cast<std::size_t>(i)] = alphabet_[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
        out.push_back(std::move(w));
        int k = real - 1;
        while (k >= 0 && ++idx[static_cast<std::size_t>(k)] == params_.M) idx[static_cast<std::size_t>(k--)] = 0;
        if (k < 0) break;
      }
    }
    return out;
  }

  static std::size_t ipow(std::size_t b, int e) {
    std::size_t v = 1;
    for (int i = 0; i < e; ++i) v *= b;
    return v;
  }

  void build_slot_candidates() {
    const int g = params_.gamma;
    slot_stride_ = ipow(radix_, g);
    slot_index_.assign(slot_stride_ * static_cast<std::size_t>(code_.Lt), -1);
    const auto ws = windows(g, 1);
    for (int r = 0; r < code_.Lt; ++r)
      for (const auto& w : ws) {
        // window newest first -> context (history newest first, block symbols)
        std::vector<int> hist(w.begin() + 1, w.end());
        std::vector<int> blk(static_cast<std::size_t>(code_.Lt), 0);
        blk[static_cast<std::size_t>(r)] = w[0];
        // slot r of a parallel code reads symbols r, r-1, ..., r-gamma+1
        std::vector<int> full_hist;
        for (int i = 1; i < g; ++i) {
          const int j = r - i;
          if (j >= 0)
            blk[static_cast<std::size_t>(j)] = w[static_cast<std::size_t>(i)];
          else
            full_hist.push_back(w[static_cast<std::size_t>(i)]);
        }
        full_hist.resize(static_cast<std::size_t>(g - 1), 0);
        // the part of the window that precedes the block is history; pad the
        // rest with zeros (unused by slot r)
        BlockContext ctx(full_hist, blk, g);
        SlotCandidate c;
        const double a = amplitude(params_, code_.Lt);
        for (int m = 0; m < code_.Lt; ++m) {
          std::vector<cplx> b(static_cast<std::size_t>(params_.oversampling) + 1);
          for (int k = 0; k <= params_.oversampling; ++k) {
            const double tau = k * params_.dt();
            b[static_cast<std::size_t>(k)] = a * phasor(slot_phase(code_, params_, ctx, m, r, tau));
          }
          c.base.push_back(std::move(b));
        }
        c.gram.resize(static_cast<std::size_t>(code_.Lt * code_.Lt));
        for (int m = 0; m < code_.Lt; ++m)
          for (int k = 0; k < code_.Lt; ++k)
            c.gram[static_cast<std::size_t>(m * code_.Lt + k)] =
                inner_product(c.base[static_cast<std::size_t>(m)], c.base[static_cast<std::size_t>(k)], params_.dt());
        slot_index_[static_cast<std::size_t>(r) * slot_stride_ + encode_symbols(w)] = static_cast<int>(slot_.size());
        slot_.push_back(std::move(c));
      }
  }

  void build_block_candidates() {
    const int g = params_.gamma;
    const int len = g - 1 + code_.Lt;
    const std::size_t span = ipow(radix_, len);
    if (span > (1u << 20)) throw std::invalid_argument("block trellis too large for joint decoding");
    block_index_.assign(span, -1);
    const auto hs = windows(g - 1, 0);
    const auto bs = windows(code_.Lt, code_.Lt);
    const double a = amplitude(params_, code_.Lt);
    for (const auto& h : hs) {
      // zero padding only at the oldest end of the history
      for (const auto& b : bs) {
        BlockContext ctx(h, b, g);
        BlockCandidate c;
        c.base.resize(static_cast<std::size_t>(code_.Lt));
        for (int m = 0; m < code_.Lt; ++m) {
          double theta = 0.0;
          for (int r = 0; r < code_.Lt; ++r) {
            std::vector<cplx> s(static_cast<std::size_t>(params_.oversampling) + 1);
            for (int k = 0; k <= params_.oversampling; ++k)
              s[static_cast<std::size_t>(k)] = a * phasor(theta + slot_phase(code_, params_, ctx, m, r, k * params_.dt()));
            c.base[static_cast<std::size_t>(m)].push_back(std::move(s));
            theta += slot_xi(code_, params_, ctx, m, r);
          }
        }
        c.gram.resize(static_cast<std::size_t>(code_.Lt));
        for (int r = 0; r < code_.Lt; ++r) {
          auto& gr = c.gram[static_cast<std::size_t>(r)];
          gr.resize(static_cast<std::size_t>(code_.Lt * code_.Lt));
          for (int m = 0; m < code_.Lt; ++m)
            for (int k = 0; k < code_.Lt; ++k)
              gr[static_cast<std::size_t>(m * code_.Lt + k)] =
                  inner_product(c.base[static_cast<std::size_t>(m)][static_cast<std::size_t>(r)],
                                c.base[static_cast<std::size_t>(k)][static_cast<std::size_t>(r)], params_.dt());
        }
        std::vector<int> key(h.begin(), h.end());
        key.insert(key.end(), b.begin(), b.end());
        block_index_[encode_symbols(key)] = static_cast<int>(block_.size());
        block_.push_back(std::move(c));
      }
    }
  }

  StCode code_;
  CpmParams params_;
  std::vector<int> alphabet_;
  std::size_t radix_ = 0;
  std::vector<std::vector<double>> residual_;
  std::vector<double> block_residual_;
  std::size_t slot_stride_ = 0;
  std::vector<int> slot_index_;
  std::vector<SlotCandidate> slot_;
  std::vector<int> block_index_;
  std::vector<BlockCandidate> block_;
};

inline Trellis build_trellis(const StCode& code, const CpmParams& params) { return Trellis(code, params); }

// ---------------------------------------------------------------------------
// Viterbi

namespace detail {

inline constexpr int kMaxStepSymbols = 3;

struct Node {
  int parent = -1;  // index into the previous step's nodes
  std::array<int, kMaxStepSymbols> symbols{};
  int count = 0;  // 1 for slot steps, Lt for block steps

  std::span<const int> view() const { return {symbols.data(), static_cast<std::size_t>(count)}; }
};

inline int compare_symbols(const Node& a, const Node& b) {
  for (int k = 0; k < a.count; ++k)
    if (a.symbols[static_cast<std::size_t>(k)] != b.symbols[static_cast<std::size_t>(k)])
      return a.symbols[static_cast<std::size_t>(k)] < b.symbols[static_cast<std::size_t>(k)] ? -1 : 1;
  return 0;
}

struct Survivor {
  int psi = 0;
  std::size_t hist = 0;  // key of the last gamma-1 symbols, newest least significant
  double metric = 0.0;
  int node = -1;
};

class PathStore {
 public:
  void push_step(std::vector<Node> nodes) { steps_.push_back(std::move(nodes)); }
  std::size_t depth() const { return steps_.size(); }

  /// Symbols of the oldest retained step on the path ending at `node`; the step is dropped.
  Node pop_oldest(int node) {
    int idx = node;
    for (std::size_t s = steps_.size() - 1; s > 0; --s) idx = steps_[s][static_cast<std::size_t>(idx)].parent;
    Node out = steps_.front()[static_cast<std::size_t>(idx)];
    steps_.pop_front();
    return out;
  }

  /// All retained symbols on the path ending at `node`, oldest first.
  std::vector<int> full_path(int node) const {
    std::vector<const Node*> rev;
    int idx = node;
    for (std::size_t s = steps_.size(); s-- > 0;) {
      rev.push_back(&steps_[s][static_cast<std::size_t>(idx)]);
      idx = rev.back()->parent;
    }
    std::vector<int> out;
    for (auto it = rev.rbegin(); it != rev.rend(); ++it) out.insert(out.end(), (*it)->view().begin(), (*it)->view().end());
    return out;
  }

  /// True if extension a (parent a, step symbols a) precedes extension b
  /// lexicographically over the retained window.
  bool less(int parent_a, const Node& a, int parent_b, const Node& b) const {
    int verdict = compare_symbols(a, b);
    int pa = parent_a, pb = parent_b;
    for (std::size_t s = steps_.size(); s-- > 0 && pa != pb;) {
      const auto& na = steps_[s][static_cast<std::size_t>(pa)];
      const auto& nb = steps_[s][static_cast<std::size_t>(pb)];
      if (const int c = compare_symbols(na, nb); c != 0) verdict = c;
      pa = na.parent;
      pb = nb.parent;
    }
    return verdict < 0;
  }

 private:
  std::deque<std::vector<Node>> steps_;
};

}  // namespace detail

/// Survivor-truncated Viterbi MLSE. `rx[l]` and `channels[l]` are the
/// received block and channel of code block l. Returns Lt * rx.size() symbols.
/// Ties resolve to the lexicographically smallest sequence in the survivor window.
inline std::vector<int> viterbi_decode(std::span<const ReceivedBlock> rx, std::span<const ChannelRealization> channels,
                                       const Trellis& trellis, const DecoderConfig& config,
                                       DecodeCounters* counters = nullptr) {
  config.validate();
  const auto& code = trellis.code();
  const auto& params = trellis.params();
  const int Lt = code.Lt;
  const int g = params.gamma;
  if (Lt > detail::kMaxStepSymbols) throw std::invalid_argument("viterbi_decode: too many antennas");
  if (rx.size() != channels.size()) throw std::invalid_argument("viterbi_decode: one channel per received block");
  for (std::size_t l = 0; l < rx.size(); ++l) {
    if (channels[l].Lt != Lt) throw std::invalid_argument("viterbi_decode: channel antenna count mismatch");
    if (rx[l].y.size() != static_cast<std::size_t>(channels[l].Lr))
      throw std::invalid_argument("viterbi_decode: Rx antenna count mismatch");
    for (const auto& slots : rx[l].y) {
      if (slots.size() != static_cast<std::size_t>(Lt))
        throw std::invalid_argument("viterbi_decode: received block length mismatch");
      for (const auto& v : slots)
        if (v.size() != static_cast<std::size_t>(params.oversampling) + 1)
          throw std::invalid_argument("viterbi_decode: slot sample count mismatch");
    }
  }

  const bool slot_mode = config.metric == Metric::Symbolwise || (config.metric == Metric::Blockwise && code.causal());
  if (config.metric == Metric::Symbolwise && !code.causal())
    throw std::invalid_argument("viterbi_decode: symbol-wise metric requires a parallel-mapping code");
  if (slot_mode && !trellis.has_slot_candidates()) throw std::invalid_argument("viterbi_decode: no slot candidates");
  if (!slot_mode && !trellis.has_block_candidates()) throw std::invalid_argument("viterbi_decode: no block candidates");

  const auto alphabet = params.alphabet();
  const int M = params.M;
  const int p = params.p;
  const std::size_t radix = trellis.radix();
  std::size_t hist_space = 1;
  for (int i = 0; i < g - 1; ++i) hist_space *= radix;
  const std::size_t steps_per_block = slot_mode ? static_cast<std::size_t>(Lt) : 1;
  const std::size_t delay = static_cast<std::size_t>(config.truncation) * steps_per_block;
  const double dt = params.dt();

  std::vector<detail::Survivor> surv{{0, 0, 0.0, -1}};
  detail::PathStore paths;
  std::vector<int> decided;
  decided.reserve(rx.size() * static_cast<std::size_t>(Lt));
  std::vector<int> slot_of(static_cast<std::size_t>(p) * hist_space, -1);  // state key -> index in `next`
  auto state_key = [&](int psi, std::size_t hist) { return static_cast<std::size_t>(psi) + static_cast<std::size_t>(p) * hist; };

  auto finish_step = [&](std::vector<detail::Survivor>& next, std::vector<detail::Node>& nodes) {
    for (const auto& s : next) slot_of[state_key(s.psi, s.hist)] = -1;
    if (counters) {
      counters->state_steps += surv.size();
      ++counters->steps;
    }
    paths.push_step(std::move(nodes));
    surv = std::move(next);
    if (paths.depth() > delay) {
      const auto best = std::min_element(surv.begin(), surv.end(),
                                         [](const auto& a, const auto& b) { return a.metric < b.metric; });
      const auto node = paths.pop_oldest(best->node);
      decided.insert(decided.end(), node.view().begin(), node.view().end());
    }
  };

  auto relax = [&](std::vector<detail::Survivor>& next, std::vector<detail::Node>& nodes, int psi, std::size_t hist,
                   double metric, const detail::Node& ext) {
    int& idx = slot_of[state_key(psi, hist)];
    if (idx < 0) {
      idx = static_cast<int>(next.size());
      nodes.push_back(ext);
      next.push_back({psi, hist, metric, static_cast<int>(nodes.size() - 1)});
      return;
    }
    auto& cur = next[static_cast<std::size_t>(idx)];
    auto& node = nodes[static_cast<std::size_t>(cur.node)];
    if (metric < cur.metric || (metric == cur.metric && paths.less(ext.parent, ext, node.parent, node))) {
      cur.metric = metric;
      node = ext;
    }
  };

  // correlation bank: entry key -> offset into z storage, reset every step
  std::vector<int> bank_index;
  std::vector<std::size_t> bank_used;
  std::vector<cplx> bank_z;
  auto bank_reset = [&] {
    for (auto k : bank_used) bank_index[k] = -1;
    bank_used.clear();
    bank_z.clear();
  };

  std::vector<cplx> beta;
  std::vector<double> yy;
  std::vector<cplx> rot(static_cast<std::size_t>(Lt));
  std::vector<detail::Survivor> next;
  std::vector<detail::Node> nodes;

  for (std::size_t l = 0; l < rx.size(); ++l) {
    const auto& y = rx[l];
    const auto& ch = channels[l];
    const int Lr = ch.Lr;
    beta.assign(static_cast<std::size_t>(Lr * Lt), {});
    if (counters) ++counters->blocks;

    if (slot_mode) {
      if (bank_index.empty()) bank_index.assign(trellis.window_keys(), -1);
      const std::size_t zsz = static_cast<std::size_t>(Lr * Lt);
      for (int r = 0; r < Lt; ++r) {
        const long long n = static_cast<long long>(l) * Lt + r;
        yy.assign(static_cast<std::size_t>(Lr), 0.0);
        for (int q = 0; q < Lr; ++q)
          yy[static_cast<std::size_t>(q)] = energy(y.y[static_cast<std::size_t>(q)][static_cast<std::size_t>(r)], dt);
        for (int m = 0; m < Lt; ++m) rot[static_cast<std::size_t>(m)] = phasor(trellis.offset(m, n));
        bank_reset();
        next.clear();
        nodes.clear();

        for (const auto& s : surv) {
          const cplx u = phasor(static_cast<double>(s.psi) / p);
          for (int q = 0; q < Lr; ++q)
            for (int m = 0; m < Lt; ++m)
              beta[static_cast<std::size_t>(q * Lt + m)] = ch(q, m) * u * rot[static_cast<std::size_t>(m)];
          for (int di = 0; di < M; ++di) {
            const std::size_t wkey = static_cast<std::size_t>(di + 1) + radix * s.hist;
            const auto* cand = trellis.slot_candidate_at(r, wkey);
            if (!cand) throw std::logic_error("viterbi_decode: window outside trellis");
            if (bank_index[wkey] < 0) {
              bank_index[wkey] = static_cast<int>(bank_z.size());
              bank_used.push_back(wkey);
              for (int q = 0; q < Lr; ++q)
                for (int m = 0; m < Lt; ++m)
                  bank_z.push_back(inner_product(y.y[static_cast<std::size_t>(q)][static_cast<std::size_t>(r)],
                                                 cand->base[static_cast<std::size_t>(m)], dt));
              if (counters) counters->correlations += zsz;
            }
            const cplx* z = &bank_z[static_cast<std::size_t>(bank_index[wkey])];
            double dist = 0.0;
            for (int q = 0; q < Lr; ++q) {
              const cplx* b = &beta[static_cast<std::size_t>(q * Lt)];
              const cplx* zq = z + q * Lt;
              const double e = yy[static_cast<std::size_t>(q)];
              if (config.metric == Metric::Symbolwise) {
                double v = e;
                for (int m = 0; m < Lt; ++m) {
                  v -= 2.0 * (std::conj(b[m]) * zq[m]).real();
                  for (int k = 0; k < Lt; ++k)
                    v += (b[m] * std::conj(b[k]) * cand->gram[static_cast<std::size_t>(m * Lt + k)]).real();
                }
                dist += v;
              } else {
                for (int m = 0; m < Lt; ++m)
                  dist += e - 2.0 * (std::conj(b[m]) * zq[m]).real() +
                          std::norm(b[m]) * cand->gram[static_cast<std::size_t>(m * Lt + m)].real();
              }
            }
            if (counters) ++counters->branch_metrics;
            const int leaving = trellis.symbol_of_digit(wkey / hist_space);
            const int psi = ((s.psi + params.m0 * leaving) % p + p) % p;
            detail::Node ext;
            ext.parent = s.node;
            ext.symbols[0] = alphabet[static_cast<std::size_t>(di)];
            ext.count = 1;
            relax(next, nodes, psi, wkey % hist_space, s.metric + dist, ext);
          }
        }
        finish_step(next, nodes);
      }
    } else {
      std::size_t block_space = hist_space;
      for (int i = 0; i < Lt; ++i) block_space *= radix;
      if (bank_index.empty()) bank_index.assign(block_space, -1);
      const std::size_t zsz = static_cast<std::size_t>(Lr * Lt * Lt);
      const long long n0 = static_cast<long long>(l) * Lt;
      yy.assign(static_cast<std::size_t>(Lr * Lt), 0.0);
      for (int q = 0; q < Lr; ++q)
        for (int r = 0; r < Lt; ++r)
          yy[static_cast<std::size_t>(q * Lt + r)] =
              energy(y.y[static_cast<std::size_t>(q)][static_cast<std::size_t>(r)], dt);
      for (int m = 0; m < Lt; ++m) rot[static_cast<std::size_t>(m)] = phasor(trellis.offset(m, n0));
      bank_reset();
      next.clear();
      nodes.clear();

      std::vector<int> idx(static_cast<std::size_t>(Lt));
      std::vector<std::size_t> seq(static_cast<std::size_t>(g - 1 + Lt));  // digits, oldest first
      for (const auto& s : surv) {
        const cplx u = phasor(static_cast<double>(s.psi) / p);
        for (int q = 0; q < Lr; ++q)
          for (int m = 0; m < Lt; ++m)
            beta[static_cast<std::size_t>(q * Lt + m)] = ch(q, m) * u * rot[static_cast<std::size_t>(m)];
        std::size_t h = s.hist;
        for (int i = 0; i < g - 1; ++i, h /= radix) seq[static_cast<std::size_t>(g - 2 - i)] = h % radix;
        std::fill(idx.begin(), idx.end(), 0);
        while (true) {
          std::size_t bkey = 0;
          for (int i = Lt - 1; i >= 0; --i) bkey = bkey * radix + static_cast<std::size_t>(idx[static_cast<std::size_t>(i)] + 1);
          const std::size_t key = s.hist + hist_space * bkey;
          const auto* cand = trellis.block_candidate_at(key);
          if (!cand) throw std::logic_error("viterbi_decode: context outside trellis");
          if (bank_index[key] < 0) {
            bank_index[key] = static_cast<int>(bank_z.size());
            bank_used.push_back(key);
            for (int q = 0; q < Lr; ++q)
              for (int m = 0; m < Lt; ++m)
                for (int r = 0; r < Lt; ++r)
                  bank_z.push_back(inner_product(y.y[static_cast<std::size_t>(q)][static_cast<std::size_t>(r)],
                                                 cand->base[static_cast<std::size_t>(m)][static_cast<std::size_t>(r)], dt));
            if (counters) counters->correlations += zsz;
          }
          const cplx* z = &bank_z[static_cast<std::size_t>(bank_index[key])];
          double dist = 0.0;
          for (int q = 0; q < Lr; ++q) {
            const cplx* b = &beta[static_cast<std::size_t>(q * Lt)];
            for (int r = 0; r < Lt; ++r) {
              const auto& gr = cand->gram[static_cast<std::size_t>(r)];
              const double e = yy[static_cast<std::size_t>(q * Lt + r)];
              if (config.metric == Metric::Joint) {
                double v = e;
                for (int m = 0; m < Lt; ++m) {
                  v -= 2.0 * (std::conj(b[m]) * z[(q * Lt + m) * Lt + r]).real();
                  for (int k = 0; k < Lt; ++k) v += (b[m] * std::conj(b[k]) * gr[static_cast<std::size_t>(m * Lt + k)]).real();
                }
                dist += v;
              } else {
                for (int m = 0; m < Lt; ++m)
                  dist += e - 2.0 * (std::conj(b[m]) * z[(q * Lt + m) * Lt + r]).real() +
                          std::norm(b[m]) * gr[static_cast<std::size_t>(m * Lt + m)].real();
              }
            }
          }
          if (counters) ++counters->branch_metrics;

          for (int i = 0; i < Lt; ++i) seq[static_cast<std::size_t>(g - 1 + i)] = static_cast<std::size_t>(idx[static_cast<std::size_t>(i)] + 1);
          int psi = s.psi;
          for (int r = 0; r < Lt; ++r) psi += params.m0 * trellis.symbol_of_digit(seq[static_cast<std::size_t>(r)]);
          psi = ((psi % p) + p) % p;
          std::size_t nh = 0;
          for (int i = g - 2; i >= 0; --i) nh = nh * radix + seq[seq.size() - 1 - static_cast<std::size_t>(i)];
          detail::Node ext;
          ext.parent = s.node;
          ext.count = Lt;
          for (int i = 0; i < Lt; ++i)
            ext.symbols[static_cast<std::size_t>(i)] = alphabet[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
          relax(next, nodes, psi, nh, s.metric + dist, ext);

          int k = Lt - 1;
          while (k >= 0 && ++idx[static_cast<std::size_t>(k)] == M) idx[static_cast<std::size_t>(k--)] = 0;
          if (k < 0) break;
        }
      }
      finish_step(next, nodes);
    }
  }

  if (paths.depth() > 0) {
    const auto best =
        std::min_element(surv.begin(), surv.end(), [](const auto& a, const auto& b) { return a.metric < b.metric; });
    const auto tail = paths.full_path(best->node);
    decided.insert(decided.end(), tail.begin(), tail.end());
  }
  return decided;
}

// ---------------------------------------------------------------------------
// Exhaustive oracle

/// Global minimizer of the full-sequence D1 distance by enumeration, ties to
/// the lexicographically smallest sequence. Independent of the trellis: each
/// candidate is re-encoded from scratch.
inline std::vector<int> exhaustive_ml(std::span<const ReceivedBlock> rx, std::span<const ChannelRealization> channels,
                                      const StCode& code, const CpmParams& params, int n_symbols) {
  if (n_symbols > 6) throw std::invalid_argument("exhaustive_ml: at most 6 symbols");
  if (n_symbols < 1 || n_symbols != code.Lt * static_cast<int>(rx.size()) || rx.size() != channels.size())
    throw std::invalid_argument("exhaustive_ml: sequence length mismatch");
  const auto alphabet = params.alphabet();
  std::vector<int> idx(static_cast<std::size_t>(n_symbols), 0);
  std::vector<int> best;
  double best_metric = std::numeric_limits<double>::infinity();
  std::vector<int> cand(static_cast<std::size_t>(n_symbols));
  while (true) {
    for (int i = 0; i < n_symbols; ++i) cand[static_cast<std::size_t>(i)] = alphabet[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
    const auto blocks = code.family == Family::None ? modulate_reference(params, cand, code.theta0[0])
                                                    : encode_stream(code, params, cand);
    double metric = 0.0;
    for (std::size_t l = 0; l < blocks.size(); ++l) metric += metric_joint(rx[l], channels[l], blocks[l]);
    if (metric < best_metric) {
      best_metric = metric;
      best = cand;
    }
    int k = n_symbols - 1;
    while (k >= 0 && ++idx[static_cast<std::size_t>(k)] == params.M) idx[static_cast<std::size_t>(k--)] = 0;
    if (k < 0) break;
  }
  return best;
}

}  // namespace stccpm
