#pragma once
// Space-time coding on top of CPM: data mappings, correction-phase families,
// phase-memory increments, block encoding, and numerical certification of
// L2 orthogonality and phase continuity.
//
// Indexing is zero-based: antenna m in [0, Lt), slot r in [0, Lt) within block
// l, absolute slot n = Lt*l + r, data symbol d[n] enters the phase at time nT.

#include <algorithm>
#include <array>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stccpm/cpm.hpp"

namespace stccpm {

enum class MappingScheme { Crosswise, Repetitive, Parallel };

enum class Family {
  None,        // conventional CPM, single-antenna reference
  WangXia,     // crosswise data, data-dependent correction on antenna 2
  PC2Generic,  // two antennas, linear 0 -> 1/2 ramp on antenna 2
  OffPC2,      // two antennas, CPM-shaped correction (alphabet offset 1/h)
  LinPC,       // three antennas, linear +-1/3 ramps
  RcPC,        // three antennas, raised-cosine +-1/3 ramps
  OffPC3,      // three antennas, CPM-shaped corrections (offsets +-2/(3h))
  Corrupted,   // PC2Generic with the antenna-2 ramp scaled; negative control
};

inline std::string family_name(Family f) {
  switch (f) {
    case Family::None: return "reference";
    case Family::WangXia: return "wangxia";
    case Family::PC2Generic: return "pc2";
    case Family::OffPC2: return "offpc2";
    case Family::LinPC: return "linpc";
    case Family::RcPC: return "rcpc";
    case Family::OffPC3: return "offpc3";
    case Family::Corrupted: return "corrupted-demo";
  }
  return "?";
}

inline std::optional<Family> parse_family(const std::string& s) {
  for (auto f : {Family::None, Family::WangXia, Family::PC2Generic, Family::OffPC2, Family::LinPC,
                 Family::RcPC, Family::OffPC3, Family::Corrupted})
    if (family_name(f) == s) return f;
  if (s == "offpc") return Family::OffPC2;
  return std::nullopt;
}

inline int family_antennas(Family f) {
  switch (f) {
    case Family::None: return 1;
    case Family::LinPC:
    case Family::RcPC:
    case Family::OffPC3: return 3;
    default: return 2;
  }
}

/// Code identity: antenna count, mapping, correction family, initial phases.
struct StCode {
  int Lt = 2;
  Family family = Family::PC2Generic;
  std::vector<double> theta0;
  double corruption_scale = 0.9;

  static StCode make(Family f, std::vector<double> theta0 = {}) {
    StCode c;
    c.family = f;
    c.Lt = family_antennas(f);
    c.theta0 = theta0.empty() ? std::vector<double>(static_cast<std::size_t>(c.Lt), 0.0) : std::move(theta0);
    c.validate();
    return c;
  }

  /// Single-antenna conventional CPM, used as the no-diversity baseline.
  static StCode reference() { return make(Family::None); }

  void validate() const {
    if (Lt != family_antennas(family)) throw std::invalid_argument("antenna count does not match code family");
    if (family != Family::None && (Lt < 2 || Lt > 3)) throw std::invalid_argument("Lt must be 2 or 3");
    if (theta0.size() != static_cast<std::size_t>(Lt))
      throw std::invalid_argument("theta0 must have one entry per antenna");
  }

  MappingScheme mapping() const {
    return family == Family::WangXia ? MappingScheme::Crosswise : MappingScheme::Parallel;
  }

  /// True when every slot signal depends only on data up to the slot's own
  /// symbol, so the receiver can run a symbol-rate trellis.
  bool causal() const { return mapping() == MappingScheme::Parallel; }
};

// ---------------------------------------------------------------------------
// Data mapping

/// d_{m,r}^{(l,i)} as a [m][r][i] array, i = 0 being the newest symbol of the
/// window. Indices before the stream start read as 0. Crosswise carries the
/// sign flip of the conjugated Alamouti row.
using SymbolMatrix = std::vector<std::vector<std::vector<int>>>;

inline int stream_at(std::span<const int> d, long long k) {
  return (k < 0 || k >= static_cast<long long>(d.size())) ? 0 : d[static_cast<std::size_t>(k)];
}

inline SymbolMatrix map_data(MappingScheme scheme, std::span<const int> d, long long l, int Lt, int gamma) {
  if (scheme != MappingScheme::Parallel && Lt != 2)
    throw std::invalid_argument("crosswise and repetitive mappings are defined for two antennas");
  SymbolMatrix out(static_cast<std::size_t>(Lt),
                   std::vector<std::vector<int>>(static_cast<std::size_t>(Lt),
                                                 std::vector<int>(static_cast<std::size_t>(gamma))));
  const long long base = Lt * l;
  for (int m = 0; m < Lt; ++m)
    for (int r = 0; r < Lt; ++r)
      for (int i = 0; i < gamma; ++i) {
        int v = 0;
        switch (scheme) {
          case MappingScheme::Parallel: v = stream_at(d, base + r - i); break;
          case MappingScheme::Repetitive: v = stream_at(d, base + m - i); break;
          case MappingScheme::Crosswise:
            v = m == 0 ? stream_at(d, base + r - i) : -stream_at(d, base + (1 - r) - i);
            break;
        }
        out[static_cast<std::size_t>(m)][static_cast<std::size_t>(r)][static_cast<std::size_t>(i)] = v;
      }
  return out;
}

/// The data one block needs: gamma-1 symbols of history followed by the
/// block's Lt symbols. Reads past the end return 0; the only such reads are
/// terms that vanish algebraically at the next block's first instant.
class BlockContext {
 public:
  BlockContext(std::span<const int> stream, long long l, int Lt, int gamma)
      : gamma_(gamma), Lt_(Lt) {
    values_.reserve(static_cast<std::size_t>(gamma - 1 + Lt));
    for (long long k = Lt * l - (gamma - 1); k < Lt * (l + 1); ++k) values_.push_back(stream_at(stream, k));
  }

  /// history newest first, then block symbols in order
  BlockContext(std::span<const int> history_newest_first, std::span<const int> block, int gamma)
      : gamma_(gamma), Lt_(static_cast<int>(block.size())) {
    for (auto it = history_newest_first.rbegin(); it != history_newest_first.rend(); ++it) values_.push_back(*it);
    values_.insert(values_.end(), block.begin(), block.end());
  }

  /// Symbol at offset j from the block start.
  int at(int j) const {
    const int k = j + gamma_ - 1;
    if (k < 0 || k >= static_cast<int>(values_.size())) return 0;
    return values_[static_cast<std::size_t>(k)];
  }

  int Lt() const { return Lt_; }
  int gamma() const { return gamma_; }

 private:
  int gamma_;
  int Lt_;
  std::vector<int> values_;
};

namespace detail {

// CPM-shaped accumulation sum_i q(tau + iT), i = 0..gamma-1.
inline double pulse_train(const CpmParams& params, double tau) {
  double acc = 0.0;
  for (int i = 0; i < params.gamma; ++i) acc += phase_pulse(tau + i * params.T, params);
  return acc;
}

inline void check_antenna(const StCode& code, int m) {
  if (m < 0 || m >= code.Lt) throw std::invalid_argument("antenna index out of range for code family");
}

}  // namespace detail

/// Data window of antenna m in relative slot n (n may equal Lt: the next
/// block's first slot), newest symbol first.
inline std::vector<double> slot_window(const StCode& code, const CpmParams& params, const BlockContext& ctx, int m,
                                       int n) {
  const int r = n % code.Lt;
  const int start = n - r;
  std::vector<double> w(static_cast<std::size_t>(params.gamma));
  for (int i = 0; i < params.gamma; ++i) {
    double v;
    if (code.mapping() == MappingScheme::Crosswise && m == 1)
      v = -ctx.at(start + (1 - r) - i);
    else
      v = ctx.at(n - i);
    w[static_cast<std::size_t>(i)] = v;
  }
  return w;
}

/// Correction phase c_{m,r}(tau) in cycles for relative slot n, slot-relative
/// time tau in [0, T]. Corrections repeat in every slot of a block.
inline double slot_correction(const StCode& code, const CpmParams& params, const BlockContext& ctx, int m, int n,
                              double tau) {
  detail::check_antenna(code, m);
  const double x = tau / params.T;
  switch (code.family) {
    case Family::None: return 0.0;
    case Family::WangXia: {
      if (m == 0) return 0.0;
      const int start = n - n % code.Lt;
      double acc = 0.0;
      for (int i = 0; i < params.gamma; ++i)
        acc += (params.h() * (ctx.at(start - i) + ctx.at(start + 1 - i)) + 1.0) *
               phase_pulse(tau + i * params.T, params);
      return acc;
    }
    case Family::PC2Generic: return m == 1 ? 0.5 * x : 0.0;
    case Family::Corrupted: return m == 1 ? code.corruption_scale * 0.5 * x : 0.0;
    case Family::OffPC2: return m == 1 ? detail::pulse_train(params, tau) : 0.0;
    case Family::LinPC: return (m == 0 ? 1.0 : m == 2 ? -1.0 : 0.0) * x / 3.0;
    case Family::RcPC:
      return (m == 0 ? 1.0 : m == 2 ? -1.0 : 0.0) * (x - std::sin(kTwoPi * x) / kTwoPi) / 3.0;
    case Family::OffPC3:
      return (m == 0 ? 1.0 : m == 2 ? -1.0 : 0.0) * (2.0 / 3.0) * detail::pulse_train(params, tau);
  }
  return 0.0;
}

/// Phase of antenna m in relative slot n excluding the phase memory.
inline double slot_phase(const StCode& code, const CpmParams& params, const BlockContext& ctx, int m, int n,
                         double tau) {
  const auto w = slot_window(code, params, ctx, m, n);
  return data_phase(params, w, tau) + slot_correction(code, params, ctx, m, n, tau);
}

/// Phase-memory increment at the end of relative slot r that makes antenna
/// m's phase continuous into the following slot.
inline double slot_xi(const StCode& code, const CpmParams& params, const BlockContext& ctx, int m, int r) {
  return slot_phase(code, params, ctx, m, r, params.T) - slot_phase(code, params, ctx, m, r + 1, 0.0);
}

/// c_{m,r}(tau) for the slot containing absolute slot n of `stream`.
inline double correction_value(const StCode& code, const CpmParams& params, int m, long long n, double tau,
                               std::span<const int> stream = {}) {
  if (tau < 0.0 || tau > params.T) throw std::out_of_range("correction_value: t outside the slot");
  const long long l = n / code.Lt;
  BlockContext ctx(stream, l, code.Lt, params.gamma);
  return slot_correction(code, params, ctx, m, static_cast<int>(n - l * code.Lt), tau);
}

/// xi_m at the boundary closing absolute slot n.
inline double xi_value(const StCode& code, const CpmParams& params, int m, long long n, std::span<const int> stream) {
  detail::check_antenna(code, m);
  const long long l = n / code.Lt;
  BlockContext ctx(stream, l, code.Lt, params.gamma);
  return slot_xi(code, params, ctx, m, static_cast<int>(n - l * code.Lt));
}

/// Deterministic part of xi: xi_m(n) - (h/2) d_leaving. Indexed [m][r].
/// Computed on all-zero data, where the data part vanishes.
inline std::vector<std::vector<double>> xi_residuals(const StCode& code, const CpmParams& params) {
  const std::vector<int> zeros(static_cast<std::size_t>(code.Lt), 0);
  const std::vector<int> hist(static_cast<std::size_t>(params.gamma - 1), 0);
  BlockContext ctx(hist, zeros, params.gamma);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(code.Lt));
  for (int m = 0; m < code.Lt; ++m)
    for (int r = 0; r < code.Lt; ++r) out[static_cast<std::size_t>(m)].push_back(slot_xi(code, params, ctx, m, r));
  return out;
}

// ---------------------------------------------------------------------------
// Encoding

/// One space-time block: slots[m][r] for antenna m, slot r.
struct SignalBlock {
  int Lt = 0;
  long long index = 0;
  std::vector<std::vector<Waveform>> slots;
};

struct EncodedBlock {
  SignalBlock block;
  std::vector<PhaseState> states;
};

inline std::vector<PhaseState> initial_states(const StCode& code, const CpmParams& params) {
  std::vector<PhaseState> s;
  for (int m = 0; m < code.Lt; ++m) s.push_back(PhaseState::initial(params, code.theta0[static_cast<std::size_t>(m)]));
  return s;
}

/// Encode block l of `data` from per-antenna phase memories. The block's
/// window history is read from the stream (zero before its start).
inline EncodedBlock encode_block(const StCode& code, const CpmParams& params, std::span<const PhaseState> states,
                                 std::span<const int> data, long long l) {
  if (code.family == Family::None)
    throw std::invalid_argument("encode_block: single-antenna codes use the conventional modulator");
  code.validate();
  if (states.size() != static_cast<std::size_t>(code.Lt))
    throw std::invalid_argument("encode_block: one phase state per antenna required");
  if (l < 0 || static_cast<long long>(data.size()) < code.Lt * (l + 1))
    throw std::invalid_argument("encode_block: data exhausted");
  for (long long k = code.Lt * l; k < code.Lt * (l + 1); ++k)
    if (!params.in_alphabet(data[static_cast<std::size_t>(k)]))
      throw std::invalid_argument("encode_block: symbol not in alphabet");

  const BlockContext ctx(data, l, code.Lt, params.gamma);
  EncodedBlock out;
  out.block.Lt = code.Lt;
  out.block.index = l;
  out.block.slots.resize(static_cast<std::size_t>(code.Lt));
  out.states.assign(states.begin(), states.end());
  for (int m = 0; m < code.Lt; ++m) {
    auto& st = out.states[static_cast<std::size_t>(m)];
    for (int r = 0; r < code.Lt; ++r) {
      const double start = (code.Lt * l + r) * params.T;
      const double theta = st.theta;
      out.block.slots[static_cast<std::size_t>(m)].push_back(sample_slot(params, code.Lt, start, [&](double tau) {
        return theta + slot_phase(code, params, ctx, m, r, tau);
      }));
      st.theta = wrap_cycles(st.theta + slot_xi(code, params, ctx, m, r));
    }
    st.history.clear();
    for (int i = 0; i < params.gamma - 1; ++i) st.history.push_back(ctx.at(code.Lt - 1 - i));
  }
  return out;
}

/// Encode every complete block of `data`.
inline std::vector<SignalBlock> encode_stream(const StCode& code, const CpmParams& params, std::span<const int> data) {
  std::vector<SignalBlock> blocks;
  auto states = initial_states(code, params);
  const long long nblocks = static_cast<long long>(data.size()) / code.Lt;
  for (long long l = 0; l < nblocks; ++l) {
    auto enc = encode_block(code, params, states, data, l);
    blocks.push_back(std::move(enc.block));
    states = std::move(enc.states);
  }
  return blocks;
}

/// Single-antenna textbook CPM over a symbol stream, one SignalBlock per symbol.
inline std::vector<SignalBlock> modulate_reference(const CpmParams& params, std::span<const int> data,
                                                   double theta0 = 0.0) {
  std::vector<SignalBlock> out;
  auto st = PhaseState::initial(params, theta0);
  for (std::size_t n = 0; n < data.size(); ++n) {
    const double d = data[n];
    auto slot = modulate_symbol(params, st, d, nullptr, conventional_xi(params, st, d), n * params.T, 1);
    SignalBlock b;
    b.Lt = 1;
    b.index = static_cast<long long>(n);
    b.slots = {{std::move(slot.waveform)}};
    out.push_back(std::move(b));
    st = std::move(slot.next);
  }
  return out;
}

/// Concatenate antenna m's slots into a uniformly sampled stream, dropping
/// each slot's closing sample (it repeats the next slot's first).
inline std::vector<cplx> antenna_stream(std::span<const SignalBlock> blocks, int m) {
  std::vector<cplx> s;
  for (const auto& b : blocks)
    for (const auto& w : b.slots[static_cast<std::size_t>(m)]) s.insert(s.end(), w.samples.begin(), w.samples.end() - 1);
  return s;
}

// ---------------------------------------------------------------------------
// Certification

/// Small dense complex matrix, row-major.
struct CMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<cplx> data;
  CMatrix() = default;
  CMatrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r * c)) {}
  cplx& operator()(int i, int j) { return data[static_cast<std::size_t>(i * cols + j)]; }
  const cplx& operator()(int i, int j) const { return data[static_cast<std::size_t>(i * cols + j)]; }
};

/// G[m][m'] = sum_r integral s_{m,r} conj(s_{m',r}) dt over the block.
inline CMatrix gram_matrix(const SignalBlock& block) {
  CMatrix g(block.Lt, block.Lt);
  for (int m = 0; m < block.Lt; ++m)
    for (int k = 0; k < block.Lt; ++k)
      for (int r = 0; r < block.Lt; ++r) {
        const auto& a = block.slots[static_cast<std::size_t>(m)][static_cast<std::size_t>(r)];
        const auto& b = block.slots[static_cast<std::size_t>(k)][static_cast<std::size_t>(r)];
        g(m, k) += inner_product(a.samples, b.samples, a.dt);
      }
  return g;
}

/// Largest phase jump, in cycles, between each slot's closing sample and the
/// next slot's opening sample, over all antennas.
inline double max_phase_jump(std::span<const SignalBlock> blocks) {
  double worst = 0.0;
  if (blocks.empty()) return worst;
  const int Lt = blocks.front().Lt;
  for (int m = 0; m < Lt; ++m) {
    const cplx* prev = nullptr;
    for (const auto& b : blocks)
      for (const auto& w : b.slots[static_cast<std::size_t>(m)]) {
        if (prev) worst = std::max(worst, std::abs(std::arg(w.samples.front() * std::conj(*prev))) / kTwoPi);
        prev = &w.samples.back();
      }
  }
  return worst;
}

inline std::size_t boundary_count(std::span<const SignalBlock> blocks) {
  if (blocks.empty()) return 0;
  std::size_t slots = 0;
  for (const auto& b : blocks) slots += b.slots.front().size();
  return (slots - 1) * static_cast<std::size_t>(blocks.front().Lt);
}

struct VerifyReport {
  double max_offdiag_ratio = 0.0;
  double max_diag_error = 0.0;
  double max_phase_jump = 0.0;
  std::size_t blocks = 0;
  std::size_t boundaries = 0;

  bool passes(double gram_tol = 1e-6, double jump_tol = 1e-9) const {
    return max_offdiag_ratio < gram_tol && max_diag_error < gram_tol && max_phase_jump < jump_tol;
  }
};

inline std::vector<int> random_symbols(const CpmParams& params, std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, params.M - 1);
  std::vector<int> d(n);
  for (auto& v : d) v = 2 * pick(rng) - params.M + 1;
  return d;
}

/// Certify a code: every trial draws random initial phases and random data
/// for `blocks_per_trial` consecutive blocks.
inline VerifyReport verify_code(const StCode& code, const CpmParams& params, int trials, std::uint64_t seed,
                                int blocks_per_trial = 4) {
  if (trials < 1) throw std::invalid_argument("verify_code: trials must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  VerifyReport rep;
  for (int t = 0; t < trials; ++t) {
    StCode c = code;
    for (auto& th : c.theta0) th = unit(rng);
    const auto data = random_symbols(params, static_cast<std::size_t>(blocks_per_trial * c.Lt), rng);
    const auto blocks = encode_stream(c, params, data);
    for (const auto& b : blocks) {
      const auto g = gram_matrix(b);
      for (int m = 0; m < b.Lt; ++m)
        for (int k = 0; k < b.Lt; ++k) {
          if (m == k)
            rep.max_diag_error = std::max(rep.max_diag_error, std::abs(g(m, k).real() / params.Es - 1.0));
          else
            rep.max_offdiag_ratio = std::max(rep.max_offdiag_ratio, std::abs(g(m, k)) / params.Es);
        }
    }
    rep.max_phase_jump = std::max(rep.max_phase_jump, max_phase_jump(blocks));
    rep.blocks += blocks.size();
    rep.boundaries += boundary_count(blocks);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Offset alphabets

struct EffectiveAlphabet {
  std::vector<int> base;
  double offset = 0.0;
  std::vector<double> values() const {
    std::vector<double> v;
    for (int b : base) v.push_back(b + offset);
    return v;
  }
};

/// The shifted alphabet under which antenna m of an offset code is a plain
/// CPM transmitter.
inline EffectiveAlphabet effective_alphabet(const StCode& code, const CpmParams& params, int m) {
  detail::check_antenna(code, m);
  EffectiveAlphabet a{params.alphabet(), 0.0};
  const double h = params.h();
  if (code.family == Family::OffPC2) {
    a.offset = m == 1 ? 1.0 / h : 0.0;
  } else if (code.family == Family::OffPC3) {
    a.offset = m == 0 ? 2.0 / (3.0 * h) : m == 2 ? -2.0 / (3.0 * h) : 0.0;
  } else {
    throw std::invalid_argument("effective_alphabet: family has no offset-alphabet form");
  }
  return a;
}

}  // namespace stccpm
