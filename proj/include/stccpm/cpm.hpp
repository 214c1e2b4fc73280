#pragma once
// Continuous phase modulation primitives: parameters, phase pulse, and the
// per-slot baseband generator. Phases are carried in cycles throughout, so a
// sample is sqrt(E_s / (L_t T)) * exp(j 2 pi phi).

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stccpm {

using cplx = std::complex<double>;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Reduce a phase in cycles to [0, 1).
inline double wrap_cycles(double x) {
  double r = x - std::floor(x);
  return r >= 1.0 ? 0.0 : r;
}

/// Signed distance between two phases in cycles, in [-0.5, 0.5).
inline double cycle_distance(double a, double b) {
  double d = wrap_cycles(a - b);
  return d >= 0.5 ? d - 1.0 : d;
}

inline cplx phasor(double cycles) {
  return std::polar(1.0, kTwoPi * cycles);
}

/// Exact rational number with positive denominator.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Rational make(std::int64_t n, std::int64_t d) {
    if (d == 0) throw std::invalid_argument("rational with zero denominator");
    if (d < 0) { n = -n; d = -d; }
    auto g = std::gcd(n, d);
    if (g == 0) g = 1;
    return {n / g, d / g};
  }

  /// Parse "num/den" or a bare integer. Floats are rejected.
  static Rational parse(const std::string& text) {
    auto slash = text.find('/');
    auto to_int = [&](const std::string& s) {
      if (s.empty() || s.find_first_not_of("+-0123456789") != std::string::npos)
        throw std::invalid_argument("not a rational: '" + text + "'");
      return static_cast<std::int64_t>(std::stoll(s));
    };
    if (slash == std::string::npos) return make(to_int(text), 1);
    return make(to_int(text.substr(0, slash)), to_int(text.substr(slash + 1)));
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
  friend bool operator==(const Rational&, const Rational&) = default;
};

enum class PulseShape { LREC, LRC };

inline std::string to_string(PulseShape p) { return p == PulseShape::LREC ? "rec" : "rc"; }

/// All CPM constants. The modulation index is stored as the coprime pair
/// (m0, p) with h = 2 m0 / p.
struct CpmParams {
  int m0 = 1;
  int p = 4;
  int M = 4;
  int gamma = 1;
  PulseShape pulse = PulseShape::LREC;
  double Es = 1.0;
  double T = 1.0;
  int oversampling = 64;

  /// Build from h given as a reduced fraction a/b: h = 2 m0 / p.
  static CpmParams from_h(Rational h, int M, int gamma, PulseShape pulse = PulseShape::LREC,
                          int oversampling = 64) {
    if (h.num <= 0) throw std::invalid_argument("h must be positive");
    CpmParams c;
    if (h.num % 2 == 0) {
      c.m0 = static_cast<int>(h.num / 2);
      c.p = static_cast<int>(h.den);
    } else {
      c.m0 = static_cast<int>(h.num);
      c.p = static_cast<int>(2 * h.den);
    }
    c.M = M;
    c.gamma = gamma;
    c.pulse = pulse;
    c.oversampling = oversampling;
    c.validate();
    return c;
  }

  Rational h_rational() const { return Rational::make(2 * m0, p); }
  double h() const { return 2.0 * m0 / p; }
  int bits_per_symbol() const { return std::countr_zero(static_cast<unsigned>(M)); }
  double dt() const { return T / oversampling; }

  void validate() const {
    if (m0 <= 0 || p <= 0) throw std::invalid_argument("m0 and p must be positive");
    if (std::gcd(m0, p) != 1) throw std::invalid_argument("m0 and p must be coprime");
    if (M < 2 || (M & (M - 1)) != 0) throw std::invalid_argument("M must be a power of 2");
    if (gamma < 1) throw std::invalid_argument("gamma must be >= 1");
    if (oversampling < 8) throw std::invalid_argument("oversampling must be >= 8");
    if (!(Es > 0.0) || !(T > 0.0)) throw std::invalid_argument("Es and T must be positive");
  }

  /// Sorted data alphabet {-M+1, -M+3, ..., M-1}.
  std::vector<int> alphabet() const {
    std::vector<int> a;
    for (int k = 0; k < M; ++k) a.push_back(2 * k - M + 1);
    return a;
  }

  bool in_alphabet(double d) const {
    const double k = (d + M - 1) / 2.0;
    const double r = std::round(k);
    return r >= 0 && r <= M - 1 && std::abs(k - r) < 1e-12;
  }
};

// Gray mapping between bit labels and alphabet elements. Index k maps to
// 2k - M + 1 and carries the binary-reflected label k ^ (k >> 1).
inline unsigned gray_label(unsigned index) { return index ^ (index >> 1); }

inline unsigned gray_index(unsigned label) {
  unsigned k = label;
  for (unsigned s = label >> 1; s != 0; s >>= 1) k ^= s;
  return k;
}

inline int label_to_symbol(unsigned label, int M) {
  return 2 * static_cast<int>(gray_index(label)) - M + 1;
}

inline unsigned symbol_to_label(int symbol, int M) {
  return gray_label(static_cast<unsigned>((symbol + M - 1) / 2));
}

/// Phase response q(t): 0 before 0, 1/2 after gamma*T.
inline double phase_pulse(double t, const CpmParams& params) {
  const double L = params.gamma * params.T;
  if (t <= 0.0) return 0.0;
  if (t >= L) return 0.5;
  const double x = t / L;
  if (params.pulse == PulseShape::LREC) return 0.5 * x;
  return 0.5 * (x - std::sin(kTwoPi * x) / kTwoPi);
}

/// Phase memory of one antenna: theta in cycles plus the gamma-1 most recent
/// symbols, newest first. Symbols are real so that offset alphabets can be
/// modulated by the same code path.
struct PhaseState {
  double theta = 0.0;
  std::vector<double> history;

  static PhaseState initial(const CpmParams& params, double theta0 = 0.0, double fill = 0.0) {
    return {wrap_cycles(theta0), std::vector<double>(static_cast<std::size_t>(params.gamma - 1), fill)};
  }
};

/// Sampled complex baseband on one closed slot [start_time, start_time + T]:
/// oversampling + 1 samples, the last one coinciding with the next slot's first.
struct Waveform {
  std::vector<cplx> samples;
  double dt = 0.0;
  double start_time = 0.0;
};

using CorrectionFn = std::function<double(double)>;

inline double amplitude(const CpmParams& params, int antennas) {
  return std::sqrt(params.Es / (antennas * params.T));
}

/// Data part of the phase within a slot, excluding theta and correction:
/// h * sum_i window[i] * q(tau + i T), window newest first.
inline double data_phase(const CpmParams& params, std::span<const double> window, double tau) {
  double acc = 0.0;
  for (std::size_t i = 0; i < window.size(); ++i)
    acc += window[i] * phase_pulse(tau + static_cast<double>(i) * params.T, params);
  return params.h() * acc;
}

/// Phase at slot-relative time tau (0 <= tau <= T) given the current window.
inline double symbol_phase(const CpmParams& params, const PhaseState& state, std::span<const double> window,
                           const CorrectionFn& correction, double tau) {
  if (tau < -1e-12 * params.T || tau > params.T * (1 + 1e-12))
    throw std::out_of_range("symbol_phase: t outside the symbol slot");
  if (window.size() != static_cast<std::size_t>(params.gamma))
    throw std::invalid_argument("symbol_phase: window length must equal gamma");
  return state.theta + data_phase(params, window, tau) + (correction ? correction(tau) : 0.0);
}

/// Emit one slot given an explicit phase function phi(tau) in cycles.
template <class PhaseFn>
Waveform sample_slot(const CpmParams& params, int antennas, double start_time, PhaseFn&& phi) {
  Waveform w;
  w.dt = params.dt();
  w.start_time = start_time;
  const double a = amplitude(params, antennas);
  w.samples.resize(static_cast<std::size_t>(params.oversampling) + 1);
  for (int k = 0; k <= params.oversampling; ++k) {
    const double tau = k * w.dt;
    w.samples[static_cast<std::size_t>(k)] = a * phasor(phi(tau));
  }
  return w;
}

inline std::vector<double> make_window(double symbol, const PhaseState& state) {
  std::vector<double> w;
  w.reserve(state.history.size() + 1);
  w.push_back(symbol);
  w.insert(w.end(), state.history.begin(), state.history.end());
  return w;
}

/// Phase-memory increment of textbook CPM: (h/2) times the symbol leaving the
/// window at the end of this slot.
inline double conventional_xi(const CpmParams& params, const PhaseState& state, double symbol) {
  const double leaving = state.history.empty() ? symbol : state.history.back();
  return 0.5 * params.h() * leaving;
}

struct ModulatedSlot {
  Waveform waveform;
  PhaseState next;
};

/// Modulate one symbol slot. `alphabet_offset` admits shifted alphabets
/// {-M+1+o, ..., M-1+o}; anything else is rejected.
inline ModulatedSlot modulate_symbol(const CpmParams& params, const PhaseState& state, double symbol,
                                     const CorrectionFn& correction, double xi, double start_time = 0.0,
                                     int antennas = 1, double alphabet_offset = 0.0) {
  if (!params.in_alphabet(symbol - alphabet_offset))
    throw std::invalid_argument("modulate_symbol: symbol not in alphabet");
  if (state.history.size() != static_cast<std::size_t>(params.gamma - 1))
    throw std::invalid_argument("modulate_symbol: history length must be gamma-1");
  const auto window = make_window(symbol, state);
  ModulatedSlot out;
  out.waveform = sample_slot(params, antennas, start_time, [&](double tau) {
    return state.theta + data_phase(params, window, tau) + (correction ? correction(tau) : 0.0);
  });
  out.next.theta = wrap_cycles(state.theta + xi);
  out.next.history = state.history;
  if (!out.next.history.empty()) {
    out.next.history.pop_back();
    out.next.history.insert(out.next.history.begin(), symbol);
  }
  return out;
}

/// Trapezoidal inner product <a, b> = integral of a * conj(b) over a slot grid.
inline cplx inner_product(std::span<const cplx> a, std::span<const cplx> b, double dt) {
  const std::size_t n = a.size();
  if (n != b.size()) throw std::invalid_argument("inner_product: length mismatch");
  if (n < 2) return {};
  // explicit real arithmetic: std::complex multiply carries NaN-recovery branches
  auto re = [&](std::size_t k) { return a[k].real() * b[k].real() + a[k].imag() * b[k].imag(); };
  auto im = [&](std::size_t k) { return a[k].imag() * b[k].real() - a[k].real() * b[k].imag(); };
  double sr = 0.5 * (re(0) + re(n - 1));
  double si = 0.5 * (im(0) + im(n - 1));
  for (std::size_t k = 1; k + 1 < n; ++k) {
    sr += re(k);
    si += im(k);
  }
  return {sr * dt, si * dt};
}

inline double energy(std::span<const cplx> a, double dt) { return inner_product(a, a, dt).real(); }

}  // namespace stccpm
