#pragma once
// Monte Carlo BER, diversity slope, Welch PSD, spectral shift and the
// initial-phase BER sweep. All results are pure functions of (config, seed)
// and do not depend on the thread count.

#include <fftw3.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstring>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "stccpm/mlse.hpp"

namespace stccpm {

inline int default_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

/// Run body(i) for i in [0, n) on up to `threads` workers.
template <class Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
  const int workers = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1))));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lk(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------------------
// BER

struct ChannelConfig {
  int Lr = 1;
  FadingKind fading = FadingKind::Complex;
  int coherence_blocks = 1;  // code blocks per fading realization
};

struct StopRule {
  std::uint64_t min_errors = 100;
  std::uint64_t max_bits = 2'000'000;
};

struct BerConfig {
  StCode code = StCode::make(Family::PC2Generic);
  CpmParams params;
  ChannelConfig channel;
  DecoderConfig decoder;
  StopRule stop;
  int frame_blocks = 100;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: all cores
  int chunk = 16;   // frames per scheduling round; fixed so results are thread-count independent

  void validate() const {
    code.validate();
    params.validate();
    decoder.validate();
    if (channel.Lr < 1) throw std::invalid_argument("Lr must be >= 1");
    if (channel.coherence_blocks < 1) throw std::invalid_argument("coherence_blocks must be >= 1");
    if (frame_blocks < 1) throw std::invalid_argument("frame_blocks must be >= 1");
    if (chunk < 1) throw std::invalid_argument("chunk must be >= 1");
    if (stop.max_bits == 0) throw std::invalid_argument("max_bits must be > 0");
  }

  std::string fingerprint() const {
    std::ostringstream s;
    s << family_name(code.family) << " Lt=" << code.Lt << " Lr=" << channel.Lr << " h=" << params.h_rational().str()
      << " M=" << params.M << " gamma=" << params.gamma << " pulse=" << to_string(params.pulse)
      << " os=" << params.oversampling << " theta0=";
    for (std::size_t m = 0; m < code.theta0.size(); ++m) s << (m ? "," : "") << code.theta0[m];
    s << " fading=" << (channel.fading == FadingKind::Complex ? "complex" : "real")
      << " coherence=" << channel.coherence_blocks << " metric=" << metric_name(decoder.metric)
      << " truncation=" << decoder.truncation << " frame_blocks=" << frame_blocks << " min_errors=" << stop.min_errors
      << " max_bits=" << stop.max_bits;
    return s.str();
  }
};

struct WilsonInterval {
  double lo = 0.0;
  double hi = 1.0;
};

inline WilsonInterval wilson_interval(std::uint64_t errors, std::uint64_t trials, double z = 1.96) {
  if (trials == 0) return {};
  const double n = static_cast<double>(trials);
  const double ph = static_cast<double>(errors) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (ph + z2 / (2 * n)) / denom;
  const double half = z * std::sqrt(ph * (1 - ph) / n + z2 / (4 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

struct BerPoint {
  double ebn0_db = 0.0;
  std::uint64_t errors = 0;
  std::uint64_t bits = 0;
  double ber = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 1.0;
};

struct BerCurve {
  std::vector<BerPoint> points;
  std::string fingerprint;
  std::uint64_t seed = 0;
};

struct FrameResult {
  std::vector<int> data;
  std::vector<int> decoded;
  std::uint64_t bit_errors = 0;
  std::uint64_t bits = 0;
};

inline std::uint64_t bit_errors(std::span<const int> a, std::span<const int> b, int M) {
  std::uint64_t e = 0;
  for (std::size_t k = 0; k < a.size(); ++k)
    e += static_cast<std::uint64_t>(std::popcount(symbol_to_label(a[k], M) ^ symbol_to_label(b[k], M)));
  return e;
}

/// Seeds: data and fading depend only on (seed, frame) so curves at different
/// Eb/N0, and systems differing only in Lr, see the same symbols and paths.
inline std::uint64_t noise_seed(std::uint64_t seed, double ebn0_db, std::uint64_t frame) {
  return derive_seed(seed ^ std::bit_cast<std::uint64_t>(ebn0_db), frame, 3);
}

/// Transmit one frame of random data over the channel and decode it.
inline FrameResult simulate_frame(const BerConfig& cfg, const Trellis& trellis, double ebn0_db, std::uint64_t frame,
                                  DecodeCounters* counters = nullptr) {
  const auto& code = cfg.code;
  const auto& params = cfg.params;
  std::mt19937_64 data_rng(derive_seed(cfg.seed, frame, 1));
  std::mt19937_64 fade_rng(derive_seed(cfg.seed, frame, 2));
  std::mt19937_64 noise_rng(noise_seed(cfg.seed, ebn0_db, frame));

  FrameResult fr;
  fr.data = random_symbols(params, static_cast<std::size_t>(cfg.frame_blocks * code.Lt), data_rng);
  const auto blocks =
      code.family == Family::None ? modulate_reference(params, fr.data, code.theta0[0]) : encode_stream(code, params, fr.data);
  const double N0 = noise_density(params, ebn0_db);

  std::vector<ReceivedBlock> rx;
  std::vector<ChannelRealization> ch;
  rx.reserve(blocks.size());
  ch.reserve(blocks.size());
  ChannelRealization current;
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    if (l % static_cast<std::size_t>(cfg.channel.coherence_blocks) == 0)
      current = draw_fading(cfg.channel.Lr, code.Lt, fade_rng, cfg.channel.fading, N0);
    rx.push_back(apply_channel(blocks[l], current, noise_rng));
    ch.push_back(current);
  }
  fr.decoded = viterbi_decode(rx, ch, trellis, cfg.decoder, counters);
  fr.bits = fr.data.size() * static_cast<std::uint64_t>(params.bits_per_symbol());
  fr.bit_errors = bit_errors(fr.data, fr.decoded, params.M);
  return fr;
}

inline Trellis make_trellis(const BerConfig& cfg) {
  const bool blocks = cfg.decoder.metric == Metric::Joint || !cfg.code.causal();
  return Trellis(cfg.code, cfg.params, blocks);
}

/// One BER point: frames are simulated in fixed-size rounds and accumulated in
/// frame order until the stop rule fires.
inline BerPoint run_ber_point(const BerConfig& cfg, const Trellis& trellis, double ebn0_db) {
  BerPoint pt;
  pt.ebn0_db = ebn0_db;
  const int threads = cfg.threads > 0 ? cfg.threads : default_threads();
  std::uint64_t frame = 0;
  bool done = false;
  while (!done) {
    std::vector<FrameResult> round(static_cast<std::size_t>(cfg.chunk));
    parallel_for(round.size(), threads, [&](std::size_t i) {
      auto fr = simulate_frame(cfg, trellis, ebn0_db, frame + i);
      fr.data.clear();
      fr.decoded.clear();
      round[i] = std::move(fr);
    });
    for (const auto& fr : round) {
      pt.errors += fr.bit_errors;
      pt.bits += fr.bits;
      if (pt.errors >= cfg.stop.min_errors || pt.bits >= cfg.stop.max_bits) {
        done = true;
        break;
      }
    }
    frame += static_cast<std::uint64_t>(cfg.chunk);
  }
  pt.ber = static_cast<double>(pt.errors) / static_cast<double>(pt.bits);
  const auto ci = wilson_interval(pt.errors, pt.bits);
  pt.ci_lo = ci.lo;
  pt.ci_hi = ci.hi;
  return pt;
}

inline BerCurve run_ber(const BerConfig& cfg, std::span<const double> ebn0_db) {
  cfg.validate();
  const auto trellis = make_trellis(cfg);
  BerCurve curve;
  curve.fingerprint = cfg.fingerprint();
  curve.seed = cfg.seed;
  for (double e : ebn0_db) curve.points.push_back(run_ber_point(cfg, trellis, e));
  return curve;
}

/// Parse "a:step:b" (inclusive) or a comma list.
inline std::vector<double> parse_ebn0_list(const std::string& text) {
  std::vector<double> out;
  auto num = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw std::invalid_argument("ebn0: bad number '" + s + "'");
    return v;
  };
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw std::invalid_argument("ebn0: range must be start:step:stop");
    const double a = num(parts[0]), step = num(parts[1]), b = num(parts[2]);
    if (!(step > 0) || b < a) throw std::invalid_argument("ebn0: empty or invalid range");
    const auto n = static_cast<long long>(std::floor((b - a) / step + 1e-9));
    for (long long k = 0; k <= n; ++k) out.push_back(a + static_cast<double>(k) * step);
  } else {
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ',');) out.push_back(num(p));
  }
  if (out.empty()) throw std::invalid_argument("ebn0: no points");
  return out;
}

// ---------------------------------------------------------------------------
// Diversity slope

/// Negated least-squares slope of log10(BER) against log10(Eb/N0 linear),
/// i.e. decades of BER per decade of SNR, over points in [lo_db, hi_db] with
/// at least `min_errors` errors.
inline double estimate_diversity_slope(const BerCurve& curve, double lo_db, double hi_db,
                                       std::uint64_t min_errors = 1) {
  std::vector<double> xs, ys;
  for (const auto& p : curve.points) {
    if (p.ebn0_db < lo_db - 1e-9 || p.ebn0_db > hi_db + 1e-9) continue;
    if (p.errors < min_errors || p.errors == 0) continue;
    xs.push_back(p.ebn0_db / 10.0);
    ys.push_back(std::log10(p.ber));
  }
  if (xs.size() < 3) throw std::invalid_argument("estimate_diversity_slope: fewer than 3 usable points in window");
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sx += xs[k];
    sy += ys[k];
    sxx += xs[k] * xs[k];
    sxy += xs[k] * ys[k];
  }
  return -(n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// Welch PSD

namespace detail {
// the FFTW planner is not thread safe
inline std::mutex& fftw_planner() {
  static std::mutex mu;
  return mu;
}
}  // namespace detail

struct PsdEstimate {
  std::vector<double> freqs;  // f * T_d, ascending, DC at index segment/2
  std::vector<double> power;  // density per unit f*T_d, linear
  std::vector<double> power_db;
  int segment = 0;
  double overlap = 0.0;
  std::string window = "hann";
  double df = 0.0;  // bin width in f*T_d
  double mean_power = 0.0;

  double integrated_power() const {
    double s = 0.0;
    for (double p : power) s += p * df;
    return s;
  }
};

/// Averaged Hann-windowed periodograms of a complex stream sampled every dt.
/// `bit_duration` normalizes the frequency axis.
inline PsdEstimate welch_psd(std::span<const cplx> x, double dt, double bit_duration, int segment = 4096,
                             double overlap = 0.5) {
  if (segment < 8) throw std::invalid_argument("welch_psd: segment too short");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw std::invalid_argument("welch_psd: overlap must be in [0, 1)");
  if (x.size() < 4 * static_cast<std::size_t>(segment))
    throw std::invalid_argument("welch_psd: stream shorter than 4 segments");
  const auto N = static_cast<std::size_t>(segment);
  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(segment * (1.0 - overlap))));

  std::vector<double> w(N);
  double wss = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    w[k] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(k) / static_cast<double>(N));  // periodic Hann
    wss += w[k] * w[k];
  }

  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * N));
  fftw_plan plan;
  {
    std::lock_guard lk(detail::fftw_planner());
    plan = fftw_plan_dft_1d(segment, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  std::vector<double> acc(N, 0.0);
  std::size_t segs = 0;
  for (std::size_t start = 0; start + N <= x.size(); start += hop, ++segs) {
    for (std::size_t k = 0; k < N; ++k) {
      buf[k][0] = x[start + k].real() * w[k];
      buf[k][1] = x[start + k].imag() * w[k];
    }
    fftw_execute(plan);
    for (std::size_t k = 0; k < N; ++k) acc[k] += buf[k][0] * buf[k][0] + buf[k][1] * buf[k][1];
  }
  {
    std::lock_guard lk(detail::fftw_planner());
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);

  PsdEstimate est;
  est.segment = segment;
  est.overlap = overlap;
  const double fs = 1.0 / dt;
  est.df = fs / static_cast<double>(N) * bit_duration;
  est.freqs.resize(N);
  est.power.resize(N);
  est.power_db.resize(N);
  // density in 1/Hz is |X|^2 dt / sum(w^2); per unit f*T_d divide by T_d
  const double scale = dt / wss / static_cast<double>(segs) / bit_duration;
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t k = (i + N / 2) % N;  // fftshift
    const double f = (static_cast<double>(i) - static_cast<double>(N / 2)) * fs / static_cast<double>(N);
    est.freqs[i] = f * bit_duration;
    est.power[i] = acc[k] * scale;
    est.power_db[i] = 10.0 * std::log10(std::max(est.power[i], 1e-300));
  }
  double mp = 0.0;
  for (const auto& v : x) mp += std::norm(v);
  est.mean_power = mp / static_cast<double>(x.size());
  return est;
}

/// Shift of b relative to a in f*T_d (positive: b sits higher in frequency),
/// minimizing the L1 distance of the linear spectra over circular integer-bin
/// shifts, refined by a parabola through the three best costs.
inline double spectral_shift(const PsdEstimate& a, const PsdEstimate& b) {
  if (a.power.size() != b.power.size() || std::abs(a.df - b.df) > 1e-12 * std::abs(a.df))
    throw std::invalid_argument("spectral_shift: spectra must share a frequency grid");
  const auto K = static_cast<long long>(a.power.size());
  auto cost = [&](long long s) {
    double c = 0.0;
    for (long long k = 0; k < K; ++k) c += std::abs(a.power[static_cast<std::size_t>(k)] -
                                                    b.power[static_cast<std::size_t>(((k + s) % K + K) % K)]);
    return c;
  };
  long long best = 0;
  double best_cost = cost(0);
  for (long long s = -K / 2; s < K / 2; ++s) {
    const double c = cost(s);
    if (c < best_cost) {
      best_cost = c;
      best = s;
    }
  }
  const double cm = cost(best - 1), cp = cost(best + 1);
  const double denom = cm - 2 * best_cost + cp;
  const double frac = denom > 0 ? 0.5 * (cm - cp) / denom : 0.0;
  return (static_cast<double>(best) + std::clamp(frac, -0.5, 0.5)) * a.df;
}

/// `blocks` code blocks of random data, the stream used by the PSD tools.
inline std::vector<SignalBlock> random_signal(const StCode& code, const CpmParams& params, std::size_t blocks,
                                              std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0, 4));
  const auto data = random_symbols(params, blocks * static_cast<std::size_t>(code.Lt), rng);
  return code.family == Family::None ? modulate_reference(params, data, code.theta0[0])
                                     : encode_stream(code, params, data);
}

inline double bit_duration(const CpmParams& params) { return params.T / params.bits_per_symbol(); }

/// PSD of antenna m transmitting `blocks` code blocks of random data.
inline PsdEstimate antenna_psd(const StCode& code, const CpmParams& params, int m, std::size_t blocks,
                               std::uint64_t seed, int segment = 4096, double overlap = 0.5) {
  detail::check_antenna(code, m);
  const auto s = antenna_stream(random_signal(code, params, blocks, seed), m);
  return welch_psd(s, params.dt(), bit_duration(params), segment, overlap);
}

// ---------------------------------------------------------------------------
// Initial-phase sweep

struct PhaseSweepGrid {
  std::vector<double> theta1;
  std::vector<double> theta2;
  std::vector<std::vector<BerPoint>> cells;  // [i1][i2]
  std::size_t argmin_i = 0;
  std::size_t argmin_j = 0;

  double ber(std::size_t i, std::size_t j) const { return cells[i][j].ber; }
  double max_min_ratio() const {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& row : cells)
      for (const auto& c : row) {
        lo = std::min(lo, c.ber);
        hi = std::max(hi, c.ber);
      }
    return lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
  }
};

/// BER over theta1 x theta2 grids of size `resolution` covering [0, 1) cycles
/// with theta3 = 0. Every cell uses the same seed, so cells differ only in
/// the initial phases.
inline PhaseSweepGrid sweep_initial_phases(const BerConfig& base, double ebn0_db, int resolution) {
  if (base.code.Lt != 3) throw std::invalid_argument("sweep_initial_phases: requires a three-antenna code");
  if (resolution < 1) throw std::invalid_argument("sweep_initial_phases: resolution must be >= 1");
  base.validate();
  PhaseSweepGrid g;
  for (int k = 0; k < resolution; ++k) {
    g.theta1.push_back(static_cast<double>(k) / resolution);
    g.theta2.push_back(static_cast<double>(k) / resolution);
  }
  g.cells.assign(g.theta1.size(), std::vector<BerPoint>(g.theta2.size()));
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < g.theta1.size(); ++i)
    for (std::size_t j = 0; j < g.theta2.size(); ++j) {
      BerConfig cfg = base;
      cfg.code.theta0 = {g.theta1[i], g.theta2[j], 0.0};
      const Trellis trellis = make_trellis(cfg);
      g.cells[i][j] = run_ber_point(cfg, trellis, ebn0_db);
      if (g.cells[i][j].ber < best) {
        best = g.cells[i][j].ber;
        g.argmin_i = i;
        g.argmin_j = j;
      }
    }
  return g;
}

// ---------------------------------------------------------------------------
// CSV

inline void write_ber_csv(std::ostream& os, const BerCurve& c) {
  os << "ebn0_db,errors,bits,ber,ci_lo,ci_hi\n";
  os.precision(10);
  for (const auto& p : c.points)
    os << p.ebn0_db << ',' << p.errors << ',' << p.bits << ',' << p.ber << ',' << p.ci_lo << ',' << p.ci_hi << '\n';
}

inline void write_psd_csv(std::ostream& os, const PsdEstimate& e) {
  os << "f_td,power_db\n";
  os.precision(10);
  for (std::size_t k = 0; k < e.freqs.size(); ++k) os << e.freqs[k] << ',' << e.power_db[k] << '\n';
}

inline void write_sweep_csv(std::ostream& os, const PhaseSweepGrid& g) {
  os << "theta1,theta2,ber\n";
  os.precision(10);
  for (std::size_t i = 0; i < g.theta1.size(); ++i)
    for (std::size_t j = 0; j < g.theta2.size(); ++j) os << g.theta1[i] << ',' << g.theta2[j] << ',' << g.ber(i, j) << '\n';
}

}  // namespace stccpm
