#pragma once
// Frequency-flat block fading plus complex AWGN.

#include <cstdint>
#include <random>
#include <vector>

#include "stccpm/stc.hpp"

namespace stccpm {

/// splitmix64 finalizer; derives independent child seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(master) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

enum class FadingKind {
  Complex,  // circularly-symmetric CN(0,1)
  Real,     // real Rayleigh magnitude with E[a^2] = 1, no random phase
};

struct ChannelRealization {
  int Lr = 1;
  int Lt = 1;
  std::vector<cplx> alpha;  // row-major Lr x Lt
  double N0 = 0.0;

  cplx operator()(int n, int m) const { return alpha[static_cast<std::size_t>(n * Lt + m)]; }
};

inline ChannelRealization draw_fading(int Lr, int Lt, std::mt19937_64& rng, FadingKind kind = FadingKind::Complex,
                                      double N0 = 0.0) {
  if (Lr < 1 || Lt < 1) throw std::invalid_argument("draw_fading: antenna counts must be positive");
  ChannelRealization ch{Lr, Lt, {}, N0};
  std::normal_distribution<double> g(0.0, std::sqrt(0.5));
  ch.alpha.reserve(static_cast<std::size_t>(Lr * Lt));
  for (int k = 0; k < Lr * Lt; ++k) {
    const double re = g(rng);
    const double im = g(rng);
    ch.alpha.push_back(kind == FadingKind::Complex ? cplx(re, im) : cplx(std::hypot(re, im), 0.0));
  }
  return ch;
}

/// Received block: y[n][r] holds Rx antenna n's samples over slot r.
struct ReceivedBlock {
  std::vector<std::vector<std::vector<cplx>>> y;
  double dt = 0.0;
};

/// y_n = sum_m alpha_{n,m} s_m + noise, noise variance N0 / (2 dt) per real
/// dimension per sample so matched-filter SNR does not depend on the grid.
inline ReceivedBlock apply_channel(const SignalBlock& block, const ChannelRealization& ch, std::mt19937_64& rng) {
  if (ch.Lt != block.Lt) throw std::invalid_argument("apply_channel: antenna count mismatch");
  const auto& first = block.slots.front().front();
  const std::size_t ns = first.samples.size();
  ReceivedBlock out;
  out.dt = first.dt;
  const double sigma = ch.N0 > 0.0 ? std::sqrt(ch.N0 / (2.0 * out.dt)) : 0.0;
  std::normal_distribution<double> g(0.0, 1.0);
  out.y.assign(static_cast<std::size_t>(ch.Lr),
               std::vector<std::vector<cplx>>(block.slots.front().size(), std::vector<cplx>(ns)));
  for (int n = 0; n < ch.Lr; ++n)
    for (std::size_t r = 0; r < block.slots.front().size(); ++r) {
      auto& y = out.y[static_cast<std::size_t>(n)][r];
      for (int m = 0; m < block.Lt; ++m) {
        const cplx a = ch(n, m);
        const auto& s = block.slots[static_cast<std::size_t>(m)][r].samples;
        for (std::size_t k = 0; k < ns; ++k) y[k] += a * s[k];
      }
      if (sigma > 0.0)
        for (auto& v : y) v += cplx(sigma * g(rng), sigma * g(rng));
    }
  return out;
}

/// N0 for a target Eb/N0 in dB, with E_b = E_s / log2(M).
inline double noise_density(const CpmParams& params, double ebn0_db) {
  if (std::isinf(ebn0_db) && ebn0_db > 0) return 0.0;
  const double eb = params.Es / params.bits_per_symbol();
  return eb / std::pow(10.0, ebn0_db / 10.0);
}

}  // namespace stccpm
