#include <gtest/gtest.h>

#include <random>

#include "stccpm/cpm.hpp"

using namespace stccpm;

namespace {

CpmParams params(int M, int gamma, PulseShape pulse = PulseShape::LREC, int os = 64) {
  return CpmParams::from_h(Rational::make(1, 2), M, gamma, pulse, os);
}

// Textbook CPM phase from the full symbol history, independent of PhaseState:
// phi(t) = theta0 + h * sum_k d_k q(t - kT).
double textbook_phase(const CpmParams& p, const std::vector<int>& d, double t, double theta0) {
  double acc = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) acc += d[k] * phase_pulse(t - static_cast<double>(k) * p.T, p);
  return theta0 + p.h() * acc;
}

}  // namespace

TEST(Rational, ParsesAndReduces) {
  EXPECT_EQ(Rational::parse("2/4"), Rational::make(1, 2));
  EXPECT_EQ(Rational::parse("3"), Rational::make(3, 1));
  EXPECT_THROW(Rational::parse("0.5"), std::invalid_argument);
  EXPECT_THROW(Rational::parse("1/0"), std::invalid_argument);
}

TEST(CpmParams, IndexPairs) {
  auto half = CpmParams::from_h(Rational::make(1, 2), 4, 1);
  EXPECT_EQ(half.m0, 1);
  EXPECT_EQ(half.p, 4);
  auto quarter = CpmParams::from_h(Rational::make(1, 4), 4, 1);
  EXPECT_EQ(quarter.p, 8);
  auto two_thirds = CpmParams::from_h(Rational::make(2, 3), 4, 1);
  EXPECT_EQ(two_thirds.m0, 1);
  EXPECT_EQ(two_thirds.p, 3);
  EXPECT_DOUBLE_EQ(two_thirds.h(), 2.0 / 3.0);
}

TEST(CpmParams, Validation) {
  try {
    CpmParams::from_h(Rational::make(1, 2), 3, 1);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "M must be a power of 2");
  }
  EXPECT_THROW(CpmParams::from_h(Rational::make(1, 2), 4, 0), std::invalid_argument);
  EXPECT_THROW(CpmParams::from_h(Rational::make(1, 2), 4, 1, PulseShape::LREC, 4), std::invalid_argument);
  CpmParams bad;
  bad.m0 = 2;
  bad.p = 4;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Gray, RoundTripAndAdjacency) {
  for (int M : {2, 4, 8, 16}) {
    const auto a = params(M, 1).alphabet();
    for (unsigned label = 0; label < static_cast<unsigned>(M); ++label)
      EXPECT_EQ(symbol_to_label(label_to_symbol(label, M), M), label);
    for (std::size_t k = 0; k + 1 < a.size(); ++k)
      EXPECT_EQ(std::popcount(symbol_to_label(a[k], M) ^ symbol_to_label(a[k + 1], M)), 1);
  }
}

TEST(PhasePulse, Examples) {
  const auto p = params(4, 2);
  EXPECT_EQ(phase_pulse(0.0, p), 0.0);
  EXPECT_EQ(phase_pulse(-3.0, p), 0.0);
  EXPECT_DOUBLE_EQ(phase_pulse(2.0, p), 0.5);
  EXPECT_DOUBLE_EQ(phase_pulse(7.0, p), 0.5);
  EXPECT_DOUBLE_EQ(phase_pulse(1.0, p), 0.25);
  const auto rc = params(4, 2, PulseShape::LRC);
  EXPECT_NEAR(phase_pulse(1.0, rc), 0.25, 1e-15);  // symmetric about the midpoint
  EXPECT_NEAR(phase_pulse(2.0, rc), 0.5, 1e-15);
}

TEST(PhasePulse, MonotoneAndContinuous) {
  for (auto shape : {PulseShape::LREC, PulseShape::LRC})
    for (int g : {1, 2, 3}) {
      const auto p = params(4, g, shape);
      double prev = 0.0;
      for (int k = -10; k <= 1000; ++k) {
        const double t = k * g * 1.2e-3;
        const double q = phase_pulse(t, p);
        EXPECT_GE(q, prev - 1e-15);
        EXPECT_LE(q - prev, 2e-3);
        prev = q;
      }
    }
}

TEST(SymbolPhase, Examples) {
  const auto p1 = params(4, 1);
  auto zero = PhaseState::initial(p1);
  std::vector<double> w0{0.0};
  EXPECT_EQ(symbol_phase(p1, zero, w0, nullptr, 0.3), 0.0);
  std::vector<double> w1{1.0};
  EXPECT_DOUBLE_EQ(symbol_phase(p1, zero, w1, nullptr, 1.0), 0.25);

  const auto p2 = params(4, 2);
  auto st = PhaseState::initial(p2);
  std::vector<double> w{3.0, 1.0};
  EXPECT_DOUBLE_EQ(symbol_phase(p2, st, w, nullptr, 1.0), 0.625);

  EXPECT_THROW(symbol_phase(p2, st, w, nullptr, 1.5), std::out_of_range);
  EXPECT_THROW(symbol_phase(p2, st, w, nullptr, -0.1), std::out_of_range);
}

TEST(ModulateSymbol, RejectsOffAlphabetAndBadHistory) {
  const auto p = params(4, 2);
  auto st = PhaseState::initial(p);
  EXPECT_THROW(modulate_symbol(p, st, 2.0, nullptr, 0.0), std::invalid_argument);
  EXPECT_THROW(modulate_symbol(p, st, 5.0, nullptr, 0.0), std::invalid_argument);
  PhaseState wrong{0.0, {}};
  EXPECT_THROW(modulate_symbol(p, wrong, 1.0, nullptr, 0.0), std::invalid_argument);
  // shifted alphabet admitted only with the matching offset
  EXPECT_NO_THROW(modulate_symbol(p, st, 3.0, nullptr, 0.0, 0.0, 1, 2.0));
}

TEST(ModulateSymbol, ThetaRecursion) {
  const auto p = params(4, 1);
  auto st = PhaseState::initial(p);
  for (int k = 1; k <= 8; ++k) {
    auto out = modulate_symbol(p, st, 1.0, nullptr, conventional_xi(p, st, 1.0));
    st = out.next;
    EXPECT_NEAR(cycle_distance(st.theta, 0.25 * k), 0.0, 1e-12);
  }
  const auto p2 = params(4, 2);
  auto z = PhaseState::initial(p2);
  // gamma = 2: the first symbol stays in the window, the zero pre-history leaves
  auto out = modulate_symbol(p2, z, 3.0, nullptr, conventional_xi(p2, z, 3.0));
  EXPECT_EQ(out.next.theta, 0.0);
  EXPECT_EQ(out.next.history, std::vector<double>{3.0});
  out = modulate_symbol(p2, out.next, 1.0, nullptr, conventional_xi(p2, out.next, 1.0));
  EXPECT_DOUBLE_EQ(out.next.theta, 0.75);
}

TEST(ModulateSymbol, MatchesTextbookCpmAndIsContinuous) {
  std::mt19937_64 rng(11);
  for (auto shape : {PulseShape::LREC, PulseShape::LRC})
    for (int g : {1, 2, 3})
      for (int M : {2, 4, 8}) {
        const auto p = params(M, g, shape);
        const auto alpha = p.alphabet();
        std::uniform_int_distribution<int> pick(0, M - 1);
        std::vector<int> d(40);
        for (auto& v : d) v = alpha[static_cast<std::size_t>(pick(rng))];
        const double theta0 = 0.37;
        auto st = PhaseState::initial(p, theta0);
        const cplx* prev = nullptr;
        Waveform last;
        for (std::size_t n = 0; n < d.size(); ++n) {
          auto out = modulate_symbol(p, st, d[n], nullptr, conventional_xi(p, st, d[n]), n * p.T);
          const auto& s = out.waveform.samples;
          ASSERT_EQ(s.size(), static_cast<std::size_t>(p.oversampling) + 1);
          for (int k = 0; k <= p.oversampling; k += 8) {
            const double t = n * p.T + k * p.dt();
            const double expect = textbook_phase(p, d, t, theta0);
            EXPECT_NEAR(std::abs(s[static_cast<std::size_t>(k)] - amplitude(p, 1) * phasor(expect)), 0.0, 1e-9);
          }
          for (const auto& v : s) EXPECT_NEAR(std::abs(v), amplitude(p, 1), 1e-12 * amplitude(p, 1));
          if (prev) { EXPECT_LT(std::abs(std::arg(s.front() * std::conj(*prev))) / kTwoPi, 1e-10); }
          last = out.waveform;
          prev = &last.samples.back();
          st = out.next;
        }
      }
}

TEST(ModulateSymbol, SlotEnergy) {
  const auto p = params(8, 2);
  auto st = PhaseState::initial(p);
  for (int Lt : {1, 2, 3}) {
    auto out = modulate_symbol(p, st, 5.0, nullptr, 0.0, 0.0, Lt);
    EXPECT_NEAR(energy(out.waveform.samples, out.waveform.dt), p.Es / Lt, 1e-6 * p.Es / Lt);
  }
}

TEST(InnerProduct, TrapezoidAgainstClosedForm) {
  // integral over [0,1] of exp(j 2 pi f t) dt for f = 0.3
  const int n = 2048;
  std::vector<cplx> a(n + 1), one(n + 1, cplx(1.0, 0.0));
  for (int k = 0; k <= n; ++k) a[static_cast<std::size_t>(k)] = phasor(0.3 * k / n);
  const cplx exact = (phasor(0.3) - 1.0) / cplx(0.0, kTwoPi * 0.3);
  EXPECT_NEAR(std::abs(inner_product(a, one, 1.0 / n) - exact), 0.0, 1e-6);
  EXPECT_THROW(inner_product(a, std::vector<cplx>(3), 0.1), std::invalid_argument);
}
