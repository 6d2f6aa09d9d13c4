#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "iqjcas/channel_sim.hpp"
#include "iqjcas/iq_imbalance.hpp"
#include "iqjcas/ofdm_waveform.hpp"
#include "iqjcas/random.hpp"

namespace testing_support {

using namespace iqjcas;

// 64 subcarriers, 16 symbols, fft 128, cp 16
inline OfdmConfig tiny_config() { return {3, 64, 16, 128, 16, 28e9}; }

inline double rel_err(const CMatrix& a, const CMatrix& b) {
  const double d = b.norm();
  return d > 0 ? (a - b).norm() / d : (a - b).norm();
}

// rows whose mirror is in band; the edge subcarrier of an even grid is zeroed
inline CMatrix interior(const CMatrix& m) {
  CMatrix out = m;
  const int n = static_cast<int>(m.rows());
  for (int k = 0; k < n; ++k)
    if (mirror_index(k, n) < 0) out.row(k).setZero();
  return out;
}

// Hand-rolled generators. Each draws from its own Rng so property loops are
// reproducible from the trial index.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return rng_.uniform(lo, hi); }
  int integer(int lo, int hi) { return lo + static_cast<int>(rng_.below(hi - lo + 1)); }
  cd complex(double scale = 1.0) { return rng_.complex_gaussian(scale * scale); }

  CMatrix matrix(Eigen::Index r, Eigen::Index c) {
    CMatrix m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = complex();
    return m;
  }

  // |epsilon| <= 0.3, |dphi| <= 30 deg
  IqParams iq() { return fid_params(uniform(-0.3, 0.3), deg2rad(uniform(-30.0, 30.0))); }
  IqPair pair() { return {iq(), iq()}; }

  cd nonzero_lambda() {
    cd l;
    do {
      l = std::polar(uniform(0.2, 5.0), uniform(0.0, kTwoPi));
    } while (std::abs(l) == 0.0);
    return l;
  }

  OfdmConfig config() {
    static const OfdmConfig choices[] = {
        {3, 64, 16, 128, 16, 28e9}, {2, 63, 8, 64, 8, 3.5e9}, {1, 100, 12, 128, 9, 5e9},
        {3, 128, 10, 256, 18, 28e9}};
    return choices[integer(0, 3)];
  }

  // reflectors inside half the CP range and half the unambiguous velocity span
  Scenario scenario(const OfdmConfig& c, int n_max = 4) {
    const double d_max = 0.5 * distance_of_delay(c.cp_duration());
    const double v_max = 0.25 * kSpeedOfLight / (2.0 * c.carrier_frequency * c.symbol_period());
    Scenario s;
    const int n = integer(1, n_max);
    for (int i = 0; i < n; ++i)
      s.reflectors.push_back({uniform(0.0, d_max), uniform(-v_max, v_max),
                              i == 0 ? 0.0 : uniform(-30.0, -3.0), uniform(0.0, kTwoPi)});
    return s;
  }

 private:
  Rng rng_;
};

}  // namespace testing_support
