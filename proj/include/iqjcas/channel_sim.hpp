#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "common.hpp"
#include "ofdm_waveform.hpp"
#include "random.hpp"

namespace iqjcas {

struct Reflector {
  double distance = 0.0;  // m
  double velocity = 0.0;  // m/s, positive when approaching
  double power_db = 0.0;  // relative to leakage
  double phase = 0.0;     // rad
};

struct Scenario {
  std::vector<Reflector> reflectors;  // index 0 is the leakage path
  double snr_db = kInf;               // leakage power over per-subcarrier noise power
  std::uint64_t seed = 0;

  // leakage plus three objects
  static Scenario reference_scene(double snr_db = kInf, std::uint64_t seed = 0) {
    return {{{0.5, 0.0, 0.0, 0.0}, {6.0, 15.0, -40.0, 0.0}, {15.0, 10.0, -43.0, 0.0},
             {10.0, 0.0, -47.0, 0.0}},
            snr_db,
            seed};
  }
};

struct ChannelMatrix {
  OfdmConfig config;
  CMatrix data;  // n_subcarriers x n_symbols
};

inline double delay_of_distance(double d) { return 2.0 * d / kSpeedOfLight; }
inline double distance_of_delay(double tau) { return tau * kSpeedOfLight / 2.0; }
inline double doppler_of_velocity(double v, double fc) { return -2.0 * v * fc / kSpeedOfLight; }
inline double velocity_of_doppler(double fd, double fc) { return -fd * kSpeedOfLight / (2.0 * fc); }

inline cd reflector_amplitude(const Reflector& r) {
  return std::polar(std::sqrt(from_db10(r.power_db)), r.phase);
}

// H[k,l] += a * exp(-j2pi f_k tau) * exp(j2pi fD l (T+T_CP))
inline void add_exponential(CMatrix& h, cd amplitude, double delay, double doppler,
                            const OfdmConfig& c) {
  CVector r(c.n_subcarriers);
  for (int k = 0; k < c.n_subcarriers; ++k)
    r(k) = amplitude * std::polar(1.0, -kTwoPi * c.subcarrier_frequency(k) * delay);
  const double ts = c.symbol_period();
  for (int l = 0; l < c.n_symbols; ++l) {
    const cd d = std::polar(1.0, kTwoPi * doppler * l * ts);
    h.col(l) += r * d;
  }
}

inline ChannelMatrix synthesize_channel(const Scenario& s, const OfdmConfig& c) {
  c.validate();
  if (s.reflectors.empty()) throw std::invalid_argument("scenario has no reflectors");
  ChannelMatrix h{c, CMatrix::Zero(c.n_subcarriers, c.n_symbols)};
  for (const Reflector& r : s.reflectors) {
    if (r.distance < 0.0) throw std::invalid_argument("negative reflector distance");
    const double tau = delay_of_distance(r.distance);
    if (tau >= c.cp_duration())
      throw ModelViolationError("reflector at " + std::to_string(r.distance) +
                                " m has round-trip delay beyond the cyclic prefix");
    add_exponential(h.data, reflector_amplitude(r), tau,
                    doppler_of_velocity(r.velocity, c.carrier_frequency), c);
  }
  return h;
}

inline ResourceGrid apply_channel(const ResourceGrid& x, const ChannelMatrix& h) {
  check_shape(x.config, h.data, "apply_channel");
  return {x.config, x.data.cwiseProduct(h.data)};
}

inline double noise_variance(const Scenario& s) {
  if (s.reflectors.empty()) throw std::invalid_argument("scenario has no reflectors");
  if (std::isinf(s.snr_db) && s.snr_db > 0) return 0.0;
  return from_db10(s.reflectors.front().power_db) / from_db10(s.snr_db);
}

// i.i.d. CN(0, variance) matrix, column-major draw order
inline CMatrix awgn_matrix(Eigen::Index rows, Eigen::Index cols, double variance,
                           std::uint64_t seed) {
  CMatrix n = CMatrix::Zero(rows, cols);
  if (variance <= 0.0) return n;
  Rng rng(seed);
  for (Eigen::Index l = 0; l < cols; ++l)
    for (Eigen::Index k = 0; k < rows; ++k) n(k, l) = rng.complex_gaussian(variance);
  return n;
}

inline CMatrix scenario_noise(const Scenario& s, const OfdmConfig& c) {
  if (std::isnan(s.snr_db)) throw std::invalid_argument("snr_db is NaN");
  return awgn_matrix(c.n_subcarriers, c.n_symbols, noise_variance(s), s.seed);
}

inline ResourceGrid add_awgn(const ResourceGrid& g, const Scenario& s) {
  const double var = noise_variance(s);
  if (var == 0.0) return g;
  return {g.config, g.data + awgn_matrix(g.data.rows(), g.data.cols(), var, s.seed)};
}

}  // namespace iqjcas
