#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "channel_sim.hpp"
#include "common.hpp"
#include "ofdm_waveform.hpp"

namespace iqjcas {

struct IqParams {
  double epsilon = 0.0;
  double delta_phi = 0.0;  // rad
  cd alpha{1.0, 0.0};
  cd beta{0.0, 0.0};

  // Coefficient form with (epsilon, delta_phi) recovered from the FID structure.
  static IqParams from_coefficients(cd alpha, cd beta) {
    IqParams p;
    p.alpha = alpha;
    p.beta = beta;
    p.delta_phi = 2.0 * std::atan2(-beta.imag(), alpha.real());
    const double c = std::cos(p.delta_phi / 2.0);
    p.epsilon = c != 0.0 ? beta.real() / c : 0.0;
    return p;
  }
};

struct IqPair {
  IqParams tx;
  IqParams rx;
};

inline IqParams fid_params(double epsilon, double delta_phi) {
  const double c = std::cos(delta_phi / 2.0);
  const double s = std::sin(delta_phi / 2.0);
  return {epsilon, delta_phi, cd(c, epsilon * s), cd(epsilon * c, -s)};
}

inline IqPair ideal_pair() { return {fid_params(0, 0), fid_params(0, 0)}; }

inline IqPair literature_pair() {
  return {fid_params(0.3, deg2rad(-20.0)), fid_params(-0.1, deg2rad(-30.0))};
}

inline IqPair threegpp_pair() {
  return {fid_params(-0.02, deg2rad(2.0)), fid_params(-0.03, deg2rad(-2.0))};
}

inline std::vector<std::string> imbalance_preset_names() { return {"ideal", "literature", "3gpp"}; }

inline IqPair imbalance_preset(const std::string& name) {
  if (name == "ideal" || name == "none") return ideal_pair();
  if (name == "literature") return literature_pair();
  if (name == "3gpp") return threegpp_pair();
  throw std::invalid_argument("unknown imbalance preset '" + name + "'");
}

template <class Derived>
CMatrix apply_imbalance_freq(const Eigen::MatrixBase<Derived>& grid, const IqParams& p) {
  return p.alpha * grid + p.beta * conj_mirror(grid);
}

inline ResourceGrid apply_imbalance_freq(const ResourceGrid& g, const IqParams& p) {
  return {g.config, apply_imbalance_freq(g.data, p)};
}

inline TimeSignal apply_imbalance_time(const TimeSignal& s, const IqParams& p) {
  TimeSignal out = s;
  out.samples = p.alpha * s.samples + p.beta * s.samples.conjugate();
  return out;
}

inline double imbalance_determinant(cd alpha, cd beta) {
  return std::norm(alpha) - std::norm(beta);
}

inline TimeSignal invert_imbalance_time(const TimeSignal& s, const IqParams& p) {
  const double det = imbalance_determinant(p.alpha, p.beta);
  if (det == 0.0) throw SingularImbalanceError("|alpha|^2 == |beta|^2, imbalance not invertible");
  TimeSignal out = s;
  out.samples = (std::conj(p.alpha) * s.samples - p.beta * s.samples.conjugate()) / det;
  return out;
}

// Y_Rx = a_R (Y_Tx o H + n) + b_R cm(Y_Tx o H + n),  Y_Tx = a_T X + b_T cm(X)
inline ResourceGrid afflicted_rx_grid(const ResourceGrid& x, const ChannelMatrix& h,
                                      const IqPair& pair, const CMatrix& noise) {
  check_shape(x.config, h.data, "afflicted_rx_grid");
  const CMatrix y_tx = apply_imbalance_freq(x.data, pair.tx);
  CMatrix r = y_tx.cwiseProduct(h.data);
  if (noise.size() != 0) {
    check_shape(x.config, noise, "afflicted_rx_grid noise");
    r += noise;
  }
  return {x.config, apply_imbalance_freq(r, pair.rx)};
}

inline ResourceGrid afflicted_rx_grid(const ResourceGrid& x, const ChannelMatrix& h,
                                      const IqPair& pair) {
  return afflicted_rx_grid(x, h, pair, CMatrix());
}

// Image suppression ratio in dB; +inf when there is no image at all.
inline double isr(const IqPair& p) {
  const double den = std::norm(p.rx.beta * std::conj(p.tx.beta));
  if (den == 0.0) return kInf;
  return db10(std::norm(p.tx.alpha * p.rx.alpha) / den);
}

inline double evm(const IqParams& p) {
  return std::sqrt(std::norm(p.alpha - 1.0) + std::norm(p.beta));
}

}  // namespace iqjcas
