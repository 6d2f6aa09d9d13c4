#pragma once

#include <cmath>
#include <vector>

#include "bilinear_estimators.hpp"
#include "channel_sim.hpp"
#include "common.hpp"
#include "iq_imbalance.hpp"
#include "ofdm_waveform.hpp"
#include "radar_processing.hpp"

namespace iqjcas {

struct CompensationParams {
  cd alpha_tx_hat{1, 0};
  cd beta_tx_hat{0, 0};
  cd alpha_rx_hat{1, 0};
  cd beta_rx_hat{0, 0};

  static CompensationParams from_estimate(const BilinearEstimate& e) {
    return {e.alpha_tx(), e.beta_tx(), e.alpha_rx(), e.beta_rx()};
  }
  static CompensationParams from_pair(const IqPair& p) {
    return {p.tx.alpha, p.tx.beta, p.rx.alpha, p.rx.beta};
  }
};

inline ResourceGrid forward_tx(const ResourceGrid& x, const CompensationParams& p) {
  return {x.config, p.alpha_tx_hat * x.data + p.beta_tx_hat * conj_mirror(x.data)};
}

inline ResourceGrid invert_rx(const ResourceGrid& y, const CompensationParams& p) {
  const double det = imbalance_determinant(p.alpha_rx_hat, p.beta_rx_hat);
  if (det == 0.0 || !std::isfinite(det))
    throw SingularImbalanceError("|alpha_Rx|^2 - |beta_Rx|^2 is zero, cannot invert");
  return {y.config,
          (std::conj(p.alpha_rx_hat) * y.data - p.beta_rx_hat * conj_mirror(y.data)) / det};
}

struct CompensatedChannel {
  ChannelMatrix h;
  std::vector<Cell> skipped;  // (subcarrier, symbol) entries set to zero
};

// H = invert_rx(Y) / forward_tx(X). Edge subcarriers without a mirror and
// near-zero divisors are zeroed and listed.
inline CompensatedChannel compensated_channel(const ResourceGrid& y_rx, const ResourceGrid& x_tx,
                                              const CompensationParams& p) {
  check_shape(x_tx.config, y_rx.data, "compensated_channel");
  const ResourceGrid xr = invert_rx(y_rx, p);
  const ResourceGrid yt = forward_tx(x_tx, p);
  const int n = x_tx.config.n_subcarriers;
  double mean = 0.0;
  Eigen::Index count = 0;
  for (int k = 0; k < n; ++k)
    if (mirror_index(k, n) >= 0) {
      mean += yt.data.row(k).cwiseAbs().sum();
      count += yt.data.cols();
    }
  mean = count > 0 ? mean / count : 0.0;

  CompensatedChannel out{{x_tx.config, CMatrix::Zero(n, x_tx.config.n_symbols)}, {}};
  for (Eigen::Index l = 0; l < yt.data.cols(); ++l)
    for (int k = 0; k < n; ++k) {
      if (mirror_index(k, n) < 0) continue;
      const cd d = yt.data(k, l);
      if (!(std::abs(d) >= 1e-9 * mean)) {
        out.skipped.push_back({k, static_cast<int>(l)});
        continue;
      }
      out.h.data(k, l) = xr.data(k, l) / d;
    }
  return out;
}

}  // namespace iqjcas
