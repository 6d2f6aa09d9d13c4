#pragma once

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "channel_sim.hpp"
#include "common.hpp"
#include "radar_processing.hpp"

namespace iqjcas {

struct KnownObject {
  double distance = 0.0;
  double velocity = 0.0;
};

inline std::vector<KnownObject> known_objects(const Scenario& s, bool include_leakage = true) {
  std::vector<KnownObject> out;
  for (std::size_t i = include_leakage ? 0 : 1; i < s.reflectors.size(); ++i)
    out.push_back({s.reflectors[i].distance, s.reflectors[i].velocity});
  return out;
}

namespace detail {

inline int circ_dist(int a, int b, int n) {
  const int d = std::abs(a - b) % n;
  return std::min(d, n - d);
}

// max power inside a +-half cell box around a fractional position
inline double box_max(const RMatrix& p, double row, double col, int half_r, int half_d) {
  const int nr = static_cast<int>(p.rows()), nd = static_cast<int>(p.cols());
  const int r0 = static_cast<int>(std::lround(row)), c0 = static_cast<int>(std::lround(col));
  double mx = 0.0;
  for (int dc = -half_d; dc <= half_d; ++dc)
    for (int dr = -half_r; dr <= half_r; ++dr)
      mx = std::max(mx, p(((r0 + dr) % nr + nr) % nr, ((c0 + dc) % nd + nd) % nd));
  return mx;
}

}  // namespace detail

// Dominant peak over the strongest cell outside the boxes around every object
// and its velocity-mirrored position. Box half-width in unpadded bins.
inline std::optional<double> sfdr_n(const RangeDopplerMap& rdm,
                                    const std::vector<KnownObject>& objects,
                                    double exclusion_bins = 5.0) {
  if (objects.empty()) throw std::invalid_argument("sfdr_n: no known objects");
  const RMatrix p = rdm.power();
  const int nr = rdm.n_range(), nd = rdm.n_doppler();
  const int hr = static_cast<int>(std::floor(exclusion_bins * rdm.pad_range));
  const int hd = static_cast<int>(std::floor(exclusion_bins * rdm.pad_doppler));
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> excluded =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(nr, nd, false);
  for (const auto& o : objects)
    for (double v : {o.velocity, -o.velocity}) {
      const int r0 = static_cast<int>(std::lround(rdm.row_of(o.distance)));
      const int c0 = static_cast<int>(std::lround(rdm.col_of(v)));
      for (int dc = -std::min(hd, nd / 2); dc <= std::min(hd, (nd - 1) / 2); ++dc)
        for (int dr = -std::min(hr, nr / 2); dr <= std::min(hr, (nr - 1) / 2); ++dr)
          excluded(((r0 + dr) % nr + nr) % nr, ((c0 + dc) % nd + nd) % nd) = true;
    }
  double peak = 0.0, floor_max = -1.0;
  for (int j = 0; j < nd; ++j)
    for (int i = 0; i < nr; ++i) {
      peak = std::max(peak, p(i, j));
      if (!excluded(i, j)) floor_max = std::max(floor_max, p(i, j));
    }
  if (floor_max < 0.0) return std::nullopt;
  if (floor_max == 0.0) return kInf;
  return db10(peak / floor_max);
}

// Object peak over the strongest cell near its mirrored position; nullopt for
// objects whose mirror box overlaps their own box.
inline std::optional<double> sfdr_g(const RangeDopplerMap& rdm, const KnownObject& object,
                                    double tol_bins = 1.0) {
  const double col = rdm.col_of(object.velocity);
  const double ghost = rdm.col_of(-object.velocity);
  const int hr = static_cast<int>(std::floor(tol_bins * rdm.pad_range));
  const int hd = static_cast<int>(std::floor(tol_bins * rdm.pad_doppler));
  if (std::abs(col - ghost) <= 2.0 * hd) return std::nullopt;
  const RMatrix p = rdm.power();
  const double row = rdm.row_of(object.distance);
  const double pk = detail::box_max(p, row, col, hr, hd);
  const double gh = detail::box_max(p, row, ghost, hr, hd);
  if (gh == 0.0) return kInf;
  return db10(pk / gh);
}

// Matched-filter amplitude of each object, averaged over the subcarriers that
// have an in-band mirror.
inline Eigen::VectorXcd object_amplitudes(const ChannelMatrix& h,
                                          const std::vector<KnownObject>& objects) {
  const OfdmConfig& c = h.config;
  const int n = c.n_subcarriers;
  Eigen::VectorXcd out(static_cast<Eigen::Index>(objects.size()));
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const double tau = delay_of_distance(objects[i].distance);
    const double fd = doppler_of_velocity(objects[i].velocity, c.carrier_frequency);
    CVector r(n), d(c.n_symbols);
    int used = 0;
    for (int k = 0; k < n; ++k) {
      const bool ok = mirror_index(k, n) >= 0;
      r(k) = ok ? std::polar(1.0, -kTwoPi * c.subcarrier_frequency(k) * tau) : cd(0, 0);
      used += ok;
    }
    for (int l = 0; l < c.n_symbols; ++l)
      d(l) = std::polar(1.0, kTwoPi * fd * l * c.symbol_period());
    out(static_cast<Eigen::Index>(i)) =
        r.dot(h.data * d.conjugate()) / (static_cast<double>(used) * c.n_symbols);
  }
  return out;
}

inline constexpr double kMseFloorDb = -300.0;

inline double amplitude_mse(const CMatrix& a_true, const CMatrix& a_hat) {
  if (a_true.rows() != a_hat.rows() || a_true.cols() != a_hat.cols())
    throw std::invalid_argument("amplitude_mse: shape mismatch");
  if (a_true.size() == 0) throw std::invalid_argument("amplitude_mse: empty input");
  const double mse = (a_true - a_hat).squaredNorm() / static_cast<double>(a_true.size());
  if (mse <= 0.0) return kMseFloorDb;
  return std::max(db10(mse), kMseFloorDb);
}

// (mean relative magnitude error, mean |phase error| in degrees)
inline std::pair<double, double> amplitude_phase_errors(const CMatrix& a_true,
                                                        const CMatrix& a_hat) {
  if (a_true.rows() != a_hat.rows() || a_true.cols() != a_hat.cols())
    throw std::invalid_argument("amplitude_phase_errors: shape mismatch");
  if (a_true.size() == 0) throw std::invalid_argument("amplitude_phase_errors: empty input");
  double eps = 0.0, phi = 0.0;
  for (Eigen::Index j = 0; j < a_true.cols(); ++j)
    for (Eigen::Index i = 0; i < a_true.rows(); ++i) {
      const cd a = a_true(i, j), b = a_hat(i, j);
      if (std::abs(a) == 0.0)
        throw std::invalid_argument("amplitude_phase_errors: zero true amplitude");
      eps += (std::abs(a) - std::abs(b)) / std::abs(a);
      const cd q = b * std::conj(a);
      phi += std::abs(rad2deg(std::atan2(q.imag(), q.real())));
    }
  const double n = static_cast<double>(a_true.size());
  return {eps / n, phi / n};
}

struct MetricsReport {
  std::optional<double> sfdr_n_db;
  std::vector<std::optional<double>> sfdr_g_db;  // per object, leakage excluded
  double mse_db = kMseFloorDb;
  double mean_amp_error = 0.0;
  double mean_phase_error = 0.0;  // degrees
  double isr_db = kInf;
  double evm_tx = 0.0;
  double evm_rx = 0.0;
};

}  // namespace iqjcas
