#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "channel_sim.hpp"
#include "common.hpp"
#include "fft.hpp"
#include "ofdm_waveform.hpp"

namespace iqjcas {

enum class Window { rectangular, hann, blackman_harris };

inline std::string to_string(Window w) {
  switch (w) {
    case Window::rectangular: return "rectangular";
    case Window::hann: return "hann";
    case Window::blackman_harris: return "blackman_harris";
  }
  return "?";
}

inline Window window_from_string(const std::string& s) {
  if (s == "rectangular" || s == "rect") return Window::rectangular;
  if (s == "hann") return Window::hann;
  if (s == "blackman_harris" || s == "bh") return Window::blackman_harris;
  throw std::invalid_argument("unknown window '" + s + "'");
}

// symmetric window of length n
inline Eigen::VectorXd window_coefficients(Window w, int n) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
  if (n < 2 || w == Window::rectangular) return v;
  for (int i = 0; i < n; ++i) {
    const double x = kTwoPi * i / (n - 1);
    if (w == Window::hann)
      v(i) = 0.5 - 0.5 * std::cos(x);
    else
      v(i) = 0.35875 - 0.48829 * std::cos(x) + 0.14128 * std::cos(2 * x) -
             0.01168 * std::cos(3 * x);
  }
  return v;
}

struct RangeDopplerMap {
  CMatrix complex_map;  // (pad_range*N_sc) x (pad_doppler*N_sym), Doppler centred
  double range_bin = 0.0;     // m per padded range cell
  double velocity_bin = 0.0;  // m/s per padded Doppler cell, see velocity_at
  int pad_range = 1;
  int pad_doppler = 1;
  Window window = Window::rectangular;

  int n_range() const { return static_cast<int>(complex_map.rows()); }
  int n_doppler() const { return static_cast<int>(complex_map.cols()); }
  int doppler_center() const { return n_doppler() / 2; }

  double distance_at(double row) const { return row * range_bin; }
  double velocity_at(double col) const { return -(col - doppler_center()) * velocity_bin; }
  double row_of(double distance) const { return distance / range_bin; }
  double col_of(double velocity) const { return doppler_center() - velocity / velocity_bin; }

  // unpadded resolutions
  double range_resolution() const { return range_bin * pad_range; }
  double velocity_resolution() const { return velocity_bin * pad_doppler; }

  RMatrix power() const { return complex_map.cwiseAbs2(); }

  // 20 log10 |map|, global maximum at 0 dB
  RMatrix power_map_db() const {
    RMatrix p = power();
    const double mx = p.maxCoeff();
    return p.unaryExpr([mx](double v) { return 10.0 * std::log10(v / mx); });
  }
};

inline RangeDopplerMap compute_rdm(const ChannelMatrix& h, int pad_range = 4, int pad_doppler = 4,
                                   Window window = Window::rectangular) {
  const OfdmConfig& c = h.config;
  check_shape(c, h.data, "compute_rdm");
  if (pad_range < 1 || pad_doppler < 1) throw std::invalid_argument("padding factors must be >= 1");
  const int nsc = c.n_subcarriers, nsym = c.n_symbols;
  const int nr = pad_range * nsc, nd = pad_doppler * nsym;

  const Eigen::VectorXd wr = window_coefficients(window, nsc);
  const Eigen::VectorXd wd = window_coefficients(window, nsym);

  CMatrix cols = CMatrix::Zero(nr, nsym);
  cols.topRows(nsc) = h.data;
  if (window != Window::rectangular)
    cols.topRows(nsc) = (wr.asDiagonal() * h.data * wd.asDiagonal()).eval();
  fft::columns(cols, fft::Direction::inverse);

  CMatrix full = CMatrix::Zero(nr, nd);
  full.leftCols(nsym) = cols;
  cols.resize(0, 0);
  fft::rows(full, fft::Direction::forward);

  RangeDopplerMap m;
  m.complex_map.resize(nr, nd);
  const double scale = 1.0 / std::sqrt(static_cast<double>(nr) * nd);
  for (int j = 0; j < nd; ++j) m.complex_map.col((j + nd / 2) % nd) = full.col(j) * scale;
  m.range_bin = kSpeedOfLight / (2.0 * nr * c.subcarrier_spacing());
  m.velocity_bin = kSpeedOfLight / (2.0 * c.carrier_frequency * nd * c.symbol_period());
  m.pad_range = pad_range;
  m.pad_doppler = pad_doppler;
  m.window = window;
  return m;
}

// Y / X element-wise
inline ChannelMatrix estimate_channel(const ResourceGrid& y, const ResourceGrid& x) {
  check_shape(x.config, y.data, "estimate_channel");
  check_shape(x.config, x.data, "estimate_channel");
  ChannelMatrix h{x.config, CMatrix(y.data.rows(), y.data.cols())};
  for (Eigen::Index l = 0; l < x.data.cols(); ++l)
    for (Eigen::Index k = 0; k < x.data.rows(); ++k) {
      if (x.data(k, l) == cd(0.0, 0.0))
        throw std::domain_error("estimate_channel: zero transmit symbol at (" +
                                std::to_string(k) + ", " + std::to_string(l) + ")");
      h.data(k, l) = y.data(k, l) / x.data(k, l);
    }
  return h;
}

// Zero the subcarriers whose mirror image is out of band.
inline ChannelMatrix zero_edge_subcarriers(ChannelMatrix h) {
  const int n = static_cast<int>(h.data.rows());
  for (int k = 0; k < n; ++k)
    if (mirror_index(k, n) < 0) h.data.row(k).setZero();
  return h;
}

// ---------------------------------------------------------------- CFAR

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

namespace detail {

// circular box sum of half-width w along columns then rows
inline RMatrix box_sum(const RMatrix& p, int w) {
  const Eigen::Index nr = p.rows(), nc = p.cols();
  RMatrix a(nr, nc);
  for (Eigen::Index j = 0; j < nc; ++j) {
    double s = 0.0;
    for (int d = -w; d <= w; ++d) s += p(((d % nr) + nr) % nr, j);
    for (Eigen::Index i = 0; i < nr; ++i) {
      a(i, j) = s;
      s += p((i + w + 1) % nr, j) - p(((i - w) % nr + nr) % nr, j);
    }
  }
  RMatrix b(nr, nc);
  for (Eigen::Index i = 0; i < nr; ++i) {
    double s = 0.0;
    for (int d = -w; d <= w; ++d) s += a(i, ((d % nc) + nc) % nc);
    for (Eigen::Index j = 0; j < nc; ++j) {
      b(i, j) = s;
      s += a(i, (j + w + 1) % nc) - a(i, ((j - w) % nc + nc) % nc);
    }
  }
  return b;
}

}  // namespace detail

// 2D cell-averaging CFAR with guard ring, circular borders; returns local maxima
// sorted by descending power.
inline std::vector<Cell> cfar_detect(const RangeDopplerMap& rdm, int guard_cells = 2,
                                     int training_cells = 8, double threshold_db = 12.0) {
  const int nr = rdm.n_range(), nd = rdm.n_doppler();
  const int outer = guard_cells + training_cells;
  if (guard_cells < 0 || training_cells < 1)
    throw std::invalid_argument("cfar: guard must be >= 0 and training >= 1");
  if (2 * outer + 1 > nr || 2 * outer + 1 > nd)
    throw std::invalid_argument("cfar: window larger than the map");

  const RMatrix p = rdm.power();
  const RMatrix outer_sum = detail::box_sum(p, outer);
  const RMatrix inner_sum = detail::box_sum(p, guard_cells);
  const double n_train =
      static_cast<double>((2 * outer + 1) * (2 * outer + 1) -
                          (2 * guard_cells + 1) * (2 * guard_cells + 1));
  const double factor = from_db10(threshold_db);
  const int g = std::max(guard_cells, 1);

  std::vector<Cell> hits;
  for (int j = 0; j < nd; ++j)
    for (int i = 0; i < nr; ++i) {
      const double v = p(i, j);
      const double mean = std::max(outer_sum(i, j) - inner_sum(i, j), 0.0) / n_train;
      if (!(v > factor * mean)) continue;
      bool peak = true;
      for (int dj = -g; dj <= g && peak; ++dj)
        for (int di = -g; di <= g; ++di) {
          if (di == 0 && dj == 0) continue;
          const double u = p(((i + di) % nr + nr) % nr, ((j + dj) % nd + nd) % nd);
          // ties resolved in favour of the first cell in scan order
          const bool before = dj < 0 || (dj == 0 && di < 0);
          if (u > v || (before && u == v)) {
            peak = false;
            break;
          }
        }
      if (peak) hits.push_back({i, j});
    }
  std::stable_sort(hits.begin(), hits.end(), [&](const Cell& a, const Cell& b) {
    return p(a.row, a.col) > p(b.row, b.col);
  });
  return hits;
}

// ---------------------------------------------------------------- peaks

struct PeakEstimate {
  double distance = 0.0;
  double velocity = 0.0;
  cd amplitude{0.0, 0.0};
  double power_db = 0.0;  // relative to the strongest peak of the list
  bool is_ghost_candidate = false;
};

namespace detail {

// vertex offset of the parabola through (-1, a), (0, b), (1, c)
inline double parabolic_offset(double a, double b, double c) {
  const double den = a - 2.0 * b + c;
  if (den >= 0.0) return 0.0;
  return std::clamp(0.5 * (a - c) / den, -0.5, 0.5);
}

inline void set_relative_power(std::vector<PeakEstimate>& peaks) {
  double mx = 0.0;
  for (const auto& p : peaks) mx = std::max(mx, std::abs(p.amplitude));
  for (auto& p : peaks)
    p.power_db = mx > 0.0 ? 20.0 * std::log10(std::abs(p.amplitude) / mx) : 0.0;
}

}  // namespace detail

// fractional (row, col) of a map maximum by quadratic interpolation of |map|
inline std::pair<double, double> interpolate_cell(const RangeDopplerMap& rdm, const Cell& c) {
  const int nr = rdm.n_range(), nd = rdm.n_doppler();
  auto mag = [&](int i, int j) {
    return std::abs(rdm.complex_map(((i % nr) + nr) % nr, ((j % nd) + nd) % nd));
  };
  const double b = mag(c.row, c.col);
  const double dr = detail::parabolic_offset(mag(c.row - 1, c.col), b, mag(c.row + 1, c.col));
  const double dd = detail::parabolic_offset(mag(c.row, c.col - 1), b, mag(c.row, c.col + 1));
  return {c.row + dr, c.col + dd};
}

inline std::vector<PeakEstimate> peaks_from_cells(const RangeDopplerMap& rdm,
                                                  const std::vector<Cell>& cells) {
  std::vector<PeakEstimate> out;
  for (const Cell& c : cells) {
    auto [r, d] = interpolate_cell(rdm, c);
    if (r > rdm.n_range() / 2.0) r -= rdm.n_range();
    out.push_back({rdm.distance_at(r), rdm.velocity_at(d), rdm.complex_map(c.row, c.col), 0.0,
                   false});
  }
  detail::set_relative_power(out);
  return out;
}

// Flags B when a stronger A sits at about the same range with opposite velocity.
inline std::vector<PeakEstimate> flag_ghosts(std::vector<PeakEstimate> peaks,
                                             double range_resolution, double velocity_resolution,
                                             double range_tol_bins = 2.0,
                                             double power_gap_db = 10.0) {
  for (std::size_t b = 0; b < peaks.size(); ++b)
    for (std::size_t a = 0; a < b; ++a) {
      const bool near_range =
          std::abs(peaks[a].distance - peaks[b].distance) <= range_tol_bins * range_resolution;
      const bool mirrored = std::abs(peaks[b].velocity + peaks[a].velocity) <=
                            range_tol_bins * velocity_resolution;
      const bool weaker = peaks[b].power_db <= peaks[a].power_db - power_gap_db;
      if (near_range && mirrored && weaker) {
        peaks[b].is_ghost_candidate = true;
        break;
      }
    }
  return peaks;
}

inline std::vector<PeakEstimate> flag_ghosts(std::vector<PeakEstimate> peaks,
                                             const RangeDopplerMap& rdm,
                                             double range_tol_bins = 2.0,
                                             double power_gap_db = 10.0) {
  return flag_ghosts(std::move(peaks), rdm.range_resolution(), rdm.velocity_resolution(),
                     range_tol_bins, power_gap_db);
}

// ---------------------------------------------------------------- RELAX

struct RelaxOptions {
  int max_components = 4;
  double convergence_tol = 1e-9;
  int pad = 4;
  int max_cycles = 30;
};

struct RelaxResult {
  std::vector<PeakEstimate> peaks;  // in extraction order
  bool converged = true;            // false when a cyclic stage hit max_cycles
  std::vector<double> residual_energy;  // after every cyclic sweep
};

namespace detail {

struct Component {
  double wr = 0.0;  // tau * delta_f, cycles per subcarrier
  double wd = 0.0;  // f_D * (T + T_CP), cycles per symbol
  cd amp{0.0, 0.0};
};

class RelaxEngine {
 public:
  explicit RelaxEngine(const ChannelMatrix& h)
      : c_(h.config), nsc_(h.config.n_subcarriers), nsym_(h.config.n_symbols) {}

  CVector range_vec(double wr) const {
    CVector r(nsc_);
    for (int k = 0; k < nsc_; ++k) r(k) = std::polar(1.0, -kTwoPi * (k - nsc_ / 2) * wr);
    return r;
  }
  CVector doppler_vec(double wd) const {
    CVector d(nsym_);
    for (int l = 0; l < nsym_; ++l) d(l) = std::polar(1.0, kTwoPi * wd * l);
    return d;
  }

  void add(CMatrix& m, const Component& comp, double sign) const {
    const CVector r = range_vec(comp.wr) * (sign * comp.amp);
    const CVector d = doppler_vec(comp.wd);
    m.noalias() += r * d.transpose();
  }

  // r^H R conj(d)
  cd correlate(const CMatrix& res, double wr, double wd) const {
    return range_vec(wr).dot(res * doppler_vec(wd).conjugate());
  }

  // maximise |correlation| over a box around comp, then least-squares amplitude
  Component refine(const CMatrix& res, Component comp, double half_r, double half_d) const {
    const double start = std::norm(correlate(res, comp.wr, comp.wd));
    Component best = comp;
    for (int round = 0; round < 8; ++round) {
      const double wr0 = best.wr, wd0 = best.wd;
      const CVector z = res * doppler_vec(best.wd).conjugate();
      best.wr = golden(
          [&](double w) { return std::norm(range_vec(w).dot(z)); }, best.wr - half_r,
          best.wr + half_r);
      const CVector y = res.transpose() * range_vec(best.wr).conjugate();
      best.wd = golden(
          [&](double w) { return std::norm(doppler_vec(w).dot(y)); }, best.wd - half_d,
          best.wd + half_d);
      if (std::abs(best.wr - wr0) * nsc_ < 1e-10 && std::abs(best.wd - wd0) * nsym_ < 1e-10)
        break;
    }
    if (std::norm(correlate(res, best.wr, best.wd)) < start) best = comp;
    best.amp = correlate(res, best.wr, best.wd) / (static_cast<double>(nsc_) * nsym_);
    return best;
  }

  Component coarse(const CMatrix& res, int pad) const {
    RangeDopplerMap m = compute_rdm({c_, res}, pad, pad, Window::rectangular);
    Eigen::Index r, d;
    m.complex_map.cwiseAbs2().maxCoeff(&r, &d);
    auto [fr, fd] = interpolate_cell(m, {static_cast<int>(r), static_cast<int>(d)});
    if (fr > m.n_range() / 2.0) fr -= m.n_range();
    Component comp;
    comp.wr = fr / m.n_range();
    comp.wd = (fd - m.doppler_center()) / m.n_doppler();
    return comp;
  }

  PeakEstimate to_peak(const Component& comp) const {
    PeakEstimate p;
    p.distance = distance_of_delay(comp.wr / c_.subcarrier_spacing());
    p.velocity = velocity_of_doppler(comp.wd / c_.symbol_period(), c_.carrier_frequency);
    p.amplitude = comp.amp;
    return p;
  }

  int nsc() const { return nsc_; }
  int nsym() const { return nsym_; }

 private:
  template <class F>
  static double golden(F&& f, double lo, double hi) {
    const double g = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - g * (b - a), x2 = a + g * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 60 && (b - a) > 1e-13 * std::max(1.0, std::abs(a)); ++it) {
      if (f1 < f2) {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + g * (b - a);
        f2 = f(x2);
      } else {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - g * (b - a);
        f1 = f(x1);
      }
    }
    const double mid = 0.5 * (a + b);
    const double fm = f(mid);
    const double fl = f(lo), fh = f(hi);
    if (fl > fm && fl >= fh) return lo;
    if (fh > fm && fh > fl) return hi;
    return mid;
  }

  OfdmConfig c_;
  int nsc_, nsym_;
};

}  // namespace detail

inline RelaxResult relax_estimate(const ChannelMatrix& h, const RelaxOptions& opt) {
  check_shape(h.config, h.data, "relax_estimate");
  if (opt.max_components < 1) throw std::invalid_argument("max_components must be >= 1");
  detail::RelaxEngine eng(h);
  RelaxResult out;
  const double e0 = h.data.squaredNorm();
  if (e0 == 0.0) return out;

  const double coarse_r = 1.0 / (opt.pad * eng.nsc());
  const double coarse_d = 1.0 / (opt.pad * eng.nsym());
  std::vector<detail::Component> comps;
  CMatrix res = h.data;
  double energy = e0;

  for (int i = 0; i < opt.max_components; ++i) {
    if (energy <= 1e-24 * e0) break;
    detail::Component nc = eng.refine(res, eng.coarse(res, opt.pad), coarse_r, coarse_d);
    if (std::abs(nc.amp) == 0.0) break;
    comps.push_back(nc);
    eng.add(res, nc, -1.0);
    energy = res.squaredNorm();
    out.residual_energy.push_back(energy);

    bool settled = comps.size() == 1;
    for (int cycle = 0; cycle < opt.max_cycles && !settled; ++cycle) {
      const double before = energy;
      for (auto& comp : comps) {
        eng.add(res, comp, +1.0);
        comp = eng.refine(res, comp, coarse_r, coarse_d);
        eng.add(res, comp, -1.0);
      }
      energy = res.squaredNorm();
      out.residual_energy.push_back(energy);
      settled = before <= 0.0 || std::abs(before - energy) / before < opt.convergence_tol;
    }
    if (!settled) out.converged = false;
  }

  for (const auto& comp : comps) out.peaks.push_back(eng.to_peak(comp));
  detail::set_relative_power(out.peaks);
  return out;
}

inline RelaxResult relax_estimate(const ChannelMatrix& h, int max_components,
                                  double convergence_tol = 1e-9) {
  RelaxOptions opt;
  opt.max_components = max_components;
  opt.convergence_tol = convergence_tol;
  return relax_estimate(h, opt);
}

inline ChannelMatrix reconstruct_channel(const std::vector<PeakEstimate>& estimates,
                                         const OfdmConfig& c) {
  if (estimates.empty()) throw std::invalid_argument("reconstruct_channel: no estimates");
  ChannelMatrix h{c, CMatrix::Zero(c.n_subcarriers, c.n_symbols)};
  for (const auto& e : estimates)
    add_exponential(h.data, e.amplitude, delay_of_distance(e.distance),
                    doppler_of_velocity(e.velocity, c.carrier_frequency), c);
  return h;
}

}  // namespace iqjcas
