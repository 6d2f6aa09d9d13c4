#include <gtest/gtest.h>

#include <algorithm>

#include "iqjcas/harness/config.hpp"
#include "iqjcas/radar_processing.hpp"
#include "support.hpp"

using namespace iqjcas;
using testing_support::Gen;
using testing_support::rel_err;

namespace {

// error in unpadded bins between a peak and a reflector
std::pair<double, double> bin_error(const PeakEstimate& p, const Reflector& r, const OfdmConfig& c) {
  const double range_res = kSpeedOfLight / (2.0 * c.n_subcarriers * c.subcarrier_spacing());
  const double vel_res =
      kSpeedOfLight / (2.0 * c.carrier_frequency * c.n_symbols * c.symbol_period());
  return {std::abs(p.distance - r.distance) / range_res, std::abs(p.velocity - r.velocity) / vel_res};
}

const PeakEstimate& nearest(const std::vector<PeakEstimate>& peaks, const Reflector& r) {
  return *std::min_element(peaks.begin(), peaks.end(), [&](const auto& a, const auto& b) {
    return std::hypot(a.distance - r.distance, a.velocity - r.velocity) <
           std::hypot(b.distance - r.distance, b.velocity - r.velocity);
  });
}

}  // namespace

TEST(EstimateChannel, ZeroForcing) {
  Gen gen(1);
  const OfdmConfig c = testing_support::tiny_config();
  const ResourceGrid x = generate_grid(c, 256, 3);
  const ChannelMatrix ones = estimate_channel(x, x);
  EXPECT_LT((ones.data.array() - 1.0).abs().maxCoeff(), 1e-15);
  const ChannelMatrix h{c, gen.matrix(c.n_subcarriers, c.n_symbols)};
  EXPECT_LT(rel_err(estimate_channel(apply_channel(x, h), x).data, h.data), 1e-15);
  ResourceGrid z = x;
  z.data(4, 2) = 0.0;
  EXPECT_THROW(estimate_channel(x, z), std::domain_error);
}

// h_IQ = aR aT h + aR bT h x' + bR aT* hm x' + bR bT* hm, hm = conj(h[m]), x' = conj(X[m]) / X
TEST(EstimateChannel, ImbalanceExpansionProperty) {
  for (int trial = 0; trial < 10; ++trial) {
    Gen gen(1000 + trial);
    const OfdmConfig c = gen.config();
    const IqPair p = gen.pair();
    const ResourceGrid x = generate_grid(c, 256, trial);
    const ChannelMatrix h{c, gen.matrix(c.n_subcarriers, c.n_symbols)};
    const CMatrix hiq = estimate_channel(afflicted_rx_grid(x, h, p), x).data;
    double worst = 0.0;
    for (int l = 0; l < c.n_symbols; ++l)
      for (int k = 0; k < c.n_subcarriers; ++k) {
        const int m = mirror_index(k, c.n_subcarriers);
        const cd hm = m < 0 ? 0.0 : std::conj(h.data(m, l));
        const cd xp = m < 0 ? 0.0 : std::conj(x.data(m, l)) / x.data(k, l);
        const cd want = p.rx.alpha * p.tx.alpha * h.data(k, l) +
                        p.rx.alpha * p.tx.beta * h.data(k, l) * xp +
                        p.rx.beta * std::conj(p.tx.alpha) * hm * xp +
                        p.rx.beta * std::conj(p.tx.beta) * hm;
        worst = std::max(worst, std::abs(want - hiq(k, l)));
      }
    EXPECT_LT(worst, 1e-12) << trial;
  }
}

TEST(ComputeRdm, FlatChannelPeaksAtOrigin) {
  const OfdmConfig c = OfdmConfig::small();
  const RangeDopplerMap m = compute_rdm({c, CMatrix::Ones(c.n_subcarriers, c.n_symbols)}, 4, 4);
  Eigen::Index i, j;
  m.power().maxCoeff(&i, &j);
  EXPECT_EQ(i, 0);
  EXPECT_EQ(j, m.doppler_center());
  EXPECT_DOUBLE_EQ(m.distance_at(i), 0.0);
  EXPECT_DOUBLE_EQ(m.velocity_at(j), 0.0);
  EXPECT_NEAR(m.power_map_db().maxCoeff(), 0.0, 0.0);
}

TEST(ComputeRdm, AxisFormulas) {
  const OfdmConfig c = OfdmConfig::small();
  const RangeDopplerMap m = compute_rdm({c, CMatrix::Ones(c.n_subcarriers, c.n_symbols)}, 2, 3);
  EXPECT_DOUBLE_EQ(m.range_bin, kSpeedOfLight / (2.0 * 2 * c.n_subcarriers * c.subcarrier_spacing()));
  EXPECT_DOUBLE_EQ(m.velocity_at(m.doppler_center() + 1),
                   -(1.0 / (3 * c.n_symbols * c.symbol_period())) * kSpeedOfLight /
                       (2.0 * c.carrier_frequency));
}

TEST(ComputeRdm, ParsevalProperty) {
  for (int trial = 0; trial < 12; ++trial) {
    Gen gen(1100 + trial);
    const OfdmConfig c = gen.config();
    const CMatrix h = gen.matrix(c.n_subcarriers, c.n_symbols);
    for (Window w : {Window::rectangular, Window::hann, Window::blackman_harris}) {
      const int pr = gen.integer(1, 4), pd = gen.integer(1, 4);
      const RangeDopplerMap m = compute_rdm({c, h}, pr, pd, w);
      const Eigen::VectorXd wr = window_coefficients(w, c.n_subcarriers);
      const Eigen::VectorXd wd = window_coefficients(w, c.n_symbols);
      const double e_in = (wr.asDiagonal() * h * wd.asDiagonal()).squaredNorm();
      EXPECT_NEAR(m.complex_map.squaredNorm() / e_in, 1.0, 1e-9) << trial;
    }
  }
}

TEST(ComputeRdm, ObjectCalibrationPad8) {
  const OfdmConfig c = OfdmConfig::small();
  const Reflector r = harness::scaled_reference_scene().reflectors[1];
  const RangeDopplerMap m = compute_rdm(synthesize_channel({{r}}, c), 8, 8);
  Eigen::Index i, j;
  m.power().maxCoeff(&i, &j);
  const auto [ri, ci] = interpolate_cell(m, {static_cast<int>(i), static_cast<int>(j)});
  EXPECT_LE(std::abs(ri - m.row_of(r.distance)) / 8.0, 0.1);
  EXPECT_LE(std::abs(ci - m.col_of(r.velocity)) / 8.0, 0.1);
}

TEST(Window, NamesAndShape) {
  for (Window w : {Window::rectangular, Window::hann, Window::blackman_harris})
    EXPECT_EQ(window_from_string(to_string(w)), w);
  EXPECT_THROW(window_from_string("kaiser"), std::invalid_argument);
  const Eigen::VectorXd h = window_coefficients(Window::hann, 9);
  EXPECT_NEAR(h(0), 0.0, 1e-15);
  EXPECT_NEAR(h(4), 1.0, 1e-15);
  EXPECT_NEAR(h(1), h(7), 1e-15);
}

TEST(Cfar, SinglePeakOnZeroBackground) {
  RangeDopplerMap m;
  m.complex_map = CMatrix::Zero(64, 48);
  m.complex_map(10, 20) = 1.0;
  const auto cells = cfar_detect(m, 2, 8, 12.0);
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0], (Cell{10, 20}));
}

TEST(Cfar, PureNoiseHighThreshold) {
  Gen gen(5);
  RangeDopplerMap m;
  m.complex_map = gen.matrix(128, 64);
  EXPECT_LE(cfar_detect(m, 2, 8, 40.0).size(), 1u);
}

TEST(Cfar, WindowLargerThanMap) {
  RangeDopplerMap m;
  m.complex_map = CMatrix::Zero(16, 16);
  EXPECT_THROW(cfar_detect(m, 2, 8, 12.0), std::invalid_argument);
}

TEST(Cfar, Table3NoImbalanceFindsFourObjects) {
  const OfdmConfig c = OfdmConfig::small();
  Scenario s = harness::scaled_reference_scene();
  s.snr_db = 50.0;
  s.seed = 21;
  const ResourceGrid x = generate_grid(c, 256, 2);
  const ChannelMatrix h = synthesize_channel(s, c);
  const ResourceGrid y = afflicted_rx_grid(x, h, ideal_pair(), scenario_noise(s, c));
  const harness::DetectionOptions d;
  const RangeDopplerMap m =
      compute_rdm(zero_edge_subcarriers(estimate_channel(y, x)), d.pad, d.pad, d.window);
  const auto peaks = peaks_from_cells(m, cfar_detect(m, d.cfar_guard, d.cfar_training, d.cfar_threshold_db));
  ASSERT_EQ(peaks.size(), 4u);
  for (const auto& r : s.reflectors) {
    const auto [dr, dv] = bin_error(nearest(peaks, r), r, c);
    EXPECT_LT(dr, 0.5);
    EXPECT_LT(dv, 0.5);
  }
}

TEST(FlagGhosts, Rules) {
  std::vector<PeakEstimate> p = {{6.0, 15.0, 1.0, 0.0, false}, {6.0, -15.0, 0.1, -20.0, false}};
  auto f = flag_ghosts(p, 0.5, 0.3, 2.0, 10.0);
  EXPECT_FALSE(f[0].is_ghost_candidate);
  EXPECT_TRUE(f[1].is_ghost_candidate);

  EXPECT_FALSE(flag_ghosts({p[0]}, 0.5, 0.3)[0].is_ghost_candidate);

  p[1].power_db = 0.0;
  f = flag_ghosts(p, 0.5, 0.3, 2.0, 10.0);
  EXPECT_FALSE(f[0].is_ghost_candidate || f[1].is_ghost_candidate);

  p[1].power_db = -20.0;
  p[1].distance = 9.0;
  EXPECT_FALSE(flag_ghosts(p, 0.5, 0.3, 2.0, 10.0)[1].is_ghost_candidate);
}

TEST(Relax, SingleExponential) {
  const OfdmConfig c = OfdmConfig::small();
  const Reflector r{31.3, -12.7, -3.0, 0.9};
  const ChannelMatrix h = synthesize_channel({{r}}, c);
  const RelaxResult res = relax_estimate(h, 1);
  ASSERT_EQ(res.peaks.size(), 1u);
  const auto [dr, dv] = bin_error(res.peaks[0], r, c);
  EXPECT_LT(dr, 0.01);
  EXPECT_LT(dv, 0.01);
  const cd a = reflector_amplitude(r);
  EXPECT_LT(std::abs(res.peaks[0].amplitude - a) / std::abs(a), 1e-3);
}

TEST(Relax, Table3NoiselessFourComponents) {
  const OfdmConfig c = OfdmConfig::small();
  const Scenario s = harness::scaled_reference_scene();
  const ChannelMatrix h = synthesize_channel(s, c);
  const RelaxResult res = relax_estimate(h, 4);
  ASSERT_EQ(res.peaks.size(), 4u);
  for (const auto& r : s.reflectors) {
    const PeakEstimate& p = nearest(res.peaks, r);
    const auto [dr, dv] = bin_error(p, r, c);
    EXPECT_LT(dr, 0.1);
    EXPECT_LT(dv, 0.1);
    const cd a = reflector_amplitude(r);
    EXPECT_LT(std::abs(p.amplitude - a) / std::abs(a), 0.01);
  }
  EXPECT_LT(rel_err(reconstruct_channel(res.peaks, c).data, h.data), 1e-3);
}

TEST(Relax, ZeroChannelAndBadArgs) {
  const OfdmConfig c = testing_support::tiny_config();
  const ChannelMatrix z{c, CMatrix::Zero(c.n_subcarriers, c.n_symbols)};
  EXPECT_TRUE(relax_estimate(z, 3).peaks.empty());
  EXPECT_THROW(relax_estimate(z, 0), std::invalid_argument);
}

TEST(Relax, ResidualEnergyNonIncreasingProperty) {
  for (int trial = 0; trial < 8; ++trial) {
    Gen gen(1200 + trial);
    const OfdmConfig c = gen.config();
    const Scenario s = gen.scenario(c, 3);
    ChannelMatrix h = synthesize_channel(s, c);
    h.data += 1e-3 * gen.matrix(c.n_subcarriers, c.n_symbols);
    const RelaxResult res = relax_estimate(h, static_cast<int>(s.reflectors.size()) + 1);
    // rounding in the add/subtract cycle scales with the input energy
    const double slack = 1e-12 * h.data.squaredNorm();
    for (std::size_t i = 1; i < res.residual_energy.size(); ++i)
      EXPECT_LE(res.residual_energy[i], res.residual_energy[i - 1] + slack) << trial;
  }
}

TEST(ReconstructChannel, Identities) {
  const OfdmConfig c = testing_support::tiny_config();
  const ChannelMatrix one = reconstruct_channel({{0.0, 0.0, 1.0, 0.0, false}}, c);
  EXPECT_LT((one.data.array() - 1.0).abs().maxCoeff(), 1e-15);
  Gen gen(8);
  const Scenario s = gen.scenario(c, 4);
  std::vector<PeakEstimate> truth;
  for (const auto& r : s.reflectors) truth.push_back({r.distance, r.velocity, reflector_amplitude(r), 0, false});
  EXPECT_LT(rel_err(reconstruct_channel(truth, c).data, synthesize_channel(s, c).data), 1e-14);
  EXPECT_THROW(reconstruct_channel({}, c), std::invalid_argument);
}

TEST(ComputeRdm, ImbalanceRaisesFloor) {
  const OfdmConfig c = OfdmConfig::small();
  const Scenario s = harness::scaled_reference_scene();
  const ResourceGrid x = generate_grid(c, 256, 4);
  const ChannelMatrix h = synthesize_channel(s, c);
  auto median_db = [&](const IqPair& p) {
    const RangeDopplerMap m =
        compute_rdm(zero_edge_subcarriers(estimate_channel(afflicted_rx_grid(x, h, p), x)), 4, 4);
    RMatrix pw = m.power();
    std::vector<double> v(pw.data(), pw.data() + pw.size());
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return db10(v[v.size() / 2]);
  };
  EXPECT_GE(median_db(literature_pair()) - median_db(ideal_pair()), 20.0);
}
