#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>

#include "iqjcas/bilinear_estimators.hpp"
#include "iqjcas/harness/config.hpp"
#include "iqjcas/radar_processing.hpp"
#include "support.hpp"

using namespace iqjcas;
using testing_support::Gen;

namespace {

const FilterMethod kAll[] = {FilterMethod::lms, FilterMethod::nlms, FilterMethod::rls,
                             FilterMethod::awf, FilterMethod::iwf};

struct Case {
  ResourceGrid x;
  ChannelMatrix h;
  ChannelMatrix h_iq;
};

// noiseless afflicted channel on a random frequency-selective h
Case selective_case(const OfdmConfig& c, const IqPair& pair, std::uint64_t seed) {
  Case k{generate_grid(c, 256, seed),
         {c, awgn_matrix(c.n_subcarriers, c.n_symbols, 1.0, seed + 1)},
         {}};
  k.h_iq = estimate_channel(afflicted_rx_grid(k.x, k.h, pair), k.x);
  return k;
}

// noiseless afflicted channel on the scaled reference scenario, random phases
Case scenario_case(const OfdmConfig& c, const IqPair& pair, std::uint64_t seed) {
  Scenario s = harness::scaled_reference_scene();
  Rng rng(seed + 100);
  for (auto& r : s.reflectors) r.phase = rng.uniform(0.0, kTwoPi);
  Case k{generate_grid(c, 256, seed), synthesize_channel(s, c), {}};
  k.h_iq = estimate_channel(afflicted_rx_grid(k.x, k.h, pair), k.x);
  return k;
}

BilinearEstimate truth(const IqPair& p) {
  BilinearEstimate e;
  e.f_hat << std::conj(p.rx.alpha), std::conj(p.rx.beta);
  e.g_hat << p.tx.alpha.real(), p.tx.alpha.imag(), p.tx.beta.real(), p.tx.beta.imag();
  return e;
}

std::vector<int> all_symbols(const OfdmConfig& c) {
  std::vector<int> v(c.n_symbols);
  for (int l = 0; l < c.n_symbols; ++l) v[l] = l;
  return v;
}

double param_distance(const BilinearEstimate& a, const BilinearEstimate& b) {
  return (a.f_hat - b.f_hat).norm() + (a.g_hat - b.g_hat).norm();
}

// removes the whole complex ambiguity: alpha_Tx becomes exactly 1
BilinearEstimate align(const BilinearEstimate& e) { return ambiguity_scale(e, e.alpha_tx()); }

// first index where the seed-averaged log error power drops below thr
int learning_curve_crossing(FilterMethod m, int seeds, int length, double thr) {
  OfdmConfig c = OfdmConfig::small();
  c.n_symbols = 1;
  std::vector<double> lg(length, 0.0);
  for (int seed = 0; seed < seeds; ++seed) {
    const Case k = scenario_case(c, literature_pair(), seed);
    auto s = build_samples(k.h_iq, k.h, k.x, {0});
    double ref = 0;
    for (const auto& q : s) ref += std::norm(q.target);
    ref /= static_cast<double>(s.size());
    s.resize(length);
    const BilinearEstimate e = run_filter(s, FilterConfig::defaults(m));
    for (int i = 0; i < length; ++i)
      lg[i] += std::log10(std::norm(e.error_trace[i]) / ref + 1e-300) / seeds;
  }
  for (int i = 0; i < length; ++i)
    if (lg[i] < std::log10(thr)) return i;
  return -1;
}

}  // namespace

// ---------------------------------------------------------------- samples

TEST(BuildSamples, TrueParametersReproduceTargetProperty) {
  for (int trial = 0; trial < 20; ++trial) {
    Gen gen(2000 + trial);
    const OfdmConfig c = gen.config();
    const IqPair pair = gen.pair();
    const Case k = selective_case(c, pair, 2100 + trial);
    const auto s = build_samples(k.h_iq, k.h, k.x, {0, c.n_symbols - 1});
    const BilinearEstimate t = truth(pair);
    for (const auto& q : s)
      ASSERT_LT(std::abs(model_output(t, q) - q.target), 1e-12 * (1 + std::abs(q.target)))
          << trial;
  }
}

TEST(BuildSamples, RowStructureMatchesExpansion) {
  const OfdmConfig c = testing_support::tiny_config();
  const IqPair p = literature_pair();
  const Case k = selective_case(c, p, 7);
  const auto s = build_samples(k.h_iq, k.h, k.x, {3});
  const cd j(0, 1);
  for (const auto& q : s) {
    const int m = mirror_index(q.subcarrier, c.n_subcarriers);
    const cd h = k.h.data(q.subcarrier, 3), hm = std::conj(k.h.data(m, 3));
    const cd xp = std::conj(k.x.data(m, 3)) / k.x.data(q.subcarrier, 3);
    EXPECT_EQ(q.x_matrix(0, 0), h);
    EXPECT_EQ(q.x_matrix(0, 1), j * h);
    EXPECT_EQ(q.x_matrix(0, 2), h * xp);
    EXPECT_EQ(q.x_matrix(1, 2), hm);
    EXPECT_EQ(q.x_matrix(1, 3), -j * hm);
    EXPECT_EQ(q.x_matrix(1, 0), hm * xp);
    // a_R (a_T h + b_T h x') + b_R (a_T* hm x' + b_T* hm)
    const cd direct = p.rx.alpha * (p.tx.alpha * h + p.tx.beta * h * xp) +
                      p.rx.beta * (std::conj(p.tx.alpha) * hm * xp + std::conj(p.tx.beta) * hm);
    EXPECT_LT(std::abs(direct - q.target), 1e-12);
  }
}

TEST(BuildSamples, ZeroChannelGivesZeroRegressors) {
  const OfdmConfig c = testing_support::tiny_config();
  const Case k = selective_case(c, literature_pair(), 3);
  const ChannelMatrix zero{c, CMatrix::Zero(c.n_subcarriers, c.n_symbols)};
  for (const auto& q : build_samples(k.h_iq, zero, k.x, {1})) {
    EXPECT_EQ(q.x_matrix.norm(), 0.0);
    EXPECT_EQ(q.target, k.h_iq.data(q.subcarrier, 1));
  }
}

TEST(BuildSamples, OrderFollowsSelectionAndSkipsEdge) {
  for (const OfdmConfig c : {testing_support::tiny_config(), OfdmConfig{2, 63, 8, 64, 8, 3.5e9}}) {
    const Case k = selective_case(c, ideal_pair(), 1);
    const auto s = build_samples(k.h_iq, k.h, k.x, {2, 0});
    int valid = 0;
    for (int kk = 0; kk < c.n_subcarriers; ++kk) valid += mirror_index(kk, c.n_subcarriers) >= 0;
    ASSERT_EQ(static_cast<int>(s.size()), 2 * valid);
    for (std::size_t i = 0; i < s.size(); ++i) {
      EXPECT_EQ(s[i].symbol, i < static_cast<std::size_t>(valid) ? 2 : 0);
      if (i > 0 && s[i].symbol == s[i - 1].symbol) EXPECT_GT(s[i].subcarrier, s[i - 1].subcarrier);
      EXPECT_GE(mirror_index(s[i].subcarrier, c.n_subcarriers), 0);
    }
  }
}

TEST(BuildSamples, RejectsBadSelection) {
  const OfdmConfig c = testing_support::tiny_config();
  const Case k = selective_case(c, ideal_pair(), 1);
  EXPECT_THROW(build_samples(k.h_iq, k.h, k.x, {}), std::invalid_argument);
  EXPECT_THROW(build_samples(k.h_iq, k.h, k.x, {c.n_symbols}), std::invalid_argument);
  EXPECT_THROW(build_samples(k.h_iq, k.h, k.x, {-1}), std::invalid_argument);
}

// ---------------------------------------------------------------- filters

TEST(Filters, StationaryAtZeroImbalance) {
  const OfdmConfig c = testing_support::tiny_config();
  const Case k = selective_case(c, ideal_pair(), 11);
  const auto s = build_samples(k.h_iq, k.h, k.x, {0, 1});
  const BilinearEstimate init;
  for (FilterMethod m : kAll) {
    const BilinearEstimate e = run_filter(s, FilterConfig::defaults(m));
    EXPECT_LT(param_distance(e, init), 1e-12) << to_string(m);
    for (cd v : e.error_trace) ASSERT_LT(std::abs(v), 1e-12) << to_string(m);
  }
}

TEST(Filters, ModelFitOnSelectiveChannelProperty) {
  const OfdmConfig c = testing_support::tiny_config();
  for (int trial = 0; trial < 3; ++trial) {
    Gen gen(2200 + trial);
    const IqPair pair = gen.pair();
    const Case k = selective_case(c, pair, 2300 + trial);
    const auto s = build_samples(k.h_iq, k.h, k.x, all_symbols(c));
    for (FilterMethod m : kAll) {
      FilterConfig cfg = FilterConfig::defaults(m);
      cfg.n_stats = static_cast<int>(s.size());
      const BilinearEstimate e = run_filter(s, cfg);
      EXPECT_LT(relative_residual(e, s), 1e-10) << to_string(m) << " trial " << trial;
    }
  }
}

TEST(Filters, RejectMismatchedOrInvalidConfig) {
  const OfdmConfig c = testing_support::tiny_config();
  const Case k = selective_case(c, ideal_pair(), 1);
  const auto s = build_samples(k.h_iq, k.h, k.x, {0});
  EXPECT_THROW(lms_run(s, FilterConfig::defaults(FilterMethod::awf)), std::invalid_argument);
  FilterConfig bad = FilterConfig::defaults(FilterMethod::rls);
  bad.lambda_forget = 0.0;
  EXPECT_THROW(run_filter(s, bad), std::invalid_argument);
  bad = FilterConfig::defaults(FilterMethod::lms);
  bad.mu_f = 0.0;
  EXPECT_THROW(run_filter(s, bad), std::invalid_argument);
  EXPECT_THROW(run_filter({}, FilterConfig::defaults(FilterMethod::nlms)), std::invalid_argument);
  EXPECT_THROW(filter_method_from_string("kalman"), std::invalid_argument);
}

TEST(Lms, DivergenceIsReported) {
  const OfdmConfig c = testing_support::tiny_config();
  const Case k = selective_case(c, literature_pair(), 5);
  const auto s = build_samples(k.h_iq, k.h, k.x, all_symbols(c));
  FilterConfig cfg = FilterConfig::defaults(FilterMethod::lms);
  cfg.mu_f = cfg.mu_g = 5.0;
  try {
    lms_run(s, cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_LT(e.iteration(), s.size());
  }
}

TEST(Rls, CovarianceBlowUpIsReported) {
  const OfdmConfig c = testing_support::tiny_config();
  const Case k = selective_case(c, literature_pair(), 5);
  const auto s = build_samples(k.h_iq, k.h, k.x, {0});
  FilterConfig cfg = FilterConfig::defaults(FilterMethod::rls);
  cfg.covariance_limit = 1.0;
  EXPECT_THROW(rls_run(s, cfg), InstabilityError);
}

TEST(LearningCurve, SampleAdaptiveFiltersReachMinusThirtyDb) {
  EXPECT_LE(learning_curve_crossing(FilterMethod::lms, 20, 200, 1e-3), 50);
  EXPECT_LE(learning_curve_crossing(FilterMethod::nlms, 20, 200, 1e-3), 30);
  EXPECT_LE(learning_curve_crossing(FilterMethod::rls, 20, 200, 1e-3), 100);
  EXPECT_GE(learning_curve_crossing(FilterMethod::lms, 20, 200, 1e-3), 0);
}

TEST(Awf, FirstAlternationDropsThreeOrders) {
  OfdmConfig c = OfdmConfig::small();
  c.n_symbols = 1;
  const int seeds = 20;
  double orders = 0;
  for (int seed = 0; seed < seeds; ++seed) {
    const Case k = scenario_case(c, literature_pair(), seed);
    const auto s = build_samples(k.h_iq, k.h, k.x, {0});
    const BilinearEstimate e = awf_run(s, FilterConfig::defaults(FilterMethod::awf));
    const double drop = std::norm(e.error_trace[0]) / std::norm(e.error_trace[1]);
    EXPECT_GT(drop, 10.0) << seed;
    orders += std::log10(drop) / seeds;
  }
  EXPECT_GE(orders, 3.0);
}

TEST(Awf, ConvergesWithinTenAlternationsAndFitsHeldOut) {
  const OfdmConfig c = OfdmConfig::small();
  for (int trial = 0; trial < 3; ++trial) {
    Gen gen(2400 + trial);
    const IqPair pair = gen.pair();
    const Case k = selective_case(c, pair, 2500 + trial);
    const auto train = build_samples(k.h_iq, k.h, k.x, {0});
    const auto held = build_samples(k.h_iq, k.h, k.x, {5});
    FilterConfig cfg = FilterConfig::defaults(FilterMethod::awf);
    cfg.max_iterations = 10;
    cfg.n_stats = static_cast<int>(train.size());
    EXPECT_LT(relative_residual(awf_run(train, cfg), train), 1e-8);
    cfg.max_iterations = 0;
    const BilinearEstimate e = awf_run(train, cfg);
    EXPECT_TRUE(e.converged);
    double worst = 0;
    for (const auto& q : held) worst = std::max(worst, std::abs(model_output(e, q) - q.target));
    EXPECT_LT(worst, 1e-8);
  }
}

TEST(Awf, ZeroImbalanceSettlesInOneAlternation) {
  const OfdmConfig c = testing_support::tiny_config();
  const Case k = selective_case(c, ideal_pair(), 2);
  const auto s = build_samples(k.h_iq, k.h, k.x, {0});
  FilterConfig cfg = FilterConfig::defaults(FilterMethod::awf);
  cfg.n_stats = static_cast<int>(s.size());
  const BilinearEstimate e = awf_run(s, cfg);
  EXPECT_TRUE(e.converged);
  EXPECT_EQ(e.iterations, 1);
  EXPECT_LT(std::abs(e.error_trace.back()), 1e-14);
}

TEST(Iwf, ResidualNonIncreasing) {
  for (int trial = 0; trial < 4; ++trial) {
    OfdmConfig c = OfdmConfig::small();
    c.n_symbols = 1;
    Gen gen(2600 + trial);
    const Case k = trial % 2 ? scenario_case(c, gen.pair(), trial)
                             : selective_case(c, gen.pair(), 2700 + trial);
    const auto s = build_samples(k.h_iq, k.h, k.x, {0});
    FilterConfig cfg = FilterConfig::defaults(FilterMethod::iwf);
    cfg.n_stats = static_cast<int>(s.size());
    const BilinearEstimate e = iwf_run(s, cfg);
    for (std::size_t i = 1; i < e.error_trace.size(); ++i)
      ASSERT_LE(std::abs(e.error_trace[i]), std::abs(e.error_trace[i - 1]) * (1 + 1e-9) + 1e-15)
          << trial << " at " << i;
  }
}

TEST(Wiener, AwfAndIwfShareFixedPoint) {
  OfdmConfig c = OfdmConfig::small();
  c.n_symbols = 1;
  for (int trial = 0; trial < 3; ++trial) {
    Gen gen(2800 + trial);
    const IqPair pair = gen.pair();
    const Case k = selective_case(c, pair, 2900 + trial);
    const auto s = build_samples(k.h_iq, k.h, k.x, {0});
    FilterConfig ca = FilterConfig::defaults(FilterMethod::awf);
    FilterConfig ci = FilterConfig::defaults(FilterMethod::iwf);
    ca.n_stats = ci.n_stats = static_cast<int>(s.size());
    const BilinearEstimate a = align(awf_run(s, ca));
    const BilinearEstimate b = align(iwf_run(s, ci));
    EXPECT_LT(param_distance(a, b), 1e-6) << trial;
    EXPECT_LT(param_distance(a, align(truth(pair))), 1e-6) << trial;
  }
}

// ---------------------------------------------------------------- statistics

TEST(Statistics, MatchesDirectSums) {
  const OfdmConfig c = testing_support::tiny_config();
  const Case k = selective_case(c, literature_pair(), 4);
  const auto s = build_samples(k.h_iq, k.h, k.x, {0, 1});
  const std::size_t n = 90;
  const auto st = estimate_statistics(s, n);
  Eigen::Matrix<cd, 8, 8> rxx = Eigen::Matrix<cd, 8, 8>::Zero();
  Eigen::Matrix<cd, 2, 4> rxy = Eigen::Matrix<cd, 2, 4>::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Matrix<cd, 8, 1> v = Eigen::Map<const Eigen::Matrix<cd, 8, 1>>(s[i].x_matrix.data());
    rxx += v * v.adjoint();
    rxy += s[i].x_matrix * std::conj(s[i].target);
  }
  EXPECT_LT((rxx_matrix(st) - rxx / double(n)).norm(), 1e-12 * rxx.norm());
  EXPECT_LT((rxy_matrix(st) - rxy / double(n)).norm(), 1e-12 * rxy.norm());
}

TEST(Statistics, SingleSampleIsRankOne) {
  const OfdmConfig c = testing_support::tiny_config();
  const Case k = selective_case(c, literature_pair(), 4);
  const auto s = build_samples(k.h_iq, k.h, k.x, {0});
  const auto m = rxx_matrix(estimate_statistics(s, 1));
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<cd, 8, 8>> es(m);
  const auto ev = es.eigenvalues();
  EXPECT_GT(ev(7), 0.0);
  EXPECT_LT(std::abs(ev(6)), 1e-12 * ev(7));
}

TEST(Statistics, HermitianPositiveSemidefiniteProperty) {
  for (int trial = 0; trial < 20; ++trial) {
    Gen gen(3000 + trial);
    std::vector<SystemSample> s;
    const int n = gen.integer(1, 12);
    for (int i = 0; i < n; ++i)
      s.push_back(make_sample(gen.complex(), gen.complex(), gen.complex(), gen.complex()));
    const auto m = rxx_matrix(estimate_statistics(s, s.size()));
    EXPECT_LT((m - m.adjoint()).norm(), 1e-14 * m.norm());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<cd, 8, 8>> es(m);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12 * es.eigenvalues().maxCoeff());
  }
}

TEST(Statistics, RejectsBadCount) {
  const std::vector<SystemSample> s(3);
  EXPECT_THROW(estimate_statistics(s, 0), std::invalid_argument);
  EXPECT_THROW(estimate_statistics(s, 4), std::invalid_argument);
}

// ---------------------------------------------------------------- op counts

TEST(OpCounts, ClosedFormsAtTwoByFour) {
  auto expect = [](OpCounter got, double a, double m, double d) {
    EXPECT_NEAR(got.real_additions, a, 1e-9);
    EXPECT_NEAR(got.real_multiplications, m, 1e-9);
    EXPECT_NEAR(got.real_divisions, d, 1e-9);
  };
  expect(predicted_op_counts(FilterMethod::lms, 2, 4), 50, 78, 0);
  expect(predicted_op_counts(FilterMethod::nlms, 2, 4), 77, 99, 2);
  expect(predicted_op_counts(FilterMethod::rls, 2, 4), 429, 483, 9);
  expect(predicted_op_counts(FilterMethod::awf, 2, 4), 1877, 2018.0 + 2.0 / 3.0, 16);
  expect(predicted_op_counts(FilterMethod::iwf, 2, 4), 1778, 1924, 0);
  expect(predicted_op_counts(CostItem::statistics, 2, 4, 3300), 8 + 144 * 3300, 448, 1);
  EXPECT_THROW(predicted_op_counts(FilterMethod::lms, 0, 4), std::invalid_argument);
}

TEST(OpCounts, SampleAdaptiveCostIsDataIndependent) {
  const OfdmConfig c = testing_support::tiny_config();
  const Case k = selective_case(c, literature_pair(), 9);
  const auto s = build_samples(k.h_iq, k.h, k.x, {0, 1});
  for (FilterMethod m : {FilterMethod::lms, FilterMethod::nlms, FilterMethod::rls}) {
    const BilinearEstimate e = run_filter(s, FilterConfig::defaults(m));
    const double n = static_cast<double>(s.size());
    EXPECT_EQ(e.op_counts.real_additions, n * e.op_counts_per_iteration.real_additions);
    EXPECT_EQ(e.op_counts.real_multiplications,
              n * e.op_counts_per_iteration.real_multiplications);
    EXPECT_EQ(e.op_counts.real_divisions, n * e.op_counts_per_iteration.real_divisions);
    EXPECT_GT(e.op_counts_per_iteration.real_multiplications, 0);
  }
}

TEST(OpCounts, WienerIterationsWithinFivePercentOfReference) {
  const OfdmConfig c = testing_support::tiny_config();
  const Case k = selective_case(c, literature_pair(), 9);
  const auto s = build_samples(k.h_iq, k.h, k.x, {0});
  const struct {
    FilterMethod m;
    double add, mul, div;
  } table[] = {{FilterMethod::awf, 1877, 2024, 16}, {FilterMethod::iwf, 1778, 1916, 0}};
  for (const auto& row : table) {
    FilterConfig cfg = FilterConfig::defaults(row.m);
    cfg.n_stats = static_cast<int>(s.size());
    const OpCounter got = run_filter(s, cfg).op_counts_per_iteration;
    EXPECT_LE(std::abs(got.real_additions - row.add), 0.05 * row.add) << to_string(row.m);
    EXPECT_LE(std::abs(got.real_multiplications - row.mul), 0.05 * row.mul) << to_string(row.m);
    EXPECT_EQ(got.real_divisions, row.div) << to_string(row.m);
  }
}

TEST(OpCounts, StatisticsAccumulationIsLinearInN) {
  const OfdmConfig c = testing_support::tiny_config();
  const Case k = selective_case(c, literature_pair(), 9);
  const auto s = build_samples(k.h_iq, k.h, k.x, {0, 1});
  for (std::size_t n : {std::size_t{1}, std::size_t{17}, s.size()}) {
    const auto st = estimate_statistics(s, n);
    EXPECT_EQ(st.accumulation_ops.real_additions, 144.0 * static_cast<double>(n));
    EXPECT_EQ(st.accumulation_ops.real_multiplications, 0.0);
    EXPECT_EQ(st.normalization_ops.real_divisions, 1.0);
  }
}

// ---------------------------------------------------------------- ambiguity

TEST(Ambiguity, UnitScaleIsIdentity) {
  const BilinearEstimate t = truth(literature_pair());
  EXPECT_LT(param_distance(ambiguity_scale(t, 1.0), t), 1e-15);
  EXPECT_THROW(ambiguity_scale(t, 0.0), std::invalid_argument);
}

TEST(Ambiguity, ModelOutputInvariantProperty) {
  for (int trial = 0; trial < 50; ++trial) {
    Gen gen(3100 + trial);
    BilinearEstimate e;
    e.f_hat << gen.complex(), gen.complex();
    e.g_hat << gen.uniform(-1, 1), gen.uniform(-1, 1), gen.uniform(-1, 1), gen.uniform(-1, 1);
    const BilinearEstimate s = ambiguity_scale(e, gen.nonzero_lambda());
    for (int i = 0; i < 10; ++i) {
      const SystemSample q = make_sample(gen.complex(), gen.complex(), gen.complex(), gen.complex());
      const cd a = model_output(e, q), b = model_output(s, q);
      EXPECT_LT(std::abs(a - b), 1e-12 * std::max(1.0, std::abs(a))) << trial;
    }
  }
}

TEST(Ambiguity, CanonicalizeRecoversTruth) {
  for (int trial = 0; trial < 20; ++trial) {
    Gen gen(3200 + trial);
    const IqPair p = gen.pair();
    const BilinearEstimate t = truth(p);
    const cd lambda = gen.nonzero_lambda();
    const BilinearEstimate c = canonicalize(ambiguity_scale(t, lambda));
    EXPECT_NEAR(c.alpha_tx().imag(), 0.0, 1e-14);
    EXPECT_GT(c.alpha_tx().real(), 0.0);
    EXPECT_LT(param_distance(canonicalize(c), c), 1e-14);
    // canonical form fixes the phase only; the magnitude stays free
    EXPECT_LT(param_distance(c, canonicalize(ambiguity_scale(t, std::abs(lambda)))), 1e-12);
    EXPECT_LT(param_distance(align(c), align(t)), 1e-12);
  }
}
