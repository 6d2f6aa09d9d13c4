#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "channel_sim.hpp"
#include "common.hpp"
#include "ofdm_waveform.hpp"
#include "op_counter.hpp"

namespace iqjcas {

inline constexpr int kL = 2;  // length of f
inline constexpr int kM = 4;  // length of g

enum class FilterMethod { lms, nlms, rls, awf, iwf };

inline std::string to_string(FilterMethod m) {
  switch (m) {
    case FilterMethod::lms: return "lms";
    case FilterMethod::nlms: return "nlms";
    case FilterMethod::rls: return "rls";
    case FilterMethod::awf: return "awf";
    case FilterMethod::iwf: return "iwf";
  }
  return "?";
}

inline FilterMethod filter_method_from_string(const std::string& s) {
  for (FilterMethod m : {FilterMethod::lms, FilterMethod::nlms, FilterMethod::rls,
                         FilterMethod::awf, FilterMethod::iwf})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown filter method '" + s + "'");
}

struct FilterConfig {
  FilterMethod method = FilterMethod::awf;
  double mu_f = 0.02;
  double mu_g = 0.02;
  double mu_iwf = 0.1;
  double alpha_h = 0.7;
  double alpha_g = 0.1;
  double delta_h = 1e-3;
  double delta_g = 1e-3;
  double lambda_forget = 0.95;
  double p_init = 1e3;
  int n_stats = 3300;
  int max_iterations = 0;  // AWF/IWF only; 0 selects 20 (awf) or 500 (iwf)
  double tolerance = 1e-10;
  Eigen::Vector2cd f_init = Eigen::Vector2cd(cd(1, 0), cd(0, 0));
  Eigen::Vector4d g_init = Eigen::Vector4d(1, 0, 0, 0);
  double divergence_threshold = 1e6;
  double covariance_limit = 1e12;

  static FilterConfig defaults(FilterMethod m) {
    FilterConfig c;
    c.method = m;
    return c;
  }

  int iteration_cap() const {
    if (max_iterations > 0) return max_iterations;
    return method == FilterMethod::iwf ? 500 : 20;
  }

  void validate() const {
    if (!(mu_f > 0 && mu_g > 0 && mu_iwf > 0 && alpha_h > 0 && alpha_g > 0))
      throw std::invalid_argument("step sizes must be > 0");
    if (!(delta_h >= 0 && delta_g >= 0)) throw std::invalid_argument("deltas must be >= 0");
    if (!(lambda_forget > 0 && lambda_forget <= 1))
      throw std::invalid_argument("lambda_forget must lie in (0, 1]");
    if (!(p_init > 0)) throw std::invalid_argument("p_init must be > 0");
    if (n_stats < 1) throw std::invalid_argument("n_stats must be >= 1");
  }
};

struct SystemSample {
  Eigen::Matrix<cd, kL, kM> x_matrix;
  cd target{0, 0};  // h_IQ
  cd x_prime{0, 0};
  cd h_tilde{0, 0};
  cd h_tilde_mirror_conj{0, 0};
  int subcarrier = 0;
  int symbol = 0;
};

// X = [h, jh, h x', jh x'; hm x', -j hm x', hm, -j hm] with hm = cm(h_tilde)
inline SystemSample make_sample(cd target, cd h, cd hm, cd xp) {
  const cd j(0, 1);
  SystemSample s;
  s.x_matrix << h, j * h, h * xp, j * h * xp, hm * xp, -j * hm * xp, hm, -j * hm;
  s.target = target;
  s.x_prime = xp;
  s.h_tilde = h;
  s.h_tilde_mirror_conj = hm;
  return s;
}

inline std::vector<SystemSample> build_samples(const ChannelMatrix& h_iq,
                                               const ChannelMatrix& h_tilde,
                                               const ResourceGrid& x_tx,
                                               const std::vector<int>& symbols) {
  const OfdmConfig& c = x_tx.config;
  check_shape(c, h_iq.data, "build_samples h_iq");
  check_shape(c, h_tilde.data, "build_samples h_tilde");
  check_shape(c, x_tx.data, "build_samples x_tx");
  if (symbols.empty()) throw std::invalid_argument("build_samples: no symbols selected");
  const int n = c.n_subcarriers;
  std::vector<SystemSample> out;
  out.reserve(symbols.size() * static_cast<std::size_t>(n));
  for (int l : symbols) {
    if (l < 0 || l >= c.n_symbols)
      throw std::invalid_argument("build_samples: symbol index out of range: " +
                                  std::to_string(l));
    for (int k = 0; k < n; ++k) {
      const int m = mirror_index(k, n);
      if (m < 0) continue;
      const cd x = x_tx.data(k, l);
      const cd xp = std::conj(x_tx.data(m, l)) / x;
      SystemSample s =
          make_sample(h_iq.data(k, l), h_tilde.data(k, l), std::conj(h_tilde.data(m, l)), xp);
      s.subcarrier = k;
      s.symbol = l;
      out.push_back(s);
    }
  }
  return out;
}

struct BilinearEstimate {
  FilterMethod method = FilterMethod::awf;
  Eigen::Vector2cd f_hat = Eigen::Vector2cd(cd(1, 0), cd(0, 0));  // [conj(alpha_Rx), conj(beta_Rx)]
  Eigen::Vector4d g_hat = Eigen::Vector4d(1, 0, 0, 0);  // [Re a_Tx, Im a_Tx, Re b_Tx, Im b_Tx]
  // LMS/NLMS/RLS: a-priori error of every sample. AWF/IWF: RMS model error over
  // the cached samples, entry 0 at initialization, entry i after iteration i.
  std::vector<cd> error_trace;
  OpCounter op_counts;                // whole run, statistics included
  OpCounter op_counts_per_iteration;  // first iteration
  OpCounter statistics_op_counts;     // AWF/IWF only
  int iterations = 0;
  bool converged = true;
  bool regularized = false;

  cd alpha_rx() const { return std::conj(f_hat(0)); }
  cd beta_rx() const { return std::conj(f_hat(1)); }
  cd alpha_tx() const { return {g_hat(0), g_hat(1)}; }
  cd beta_tx() const { return {g_hat(2), g_hat(3)}; }
};

inline cd model_output(const Eigen::Vector2cd& f, const Eigen::Matrix<cd, kL, kM>& x,
                       const Eigen::Vector4d& g) {
  return f.dot(x * g.cast<cd>());
}

inline cd model_output(const BilinearEstimate& e, const SystemSample& s) {
  return model_output(e.f_hat, s.x_matrix, e.g_hat);
}

// sum |e|^2 / sum |y|^2 over the given samples
inline double relative_residual(const BilinearEstimate& e, const std::vector<SystemSample>& s,
                                std::size_t n = 0) {
  if (n == 0 || n > s.size()) n = s.size();
  double num = 0, den = 0;
  for (std::size_t i = 0; i < n; ++i) {
    num += std::norm(s[i].target - model_output(e, s[i]));
    den += std::norm(s[i].target);
  }
  return den > 0 ? num / den : num;
}

inline BilinearEstimate ambiguity_scale(BilinearEstimate e, cd lambda) {
  if (lambda == cd(0, 0)) throw std::invalid_argument("ambiguity_scale: lambda must be nonzero");
  e.f_hat(0) *= std::conj(lambda);  // alpha_Rx -> lambda alpha_Rx
  e.f_hat(1) *= lambda;             // beta_Rx -> conj(lambda) beta_Rx
  const cd a = e.alpha_tx() / lambda, b = e.beta_tx() / lambda;
  e.g_hat << a.real(), a.imag(), b.real(), b.imag();
  return e;
}

// The equivalent estimate whose alpha_Tx is real and positive.
inline BilinearEstimate canonicalize(const BilinearEstimate& e) {
  const cd a = e.alpha_tx();
  if (std::abs(a) == 0.0) return e;
  return ambiguity_scale(e, a / std::abs(a));
}

// ---------------------------------------------------------------- kernels

namespace kernels {

template <class R>
using VecF = std::array<Cx<R>, kL>;
template <class R>
using VecG = std::array<R, kM>;
template <class R>
using MatX = std::array<std::array<Cx<R>, kM>, kL>;

template <class R>
struct Sample {
  MatX<R> x;
  Cx<R> y;
};

template <class R>
Sample<R> load(const SystemSample& s) {
  Sample<R> out;
  for (int l = 0; l < kL; ++l)
    for (int m = 0; m < kM; ++m) out.x[l][m] = Cx<R>(s.x_matrix(l, m));
  out.y = Cx<R>(s.target);
  return out;
}

// u = X g
template <class R>
VecF<R> x_times_g(const MatX<R>& x, const VecG<R>& g) {
  VecF<R> u;
  for (int l = 0; l < kL; ++l) {
    u[l] = x[l][0] * g[0];
    for (int m = 1; m < kM; ++m) u[l] += x[l][m] * g[m];
  }
  return u;
}

// f^H u
template <class R>
Cx<R> f_dot(const VecF<R>& f, const VecF<R>& u) {
  Cx<R> y = conj(f[0]) * u[0];
  for (int l = 1; l < kL; ++l) y += conj(f[l]) * u[l];
  return y;
}

// r = X^H f
template <class R>
std::array<Cx<R>, kM> xh_times_f(const MatX<R>& x, const VecF<R>& f) {
  std::array<Cx<R>, kM> r;
  for (int m = 0; m < kM; ++m) {
    r[m] = conj(x[0][m]) * f[0];
    for (int l = 1; l < kL; ++l) r[m] += conj(x[l][m]) * f[l];
  }
  return r;
}

template <class R>
Cx<R> lms_step(VecF<R>& f, VecG<R>& g, const Sample<R>& s, R mu_f, R two_mu_g) {
  const VecF<R> u = x_times_g(s.x, g);
  const Cx<R> e = s.y - f_dot(f, u);
  VecF<R> v;
  for (int l = 0; l < kL; ++l) v[l] = e * f[l];
  const Cx<R> step = conj(e) * mu_f;
  for (int l = 0; l < kL; ++l) f[l] += step * u[l];
  for (int m = 0; m < kM; ++m) {
    R grad = re_conj_mul(s.x[0][m], v[0]);
    for (int l = 1; l < kL; ++l) grad += re_conj_mul(s.x[l][m], v[l]);
    g[m] += two_mu_g * grad;
  }
  return e;
}

template <class R>
Cx<R> nlms_step(VecF<R>& f, VecG<R>& g, const Sample<R>& s, R alpha_h, R alpha_g, R delta_h,
                R delta_g) {
  const VecF<R> u = x_times_g(s.x, g);
  const Cx<R> e = s.y - f_dot(f, u);
  const std::array<Cx<R>, kM> r = xh_times_f(s.x, f);
  R nu = norm(u[0]);
  for (int l = 1; l < kL; ++l) nu += norm(u[l]);
  R nr = norm(r[0]);
  for (int m = 1; m < kM; ++m) nr += norm(r[m]);
  const R gain_f = alpha_h / (delta_h + nu);
  const R gain_g = alpha_g / (delta_g + nr);
  const Cx<R> step = conj(e) * gain_f;
  for (int l = 0; l < kL; ++l) f[l] += step * u[l];
  const R two_gain_g = R(2.0) * gain_g;
  for (int m = 0; m < kM; ++m) g[m] += two_gain_g * re_mul(e, r[m]);
  return e;
}

template <class R>
struct RlsState {
  VecF<R> f;
  VecG<R> g;
  std::array<std::array<Cx<R>, kL>, kL> pf;
  std::array<std::array<R, kM>, kM> pg;
};

template <class R>
Cx<R> rls_step(RlsState<R>& st, const Sample<R>& s, R lambda, R inv_lambda) {
  const VecF<R> u = x_times_g(s.x, st.g);
  const Cx<R> e = s.y - f_dot(st.f, u);

  // g-branch regressor uses the previous f
  const std::array<Cx<R>, kM> r = xh_times_f(s.x, st.f);

  // complex RLS on u
  VecF<R> pi;
  for (int i = 0; i < kL; ++i) {
    pi[i] = st.pf[i][0] * u[0];
    for (int j = 1; j < kL; ++j) pi[i] += st.pf[i][j] * u[j];
  }
  R den = re_conj_mul(u[0], pi[0]);
  for (int l = 1; l < kL; ++l) den += re_conj_mul(u[l], pi[l]);
  const R inv_den = R(1.0) / (lambda + den);
  VecF<R> k;
  for (int l = 0; l < kL; ++l) k[l] = pi[l] * inv_den;
  const Cx<R> ec = conj(e);
  for (int l = 0; l < kL; ++l) st.f[l] += k[l] * ec;
  // upper triangle only, mirrored, so that P stays exactly Hermitian
  for (int i = 0; i < kL; ++i) {
    st.pf[i][i] = Cx<R>((st.pf[i][i].re - re_conj_mul(pi[i], k[i])) * inv_lambda, R(0.0));
    for (int j = i + 1; j < kL; ++j) {
      st.pf[i][j] = (st.pf[i][j] - k[i] * conj(pi[j])) * inv_lambda;
      st.pf[j][i] = conj(st.pf[i][j]);
    }
  }

  // real RLS on [Re y; Im y] = [Re r^T; -Im r^T] g
  VecG<R> p1, p2, q1, q2;
  for (int m = 0; m < kM; ++m) {
    p1[m] = r[m].re;
    p2[m] = -r[m].im;
  }
  for (int i = 0; i < kM; ++i) {
    q1[i] = st.pg[i][0] * p1[0];
    q2[i] = st.pg[i][0] * p2[0];
    for (int j = 1; j < kM; ++j) {
      q1[i] += st.pg[i][j] * p1[j];
      q2[i] += st.pg[i][j] * p2[j];
    }
  }
  R s11 = p1[0] * q1[0], s12 = p1[0] * q2[0], s22 = p2[0] * q2[0];
  for (int m = 1; m < kM; ++m) {
    s11 += p1[m] * q1[m];
    s12 += p1[m] * q2[m];
    s22 += p2[m] * q2[m];
  }
  s11 = lambda + s11;
  s22 = lambda + s22;
  const R inv_det = R(1.0) / (s11 * s22 - s12 * s12);
  const R i11 = s22 * inv_det, i12 = -(s12 * inv_det), i22 = s11 * inv_det;
  VecG<R> k1, k2;
  for (int m = 0; m < kM; ++m) {
    k1[m] = q1[m] * i11 + q2[m] * i12;
    k2[m] = q1[m] * i12 + q2[m] * i22;
  }
  for (int m = 0; m < kM; ++m) st.g[m] += k1[m] * e.re + k2[m] * e.im;
  for (int i = 0; i < kM; ++i)
    for (int j = i; j < kM; ++j) {
      st.pg[i][j] = (st.pg[i][j] - (k1[i] * q1[j] + k2[i] * q2[j])) * inv_lambda;
      st.pg[j][i] = st.pg[i][j];
    }
  return e;
}

inline constexpr int kN = kL * kM;  // length of vec(X)

template <class R>
struct Statistics {
  std::array<std::array<Cx<R>, kN>, kN> rxx;  // E[vec(X) vec(X)^H]
  std::array<std::array<Cx<R>, kM>, kL> rxy;  // E[X y*]
  OpCounter product_ops;                     // spent forming per-sample products
  OpCounter accumulation_ops;                // spent in running sums
  OpCounter normalization_ops;
};

template <class R>
Statistics<R> statistics(const std::vector<SystemSample>& samples, std::size_t n) {
  Statistics<R> st;
  for (auto& row : st.rxx) row.fill(Cx<R>());
  for (auto& row : st.rxy) row.fill(Cx<R>());
  for (std::size_t i = 0; i < n; ++i) {
    const Sample<R> s = load<R>(samples[i]);
    std::array<Cx<R>, kN> x;
    for (int m = 0; m < kM; ++m)
      for (int l = 0; l < kL; ++l) x[l + kL * m] = s.x[l][m];
    const Cx<R> yc = conj(s.y);

    OpCounter t0 = counting::snapshot();
    std::array<std::array<Cx<R>, kN>, kN> outer;
    std::array<std::array<Cx<R>, kM>, kL> cross;
    for (int a = 0; a < kN; ++a)
      for (int b = 0; b < kN; ++b) outer[a][b] = x[a] * conj(x[b]);
    for (int l = 0; l < kL; ++l)
      for (int m = 0; m < kM; ++m) cross[l][m] = s.x[l][m] * yc;
    OpCounter t1 = counting::snapshot();
    for (int a = 0; a < kN; ++a)
      for (int b = 0; b < kN; ++b) st.rxx[a][b] += outer[a][b];
    for (int l = 0; l < kL; ++l)
      for (int m = 0; m < kM; ++m) st.rxy[l][m] += cross[l][m];
    OpCounter t2 = counting::snapshot();
    st.product_ops += t1 - t0;
    st.accumulation_ops += t2 - t1;
  }
  OpCounter t0 = counting::snapshot();
  const R inv = R(1.0) / R(static_cast<double>(n));
  for (auto& row : st.rxx)
    for (auto& v : row) v = v * inv;
  for (auto& row : st.rxy)
    for (auto& v : row) v = v * inv;
  st.normalization_ops = counting::snapshot() - t0;
  return st;
}

// Normal equations of both half-steps, built from the statistics through dense
// Kronecker-structured products.
template <class R>
struct NormalF {
  std::array<std::array<Cx<R>, kL>, kL> a;
  VecF<R> b;
};

template <class R>
struct NormalG {
  std::array<std::array<R, kM>, kM> a;
  VecG<R> b;
};

// R_f = (g^T kron I) R_xx (g kron I), p_f = R_Xy g
template <class R>
NormalF<R> normal_f(const Statistics<R>& st, const VecG<R>& g) {
  std::array<std::array<R, kN>, kL> gk;  // g^T kron I_L
  for (int l = 0; l < kL; ++l)
    for (int a = 0; a < kN; ++a) gk[l][a] = (a % kL == l) ? g[a / kL] : R(0.0);
  std::array<std::array<Cx<R>, kN>, kL> t;
  for (int l = 0; l < kL; ++l)
    for (int b = 0; b < kN; ++b) {
      Cx<R> acc = st.rxx[0][b] * gk[l][0];
      for (int a = 1; a < kN; ++a) acc += st.rxx[a][b] * gk[l][a];
      t[l][b] = acc;
    }
  NormalF<R> nf;
  for (int i = 0; i < kL; ++i)
    for (int j = 0; j < kL; ++j) {
      Cx<R> acc = t[i][0] * gk[j][0];
      for (int b = 1; b < kN; ++b) acc += t[i][b] * gk[j][b];
      nf.a[i][j] = acc;
    }
  for (int l = 0; l < kL; ++l) {
    Cx<R> acc = st.rxy[l][0] * g[0];
    for (int m = 1; m < kM; ++m) acc += st.rxy[l][m] * g[m];
    nf.b[l] = acc;
  }
  return nf;
}

// R_g = Re{(I kron f^H) R_xx (I kron f)}, p_g = Re{R_Xy^T f*}
template <class R>
NormalG<R> normal_g(const Statistics<R>& st, const VecF<R>& f) {
  std::array<std::array<Cx<R>, kN>, kM> fk;  // I_M kron f^H
  for (int m = 0; m < kM; ++m)
    for (int a = 0; a < kN; ++a) fk[m][a] = (a / kL == m) ? conj(f[a % kL]) : Cx<R>();
  std::array<std::array<Cx<R>, kN>, kM> t;
  for (int m = 0; m < kM; ++m)
    for (int b = 0; b < kN; ++b) {
      Cx<R> acc = fk[m][0] * st.rxx[0][b];
      for (int a = 1; a < kN; ++a) acc += fk[m][a] * st.rxx[a][b];
      t[m][b] = acc;
    }
  NormalG<R> ng;
  for (int i = 0; i < kM; ++i)
    for (int j = 0; j < kM; ++j) {
      Cx<R> acc = t[i][0] * conj(fk[j][0]);
      for (int b = 1; b < kN; ++b) acc += t[i][b] * conj(fk[j][b]);
      ng.a[i][j] = acc.re;
    }
  for (int m = 0; m < kM; ++m) {
    R acc = re_conj_mul(f[0], st.rxy[0][m]);
    for (int l = 1; l < kL; ++l) acc += re_conj_mul(f[l], st.rxy[l][m]);
    ng.b[m] = acc;
  }
  return ng;
}

// Gaussian elimination without pivoting; false when a pivot vanishes.
template <class T, std::size_t N>
bool gauss_solve(std::array<std::array<T, N>, N> a, std::array<T, N> b,
                 std::array<T, N>& x, double (*mag)(const T&)) {
  double scale = 0.0;
  for (std::size_t i = 0; i < N; ++i) scale = std::max(scale, mag(a[i][i]));
  for (std::size_t k = 0; k < N; ++k) {
    if (!(mag(a[k][k]) > 1e-14 * scale)) return false;
    for (std::size_t i = k + 1; i < N; ++i) {
      const T f = a[i][k] / a[k][k];
      for (std::size_t j = k + 1; j < N; ++j) a[i][j] -= f * a[k][j];
      b[i] -= f * b[k];
    }
  }
  if (!(mag(a[N - 1][N - 1]) > 1e-14 * scale)) return false;
  for (std::size_t ii = N; ii-- > 0;) {
    T s = b[ii];
    for (std::size_t j = ii + 1; j < N; ++j) s -= a[ii][j] * x[j];
    x[ii] = s / a[ii][ii];
  }
  return true;
}

template <class R>
double mag_real(const R& v) {
  return std::abs(counting::value(v));
}

template <class R>
double mag_cx(const Cx<R>& v) {
  return std::abs(v.value());
}

template <class R>
bool solve_f(NormalF<R> nf, VecF<R>& f, bool& regularized) {
  if (gauss_solve(nf.a, nf.b, f, &mag_cx<R>)) return true;
  regularized = true;
  for (int i = 0; i < kL; ++i) nf.a[i][i].re = nf.a[i][i].re + R(1e-9);
  return gauss_solve(nf.a, nf.b, f, &mag_cx<R>);
}

template <class R>
bool solve_g(NormalG<R> ng, VecG<R>& g, bool& regularized) {
  if (gauss_solve(ng.a, ng.b, g, &mag_real<R>)) return true;
  regularized = true;
  for (int i = 0; i < kM; ++i) ng.a[i][i] = ng.a[i][i] + R(1e-9);
  return gauss_solve(ng.a, ng.b, g, &mag_real<R>);
}

template <class R>
void awf_iteration(const Statistics<R>& st, VecF<R>& f, VecG<R>& g, bool& regularized) {
  if (!solve_f(normal_f(st, g), f, regularized))
    throw std::domain_error("awf: singular normal matrix for f");
  if (!solve_g(normal_g(st, f), g, regularized))
    throw std::domain_error("awf: singular normal matrix for g");
}

// steepest descent on each half-step's quadratic cost
template <class R>
void iwf_iteration(const Statistics<R>& st, VecF<R>& f, VecG<R>& g, R mu) {
  const NormalF<R> nf = normal_f(st, g);
  for (int i = 0; i < kL; ++i) {
    Cx<R> acc = nf.a[i][0] * f[0];
    for (int j = 1; j < kL; ++j) acc += nf.a[i][j] * f[j];
    f[i] += (nf.b[i] - acc) * mu;
  }
  const NormalG<R> ng = normal_g(st, f);
  VecG<R> step;
  for (int i = 0; i < kM; ++i) {
    R acc = ng.a[i][0] * g[0];
    for (int j = 1; j < kM; ++j) acc += ng.a[i][j] * g[j];
    step[i] = ng.b[i] - acc;
  }
  for (int i = 0; i < kM; ++i) g[i] += mu * step[i];
}

}  // namespace kernels

// ---------------------------------------------------------------- runs

namespace detail {

using CR = counting::Real;

inline kernels::VecF<CR> load_f(const Eigen::Vector2cd& f) {
  return {Cx<CR>(f(0)), Cx<CR>(f(1))};
}
inline kernels::VecG<CR> load_g(const Eigen::Vector4d& g) { return {g(0), g(1), g(2), g(3)}; }
inline Eigen::Vector2cd store_f(const kernels::VecF<CR>& f) {
  return {f[0].value(), f[1].value()};
}
inline Eigen::Vector4d store_g(const kernels::VecG<CR>& g) {
  return {g[0].value(), g[1].value(), g[2].value(), g[3].value()};
}

inline void check_error(cd e, double limit, std::size_t i, const char* who) {
  if (!std::isfinite(e.real()) || !std::isfinite(e.imag()) || std::abs(e) > limit)
    throw DivergenceError(std::string(who) + " diverged: |e| = " + std::to_string(std::abs(e)),
                          i);
}

inline BilinearEstimate begin(const FilterConfig& cfg, FilterMethod expect,
                              const std::vector<SystemSample>& samples) {
  cfg.validate();
  if (cfg.method != expect)
    throw std::invalid_argument("filter config method is " + to_string(cfg.method) +
                                ", expected " + to_string(expect));
  if (samples.empty()) throw std::invalid_argument("no samples");
  BilinearEstimate est;
  est.method = expect;
  est.f_hat = cfg.f_init;
  est.g_hat = cfg.g_init;
  return est;
}

template <class Step>
BilinearEstimate stream(BilinearEstimate est, const std::vector<SystemSample>& samples,
                        const FilterConfig& cfg, const char* who, Step&& step) {
  est.error_trace.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto s = kernels::load<CR>(samples[i]);
    const OpCounter t0 = counting::snapshot();
    const cd e = step(s, i).value();
    const OpCounter used = counting::snapshot() - t0;
    if (i == 0) est.op_counts_per_iteration = used;
    est.op_counts += used;
    est.error_trace.push_back(e);
    check_error(e, cfg.divergence_threshold, i, who);
  }
  est.iterations = static_cast<int>(samples.size());
  return est;
}

}  // namespace detail

inline BilinearEstimate lms_run(const std::vector<SystemSample>& samples,
                                const FilterConfig& cfg) {
  using detail::CR;
  BilinearEstimate est = detail::begin(cfg, FilterMethod::lms, samples);
  auto f = detail::load_f(est.f_hat);
  auto g = detail::load_g(est.g_hat);
  const CR mu_f = cfg.mu_f, two_mu_g = 2.0 * cfg.mu_g;
  est = detail::stream(std::move(est), samples, cfg, "lms", [&](const auto& s, std::size_t) {
    return kernels::lms_step<CR>(f, g, s, mu_f, two_mu_g);
  });
  est.f_hat = detail::store_f(f);
  est.g_hat = detail::store_g(g);
  return est;
}

inline BilinearEstimate nlms_run(const std::vector<SystemSample>& samples,
                                 const FilterConfig& cfg) {
  using detail::CR;
  BilinearEstimate est = detail::begin(cfg, FilterMethod::nlms, samples);
  auto f = detail::load_f(est.f_hat);
  auto g = detail::load_g(est.g_hat);
  est = detail::stream(std::move(est), samples, cfg, "nlms", [&](const auto& s, std::size_t) {
    return kernels::nlms_step<CR>(f, g, s, cfg.alpha_h, cfg.alpha_g, cfg.delta_h, cfg.delta_g);
  });
  est.f_hat = detail::store_f(f);
  est.g_hat = detail::store_g(g);
  return est;
}

inline BilinearEstimate rls_run(const std::vector<SystemSample>& samples,
                                const FilterConfig& cfg) {
  using detail::CR;
  BilinearEstimate est = detail::begin(cfg, FilterMethod::rls, samples);
  kernels::RlsState<CR> st;
  st.f = detail::load_f(est.f_hat);
  st.g = detail::load_g(est.g_hat);
  for (int i = 0; i < kL; ++i)
    for (int j = 0; j < kL; ++j) st.pf[i][j] = Cx<CR>(CR(i == j ? cfg.p_init : 0.0), CR(0.0));
  for (int i = 0; i < kM; ++i)
    for (int j = 0; j < kM; ++j) st.pg[i][j] = i == j ? cfg.p_init : 0.0;
  const CR lambda = cfg.lambda_forget, inv_lambda = 1.0 / cfg.lambda_forget;
  est = detail::stream(std::move(est), samples, cfg, "rls", [&](const auto& s, std::size_t i) {
    const auto e = kernels::rls_step<CR>(st, s, lambda, inv_lambda);
    double tr = 0;
    for (int k = 0; k < kL; ++k) tr += st.pf[k][k].re.value();
    for (int k = 0; k < kM; ++k) tr += st.pg[k][k].value();
    if (!std::isfinite(tr) || std::abs(tr) > cfg.covariance_limit)
      throw InstabilityError("rls covariance trace " + std::to_string(tr) + " exceeds limit", i);
    return e;
  });
  est.f_hat = detail::store_f(st.f);
  est.g_hat = detail::store_g(st.g);
  return est;
}

inline kernels::Statistics<counting::Real> estimate_statistics(
    const std::vector<SystemSample>& samples, std::size_t n_stats) {
  if (n_stats < 1 || n_stats > samples.size())
    throw std::invalid_argument("estimate_statistics: n_stats " + std::to_string(n_stats) +
                                " outside [1, " + std::to_string(samples.size()) + "]");
  return kernels::statistics<counting::Real>(samples, n_stats);
}

// plain-valued views of the statistics
inline Eigen::Matrix<cd, kernels::kN, kernels::kN> rxx_matrix(
    const kernels::Statistics<counting::Real>& st) {
  Eigen::Matrix<cd, kernels::kN, kernels::kN> m;
  for (int a = 0; a < kernels::kN; ++a)
    for (int b = 0; b < kernels::kN; ++b) m(a, b) = st.rxx[a][b].value();
  return m;
}

inline Eigen::Matrix<cd, kL, kM> rxy_matrix(const kernels::Statistics<counting::Real>& st) {
  Eigen::Matrix<cd, kL, kM> m;
  for (int l = 0; l < kL; ++l)
    for (int k = 0; k < kM; ++k) m(l, k) = st.rxy[l][k].value();
  return m;
}

namespace detail {

template <class Iterate>
BilinearEstimate wiener_run(BilinearEstimate est, const std::vector<SystemSample>& samples,
                            const FilterConfig& cfg, bool stop_on_step, Iterate&& iterate) {
  const std::size_t n =
      std::min(static_cast<std::size_t>(cfg.n_stats), samples.size());
  const OpCounter s0 = counting::snapshot();
  const auto st = kernels::statistics<CR>(samples, n);
  est.statistics_op_counts = counting::snapshot() - s0;
  est.op_counts = est.statistics_op_counts;

  auto f = load_f(est.f_hat);
  auto g = load_g(est.g_hat);
  auto residual = [&] { return relative_residual(est, samples, n); };
  double prev = residual();
  est.error_trace.push_back(std::sqrt(prev));
  est.converged = false;
  const int cap = cfg.iteration_cap();
  for (int it = 1; it <= cap; ++it) {
    const Eigen::Vector2cd f_old = est.f_hat;
    const Eigen::Vector4d g_old = est.g_hat;
    const OpCounter t0 = counting::snapshot();
    iterate(st, f, g);
    const OpCounter used = counting::snapshot() - t0;
    if (it == 1) est.op_counts_per_iteration = used;
    est.op_counts += used;
    est.f_hat = store_f(f);
    est.g_hat = store_g(g);
    est.iterations = it;
    const double cur = residual();
    est.error_trace.push_back(std::sqrt(cur));
    check_error(std::sqrt(cur), cfg.divergence_threshold, static_cast<std::size_t>(it), "wiener");
    bool done;
    if (stop_on_step) {
      const double step = (est.f_hat - f_old).norm() + (est.g_hat - g_old).norm();
      const double size = est.f_hat.norm() + est.g_hat.norm();
      done = step <= cfg.tolerance * 1e-3 * size;
    } else {
      done = cur < 1e-28 || std::abs(prev - cur) <= cfg.tolerance * std::max(prev, 1e-300);
    }
    prev = cur;
    if (done) {
      est.converged = true;
      break;
    }
  }
  return est;
}

}  // namespace detail

inline BilinearEstimate awf_run(const std::vector<SystemSample>& samples,
                                const FilterConfig& cfg) {
  BilinearEstimate est = detail::begin(cfg, FilterMethod::awf, samples);
  bool regularized = false;
  est = detail::wiener_run(std::move(est), samples, cfg, false,
                           [&](const auto& st, auto& f, auto& g) {
                             kernels::awf_iteration(st, f, g, regularized);
                           });
  est.regularized = regularized;
  return est;
}

inline BilinearEstimate iwf_run(const std::vector<SystemSample>& samples,
                                const FilterConfig& cfg) {
  BilinearEstimate est = detail::begin(cfg, FilterMethod::iwf, samples);
  const detail::CR mu = cfg.mu_iwf;
  return detail::wiener_run(std::move(est), samples, cfg, true,
                            [&](const auto& st, auto& f, auto& g) {
                              kernels::iwf_iteration(st, f, g, mu);
                            });
}

inline BilinearEstimate run_filter(const std::vector<SystemSample>& samples,
                                   const FilterConfig& cfg) {
  switch (cfg.method) {
    case FilterMethod::lms: return lms_run(samples, cfg);
    case FilterMethod::nlms: return nlms_run(samples, cfg);
    case FilterMethod::rls: return rls_run(samples, cfg);
    case FilterMethod::awf: return awf_run(samples, cfg);
    case FilterMethod::iwf: return iwf_run(samples, cfg);
  }
  throw std::invalid_argument("unknown filter method");
}

// ---------------------------------------------------------------- cost model

enum class CostItem { lms, nlms, rls, awf, iwf, statistics };

inline OpCounter predicted_op_counts(CostItem item, int l, int m, long long n = 1) {
  if (l < 1 || m < 1) throw std::invalid_argument("predicted_op_counts: L and M must be >= 1");
  const double L = l, M = m, N = static_cast<double>(n);
  const double L2 = L * L, L3 = L2 * L, M2 = M * M, M3 = M2 * M;
  switch (item) {
    case CostItem::lms:
      return {4 * M * L + 6 * L + 6, 4 * L * M + 12 * L + M + 18, 0};
    case CostItem::nlms:
      return {6 * L * M + 4 * L + 3 * M + 9, 6 * L * M + 12 * L + 2 * M + 19, 2};
    case CostItem::rls:
      return {4 * L2 + 14 * M2 + 6 * M * L + 12 * L + 23 * M + 25,
              10 * L2 + 14 * M2 + 6 * M * L + 10 * L + 30 * M + 31, 9};
    case CostItem::awf:
      return {4 * L3 * (3 * M2 + 3 * M + 2) / 6 + 3 * L2 * (8 * M3 + 4 * M + 7) / 6 +
                  L * (24 * M3 - 12 * M2 + 12 * M - 17) / 6 + (2 * M3 + 3 * M2 - 17 * M) / 6,
              4 * L3 * (3 * M2 + 3 * M + 1) / 6 + 3 * L2 * (8 * M3 + 8 * M + 10) / 6 +
                  L * (24 * M3 + 24 * M - 2) / 6 + (2 * M3 + 9 * M2 - 5 * M) / 6,
              L2 + L + (M2 + M) / 2};
    case CostItem::iwf:
      return {2 * L3 * (M2 + M) + 2 * L2 * (2 * M3 - M) + L * (4 * M3 - 2 * M2 + 4 * M + 1) - M2,
              2 * L3 * (M2 + M) + 2 * L2 * (2 * M3 + 2) + L * (4 * M3 + 4 * M + 2) + M2, 0};
    case CostItem::statistics:
      return {2 * (L2 * M2 * N + L * M * N + 4), 6 * L2 * M2 + 6 * L * M + 16, 1};
  }
  return {};
}

inline OpCounter predicted_op_counts(FilterMethod method, int l, int m, long long n = 1) {
  switch (method) {
    case FilterMethod::lms: return predicted_op_counts(CostItem::lms, l, m, n);
    case FilterMethod::nlms: return predicted_op_counts(CostItem::nlms, l, m, n);
    case FilterMethod::rls: return predicted_op_counts(CostItem::rls, l, m, n);
    case FilterMethod::awf: return predicted_op_counts(CostItem::awf, l, m, n);
    case FilterMethod::iwf: return predicted_op_counts(CostItem::iwf, l, m, n);
  }
  return {};
}

}  // namespace iqjcas
