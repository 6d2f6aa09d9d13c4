#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "common.hpp"
#include "fft.hpp"
#include "random.hpp"

namespace iqjcas {

struct OfdmConfig {
  int numerology_mu = 3;
  int n_subcarriers = 3300;
  int n_symbols = 112;
  int fft_size = 4096;
  int cp_samples = 288;
  double carrier_frequency = 28e9;

  double subcarrier_spacing() const { return std::ldexp(15000.0, numerology_mu); }
  double sample_rate() const { return fft_size * subcarrier_spacing(); }
  double symbol_duration() const { return 1.0 / subcarrier_spacing(); }
  double cp_duration() const { return cp_samples / sample_rate(); }
  // T + T_CP, the spacing between consecutive symbol starts
  double symbol_period() const { return (fft_size + cp_samples) / sample_rate(); }
  // baseband frequency of subcarrier k
  double subcarrier_frequency(int k) const {
    return (k - n_subcarriers / 2) * subcarrier_spacing();
  }
  // FFT bin holding subcarrier k
  int bin_of(int k) const {
    const int b = k - n_subcarriers / 2;
    return ((b % fft_size) + fft_size) % fft_size;
  }

  void validate() const {
    if (numerology_mu < 0 || numerology_mu > 6)
      throw std::invalid_argument("numerology_mu out of range: " + std::to_string(numerology_mu));
    if (n_subcarriers < 1 || n_symbols < 1 || fft_size < 1)
      throw std::invalid_argument("grid dimensions must be positive");
    if (n_subcarriers > fft_size)
      throw std::invalid_argument("n_subcarriers exceeds fft_size");
    if (cp_samples < 0 || cp_samples >= fft_size)
      throw std::invalid_argument("cp_samples must lie in [0, fft_size)");
    if (!(carrier_frequency > 0.0)) throw std::invalid_argument("carrier_frequency must be > 0");
  }

  static OfdmConfig full() { return {}; }
  static OfdmConfig small() { return {3, 512, 64, 1024, 72, 28e9}; }

  bool operator==(const OfdmConfig&) const = default;
};

struct ResourceGrid {
  OfdmConfig config;
  CMatrix data;  // n_subcarriers x n_symbols
};

struct TimeSignal {
  CVector samples;
  double sample_rate = 0.0;
  int fft_size = 0;
  int cp_samples = 0;
  int n_symbols = 0;
};

inline void check_shape(const OfdmConfig& c, const CMatrix& m, const char* what) {
  if (m.rows() != c.n_subcarriers || m.cols() != c.n_symbols)
    throw std::invalid_argument(std::string(what) + ": expected " +
                                std::to_string(c.n_subcarriers) + "x" +
                                std::to_string(c.n_symbols) + ", got " +
                                std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

// Image index of subcarrier k, or -1 when it falls outside the allocation.
inline int mirror_index(int k, int n) {
  const int m = 2 * (n / 2) - k;
  return (m >= 0 && m < n) ? m : -1;
}

// out[k] = conj(in[2*floor(N/2) - k]), zero where the image is out of band.
template <class Derived>
CMatrix conj_mirror(const Eigen::MatrixBase<Derived>& in) {
  const Eigen::Index n = in.rows();
  CMatrix out(n, in.cols());
  for (Eigen::Index l = 0; l < in.cols(); ++l)
    for (Eigen::Index k = 0; k < n; ++k) {
      const int m = mirror_index(static_cast<int>(k), static_cast<int>(n));
      out(k, l) = m < 0 ? cd(0.0, 0.0) : std::conj(cd(in(m, l)));
    }
  return out;
}

inline ResourceGrid conj_mirror(const ResourceGrid& g) { return {g.config, conj_mirror(g.data)}; }

inline bool supported_modulation(int order) {
  return order == 4 || order == 16 || order == 64 || order == 256;
}

// Square QAM, unit average power. Column-major fill, I index drawn before Q.
inline ResourceGrid generate_grid(const OfdmConfig& config, int modulation_order,
                                  std::uint64_t seed) {
  config.validate();
  if (!supported_modulation(modulation_order))
    throw std::invalid_argument("unsupported modulation order " +
                                std::to_string(modulation_order));
  const int m = static_cast<int>(std::lround(std::sqrt(modulation_order)));
  const double scale = 1.0 / std::sqrt(2.0 * (m * m - 1) / 3.0);
  Rng rng(seed);
  ResourceGrid g{config, CMatrix(config.n_subcarriers, config.n_symbols)};
  for (int l = 0; l < config.n_symbols; ++l)
    for (int k = 0; k < config.n_subcarriers; ++k) {
      const int i = static_cast<int>(rng.below(m));
      const int q = static_cast<int>(rng.below(m));
      g.data(k, l) = cd((2 * i - (m - 1)) * scale, (2 * q - (m - 1)) * scale);
    }
  return g;
}

inline TimeSignal modulate(const ResourceGrid& grid) {
  const OfdmConfig& c = grid.config;
  c.validate();
  check_shape(c, grid.data, "modulate");
  CMatrix buf = CMatrix::Zero(c.fft_size, c.n_symbols);
  for (int k = 0; k < c.n_subcarriers; ++k) buf.row(c.bin_of(k)) = grid.data.row(k);
  fft::columns(buf, fft::Direction::inverse);
  buf *= 1.0 / std::sqrt(static_cast<double>(c.fft_size));

  const int block = c.fft_size + c.cp_samples;
  TimeSignal s{CVector(static_cast<Eigen::Index>(block) * c.n_symbols), c.sample_rate(),
               c.fft_size, c.cp_samples, c.n_symbols};
  for (int l = 0; l < c.n_symbols; ++l) {
    const Eigen::Index off = static_cast<Eigen::Index>(l) * block;
    s.samples.segment(off, c.cp_samples) = buf.col(l).tail(c.cp_samples);
    s.samples.segment(off + c.cp_samples, c.fft_size) = buf.col(l);
  }
  return s;
}

inline ResourceGrid demodulate(const TimeSignal& signal, const OfdmConfig& c) {
  c.validate();
  const int block = c.fft_size + c.cp_samples;
  if (signal.samples.size() != static_cast<Eigen::Index>(block) * c.n_symbols)
    throw std::invalid_argument("demodulate: signal length " +
                                std::to_string(signal.samples.size()) + " does not match " +
                                std::to_string(block) + " x " + std::to_string(c.n_symbols));
  CMatrix buf(c.fft_size, c.n_symbols);
  for (int l = 0; l < c.n_symbols; ++l)
    buf.col(l) = signal.samples.segment(static_cast<Eigen::Index>(l) * block + c.cp_samples,
                                        c.fft_size);
  fft::columns(buf, fft::Direction::forward);
  buf *= 1.0 / std::sqrt(static_cast<double>(c.fft_size));
  ResourceGrid g{c, CMatrix(c.n_subcarriers, c.n_symbols)};
  for (int k = 0; k < c.n_subcarriers; ++k) g.data.row(k) = buf.row(c.bin_of(k));
  return g;
}

}  // namespace iqjcas
