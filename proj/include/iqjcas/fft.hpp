#pragma once

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "common.hpp"

namespace iqjcas::fft {

enum class Direction { forward, inverse };

namespace detail {

struct PlanKey {
  int n, howmany, stride, dist, sign;
  bool in_place;
  auto tie() const { return std::tie(n, howmany, stride, dist, sign, in_place); }
  bool operator<(const PlanKey& o) const { return tie() < o.tie(); }
};

// FFTW planning is not thread-safe, execution with the new-array interface is.
// Plans use FFTW_ESTIMATE | FFTW_UNALIGNED so that the chosen codelets, and
// therefore the results, do not depend on buffer alignment or timing.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(const PlanKey& key) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    const std::size_t len = static_cast<std::size_t>(key.n - 1) * key.stride +
                            static_cast<std::size_t>(key.howmany - 1) * key.dist + 1;
    fftw_complex* a = fftw_alloc_complex(len);
    fftw_complex* b = key.in_place ? a : fftw_alloc_complex(len);
    int n = key.n;
    fftw_plan p = fftw_plan_many_dft(1, &n, key.howmany, a, nullptr, key.stride, key.dist, b,
                                     nullptr, key.stride, key.dist, key.sign,
                                     FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!key.in_place) fftw_free(b);
    fftw_free(a);
    if (p == nullptr) throw std::runtime_error("fftw planning failed");
    plans_.emplace(key, p);
    return p;
  }

  ~PlanCache() {
    for (auto& kv : plans_) fftw_destroy_plan(kv.second);
  }

 private:
  PlanCache() = default;
  std::mutex mu_;
  std::map<PlanKey, fftw_plan> plans_;
};

inline void execute(cd* in, cd* out, int n, int howmany, int stride, int dist, Direction dir) {
  if (n <= 0 || howmany <= 0) return;
  PlanKey key{n, howmany, stride, dist, dir == Direction::forward ? FFTW_FORWARD : FFTW_BACKWARD,
              in == out};
  fftw_plan p = PlanCache::instance().get(key);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(in), reinterpret_cast<fftw_complex*>(out));
}

}  // namespace detail

// Unscaled transforms. forward uses e^{-j2pi kn/N}, inverse e^{+j2pi kn/N}.

inline void columns(CMatrix& m, Direction dir) {
  const int r = static_cast<int>(m.rows());
  detail::execute(m.data(), m.data(), r, static_cast<int>(m.cols()), 1, r, dir);
}

inline void rows(CMatrix& m, Direction dir) {
  const int r = static_cast<int>(m.rows());
  detail::execute(m.data(), m.data(), static_cast<int>(m.cols()), r, r, 1, dir);
}

inline void vector(cd* data, int n, Direction dir) { detail::execute(data, data, n, 1, 1, n, dir); }

inline void vector(std::vector<cd>& v, Direction dir) {
  vector(v.data(), static_cast<int>(v.size()), dir);
}

}  // namespace iqjcas::fft
