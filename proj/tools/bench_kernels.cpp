// Times the OpenMP kernels against their serial reference copies and checks
// that both produce identical output.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "multifuse/kernels.hpp"
#include "multifuse/rng.hpp"

using multifuse::Rng;
using multifuse::kernels::isize;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    const double t0 = now_ms();
    fn();
    best = std::min(best, now_ms() - t0);
  }
  return best;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double mx = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    mx = std::max(mx, std::abs(static_cast<double>(a[i]) - b[i]));
  return mx;
}

void fill(Rng& rng, std::vector<float>& v) {
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
}

void bench_matmul(isize m, isize k, isize n, int reps) {
  Rng rng(7);
  std::vector<float> a(static_cast<std::size_t>(m * k)), b(static_cast<std::size_t>(k * n));
  std::vector<float> c_par(static_cast<std::size_t>(m * n)), c_ser(c_par);
  fill(rng, a);
  fill(rng, b);

  const double t_ser = time_best_of(reps, [&] {
    multifuse::kernels::serial::matmul_nn(a.data(), b.data(), c_ser.data(), m, k, n);
  });
  const double t_par = time_best_of(
      reps, [&] { multifuse::kernels::matmul_nn(a.data(), b.data(), c_par.data(), m, k, n); });
  const double diff = max_abs_diff(c_par, c_ser);

  std::printf("matmul %4td x %4td x %4td   serial %8.2f ms   omp %8.2f ms   x%.2f   maxdiff %g\n",
              m, k, n, t_ser, t_par, t_ser / t_par, diff);
  if (diff != 0.0) std::printf("  WARNING: outputs differ\n");
}

void bench_resize(isize src, isize dst, int reps) {
  Rng rng(11);
  std::vector<float> in(static_cast<std::size_t>(src * src)),
      out_par(static_cast<std::size_t>(dst * dst)), out_ser(out_par);
  fill(rng, in);

  const double t_ser = time_best_of(reps, [&] {
    multifuse::kernels::serial::resize_bilinear(in.data(), src, src, out_ser.data(), dst, dst);
  });
  const double t_par = time_best_of(reps, [&] {
    multifuse::kernels::resize_bilinear(in.data(), src, src, out_par.data(), dst, dst);
  });
  const double diff = max_abs_diff(out_par, out_ser);

  std::printf("resize %4td -> %4td        serial %8.2f ms   omp %8.2f ms   x%.2f   maxdiff %g\n",
              src, dst, t_ser, t_par, t_ser / t_par, diff);
  if (diff != 0.0) std::printf("  WARNING: outputs differ\n");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP disabled; both columns run serially\n");
#endif
  bench_matmul(64, 64, 64, 5);
  bench_matmul(256, 256, 256, 5);
  bench_matmul(512, 512, 512, 3);
  bench_resize(1025, 224, 5);
  bench_resize(224, 1024, 5);
  return 0;
}
