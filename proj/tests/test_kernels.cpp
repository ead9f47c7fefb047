#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "multifuse/kernels.hpp"
#include "multifuse/rng.hpp"
#include "oracles.hpp"

using namespace multifuse;
using kernels::isize;

namespace {

std::vector<float> random_vec(Rng& rng, std::size_t n) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

}  // namespace

TEST_CASE("parallel matmul matches the serial reference bitwise") {
  Rng rng(3);
  // Small sizes stay below the OpenMP threshold, large ones cross it.
  for (isize m : {1, 7, 64}) {
    for (isize k : {1, 5, 64}) {
      for (isize n : {1, 9, 64}) {
        const auto a = random_vec(rng, static_cast<std::size_t>(m * k));
        const auto b = random_vec(rng, static_cast<std::size_t>(k * n));
        std::vector<float> c_par(static_cast<std::size_t>(m * n)), c_ser(c_par);
        kernels::matmul_nn(a.data(), b.data(), c_par.data(), m, k, n);
        kernels::serial::matmul_nn(a.data(), b.data(), c_ser.data(), m, k, n);
        CHECK(c_par == c_ser);
      }
    }
  }
}

TEST_CASE("matmul_nt and matmul_tn agree with explicit transposition") {
  Rng rng(4);
  const isize m = 5, k = 7, n = 3;
  const auto a = random_vec(rng, static_cast<std::size_t>(m * k));
  const auto b = random_vec(rng, static_cast<std::size_t>(n * k));   // to transpose
  const auto a2 = random_vec(rng, static_cast<std::size_t>(k * m));  // to transpose

  std::vector<float> bt(static_cast<std::size_t>(k * n));
  for (isize i = 0; i < n; ++i)
    for (isize j = 0; j < k; ++j) bt[static_cast<std::size_t>(j * n + i)] = b[static_cast<std::size_t>(i * k + j)];
  std::vector<float> a2t(static_cast<std::size_t>(m * k));
  for (isize i = 0; i < k; ++i)
    for (isize j = 0; j < m; ++j) a2t[static_cast<std::size_t>(j * k + i)] = a2[static_cast<std::size_t>(i * m + j)];

  std::vector<float> via_nt(static_cast<std::size_t>(m * n)), via_nn(via_nt);
  kernels::matmul_nt(a.data(), b.data(), via_nt.data(), m, k, n);
  kernels::matmul_nn(a.data(), bt.data(), via_nn.data(), m, k, n);
  for (std::size_t i = 0; i < via_nt.size(); ++i)
    CHECK(via_nt[i] == doctest::Approx(via_nn[i]).epsilon(1e-5));

  std::vector<float> via_tn(static_cast<std::size_t>(m * n)), via_nn2(via_tn);
  kernels::matmul_tn(a2.data(), bt.data(), via_tn.data(), m, k, n);
  kernels::matmul_nn(a2t.data(), bt.data(), via_nn2.data(), m, k, n);
  for (std::size_t i = 0; i < via_tn.size(); ++i)
    CHECK(via_tn[i] == doctest::Approx(via_nn2[i]).epsilon(1e-5));
}

TEST_CASE("fft matches the naive DFT oracle") {
  Rng rng(5);
  for (int n : {1, 2, 4, 8, 64, 256}) {
    std::vector<std::complex<double>> x(static_cast<std::size_t>(n));
    for (auto& v : x) v = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    const auto want = test_oracle::naive_dft(x);
    auto got = x;
    kernels::fft_inplace(got);
    for (int i = 0; i < n; ++i)
      CHECK(std::abs(got[static_cast<std::size_t>(i)] - want[static_cast<std::size_t>(i)]) <=
            1e-10);
  }
}

TEST_CASE("fft rejects non-power-of-two input, dft_naive handles it") {
  std::vector<std::complex<double>> x(6, {1.0, 0.0});
  CHECK_THROWS_AS(kernels::fft_inplace(x), std::invalid_argument);
  const auto got = kernels::dft_naive(x);
  const auto want = test_oracle::naive_dft(x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-10);
}

TEST_CASE("bilinear resize matches the hand-computed 2x2 -> 4x4 example") {
  // src[y][x] = 2y + x; align-corners bilinear of a linear ramp reproduces
  // the ramp: dst[r][c] = (2r + c) / 3.
  const std::vector<double> src{0, 1, 2, 3};
  std::vector<double> dst(16);
  kernels::resize_bilinear(src.data(), 2, 2, dst.data(), 4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      CHECK(dst[static_cast<std::size_t>(r * 4 + c)] ==
            doctest::Approx((2.0 * r + c) / 3.0).epsilon(1e-12));
}

TEST_CASE("bilinear resize preserves corners and matches serial copy") {
  Rng rng(6);
  std::vector<float> src(37 * 53);
  for (auto& v : src) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  std::vector<float> dst(224 * 224), dst_ser(dst);
  kernels::resize_bilinear(src.data(), 37, 53, dst.data(), 224, 224);
  kernels::serial::resize_bilinear(src.data(), 37, 53, dst_ser.data(), 224, 224);
  CHECK(dst == dst_ser);
  CHECK(dst[0] == src[0]);
  CHECK(dst[223] == src[52]);
  CHECK(dst[223 * 224] == src[36 * 53]);
  CHECK(dst[224 * 224 - 1] == src[37 * 53 - 1]);
}
