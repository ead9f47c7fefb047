#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "multifuse/audio_features.hpp"
#include "multifuse/rng.hpp"
#include "multifuse/wav.hpp"
#include "oracles.hpp"

using namespace multifuse;

namespace {

AudioSignal random_signal(Rng& rng, std::size_t len, int sr) {
  AudioSignal s;
  s.sample_rate = sr;
  s.samples.resize(len);
  for (auto& x : s.samples) x = rng.uniform(-1.0, 1.0);
  return s;
}

}  // namespace

TEST_CASE("hann window values") {
  const auto w4 = hann_window(4);
  REQUIRE(w4.size() == 4);
  CHECK(w4[0] == 0.0);
  CHECK(w4[1] == doctest::Approx(0.5).epsilon(1e-15));  // cos(pi/2) is not exactly 0
  CHECK(w4[2] == 1.0);
  CHECK(w4[3] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(hann_window(1) == std::vector<double>{0.0});
  CHECK_THROWS_AS(hann_window(0), std::invalid_argument);

  const auto w = hann_window(17);
  for (std::size_t k = 1; k < w.size(); ++k)
    CHECK(w[k] == doctest::Approx(w[w.size() - k]).epsilon(1e-12));
}

TEST_CASE("mel scale anchors") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(1000.0) == doctest::Approx(15.0).epsilon(1e-12));
  CHECK(hz_to_mel(500.0) == doctest::Approx(7.5).epsilon(1e-12));
  for (double f : {10.0, 440.0, 999.0, 1000.0, 4000.0, 11025.0})
    CHECK(mel_to_hz(hz_to_mel(f)) == doctest::Approx(f).epsilon(1e-9));
}

TEST_CASE("stft matches the naive DFT oracle on short random signals") {
  Rng rng(11);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t len = 1 + rng.below(64);
    const int frame_len = (rep % 2 == 0) ? 16 : 12;  // exercises fft and dft paths
    const int hop = 1 + static_cast<int>(rng.below(8));
    const AudioSignal sig = random_signal(rng, len, 16000);

    const auto got = stft(sig.samples, frame_len, hop, hann_window(frame_len));
    const auto want = test_oracle::naive_stft(sig.samples, frame_len, hop);
    REQUIRE(got.cols == want.size());
    REQUIRE(got.rows == want[0].size());
    for (std::size_t t = 0; t < got.cols; ++t)
      for (std::size_t b = 0; b < got.rows; ++b)
        CHECK(std::abs(got.at(b, t) - want[t][b]) <= 1e-9);
  }
}

TEST_CASE("stft of a constant signal concentrates in bin 0 under a boxcar window") {
  const std::vector<double> ones(32, 1.0);
  const std::vector<double> boxcar(8, 1.0);
  const auto s = stft(ones, 8, 8, boxcar);
  for (std::size_t t = 0; t < s.cols; ++t) {
    CHECK(std::abs(s.at(0, t)) == doctest::Approx(8.0).epsilon(1e-12));
    for (std::size_t b = 1; b < s.rows; ++b) CHECK(std::abs(s.at(b, t)) <= 1e-12);
  }
}

TEST_CASE("stft frame count follows 1 + floor(len/hop)") {
  const int hop = 5;
  for (std::size_t len = 1; len <= 50; ++len) {
    const std::vector<double> sig(len, 0.5);
    const auto s = stft(sig, 8, hop, hann_window(8));
    CHECK(s.cols == 1 + len / hop);
    CHECK(s.rows == 5);
  }
}

TEST_CASE("mel filterbank rows are triangular with zero weight outside support") {
  const Matrix fb = mel_filterbank(12, 129, 16000, 0.0, 8000.0);
  for (std::size_t m = 0; m < fb.rows; ++m) {
    int sign_changes = 0;
    double prev = 0;
    for (std::size_t b = 0; b < fb.cols; ++b) {
      const double v = fb.at(m, b);
      CHECK(v >= 0.0);
      const double diff = v - prev;
      if (diff < 0 && prev > 0 && sign_changes == 0) ++sign_changes;
      if (diff > 0) CHECK(sign_changes == 0);  // once falling, never rises again
      prev = v;
    }
  }
  CHECK_THROWS_AS(mel_filterbank(12, 129, 16000, 0.0, 9000.0), std::invalid_argument);
}

TEST_CASE("log-mel matches the compositional oracle") {
  Rng rng(12);
  AudioSignal sig = random_signal(rng, 2000, 8000);
  const MelConfig cfg{20, 64, 32};
  const Spectrogram got = log_mel_spectrogram(sig, cfg);
  const auto want = test_oracle::naive_log_mel(sig.samples, sig.sample_rate, 20, 64, 32);
  REQUIRE(got.values.rows == want.size());
  REQUIRE(got.values.cols == want[0].size());
  for (std::size_t m = 0; m < want.size(); ++m)
    for (std::size_t t = 0; t < want[0].size(); ++t)
      CHECK(std::abs(got.values.at(m, t) - want[m][t]) <= 1e-9);
  CHECK(got.kind == BandKind::Mel);
  CHECK(got.hop == 32);
  CHECK(got.frame_len == 64);
}

TEST_CASE("log-mel of silence sits at the dB floor, default config shapes hold") {
  AudioSignal sig;
  sig.sample_rate = 22050;
  sig.samples.assign(4096, 0.0);
  const Spectrogram s = log_mel_spectrogram(sig);  // 224 bands, 2048/1024
  CHECK(s.values.rows == 224);
  CHECK(s.values.cols == 1 + 4096 / 1024);
  for (double v : s.values.v) CHECK(v == doctest::Approx(-100.0).epsilon(1e-12));
}

TEST_CASE("frame count example: 5 s at 22050 Hz gives 108 frames") {
  AudioSignal sig;
  sig.sample_rate = 22050;
  sig.samples.assign(110250, 0.0);
  const Spectrogram s = log_mel_spectrogram(sig);
  CHECK(s.values.cols == 108);
  CHECK(s.values.rows == 224);
}

TEST_CASE("mfcc matches the compositional oracle") {
  Rng rng(13);
  AudioSignal sig = random_signal(rng, 1600, 8000);
  MfccConfig cfg;
  cfg.n_mfcc = 13;
  cfg.n_mels = 24;
  cfg.frame_len = 64;
  cfg.hop = 32;
  const Spectrogram got = mfcc(sig, cfg);
  const auto want = test_oracle::naive_mfcc(sig.samples, sig.sample_rate, 13, 24, 64, 32);
  REQUIRE(got.values.rows == want.size());
  REQUIRE(got.values.cols == want[0].size());
  for (std::size_t m = 0; m < want.size(); ++m)
    for (std::size_t t = 0; t < want[0].size(); ++t)
      CHECK(std::abs(got.values.at(m, t) - want[m][t]) <= 1e-9);
  CHECK(got.kind == BandKind::Mfcc);

  MfccConfig bad;
  bad.n_mfcc = 200;
  CHECK_THROWS_AS(mfcc(sig, bad), std::invalid_argument);
}

TEST_CASE("mfcc of silence: only coefficient 0 nonzero, frames identical") {
  AudioSignal sig;
  sig.sample_rate = 8000;
  sig.samples.assign(1024, 0.0);
  MfccConfig cfg;
  cfg.frame_len = 256;
  cfg.hop = 128;
  const Spectrogram s = mfcc(sig, cfg);
  for (std::size_t t = 0; t < s.values.cols; ++t) {
    CHECK(s.values.at(0, t) == doctest::Approx(s.values.at(0, 0)).epsilon(1e-12));
    for (std::size_t m = 1; m < s.values.rows; ++m)
      CHECK(std::abs(s.values.at(m, t)) <= 1e-9);
  }
}

TEST_CASE("delta: frozen row, constants, and linear ramps") {
  Matrix row(1, 5);
  row.v = {1, 3, 2, 5, 4};
  const Matrix d = delta(row, 2);
  const std::vector<double> want{0.4, 0.9, 0.8, 0.4, 0.3};
  for (std::size_t t = 0; t < 5; ++t) CHECK(d.at(0, t) == doctest::Approx(want[t]).epsilon(1e-12));

  Rng rng(14);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t cols = 5 + rng.below(20);
    const double c = rng.uniform(-5.0, 5.0);
    const double slope = rng.uniform(-3.0, 3.0);
    Matrix constant(2, cols), ramp(2, cols);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t t = 0; t < cols; ++t) {
        constant.at(r, t) = c;
        ramp.at(r, t) = slope * static_cast<double>(t);
      }
    const Matrix dc = delta(constant, 2);
    for (double v : dc.v) CHECK(v == 0.0);
    const Matrix dr = delta(ramp, 2);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t t = 2; t + 2 < cols; ++t)
        CHECK(dr.at(r, t) == doctest::Approx(slope).epsilon(1e-12));
  }
}

TEST_CASE("feature image: shape, range, degenerate flag, channel content") {
  Rng rng(15);
  AudioSignal sig = random_signal(rng, 3000, 8000);
  MelConfig cfg{16, 64, 32};
  const Spectrogram spec = log_mel_spectrogram(sig, cfg);
  const FeatureImage img = build_feature_image(spec, 20);
  CHECK(img.side == 20);
  CHECK_FALSE(img.degenerate);
  double lo = 1e9, hi = -1e9;
  for (const auto& ch : img.channels) {
    CHECK(ch.size() == 400);
    for (float v : ch) {
      CHECK(v >= -1.0f);
      CHECK(v <= 1.0f);
      lo = std::min(lo, static_cast<double>(v));
      hi = std::max(hi, static_cast<double>(v));
    }
  }
  CHECK(lo == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(hi == doctest::Approx(1.0).epsilon(1e-6));

  // Constant nonzero spectrogram: deltas vanish, so after joint min-max the
  // static channel pins to +1 and both delta channels to -1.
  Matrix flat(8, 8);
  flat.v.assign(64, 3.25);
  Spectrogram s2;
  s2.values = flat;
  const FeatureImage c = build_feature_image(s2, 8);
  CHECK_FALSE(c.degenerate);
  for (float v : c.channels[0]) CHECK(v == 1.0f);
  for (float v : c.channels[1]) CHECK(v == -1.0f);
  for (float v : c.channels[2]) CHECK(v == -1.0f);

  // All-zero spectrogram: no spread anywhere, flagged degenerate and zeroed.
  Matrix zeros(8, 8);
  Spectrogram s3;
  s3.values = zeros;
  const FeatureImage z = build_feature_image(s3, 8);
  CHECK(z.degenerate);
  for (const auto& ch : z.channels)
    for (float v : ch) CHECK(v == 0.0f);
}

TEST_CASE("fimg round-trips bitwise") {
  Rng rng(16);
  FeatureImage img;
  img.side = 9;
  for (auto& ch : img.channels) {
    ch.resize(81);
    for (auto& v : ch) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  const auto path = std::filesystem::temp_directory_path() / "multifuse_test.fimg";
  save_fimg(path.string(), img);
  const FeatureImage back = load_fimg(path.string());
  CHECK(back.side == img.side);
  for (int c = 0; c < 3; ++c)
    CHECK(back.channels[static_cast<std::size_t>(c)] == img.channels[static_cast<std::size_t>(c)]);
  std::filesystem::remove(path);
}

TEST_CASE("wav round-trip and stereo downmix") {
  Rng rng(17);
  AudioSignal sig;
  sig.sample_rate = 8000;
  sig.samples.resize(500);
  for (auto& v : sig.samples) v = rng.uniform(-0.9, 0.9);

  const auto path = std::filesystem::temp_directory_path() / "multifuse_test.wav";
  wav::write_pcm16(path.string(), sig);
  const AudioSignal back = wav::read(path.string());
  CHECK(back.sample_rate == 8000);
  REQUIRE(back.samples.size() == sig.samples.size());
  for (std::size_t i = 0; i < sig.samples.size(); ++i)
    CHECK(back.samples[i] == doctest::Approx(sig.samples[i]).epsilon(1e-3));
  std::filesystem::remove(path);

  CHECK_THROWS(wav::read("/nonexistent/place.wav"));
}
