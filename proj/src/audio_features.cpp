#include "multifuse/audio_features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "multifuse/kernels.hpp"

namespace multifuse {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLogFloor = 1e-10;

// Reflect padding index: maps any g in [-pad, len+pad) into [0, len) without
// repeating the edge sample (numpy 'reflect' mode).
std::size_t reflect_index(long long g, std::size_t len) {
  if (len == 1) return 0;
  const long long period = 2 * static_cast<long long>(len) - 2;
  long long m = g % period;
  if (m < 0) m += period;
  if (m >= static_cast<long long>(len)) m = period - m;
  return static_cast<std::size_t>(m);
}

Matrix power_spectrogram(const ComplexMatrix& s) {
  Matrix p(s.rows, s.cols);
  for (std::size_t i = 0; i < s.v.size(); ++i) p.v[i] = std::norm(s.v[i]);
  return p;
}

Matrix log_mel_matrix(const AudioSignal& signal, int n_mels, int frame_len, int hop) {
  if (signal.samples.empty()) throw std::invalid_argument("log_mel_spectrogram: empty signal");
  const auto window = hann_window(frame_len);
  const Matrix power = power_spectrogram(stft(signal.samples, frame_len, hop, window));
  const Matrix fb = mel_filterbank(n_mels, static_cast<int>(power.rows), signal.sample_rate, 0.0,
                                   signal.sample_rate / 2.0);
  Matrix mel(fb.rows, power.cols);
  kernels::matmul_nn(fb.v.data(), power.v.data(), mel.v.data(),
                     static_cast<kernels::isize>(fb.rows), static_cast<kernels::isize>(fb.cols),
                     static_cast<kernels::isize>(power.cols));
  for (double& x : mel.v) x = 10.0 * std::log10(std::max(x, kLogFloor));
  return mel;
}

void write_u32le(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t read_u32le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("fimg: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32le(std::ostream& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  write_u32le(out, u);
}

float read_f32le(std::istream& in) {
  const std::uint32_t u = read_u32le(in);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace

std::vector<double> hann_window(int n) {
  if (n < 1) throw std::invalid_argument("hann_window: n must be positive");
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) w[static_cast<std::size_t>(k)] = 0.5 - 0.5 * std::cos(2.0 * kPi * k / n);
  return w;
}

double hz_to_mel(double hz) {
  if (hz < 1000.0) return hz * 3.0 / 200.0;
  return 15.0 + std::log(hz / 1000.0) / (std::log(6.4) / 27.0);
}

double mel_to_hz(double mel) {
  if (mel < 15.0) return mel * 200.0 / 3.0;
  return 1000.0 * std::exp((mel - 15.0) * (std::log(6.4) / 27.0));
}

ComplexMatrix stft(const std::vector<double>& samples, int frame_len, int hop,
                   const std::vector<double>& window) {
  if (frame_len < 1 || static_cast<std::size_t>(frame_len) != window.size())
    throw std::invalid_argument("stft: frame_len must match window length");
  if (hop < 1) throw std::invalid_argument("stft: hop must be >= 1");
  if (samples.empty()) throw std::invalid_argument("stft: empty signal");

  const std::size_t len = samples.size();
  const std::size_t frames = 1 + len / static_cast<std::size_t>(hop);
  const std::size_t bins = static_cast<std::size_t>(frame_len) / 2 + 1;
  const long long pad = frame_len / 2;
  const bool pow2 = kernels::is_pow2(static_cast<std::size_t>(frame_len));

  ComplexMatrix out(bins, frames);
#pragma omp parallel for schedule(static) if (frames > 4)
  for (long long t = 0; t < static_cast<long long>(frames); ++t) {
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(frame_len));
    for (int k = 0; k < frame_len; ++k) {
      const long long g = t * hop + k - pad;
      buf[static_cast<std::size_t>(k)] =
          window[static_cast<std::size_t>(k)] * samples[reflect_index(g, len)];
    }
    if (pow2) {
      kernels::fft_inplace(buf);
    } else {
      buf = kernels::dft_naive(buf);
    }
    for (std::size_t b = 0; b < bins; ++b) out.at(b, static_cast<std::size_t>(t)) = buf[b];
  }
  return out;
}

Matrix mel_filterbank(int n_mels, int n_fft_bins, int sample_rate, double fmin, double fmax) {
  if (n_mels < 1) throw std::invalid_argument("mel_filterbank: n_mels must be >= 1");
  if (fmin < 0.0 || fmin >= fmax) throw std::invalid_argument("mel_filterbank: need 0 <= fmin < fmax");
  if (fmax > sample_rate / 2.0 + 1e-9)
    throw std::invalid_argument("mel_filterbank: fmax above Nyquist");

  const int frame_len = 2 * (n_fft_bins - 1);
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (n_mels + 1));

  Matrix fb(static_cast<std::size_t>(n_mels), static_cast<std::size_t>(n_fft_bins));
  for (int m = 0; m < n_mels; ++m) {
    const double f_lo = edges[static_cast<std::size_t>(m)];
    const double f_ctr = edges[static_cast<std::size_t>(m) + 1];
    const double f_hi = edges[static_cast<std::size_t>(m) + 2];
    const double norm = 2.0 / (f_hi - f_lo);
    for (int b = 0; b < n_fft_bins; ++b) {
      const double f = static_cast<double>(b) * sample_rate / frame_len;
      const double up = (f_ctr > f_lo) ? (f - f_lo) / (f_ctr - f_lo) : 0.0;
      const double down = (f_hi > f_ctr) ? (f_hi - f) / (f_hi - f_ctr) : 0.0;
      const double w = std::max(0.0, std::min(up, down));
      fb.at(static_cast<std::size_t>(m), static_cast<std::size_t>(b)) = w * norm;
    }
  }
  return fb;
}

Spectrogram log_mel_spectrogram(const AudioSignal& signal, const MelConfig& cfg) {
  Spectrogram s;
  s.values = log_mel_matrix(signal, cfg.n_mels, cfg.frame_len, cfg.hop);
  s.kind = BandKind::Mel;
  s.hop = cfg.hop;
  s.frame_len = cfg.frame_len;
  return s;
}

Spectrogram mfcc(const AudioSignal& signal, const MfccConfig& cfg) {
  if (cfg.n_mfcc > cfg.n_mels)
    throw std::invalid_argument("mfcc: n_mfcc exceeds intermediate mel bands");
  const Matrix mel = log_mel_matrix(signal, cfg.n_mels, cfg.frame_len, cfg.hop);

  // Orthonormal DCT-II down each column, truncated to the first n_mfcc rows.
  const std::size_t n = mel.rows;
  Matrix dct(static_cast<std::size_t>(cfg.n_mfcc), n);
  for (std::size_t i = 0; i < dct.rows; ++i) {
    const double scale = std::sqrt((i == 0 ? 1.0 : 2.0) / static_cast<double>(n));
    for (std::size_t j = 0; j < n; ++j)
      dct.at(i, j) = scale * std::cos(kPi * (static_cast<double>(j) + 0.5) * static_cast<double>(i) /
                                      static_cast<double>(n));
  }
  Spectrogram s;
  s.values = Matrix(dct.rows, mel.cols);
  kernels::matmul_nn(dct.v.data(), mel.v.data(), s.values.v.data(),
                     static_cast<kernels::isize>(dct.rows), static_cast<kernels::isize>(n),
                     static_cast<kernels::isize>(mel.cols));
  s.kind = BandKind::Mfcc;
  s.hop = cfg.hop;
  s.frame_len = cfg.frame_len;
  return s;
}

Matrix delta(const Matrix& features, int width) {
  if (width < 1) throw std::invalid_argument("delta: width must be >= 1");
  if (features.cols < 1) throw std::invalid_argument("delta: need at least one frame");
  double denom = 0.0;
  for (int n = 1; n <= width; ++n) denom += static_cast<double>(n) * n;
  denom *= 2.0;

  const long long last = static_cast<long long>(features.cols) - 1;
  Matrix out(features.rows, features.cols);
  for (std::size_t r = 0; r < features.rows; ++r) {
    for (long long t = 0; t <= last; ++t) {
      double acc = 0.0;
      for (int n = 1; n <= width; ++n) {
        const std::size_t hi = static_cast<std::size_t>(std::min(t + n, last));
        const std::size_t lo = static_cast<std::size_t>(std::max(t - n, 0LL));
        acc += n * (features.at(r, hi) - features.at(r, lo));
      }
      out.at(r, static_cast<std::size_t>(t)) = acc / denom;
    }
  }
  return out;
}

FeatureImage build_feature_image(const Spectrogram& spec, int side) {
  if (side < 2) throw std::invalid_argument("build_feature_image: side must be >= 2");
  const Matrix& base = spec.values;
  if (base.rows < 1 || base.cols < 1)
    throw std::invalid_argument("build_feature_image: empty spectrogram");
  const Matrix d1 = delta(base, 2);
  const Matrix d2 = delta(d1, 2);

  const std::size_t s = static_cast<std::size_t>(side);
  std::array<std::vector<double>, 3> resized;
  const Matrix* sources[3] = {&base, &d1, &d2};
  for (int c = 0; c < 3; ++c) {
    resized[static_cast<std::size_t>(c)].resize(s * s);
    kernels::resize_bilinear(sources[c]->v.data(), static_cast<kernels::isize>(sources[c]->rows),
                             static_cast<kernels::isize>(sources[c]->cols),
                             resized[static_cast<std::size_t>(c)].data(),
                             static_cast<kernels::isize>(s), static_cast<kernels::isize>(s));
  }

  double lo = resized[0][0], hi = resized[0][0];
  for (const auto& ch : resized)
    for (double x : ch) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }

  FeatureImage img;
  img.side = side;
  if (hi == lo) {
    img.degenerate = true;
    for (auto& ch : img.channels) ch.assign(s * s, 0.0f);
    return img;
  }
  const double span = hi - lo;
  for (int c = 0; c < 3; ++c) {
    auto& ch = img.channels[static_cast<std::size_t>(c)];
    ch.resize(s * s);
    for (std::size_t i = 0; i < s * s; ++i)
      ch[i] = static_cast<float>(2.0 * (resized[static_cast<std::size_t>(c)][i] - lo) / span - 1.0);
  }
  return img;
}

void save_fimg(const std::string& path, const FeatureImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("fimg: cannot write " + path);
  out.write("FIMG", 4);
  write_u32le(out, 1);
  write_u32le(out, static_cast<std::uint32_t>(image.side));
  const char nch = 3;
  out.write(&nch, 1);
  for (const auto& ch : image.channels)
    for (float f : ch) write_f32le(out, f);
  if (!out) throw std::runtime_error("fimg: write failed for " + path);
}

FeatureImage load_fimg(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("fimg: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "FIMG", 4) != 0)
    throw std::runtime_error("fimg: bad magic in " + path);
  const std::uint32_t version = read_u32le(in);
  if (version != 1) throw std::runtime_error("fimg: unsupported version in " + path);
  const std::uint32_t side = read_u32le(in);
  char nch;
  in.read(&nch, 1);
  if (!in || nch != 3) throw std::runtime_error("fimg: expected 3 channels in " + path);

  FeatureImage img;
  img.side = static_cast<int>(side);
  const std::size_t n = static_cast<std::size_t>(side) * side;
  for (auto& ch : img.channels) {
    ch.resize(n);
    for (std::size_t i = 0; i < n; ++i) ch[i] = read_f32le(in);
  }
  return img;
}

}  // namespace multifuse
