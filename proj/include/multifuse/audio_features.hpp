#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "multifuse/wav.hpp"

namespace multifuse {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

struct ComplexMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::complex<double>> v;

  ComplexMatrix() = default;
  ComplexMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c) {}
  std::complex<double>& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  const std::complex<double>& at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

enum class BandKind { Mel, Mfcc };

struct Spectrogram {
  Matrix values;  // [bands x frames], dB-scaled
  BandKind kind = BandKind::Mel;
  int hop = 0;
  int frame_len = 0;
};

// Three square channels: (static, delta, delta-delta), jointly normalized to [-1, 1].
struct FeatureImage {
  int side = 0;
  std::array<std::vector<float>, 3> channels;
  bool degenerate = false;  // flat input; all channels forced to zero
};

struct MelConfig {
  int n_mels = 224;
  int frame_len = 2048;
  int hop = 1024;
};

struct MfccConfig {
  int n_mfcc = 40;
  int n_mels = 128;  // intermediate mel bands before the DCT
  int frame_len = 2048;
  int hop = 512;
};

// Periodic Hann: w[k] = 0.5 - 0.5*cos(2*pi*k/n).
std::vector<double> hann_window(int n);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Columns are windowed DFT frames of the center reflect-padded signal;
// rows are the non-negative frequency bins 0..frame_len/2.
// frames = 1 + floor(len(samples)/hop).
ComplexMatrix stft(const std::vector<double>& samples, int frame_len, int hop,
                   const std::vector<double>& window);

// Triangular filters with peaks equally spaced on the Slaney mel scale,
// each row scaled by 2/(f_upper - f_lower). n_fft_bins = frame_len/2 + 1.
Matrix mel_filterbank(int n_mels, int n_fft_bins, int sample_rate, double fmin, double fmax);

Spectrogram log_mel_spectrogram(const AudioSignal& signal, const MelConfig& cfg = {});

Spectrogram mfcc(const AudioSignal& signal, const MfccConfig& cfg = {});

// Regression delta over +/-width frames, edges replicated.
Matrix delta(const Matrix& features, int width = 2);

FeatureImage build_feature_image(const Spectrogram& spec, int side = 224);

void save_fimg(const std::string& path, const FeatureImage& image);
FeatureImage load_fimg(const std::string& path);

}  // namespace multifuse
