#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "fdbss/errors.hpp"

namespace fdbss {

using Complex = std::complex<double>;

// Multichannel time-domain signal, one row per channel.
struct TimeSignal {
  double sample_rate = 0.0;
  Eigen::MatrixXd data;  // channel x sample

  int channels() const { return static_cast<int>(data.rows()); }
  Eigen::Index samples() const { return data.cols(); }
  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples()) / sample_rate : 0.0;
  }
};

enum class Window { hann };

// Periodic window, suitable for constant-overlap-add analysis/synthesis.
inline Eigen::VectorXd make_window(Window w, int size) {
  if (size < 2) throw ConfigError("window size must be >= 2");
  Eigen::VectorXd win(size);
  switch (w) {
    case Window::hann:
      for (int n = 0; n < size; ++n)
        win[n] = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / size);
      break;
  }
  return win;
}

struct StftConfig {
  int fft_size = 4096;
  int hop_size = 1024;
  Window window = Window::hann;
  double sample_rate = 44100.0;

  int bins() const { return fft_size / 2 + 1; }

  void validate() const {
    if (fft_size < 4 || (fft_size & (fft_size - 1)) != 0)
      throw ConfigError("fft_size must be a power of two >= 4");
    if (hop_size < 1 || fft_size % hop_size != 0)
      throw ConfigError("hop_size must divide fft_size");
    if (!(sample_rate > 0)) throw ConfigError("sample_rate must be positive");
    // Overlap-added window must sum to a constant across hop offsets.
    const Eigen::VectorXd win = make_window(window, fft_size);
    const int shifts = fft_size / hop_size;
    double lo = std::numeric_limits<double>::max(), hi = 0.0;
    for (int n = 0; n < hop_size; ++n) {
      double s = 0.0;
      for (int m = 0; m < shifts; ++m) s += win[n + m * hop_size];
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    if (hi <= 0.0 || (hi - lo) / hi > 1e-10)
      throw ConfigError("window/hop pair violates constant overlap-add");
  }
};

// Complex time-frequency tensor. Storage is one channel x frame matrix per
// frequency bin, which is the access pattern of the per-bin separation stages.
struct Spectrogram {
  StftConfig config;
  std::vector<Eigen::MatrixXcd> data;  // per bin: channel x frame

  int bins() const { return static_cast<int>(data.size()); }
  int channels() const { return data.empty() ? 0 : static_cast<int>(data[0].rows()); }
  int frames() const { return data.empty() ? 0 : static_cast<int>(data[0].cols()); }
  double bin_frequency(int bin) const {
    return bin * config.sample_rate / config.fft_size;
  }

  Spectrogram shape_like(int n_channels) const {
    Spectrogram out;
    out.config = config;
    out.data.assign(data.size(), Eigen::MatrixXcd::Zero(n_channels, frames()));
    return out;
  }
};

inline Spectrogram stft(const TimeSignal& x, const StftConfig& cfg) {
  cfg.validate();
  if (x.channels() == 0 || x.samples() == 0) throw DataError("stft: empty signal");
  if (!x.data.allFinite()) throw DataError("stft: non-finite amplitudes");

  const int n = cfg.fft_size;
  const Eigen::Index samples = x.samples();
  const int frames =
      samples >= n ? static_cast<int>((samples - n) / cfg.hop_size) + 1 : 1;
  const int bins = cfg.bins();
  const Eigen::VectorXd win = make_window(cfg.window, n);

  Spectrogram out;
  out.config = cfg;
  out.data.assign(bins, Eigen::MatrixXcd::Zero(x.channels(), frames));

  Eigen::FFT<double> fft;
  std::vector<double> frame(n);
  std::vector<Complex> spec(n);
  for (int c = 0; c < x.channels(); ++c) {
    for (int t = 0; t < frames; ++t) {
      const Eigen::Index start = static_cast<Eigen::Index>(t) * cfg.hop_size;
      for (int k = 0; k < n; ++k) {
        const Eigen::Index idx = start + k;
        frame[k] = idx < samples ? x.data(c, idx) * win[k] : 0.0;
      }
      fft.fwd(spec, frame);
      for (int f = 0; f < bins; ++f) out.data[f](c, t) = spec[f];
    }
  }
  return out;
}

// Weighted overlap-add synthesis; the inverse of stft for any valid config.
// `length` >= 0 trims or zero-pads the output to that many samples.
inline TimeSignal istft(const Spectrogram& S, Eigen::Index length = -1) {
  S.config.validate();
  if (S.bins() != S.config.bins())
    throw ConfigError("istft: spectrogram bin count does not match config");
  if (S.channels() == 0 || S.frames() == 0) throw DataError("istft: empty spectrogram");

  const int n = S.config.fft_size;
  const int hop = S.config.hop_size;
  const int frames = S.frames();
  const int bins = S.config.bins();
  const Eigen::Index full_len = static_cast<Eigen::Index>(frames - 1) * hop + n;
  const Eigen::VectorXd win = make_window(S.config.window, n);

  Eigen::VectorXd norm = Eigen::VectorXd::Zero(full_len);
  for (int t = 0; t < frames; ++t)
    norm.segment(static_cast<Eigen::Index>(t) * hop, n) += win.cwiseProduct(win);
  const double norm_floor = 1e-12 * norm.maxCoeff();

  TimeSignal out;
  out.sample_rate = S.config.sample_rate;
  out.data = Eigen::MatrixXd::Zero(S.channels(), full_len);

  Eigen::FFT<double> fft;
  std::vector<Complex> spec(n);
  std::vector<double> frame(n);
  for (int c = 0; c < S.channels(); ++c) {
    for (int t = 0; t < frames; ++t) {
      for (int f = 0; f < bins; ++f) spec[f] = S.data[f](c, t);
      // Real synthesis: conjugate symmetry, real-valued DC and Nyquist.
      spec[0] = Complex(spec[0].real(), 0.0);
      spec[n / 2] = Complex(spec[n / 2].real(), 0.0);
      for (int f = bins; f < n; ++f) spec[f] = std::conj(spec[n - f]);
      fft.inv(frame, spec);
      const Eigen::Index start = static_cast<Eigen::Index>(t) * hop;
      for (int k = 0; k < n; ++k) out.data(c, start + k) += frame[k] * win[k];
    }
    for (Eigen::Index i = 0; i < full_len; ++i)
      out.data(c, i) = norm[i] > norm_floor ? out.data(c, i) / norm[i] : 0.0;
  }

  if (length >= 0) {
    Eigen::MatrixXd trimmed = Eigen::MatrixXd::Zero(S.channels(), length);
    const Eigen::Index copy = std::min(length, full_len);
    trimmed.leftCols(copy) = out.data.leftCols(copy);
    out.data.swap(trimmed);
  }
  return out;
}

}  // namespace fdbss
