#include <catch2/catch_amalgamated.hpp>

#include "fdbss/signal.hpp"

#include <random>

#include "test_support.hpp"

using namespace fdbss;

namespace {

TimeSignal noise_signal(int channels, Eigen::Index samples, double rate, uint32_t seed) {
  std::mt19937 gen(seed);
  TimeSignal x;
  x.sample_rate = rate;
  x.data = testsup::gaussian_matrix(channels, static_cast<int>(samples), gen);
  return x;
}

StftConfig small_cfg(int fft = 256, int hop = 64, double rate = 16000.0) {
  StftConfig cfg;
  cfg.fft_size = fft;
  cfg.hop_size = hop;
  cfg.sample_rate = rate;
  return cfg;
}

}  // namespace

TEST_CASE("stft of all-zero signal is all zero with expected shape", "[signal]") {
  TimeSignal x;
  x.sample_rate = 16000.0;
  x.data = Eigen::MatrixXd::Zero(2, 4000);
  const StftConfig cfg = small_cfg();

  const Spectrogram s = stft(x, cfg);
  REQUIRE(s.bins() == cfg.fft_size / 2 + 1);
  REQUIRE(s.channels() == 2);
  REQUIRE(s.frames() == static_cast<int>((4000 - 256) / 64) + 1);
  for (const auto& bin : s.data) REQUIRE(bin.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("bin-centered sinusoid concentrates energy in three bins", "[signal]") {
  const StftConfig cfg = small_cfg();
  const int k = 19;
  const double freq = k * cfg.sample_rate / cfg.fft_size;
  TimeSignal x;
  x.sample_rate = cfg.sample_rate;
  x.data.resize(1, 2048);
  for (Eigen::Index t = 0; t < x.samples(); ++t)
    x.data(0, t) = std::sin(2.0 * M_PI * freq * t / cfg.sample_rate);

  // Oracle: direct DFT of one hann-windowed frame.
  const Eigen::VectorXd win = make_window(cfg.window, cfg.fft_size);
  std::vector<double> frame(cfg.fft_size);
  for (int t = 0; t < cfg.fft_size; ++t) frame[t] = x.data(0, t) * win[t];
  const auto ref = testsup::naive_dft(frame);
  double ref_total = 0.0, ref_local = 0.0;
  for (int f = 0; f <= cfg.fft_size / 2; ++f) {
    const double mult = (f == 0 || f == cfg.fft_size / 2) ? 1.0 : 2.0;
    ref_total += mult * std::norm(ref[f]);
    if (std::abs(f - k) <= 1) ref_local += mult * std::norm(ref[f]);
  }
  REQUIRE(ref_local / ref_total >= 0.95);

  const Spectrogram s = stft(x, cfg);
  // Implementation matches the oracle on frame 0.
  for (int f = 0; f <= cfg.fft_size / 2; ++f)
    REQUIRE(std::abs(s.data[f](0, 0) - ref[f]) < 1e-8 * (1.0 + std::abs(ref[f])));
  // And every frame keeps >= 95% of its energy in bins {k-1, k, k+1}.
  for (int t = 0; t < s.frames(); ++t) {
    double total = 0.0, local = 0.0;
    for (int f = 0; f < s.bins(); ++f) {
      const double mult = (f == 0 || f == cfg.fft_size / 2) ? 1.0 : 2.0;
      const double e = mult * std::norm(s.data[f](0, t));
      total += e;
      if (std::abs(f - k) <= 1) local += e;
    }
    REQUIRE(local >= 0.95 * total);
  }
}

TEST_CASE("stft/istft round trip reconstructs interior samples", "[signal]") {
  const StftConfig cfg = small_cfg();
  const TimeSignal x = noise_signal(2, 5000, cfg.sample_rate, 11);

  const TimeSignal y = istft(stft(x, cfg), x.samples());
  REQUIRE(y.samples() == x.samples());
  const Eigen::Index lo = cfg.fft_size;
  const Eigen::Index hi = x.samples() - cfg.fft_size;
  const Eigen::MatrixXd dx = (y.data - x.data).middleCols(lo, hi - lo);
  const double rel = dx.norm() / x.data.middleCols(lo, hi - lo).norm();
  REQUIRE(rel < 1e-6);
}

TEST_CASE("istft of zero spectrogram is zero", "[signal]") {
  const StftConfig cfg = small_cfg();
  Spectrogram s;
  s.config = cfg;
  s.data.assign(cfg.bins(), Eigen::MatrixXcd::Zero(1, 8));
  const TimeSignal y = istft(s);
  REQUIRE(y.samples() == 7 * cfg.hop_size + cfg.fft_size);
  REQUIRE(y.data.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single nonzero frame synthesizes locally in time", "[signal]") {
  const StftConfig cfg = small_cfg();
  Spectrogram s;
  s.config = cfg;
  s.data.assign(cfg.bins(), Eigen::MatrixXcd::Zero(1, 12));
  const int m = 5;
  s.data[40](0, m) = Complex(1.0, 0.5);
  const TimeSignal y = istft(s);
  for (Eigen::Index t = 0; t < y.samples(); ++t) {
    const bool inside = t >= m * cfg.hop_size && t < m * cfg.hop_size + cfg.fft_size;
    if (!inside) REQUIRE(std::abs(y.data(0, t)) < 1e-12);
  }
  REQUIRE(y.data.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("per-frame Parseval consistency", "[signal]") {
  const StftConfig cfg = small_cfg();
  const TimeSignal x = noise_signal(1, 3000, cfg.sample_rate, 22);
  const Spectrogram s = stft(x, cfg);
  const Eigen::VectorXd win = make_window(cfg.window, cfg.fft_size);

  for (int t = 0; t < s.frames(); ++t) {
    double time_energy = 0.0;
    for (int k = 0; k < cfg.fft_size; ++k) {
      const double v = x.data(0, t * cfg.hop_size + k) * win[k];
      time_energy += v * v;
    }
    double spec_energy = 0.0;
    for (int f = 0; f < s.bins(); ++f) {
      const double mult = (f == 0 || f == cfg.fft_size / 2) ? 1.0 : 2.0;
      spec_energy += mult * std::norm(s.data[f](0, t));
    }
    spec_energy /= cfg.fft_size;
    REQUIRE(std::abs(spec_energy - time_energy) <= 1e-8 * (1.0 + time_energy));
  }
}

TEST_CASE("stft is linear", "[signal]") {
  const StftConfig cfg = small_cfg(128, 32);
  const TimeSignal x = noise_signal(1, 1000, cfg.sample_rate, 3);
  const TimeSignal y = noise_signal(1, 1000, cfg.sample_rate, 4);
  const double a = 1.7, b = -0.4;
  TimeSignal z = x;
  z.data = a * x.data + b * y.data;

  const Spectrogram sx = stft(x, cfg), sy = stft(y, cfg), sz = stft(z, cfg);
  double max_err = 0.0, scale = 0.0;
  for (int f = 0; f < sz.bins(); ++f) {
    max_err = std::max(
        max_err, (sz.data[f] - a * sx.data[f] - b * sy.data[f]).cwiseAbs().maxCoeff());
    scale = std::max(scale, sz.data[f].cwiseAbs().maxCoeff());
  }
  REQUIRE(max_err <= 1e-10 * (1.0 + scale));
}

TEST_CASE("stft round trip on 100 random short signals", "[signal][property]") {
  const StftConfig cfg = small_cfg(128, 32);
  for (uint32_t seed = 0; seed < 100; ++seed) {
    const TimeSignal x = noise_signal(1, 700 + static_cast<int>(seed % 7) * 13,
                                      cfg.sample_rate, 1000 + seed);
    const TimeSignal y = istft(stft(x, cfg), x.samples());
    const Eigen::Index lo = cfg.fft_size, hi = x.samples() - cfg.fft_size;
    const double rel = (y.data - x.data).middleCols(lo, hi - lo).norm() /
                       x.data.middleCols(lo, hi - lo).norm();
    REQUIRE(rel < 1e-6);
  }
}

TEST_CASE("invalid configs and inputs are rejected", "[signal]") {
  TimeSignal empty;
  empty.sample_rate = 16000.0;
  empty.data.resize(0, 0);
  REQUIRE_THROWS_AS(stft(empty, small_cfg()), DataError);

  StftConfig bad_hop = small_cfg();
  bad_hop.hop_size = 100;  // does not divide 256
  TimeSignal x = noise_signal(1, 1000, 16000.0, 5);
  REQUIRE_THROWS_AS(stft(x, bad_hop), ConfigError);

  StftConfig not_pow2 = small_cfg();
  not_pow2.fft_size = 260;
  not_pow2.hop_size = 65;
  REQUIRE_THROWS_AS(stft(x, not_pow2), ConfigError);

  Spectrogram s = stft(x, small_cfg());
  s.data.pop_back();  // bin count no longer matches config
  REQUIRE_THROWS_AS(istft(s), ConfigError);
}
