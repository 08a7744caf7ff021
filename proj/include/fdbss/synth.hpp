#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "fdbss/beamforming.hpp"
#include "fdbss/errors.hpp"
#include "fdbss/signal.hpp"

namespace fdbss {

enum class RirModel { random_exponential_decay, delay_plus_echoes, anechoic_farfield };

struct RoomMixSpec {
  int n_sources = 3;
  int n_mics = 3;
  int rir_length = 256;
  RirModel rir_model = RirModel::random_exponential_decay;
  double decay_time = 64.0;  // samples
  uint32_t seed = 0;
  std::optional<ArrayGeometry> geometry;
  std::vector<double> source_angles_deg;

  // Fixture material parameters (used when the pipeline synthesizes input).
  double duration_s = 10.0;
  double sample_rate = 16000.0;
  double noise_snr_db = 1e9;  // optional white-noise floor at the microphones

  void validate() const {
    if (n_sources < 1 || n_mics < 1) throw ConfigError("synth: counts must be >= 1");
    if (rir_length < 1) throw ConfigError("synth: rir_length must be >= 1");
    if (!(decay_time > 0)) throw ConfigError("synth: decay_time must be positive");
    if (!(duration_s > 0) || !(sample_rate > 0))
      throw ConfigError("synth: duration and sample_rate must be positive");
    const bool needs_geometry = rir_model != RirModel::random_exponential_decay;
    if (needs_geometry) {
      if (!geometry) throw ConfigError("synth: this rir model requires a geometry");
      geometry->validate();
      if (geometry->sensors() != n_mics)
        throw ConfigError("synth: geometry sensor count != n_mics");
      if (static_cast<int>(source_angles_deg.size()) != n_sources)
        throw ConfigError("synth: need one source angle per source");
    }
  }
};

using RirMatrix = std::vector<std::vector<Eigen::VectorXd>>;  // [mic][source]

// Windowed-sinc fractional delay; the delay must sit well inside the filter.
inline Eigen::VectorXd fractional_delay_filter(double delay_samples, int length = 64) {
  if (length < 8) throw ConfigError("fractional_delay_filter: length too short");
  Eigen::VectorXd h = Eigen::VectorXd::Zero(length);
  for (int n = 0; n < length; ++n) {
    const double x = n - delay_samples;
    const double arg = 0.5 * (x / (length / 2.0) + 1.0);  // 0..1 over the support
    if (arg <= 0.0 || arg >= 1.0) continue;
    const double w = 0.42 - 0.5 * std::cos(2.0 * M_PI * arg) +
                     0.08 * std::cos(4.0 * M_PI * arg);
    const double sinc = x == 0.0 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
    h[n] = w * sinc;
  }
  return h;
}

namespace detail {

constexpr int kSincLength = 64;
constexpr double kSincCenter = kSincLength / 2.0;

inline double farfield_delay_samples(const ArrayGeometry& geom, int mic,
                                     double angle_deg, double sample_rate) {
  const double p_ref = geom.sensor_positions[geom.reference_sensor];
  return (geom.sensor_positions[mic] - p_ref) * std::sin(angle_deg * M_PI / 180.0) /
         geom.speed_of_sound * sample_rate;
}

}  // namespace detail

// FIR room impulse responses a_ij between source j and microphone i.
// Deterministic per seed.
inline RirMatrix generate_rirs(const RoomMixSpec& spec) {
  spec.validate();
  std::mt19937 gen(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  RirMatrix rirs(spec.n_mics, std::vector<Eigen::VectorXd>(spec.n_sources));
  switch (spec.rir_model) {
    case RirModel::random_exponential_decay: {
      for (int i = 0; i < spec.n_mics; ++i)
        for (int j = 0; j < spec.n_sources; ++j) {
          Eigen::VectorXd h(spec.rir_length);
          h[0] = 1.0;
          for (int n = 1; n < spec.rir_length; ++n)
            h[n] = gauss(gen) * std::exp(-n / spec.decay_time);
          rirs[i][j] = h;
        }
      break;
    }
    case RirModel::anechoic_farfield:
    case RirModel::delay_plus_echoes: {
      const ArrayGeometry& geom = *spec.geometry;
      const int len = std::max(spec.rir_length, 2 * detail::kSincLength);
      for (int i = 0; i < spec.n_mics; ++i) {
        for (int j = 0; j < spec.n_sources; ++j) {
          Eigen::VectorXd h = Eigen::VectorXd::Zero(len);
          const double direct = detail::kSincCenter +
                                detail::farfield_delay_samples(
                                    geom, i, spec.source_angles_deg[j], spec.sample_rate);
          const Eigen::VectorXd d = fractional_delay_filter(direct, detail::kSincLength);
          h.head(detail::kSincLength) += d;
          if (spec.rir_model == RirModel::delay_plus_echoes) {
            const int echoes = 6;
            for (int k = 1; k <= echoes; ++k) {
              const double span = len - detail::kSincLength;
              const double delay = direct + 4.0 + unit(gen) * (span - direct - 8.0);
              const double amp =
                  (unit(gen) < 0.5 ? -1.0 : 1.0) * 0.6 * std::pow(0.7, k);
              const int offset = static_cast<int>(delay) - detail::kSincLength / 2;
              const int start = std::max(0, std::min(offset, len - detail::kSincLength));
              h.segment(start, detail::kSincLength) +=
                  amp * fractional_delay_filter(delay - start, detail::kSincLength);
            }
          }
          rirs[i][j] = h;
        }
      }
      break;
    }
  }
  return rirs;
}

// x_i = sum_j a_ij * s_j, trimmed to the source length.
inline TimeSignal mix(const TimeSignal& sources, const RirMatrix& rirs) {
  if (rirs.empty()) throw ConfigError("mix: empty rir matrix");
  const int n_mics = static_cast<int>(rirs.size());
  const Eigen::Index len = sources.samples();
  TimeSignal out;
  out.sample_rate = sources.sample_rate;
  out.data = Eigen::MatrixXd::Zero(n_mics, len);
  for (int i = 0; i < n_mics; ++i) {
    if (static_cast<int>(rirs[i].size()) != sources.channels())
      throw ConfigError("mix: rir source count != sources");
    for (int j = 0; j < sources.channels(); ++j) {
      const Eigen::VectorXd& h = rirs[i][j];
      for (Eigen::Index k = 0; k < h.size() && k < len; ++k)
        if (h[k] != 0.0)
          out.data.row(i).segment(k, len - k) +=
              h[k] * sources.data.row(j).segment(0, len - k);
    }
  }
  return out;
}

// White sensor noise at a given SNR relative to the signal's overall power.
inline void add_white_noise(TimeSignal& x, double snr_db, uint32_t seed) {
  if (snr_db >= 300.0) return;
  const double power = x.data.squaredNorm() / static_cast<double>(x.data.size());
  const double sigma = std::sqrt(power) * std::pow(10.0, -snr_db / 20.0);
  std::mt19937 gen(seed ^ 0x5eedu);
  std::normal_distribution<double> gauss(0.0, sigma);
  for (Eigen::Index i = 0; i < x.data.rows(); ++i)
    for (Eigen::Index t = 0; t < x.data.cols(); ++t) x.data(i, t) += gauss(gen);
}

// Speech-like test material: white carriers under sparse smooth bursts with a
// low activity floor, unit RMS per source. Burst rates differ per source so
// the envelopes stay distinguishable.
inline TimeSignal make_test_sources(int n_sources, Eigen::Index samples,
                                    double sample_rate, uint32_t seed) {
  if (n_sources < 1 || samples < 1) throw ConfigError("make_test_sources: bad shape");
  TimeSignal out;
  out.sample_rate = sample_rate;
  out.data.resize(n_sources, samples);
  std::mt19937 gen(seed * 2654435761u + 97u);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int j = 0; j < n_sources; ++j) {
    Eigen::VectorXd env = Eigen::VectorXd::Constant(samples, 0.08);
    const double burst_len = (0.25 + 0.1 * j) * sample_rate;
    const int n_bursts = std::max<int>(1, static_cast<int>(samples / burst_len / 2.5));
    for (int b = 0; b < n_bursts; ++b) {
      const double center = unit(gen) * samples;
      const double width = burst_len * (0.5 + unit(gen));
      const Eigen::Index lo = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(center - width));
      const Eigen::Index hi = std::min<Eigen::Index>(samples, static_cast<Eigen::Index>(center + width));
      for (Eigen::Index t = lo; t < hi; ++t) {
        const double phase = (t - center) / width * M_PI / 2.0;
        env[t] += std::cos(phase) * std::cos(phase);
      }
    }
    for (Eigen::Index t = 0; t < samples; ++t) out.data(j, t) = env[t] * gauss(gen);
    out.data.row(j) /= std::sqrt(out.data.row(j).squaredNorm() / samples);
  }
  return out;
}

// Complete synthetic scene: sources, mixture, and the rirs used.
struct SynthScene {
  TimeSignal sources;
  TimeSignal mixture;
  RirMatrix rirs;
};

inline SynthScene synthesize_scene(const RoomMixSpec& spec) {
  spec.validate();
  SynthScene scene;
  scene.sources = make_test_sources(
      spec.n_sources, static_cast<Eigen::Index>(spec.duration_s * spec.sample_rate),
      spec.sample_rate, spec.seed);
  scene.rirs = generate_rirs(spec);
  scene.mixture = mix(scene.sources, scene.rirs);
  add_white_noise(scene.mixture, spec.noise_snr_db, spec.seed);
  return scene;
}

}  // namespace fdbss
