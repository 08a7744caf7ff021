#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fdbss/errors.hpp"
#include "fdbss/permutation.hpp"
#include "fdbss/scale_fix.hpp"
#include "fdbss/signal.hpp"

namespace fdbss {

// 1-D microphone array, possibly non-uniform spacing.
struct ArrayGeometry {
  std::vector<double> sensor_positions;  // meters, strictly increasing
  double speed_of_sound = 343.0;
  int reference_sensor = 0;

  int sensors() const { return static_cast<int>(sensor_positions.size()); }

  double max_adjacent_spacing() const {
    double d = 0.0;
    for (size_t i = 1; i < sensor_positions.size(); ++i)
      d = std::max(d, sensor_positions[i] - sensor_positions[i - 1]);
    return d;
  }

  // Frequency above which grating lobes appear: c / (2 d_max).
  double aliasing_bound_hz() const { return speed_of_sound / (2.0 * max_adjacent_spacing()); }

  void validate() const {
    if (sensors() < 2) throw ConfigError("geometry: need at least 2 sensors");
    for (size_t i = 1; i < sensor_positions.size(); ++i)
      if (!(sensor_positions[i] > sensor_positions[i - 1]))
        throw ConfigError("geometry: sensor positions must be strictly increasing");
    if (!(speed_of_sound > 0)) throw ConfigError("geometry: speed_of_sound must be positive");
    if (reference_sensor < 0 || reference_sensor >= sensors())
      throw ConfigError("geometry: reference sensor out of range");
  }

  // Plain-text format: one sensor position in meters per line; optional
  // `speed_of_sound = <m/s>` and `reference_sensor = <index>` lines;
  // '#' starts a comment.
  static ArrayGeometry load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("geometry: cannot open " + path);
    ArrayGeometry g;
    std::string line;
    while (std::getline(in, line)) {
      const size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
      const size_t eq = line.find('=');
      if (eq != std::string::npos) {
        std::string key = line.substr(0, eq);
        key.erase(std::remove_if(key.begin(), key.end(), ::isspace), key.end());
        const double value = std::stod(line.substr(eq + 1));
        if (key == "speed_of_sound")
          g.speed_of_sound = value;
        else if (key == "reference_sensor")
          g.reference_sensor = static_cast<int>(value);
        else
          throw DataError("geometry: unknown key '" + key + "'");
      } else {
        g.sensor_positions.push_back(std::stod(line));
      }
    }
    g.validate();
    return g;
  }
};

// Far-field phase signature of a source at angle theta (degrees, 0 =
// broadside): component m = exp(-j 2 pi f tau_m), tau_m = (p_m - p_ref)
// sin(theta) / c.
inline Eigen::VectorXcd steering_vector(double theta_deg, double freq_hz,
                                        const ArrayGeometry& geom) {
  const double s = std::sin(theta_deg * M_PI / 180.0);
  const double p_ref = geom.sensor_positions[geom.reference_sensor];
  Eigen::VectorXcd a(geom.sensors());
  for (int m = 0; m < geom.sensors(); ++m) {
    const double tau = (geom.sensor_positions[m] - p_ref) * s / geom.speed_of_sound;
    a[m] = std::polar(1.0, -2.0 * M_PI * freq_hz * tau);
  }
  return a;
}

inline Eigen::VectorXd theta_grid(double step_deg = 1.0) {
  const int count = static_cast<int>(std::round(180.0 / step_deg)) + 1;
  Eigen::VectorXd grid(count);
  for (int i = 0; i < count; ++i) grid[i] = -90.0 + i * step_deg;
  return grid;
}

// Angular spectrum of one bin: eigendecompose the sample covariance, split
// signal and noise subspaces, evaluate 1 / (a^H En En^H a)^2 on the grid.
struct MusicSpectrum {
  Eigen::VectorXd theta_deg;
  Eigen::VectorXd values;
  Eigen::MatrixXcd covariance;
  Eigen::MatrixXcd signal_subspace;  // columns, descending eigenvalues
  Eigen::MatrixXcd noise_subspace;
  double noise_power = 0.0;
  bool degenerate = false;

  double peak_angle() const {
    Eigen::Index idx = 0;
    values.maxCoeff(&idx);
    return theta_deg[idx];
  }
};

inline MusicSpectrum music_spectrum_bin(const Eigen::MatrixXcd& X, double freq_hz,
                                        const ArrayGeometry& geom, int n_signal_dims = 1,
                                        double theta_step_deg = 1.0) {
  geom.validate();
  const int m = static_cast<int>(X.rows());
  if (m != geom.sensors()) throw ConfigError("music: channel count != sensor count");
  if (n_signal_dims < 1 || n_signal_dims >= m)
    throw ConfigError("music: need 1 <= signal dims < sensors");

  MusicSpectrum spec;
  spec.theta_deg = theta_grid(theta_step_deg);
  spec.values = Eigen::VectorXd::Ones(spec.theta_deg.size());

  Eigen::MatrixXcd cov = X * X.adjoint() / static_cast<double>(X.cols());
  cov = 0.5 * (cov + cov.adjoint().eval());
  spec.covariance = cov;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(cov);
  if (eig.info() != Eigen::Success || !(eig.eigenvalues()[m - 1] > 1e-30)) {
    spec.degenerate = true;  // silent bin: flat spectrum
    return spec;
  }
  // Eigen returns ascending order; store descending.
  Eigen::MatrixXcd vecs(m, m);
  Eigen::VectorXd vals(m);
  for (int i = 0; i < m; ++i) {
    vecs.col(i) = eig.eigenvectors().col(m - 1 - i);
    vals[i] = eig.eigenvalues()[m - 1 - i];
  }
  spec.signal_subspace = vecs.leftCols(n_signal_dims);
  spec.noise_subspace = vecs.rightCols(m - n_signal_dims);
  spec.noise_power = vals.tail(m - n_signal_dims).mean();

  for (Eigen::Index i = 0; i < spec.theta_deg.size(); ++i) {
    const Eigen::VectorXcd a = steering_vector(spec.theta_deg[i], freq_hz, geom);
    const double proj = (spec.noise_subspace.adjoint() * a).squaredNorm();
    spec.values[i] = 1.0 / std::max(proj * proj, 1e-24);
  }
  return spec;
}

// Elementwise sum of per-bin per-source spectra.
inline Eigen::VectorXd aggregate_p_theta(const std::vector<Eigen::VectorXd>& spectra) {
  if (spectra.empty()) throw DataError("aggregate_p_theta: empty bin set");
  Eigen::VectorXd p = spectra[0];
  for (size_t i = 1; i < spectra.size(); ++i) {
    if (spectra[i].size() != p.size())
      throw ConfigError("aggregate_p_theta: grid size mismatch");
    p += spectra[i];
  }
  return p;
}

struct PThetaResult {
  Eigen::VectorXd theta_deg;
  Eigen::VectorXd p;
  double f_max_used_hz = 0.0;
  int bins_used = 0;
};

// P(theta): sum of every source's M(theta) over all bins with f <= f_max.
// f_max is clipped to the spatial-aliasing bound c / (2 d_max).
inline PThetaResult compute_p_theta(const SourceImageSet& images,
                                    const ArrayGeometry& geom, double f_max_hz = 2000.0,
                                    double theta_step_deg = 1.0) {
  if (images.sources() == 0) throw DataError("compute_p_theta: no sources");
  geom.validate();
  PThetaResult out;
  out.theta_deg = theta_grid(theta_step_deg);
  out.p = Eigen::VectorXd::Zero(out.theta_deg.size());
  out.f_max_used_hz = std::min(f_max_hz, geom.aliasing_bound_hz());

  const Spectrogram& first = images.images[0];
  std::vector<Eigen::VectorXd> spectra;
  for (int f = 0; f < first.bins(); ++f) {
    if (first.bin_frequency(f) > out.f_max_used_hz) break;
    for (int j = 0; j < images.sources(); ++j) {
      const MusicSpectrum s = music_spectrum_bin(images.images[j].data[f],
                                                 first.bin_frequency(f), geom, 1,
                                                 theta_step_deg);
      if (!s.degenerate) spectra.push_back(s.values);
    }
    ++out.bins_used;
  }
  if (out.bins_used == 0) throw DataError("compute_p_theta: no bins below f_max");
  if (!spectra.empty()) out.p = aggregate_p_theta(spectra);
  return out;
}

// Peaks of P(theta) partitioned into per-source angular regions bounded by
// midpoints. Invalid when fewer peaks than sources survive the minimum
// angular separation.
struct DoaPartition {
  std::vector<double> peak_angles;
  std::vector<double> region_bounds;  // n_sources - 1 interior bounds
  bool valid = false;

  int region_of(double theta_deg) const {
    int r = 0;
    while (r < static_cast<int>(region_bounds.size()) && theta_deg >= region_bounds[r])
      ++r;
    return r;
  }
};

inline DoaPartition partition_doa(const Eigen::VectorXd& p,
                                  const Eigen::VectorXd& theta_deg, int n_sources,
                                  double min_separation_deg = 15.0) {
  if (p.size() != theta_deg.size() || p.size() < 3)
    throw ConfigError("partition_doa: bad grid");
  if (!p.allFinite()) throw DataError("partition_doa: non-finite spectrum");

  struct Peak {
    double angle;
    double height;
  };
  std::vector<Peak> maxima;
  const double height_floor = 1e-12 * p.maxCoeff();
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const bool left_ok = i == 0 || p[i] > p[i - 1];
    const bool right_ok = i == p.size() - 1 || p[i] >= p[i + 1];
    if (left_ok && right_ok && p[i] > height_floor)
      maxima.push_back({theta_deg[i], p[i]});
  }
  std::sort(maxima.begin(), maxima.end(),
            [](const Peak& a, const Peak& b) { return a.height > b.height; });

  // Tallest-first acceptance; anything closer than the separation merges
  // into the already-accepted peak.
  std::vector<Peak> accepted;
  for (const Peak& cand : maxima) {
    bool clear = true;
    for (const Peak& acc : accepted)
      clear = clear && std::abs(cand.angle - acc.angle) >= min_separation_deg;
    if (clear) accepted.push_back(cand);
  }

  DoaPartition part;
  if (static_cast<int>(accepted.size()) < n_sources) {
    for (const Peak& pk : accepted) part.peak_angles.push_back(pk.angle);
    std::sort(part.peak_angles.begin(), part.peak_angles.end());
    part.valid = false;
    return part;
  }
  accepted.resize(n_sources);  // tallest n_sources
  for (const Peak& pk : accepted) part.peak_angles.push_back(pk.angle);
  std::sort(part.peak_angles.begin(), part.peak_angles.end());
  for (int r = 0; r + 1 < n_sources; ++r)
    part.region_bounds.push_back(0.5 * (part.peak_angles[r] + part.peak_angles[r + 1]));
  part.valid = true;
  return part;
}

struct DoaAlignOptions {
  double theta_step_deg = 1.0;
  double boundary_margin_deg = 0.0;  // DOAs this close to a bound stay unresolved
};

struct DoaAlignResult {
  PermutationState state;
  int aligned_bins = 0;
  int unresolved_bins = 0;
};

// DOA-consistent permutation for every bin below f_max: each source image's
// per-bin DOA is assigned to a partition region; conflicts are resolved by
// the bijection with the best total region-membership score. Bins whose DOAs
// cannot be placed keep the identity and are flagged unresolved.
inline DoaAlignResult doa_align(const SourceImageSet& images, const DoaPartition& part,
                                const ArrayGeometry& geom, double f_max_hz,
                                const DoaAlignOptions& opt = {}) {
  if (!part.valid) throw ConfigError("doa_align: invalid partition");
  const int n = images.sources();
  if (static_cast<int>(part.peak_angles.size()) != n)
    throw ConfigError("doa_align: partition size != source count");

  const Spectrogram& first = images.images[0];
  DoaAlignResult result;
  result.state = PermutationState::identity(first.bins(), n);
  const double f_max = std::min(f_max_hz, geom.aliasing_bound_hz());

  std::vector<int> assign(n);
  for (int f = 0; f < first.bins(); ++f) {
    if (first.bin_frequency(f) > f_max) break;

    bool unresolved = false;
    Eigen::MatrixXd membership(n, n);  // source x region, scores in (0, 1]
    std::vector<int> direct(n);
    for (int j = 0; j < n && !unresolved; ++j) {
      const MusicSpectrum spec =
          music_spectrum_bin(images.images[j].data[f], first.bin_frequency(f), geom, 1,
                             opt.theta_step_deg);
      if (spec.degenerate) {
        unresolved = true;
        break;
      }
      const double doa = spec.peak_angle();
      for (double bound : part.region_bounds)
        if (std::abs(doa - bound) < opt.boundary_margin_deg) unresolved = true;
      direct[j] = part.region_of(doa);

      // Region membership: best spectrum value inside each region,
      // normalized by the global best.
      const double global_best = spec.values.maxCoeff();
      for (int r = 0; r < n; ++r) {
        double best = 0.0;
        for (Eigen::Index i = 0; i < spec.theta_deg.size(); ++i)
          if (part.region_of(spec.theta_deg[i]) == r)
            best = std::max(best, spec.values[i]);
        membership(j, r) = best / global_best;
      }
    }
    if (unresolved) {
      ++result.unresolved_bins;
      continue;
    }

    std::vector<uint8_t> taken(n, 0);
    bool bijection = true;
    for (int j = 0; j < n; ++j) {
      if (taken[direct[j]]) bijection = false;
      taken[direct[j]] = 1;
    }
    if (bijection) {
      assign = direct;
    } else {
      // Conflict: brute-force the bijection with the best total membership.
      std::vector<int> pi(n);
      std::iota(pi.begin(), pi.end(), 0);
      double best_total = -1.0;
      std::vector<int> best_pi = pi;
      do {
        double total = 0.0;
        for (int j = 0; j < n; ++j) total += membership(j, pi[j]);
        if (total > best_total) {
          best_total = total;
          best_pi = pi;
        }
      } while (std::next_permutation(pi.begin(), pi.end()));
      assign = best_pi;
    }

    bool is_identity = true;
    for (int j = 0; j < n; ++j) is_identity = is_identity && assign[j] == j;
    if (!is_identity) {
      result.state.perm[f] = assign;
      result.state.changed_last_pass[f] = 1;
    }
    ++result.aligned_bins;
  }
  return result;
}

}  // namespace fdbss
