#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include "fdbss/errors.hpp"
#include "fdbss/signal.hpp"

namespace fdbss {

// Normalized Amari performance index of a gain matrix G = W A. Zero iff G is
// a scaled permutation, one for the all-ones matrix.
inline double amari_index(const Eigen::MatrixXcd& G) {
  const Eigen::Index n = G.rows();
  if (n < 2 || G.cols() != n) throw ConfigError("amari_index: need a square matrix, N >= 2");
  if (!G.allFinite()) throw DataError("amari_index: non-finite gain matrix");
  const Eigen::MatrixXd a = G.cwiseAbs();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double row_max = a.row(i).maxCoeff();
    const double col_max = a.col(i).maxCoeff();
    if (!(row_max > 0) || !(col_max > 0))
      throw DataError("amari_index: zero row or column");
    acc += a.row(i).sum() / row_max - 1.0;
    acc += a.col(i).sum() / col_max - 1.0;
  }
  return acc / (2.0 * static_cast<double>(n) * static_cast<double>(n - 1));
}

struct SourceScore {
  int estimate = 0;
  int reference = 0;  // paired reference index
  double sdr_db = 0.0;
  double sir_db = 0.0;
  double sar_db = 0.0;
};

struct SeparationScores {
  std::vector<SourceScore> per_source;  // one entry per estimate, estimate order
  int filter_len = 0;

  double mean_sir_db() const {
    double s = 0.0;
    for (const auto& sc : per_source) s += sc.sir_db;
    return per_source.empty() ? 0.0 : s / static_cast<double>(per_source.size());
  }
};

namespace detail {

inline double ratio_db(double num, double den) {
  if (!(num > 0)) return -120.0;
  if (!(den > 1e-11 * num)) return 120.0;
  return std::clamp(10.0 * std::log10(num / den), -120.0, 120.0);
}

// Full (zero-padded) cross-correlations r_ij(m) = sum_t s_i(t) s_j(t+m) for
// m in [-(F-1), F-1], for all channel pairs, via one FFT per channel.
struct CorrelationTable {
  int lags = 0;  // F
  std::vector<Eigen::VectorXd> table;  // [i*n+j], index m+F-1

  double at(int i, int j, int m, int n) const { return table[i * n + j][m + lags - 1]; }
};

inline CorrelationTable correlate_all(const Eigen::MatrixXd& s, int filter_len) {
  const int n = static_cast<int>(s.rows());
  const Eigen::Index len = s.cols();
  Eigen::Index fft_len = 1;
  while (fft_len < len + filter_len) fft_len *= 2;

  Eigen::FFT<double> fft;
  std::vector<std::vector<Complex>> spectra(n);
  std::vector<double> buf(fft_len, 0.0);
  for (int i = 0; i < n; ++i) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (Eigen::Index t = 0; t < len; ++t) buf[t] = s(i, t);
    fft.fwd(spectra[i], buf);
  }

  CorrelationTable out;
  out.lags = filter_len;
  out.table.resize(static_cast<size_t>(n) * n);
  std::vector<Complex> prod(fft_len);
  std::vector<double> corr(fft_len);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (Eigen::Index k = 0; k < fft_len; ++k)
        prod[k] = std::conj(spectra[i][k]) * spectra[j][k];
      fft.inv(corr, prod);
      Eigen::VectorXd& r = out.table[i * n + j];
      r.resize(2 * filter_len - 1);
      for (int m = -(filter_len - 1); m <= filter_len - 1; ++m)
        r[m + filter_len - 1] = corr[(m + fft_len) % fft_len];
    }
  }
  return out;
}

// Projection energy ||P e||^2 = c^T d with G c = d, using a prefactored G.
inline double projection_energy(const Eigen::LDLT<Eigen::MatrixXd>& gram,
                                const Eigen::VectorXd& d) {
  return d.dot(gram.solve(d));
}

}  // namespace detail

// BSS_EVAL-style decomposition with an allowed time-invariant distortion
// filter of filter_len taps: every estimate is projected onto the span of
// shifted copies of the references; energies split into target (the paired
// reference's span), interference (rest of the joint span) and artifacts.
// Estimates are paired to references by maximizing total SIR.
inline SeparationScores bss_eval(const TimeSignal& estimates,
                                 const TimeSignal& references, int filter_len = 512) {
  const int n = estimates.channels();
  if (n == 0 || n != references.channels())
    throw ConfigError("bss_eval: estimate/reference counts differ");
  if (n > 8) throw ConfigError("bss_eval: N > 8 not supported");
  if (filter_len < 1) throw ConfigError("bss_eval: filter_len must be >= 1");
  const Eigen::Index len = std::min(estimates.samples(), references.samples());
  if (len < filter_len) throw DataError("bss_eval: signals shorter than filter");

  const Eigen::MatrixXd e = estimates.data.leftCols(len);
  const Eigen::MatrixXd s = references.data.leftCols(len);
  for (int j = 0; j < n; ++j)
    if (!(s.row(j).squaredNorm() > 0)) throw DataError("bss_eval: zero-energy reference");

  const int f = filter_len;
  const detail::CorrelationTable rs = detail::correlate_all(s, f);

  // Gram of all shifted references (block Toeplitz) and per-reference blocks.
  Eigen::MatrixXd gram_all(n * f, n * f);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int a = 0; a < f; ++a)
        for (int b = 0; b < f; ++b)
          gram_all(i * f + a, j * f + b) = rs.at(i, j, a - b, n);
  const double ridge = 1e-13 * gram_all.trace() / (n * f);
  gram_all.diagonal().array() += ridge;

  std::vector<Eigen::LDLT<Eigen::MatrixXd>> gram_ref(n);
  for (int j = 0; j < n; ++j) {
    Eigen::MatrixXd block = gram_all.block(j * f, j * f, f, f);
    gram_ref[j].compute(block);
  }
  Eigen::LDLT<Eigen::MatrixXd> gram_full(gram_all);

  // Cross-correlations of every estimate with every reference's shifts.
  Eigen::FFT<double> fft;
  Eigen::Index fft_len = 1;
  while (fft_len < len + f) fft_len *= 2;
  std::vector<std::vector<Complex>> ref_spec(n), est_spec(n);
  {
    std::vector<double> buf(fft_len, 0.0);
    for (int j = 0; j < n; ++j) {
      std::fill(buf.begin(), buf.end(), 0.0);
      for (Eigen::Index t = 0; t < len; ++t) buf[t] = s(j, t);
      fft.fwd(ref_spec[j], buf);
    }
    for (int i = 0; i < n; ++i) {
      std::fill(buf.begin(), buf.end(), 0.0);
      for (Eigen::Index t = 0; t < len; ++t) buf[t] = e(i, t);
      fft.fwd(est_spec[i], buf);
    }
  }
  const auto cross = [&](int est, int ref) {
    std::vector<Complex> prod(fft_len);
    for (Eigen::Index k = 0; k < fft_len; ++k)
      prod[k] = std::conj(ref_spec[ref][k]) * est_spec[est][k];
    std::vector<double> corr(fft_len);
    fft.inv(corr, prod);
    Eigen::VectorXd d(f);
    for (int tau = 0; tau < f; ++tau) d[tau] = corr[tau];
    return d;
  };

  // Energies: target per (estimate, reference) and joint-span per estimate.
  Eigen::MatrixXd target(n, n);
  Eigen::VectorXd joint(n), total(n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd d_all(n * f);
    for (int j = 0; j < n; ++j) {
      const Eigen::VectorXd d = cross(i, j);
      target(i, j) = detail::projection_energy(gram_ref[j], d);
      d_all.segment(j * f, f) = d;
    }
    joint[i] = d_all.dot(gram_full.solve(d_all));
    total[i] = e.row(i).squaredNorm();
  }

  Eigen::MatrixXd sir(n, n), sdr(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      sir(i, j) = detail::ratio_db(target(i, j), joint[i] - target(i, j));
      sdr(i, j) = detail::ratio_db(target(i, j), total[i] - target(i, j));
    }

  // Pairing: bijection with the best total SIR.
  std::vector<int> pairing(n);
  std::iota(pairing.begin(), pairing.end(), 0);
  std::vector<int> best = pairing;
  double best_total = -1e300;
  do {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += sir(i, pairing[i]);
    if (acc > best_total) {
      best_total = acc;
      best = pairing;
    }
  } while (std::next_permutation(pairing.begin(), pairing.end()));

  SeparationScores out;
  out.filter_len = f;
  for (int i = 0; i < n; ++i) {
    SourceScore sc;
    sc.estimate = i;
    sc.reference = best[i];
    sc.sdr_db = sdr(i, best[i]);
    sc.sir_db = sir(i, best[i]);
    sc.sar_db = detail::ratio_db(joint[i], total[i] - joint[i]);
    out.per_source.push_back(sc);
  }
  return out;
}

}  // namespace fdbss
