#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "fdbss/errors.hpp"
#include "fdbss/signal.hpp"
#include "fdbss/whitening.hpp"

namespace fdbss {

enum class IcaEngine { fastica, robustica };
enum class TargetDistribution { super_gaussian, sub_gaussian };
// Diagonal scaling of the FastICA update. Both preserve the fixed points;
// newton uses the local curvature of the activation, alpha_minus_one the
// plain 1/(alpha_i - 1) factor.
enum class FasticaScaling { newton, alpha_minus_one };

struct IcaConfig {
  IcaEngine engine = IcaEngine::robustica;
  int max_iterations = 0;  // 0 selects the engine default: robustica 3, fastica 15
  double tolerance = 1e-5;
  TargetDistribution target = TargetDistribution::super_gaussian;
  bool rank_by_absolute_kurtosis = true;  // line-search candidates ranked by |K|
  bool prewhiten = true;
  FasticaScaling fastica_scaling = FasticaScaling::newton;
  double fastica_denominator_floor = 0.05;

  int iterations() const {
    if (max_iterations > 0) return max_iterations;
    return engine == IcaEngine::robustica ? 3 : 15;
  }
  void validate() const {
    if (max_iterations < 0) throw ConfigError("max_iterations must be >= 1 (0 = default)");
    if (!(tolerance > 0)) throw ConfigError("tolerance must be positive");
    if (!(fastica_denominator_floor > 0))
      throw ConfigError("fastica_denominator_floor must be positive");
  }
};

namespace detail {

struct KurtosisMoments {
  double m2 = 0.0, m4 = 0.0;
  Complex s{0.0, 0.0};
};

inline KurtosisMoments kurtosis_moments(const Eigen::ArrayXcd& u) {
  KurtosisMoments m;
  const Eigen::ArrayXd a2 = u.abs2();
  m.m2 = a2.mean();
  m.m4 = (a2 * a2).mean();
  m.s = (u * u).mean();
  return m;
}

inline double kurtosis_from_moments(const KurtosisMoments& m) {
  if (!(m.m2 > 1e-300)) throw DataError("kurtosis: zero-variance projection");
  return (m.m4 - 2.0 * m.m2 * m.m2 - std::norm(m.s)) / (m.m2 * m.m2);
}

inline Eigen::ArrayXcd project(const Eigen::VectorXcd& w, const Eigen::MatrixXcd& Z) {
  return (w.adjoint() * Z).transpose().array();
}

inline Eigen::VectorXcd random_unit_vector(Eigen::Index n, std::mt19937_64& gen) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::VectorXcd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = Complex(dist(gen), dist(gen));
  const double norm = v.norm();
  return norm > 0 ? Eigen::VectorXcd(v / norm) : Eigen::VectorXcd::Unit(n, 0);
}

}  // namespace detail

// Generalized kurtosis K(w) of the projection u = w^H z, sample expectations
// over frames. Zero for circular Gaussian data, -1 for unit-modulus phases.
inline double kurtosis_contrast(const Eigen::VectorXcd& w, const Eigen::MatrixXcd& Z) {
  if (Z.cols() < 4) throw DataError("kurtosis_contrast: need at least 4 frames");
  if (!(w.norm() > 0)) throw DataError("kurtosis_contrast: zero projection vector");
  return detail::kurtosis_from_moments(detail::kurtosis_moments(detail::project(w, Z)));
}

// Wirtinger gradient dK/dw* of the kurtosis contrast. A perturbation d of w
// changes K by 2 Re(g^H d) to first order.
inline Eigen::VectorXcd kurtosis_gradient(const Eigen::VectorXcd& w,
                                          const Eigen::MatrixXcd& Z) {
  if (Z.cols() < 4) throw DataError("kurtosis_gradient: need at least 4 frames");
  const Eigen::ArrayXcd u = detail::project(w, Z);
  const detail::KurtosisMoments m = detail::kurtosis_moments(u);
  const double k = detail::kurtosis_from_moments(m);
  const double t = static_cast<double>(Z.cols());

  const Eigen::VectorXcd e_zu_conj = Z * (u.conjugate().matrix()) / t;   // E{z u*}
  const Eigen::VectorXcd e_zu = Z * u.matrix() / t;                      // E{z u}
  const Eigen::VectorXcd e_zu2 = Z * (u.abs2() * u.conjugate()).matrix() / t;

  return (2.0 * e_zu2 - 4.0 * m.m2 * e_zu_conj - 2.0 * std::conj(m.s) * e_zu) /
             (m.m2 * m.m2) -
         (2.0 * k / m.m2) * e_zu_conj;
}

// Exact line search K(w + mu g): the stationary points of the rational
// contrast are the real roots of a degree <= 4 polynomial in mu built from
// sample statistics of (w^H z, g^H z).
struct LineSearch {
  double mu = 0.0;
  std::array<double, 5> poly{};  // poly[k] multiplies mu^k
  std::vector<double> roots;     // real stationary points, ascending
  bool improved = false;         // false: no root beat mu = 0
};

namespace detail {

// Real roots via the companion matrix; negligible leading coefficients are
// trimmed first.
inline std::vector<double> real_polynomial_roots(std::vector<double> coef) {
  double scale = 0.0;
  for (double c : coef) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) return {};
  while (coef.size() > 1 && std::abs(coef.back()) < 1e-12 * scale) coef.pop_back();
  const int deg = static_cast<int>(coef.size()) - 1;
  if (deg < 1) return {};
  if (deg == 1) return {-coef[0] / coef[1]};

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(deg, deg);
  for (int i = 1; i < deg; ++i) companion(i, i - 1) = 1.0;
  for (int i = 0; i < deg; ++i) companion(i, deg - 1) = -coef[i] / coef[deg];
  Eigen::EigenSolver<Eigen::MatrixXd> eig(companion, false);
  std::vector<double> roots;
  for (int i = 0; i < deg; ++i) {
    const Complex r = eig.eigenvalues()[i];
    if (std::abs(r.imag()) <= 1e-8 * (1.0 + std::abs(r.real())))
      roots.push_back(r.real());
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

inline double ranking_key(double kurtosis, const IcaConfig& cfg) {
  if (cfg.rank_by_absolute_kurtosis) return std::abs(kurtosis);
  return cfg.target == TargetDistribution::super_gaussian ? kurtosis : -kurtosis;
}

}  // namespace detail

inline LineSearch optimal_step_search(const Eigen::VectorXcd& w,
                                      const Eigen::VectorXcd& g,
                                      const Eigen::MatrixXcd& Z,
                                      const IcaConfig& cfg = {}) {
  if (!(g.norm() > 0)) throw DataError("optimal_step: zero search direction");
  const Eigen::ArrayXcd a = detail::project(w, Z);
  const Eigen::ArrayXcd b = detail::project(g, Z);

  const Eigen::ArrayXd A = a.abs2();
  const Eigen::ArrayXd B = b.abs2();
  const Eigen::ArrayXd r = (a * b.conjugate()).real();

  // E{|y|^2}, E{y^2}, E{|y|^4} with y = a + mu b, as polynomials in mu.
  const double h[3] = {A.mean(), 2.0 * r.mean(), B.mean()};
  const Complex q[3] = {(a * a).mean(), 2.0 * (a * b).mean(), (b * b).mean()};
  const double d[5] = {(A * A).mean(), 4.0 * (r * A).mean(),
                       (4.0 * r.square() + 2.0 * A * B).mean(), 4.0 * (r * B).mean(),
                       (B * B).mean()};
  if (!(h[0] > 1e-300)) throw DataError("optimal_step: zero-variance projection");

  const double c[5] = {std::norm(q[0]), 2.0 * (q[0] * std::conj(q[1])).real(),
                       2.0 * (q[0] * std::conj(q[2])).real() + std::norm(q[1]),
                       2.0 * (q[1] * std::conj(q[2])).real(), std::norm(q[2])};
  const double e[5] = {h[0] * h[0], 2.0 * h[0] * h[1], h[1] * h[1] + 2.0 * h[0] * h[2],
                       2.0 * h[1] * h[2], h[2] * h[2]};
  double num[5];  // numerator N(mu) = E{|y|^4} - 2 E^2{|y|^2} - |E{y^2}|^2
  for (int k = 0; k < 5; ++k) num[k] = d[k] - 2.0 * e[k] - c[k];

  // Stationary points of N/h^2 solve N' h - 2 N h' = 0; the degree-5 terms
  // cancel identically.
  const double dnum[4] = {num[1], 2.0 * num[2], 3.0 * num[3], 4.0 * num[4]};
  const double dh[2] = {h[1], 2.0 * h[2]};
  LineSearch result;
  result.poly.fill(0.0);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j)
      if (i + j < 5) result.poly[i + j] += dnum[i] * h[j];
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 2; ++j)
      if (i + j < 5) result.poly[i + j] -= 2.0 * num[i] * dh[j];

  result.roots = detail::real_polynomial_roots(
      std::vector<double>(result.poly.begin(), result.poly.end()));

  const auto contrast_at = [&](double mu) -> double {
    const double hm = h[0] + mu * (h[1] + mu * h[2]);
    if (!(hm > 1e-300)) return std::numeric_limits<double>::quiet_NaN();
    double nm = 0.0;
    for (int k = 4; k >= 0; --k) nm = nm * mu + num[k];
    return nm / (hm * hm);
  };

  double best_key = detail::ranking_key(contrast_at(0.0), cfg);
  for (double root : result.roots) {
    const double k_root = contrast_at(root);
    if (!std::isfinite(k_root)) continue;
    const double key = detail::ranking_key(k_root, cfg);
    if (key > best_key) {
      best_key = key;
      result.mu = root;
      result.improved = true;
    }
  }
  return result;
}

inline double optimal_step(const Eigen::VectorXcd& w, const Eigen::VectorXcd& g,
                           const Eigen::MatrixXcd& Z, const IcaConfig& cfg = {}) {
  return optimal_step_search(w, g, Z, cfg).mu;
}

// Result of separating one frequency bin from (whitened) data.
struct BinSeparation {
  Eigen::MatrixXcd W;
  bool converged = false;
  int iterations_used = 0;
};

namespace detail {

// Largest rotation between matching rows of consecutive iterates.
inline double max_row_rotation(const Eigen::MatrixXcd& W_new,
                               const Eigen::MatrixXcd& W_old) {
  double delta = 0.0;
  for (Eigen::Index i = 0; i < W_new.rows(); ++i) {
    const Complex dot = (W_new.row(i) * W_old.row(i).adjoint())(0, 0);
    delta = std::max(delta, 1.0 - std::abs(dot));
  }
  return delta;
}

// Rows can collide when two of them jump to the same contrast optimum; a
// seeded perturbation keeps the sweep going instead of aborting the bin.
inline Eigen::MatrixXcd orthogonalize_with_recovery(Eigen::MatrixXcd W,
                                                    std::mt19937_64& gen) {
  for (int attempt = 0; attempt < 4; ++attempt) {
    try {
      return symmetric_orthogonalize(W);
    } catch (const DataError&) {
      for (Eigen::Index i = 0; i < W.rows(); ++i) {
        Eigen::VectorXcd w =
            0.9 * W.row(i).adjoint() + 0.1 * random_unit_vector(W.cols(), gen);
        W.row(i) = (w / w.norm()).adjoint();
      }
    }
  }
  return Eigen::MatrixXcd::Identity(W.rows(), W.cols());
}

}  // namespace detail

// Kurtosis-maximizing separation with algebraic exact line search per row and
// symmetric orthogonalization per sweep. Z must be whitened. Within a sweep,
// each row searches in the orthogonal complement of the rows already updated;
// with an unconstrained direction every row jumps to the strongest-kurtosis
// source and the sweep cycles instead of converging.
inline BinSeparation robustica_separate_bin(const Eigen::MatrixXcd& Z,
                                            const IcaConfig& cfg = {},
                                            uint64_t seed = 0,
                                            const Eigen::MatrixXcd& W_init = {}) {
  cfg.validate();
  const Eigen::Index n = Z.rows();
  if (n == 0 || Z.cols() < 4) throw DataError("robustica: not enough data");

  BinSeparation out;
  out.W = W_init.size() > 0 ? W_init : Eigen::MatrixXcd::Identity(n, n);
  std::mt19937_64 gen(seed * 0x9e3779b97f4a7c15ULL + 0xda3e39cb94b95bdbULL);

  for (int iter = 1; iter <= cfg.iterations(); ++iter) {
    const Eigen::MatrixXcd W_old = out.W;
    std::vector<Eigen::VectorXcd> updated;  // orthonormal basis of done rows
    const auto deflate = [&updated](Eigen::VectorXcd v) {
      for (const Eigen::VectorXcd& q : updated) v -= q * (q.adjoint() * v);
      return v;
    };
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXcd w = deflate(out.W.row(i).adjoint());
      if (!w.allFinite() || !(w.norm() > 1e-12))
        w = deflate(detail::random_unit_vector(n, gen));
      w.normalize();

      bool restart = false;
      Eigen::VectorXcd g;
      try {
        g = deflate(kurtosis_gradient(w, Z));
      } catch (const DataError&) {
        restart = true;
      }
      if (!restart && g.allFinite() && g.norm() > 1e-300) {
        const LineSearch step = optimal_step_search(w, g, Z, cfg);
        if (step.improved) w += step.mu * g;
      }
      const double norm = w.norm();
      if (!w.allFinite() || !(norm > 1e-300))
        w = deflate(detail::random_unit_vector(n, gen)).normalized();
      else
        w /= norm;
      out.W.row(i) = w.adjoint();
      const Eigen::VectorXcd q = deflate(w);
      if (q.norm() > 1e-12) updated.push_back(q.normalized());
    }
    out.W = detail::orthogonalize_with_recovery(out.W, gen);
    out.iterations_used = iter;
    if (detail::max_row_rotation(out.W, W_old) < cfg.tolerance) {
      out.converged = true;
      break;
    }
  }
  return out;
}

// Activation used by the fixed-point engine; unit modulus for nonzero input.
inline Complex fastica_phi(Complex u) {
  const double mag = std::abs(u);
  return mag > 0 ? u / mag : Complex(0.0, 0.0);
}

// Complex fixed-point iteration with phase activation phi(u) = u/|u| and
// symmetric orthogonalization after each batch update. Z must be whitened.
inline BinSeparation fastica_separate_bin(const Eigen::MatrixXcd& Z,
                                          const IcaConfig& cfg = {},
                                          uint64_t seed = 0,
                                          const Eigen::MatrixXcd& W_init = {}) {
  cfg.validate();
  const Eigen::Index n = Z.rows();
  const Eigen::Index t = Z.cols();
  if (n == 0 || t < 4) throw DataError("fastica: not enough data");

  BinSeparation out;
  out.W = W_init.size() > 0 ? W_init : Eigen::MatrixXcd::Identity(n, n);
  std::mt19937_64 gen(seed * 0x9e3779b97f4a7c15ULL + 0x6a09e667f3bcc909ULL);

  for (int iter = 1; iter <= cfg.iterations(); ++iter) {
    const Eigen::MatrixXcd W_old = out.W;
    const Eigen::MatrixXcd U = out.W * Z;
    const Eigen::ArrayXXd mag = U.array().abs().max(1e-12);
    const Eigen::MatrixXcd phi = (U.array() / mag).matrix();

    const Eigen::MatrixXcd cross = phi * U.adjoint() / static_cast<double>(t);
    Eigen::VectorXd scale(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double alpha = cross(i, i).real();  // E{phi(u_i) u_i^*} = E{|u_i|}
      double denom;
      switch (cfg.fastica_scaling) {
        case FasticaScaling::newton:
          denom = alpha - (0.5 / mag.row(i)).mean();
          break;
        case FasticaScaling::alpha_minus_one:
          denom = alpha - 1.0;
          break;
      }
      if (std::abs(denom) < cfg.fastica_denominator_floor)
        denom = std::copysign(cfg.fastica_denominator_floor, denom == 0 ? -1.0 : denom);
      scale[i] = 1.0 / denom;
    }
    Eigen::MatrixXcd bracket = cross;
    for (Eigen::Index i = 0; i < n; ++i) bracket(i, i) -= cross(i, i).real();
    out.W += scale.asDiagonal() * bracket * out.W;

    for (Eigen::Index i = 0; i < n; ++i) {
      if (!out.W.row(i).allFinite() || !(out.W.row(i).norm() > 1e-300))
        out.W.row(i) = detail::random_unit_vector(n, gen).adjoint();
    }
    out.W = detail::orthogonalize_with_recovery(out.W, gen);
    out.iterations_used = iter;
    if (detail::max_row_rotation(out.W, W_old) < cfg.tolerance) {
      out.converged = true;
      break;
    }
  }
  return out;
}

inline BinSeparation separate_bin(const Eigen::MatrixXcd& Z, const IcaConfig& cfg,
                                  uint64_t seed = 0) {
  return cfg.engine == IcaEngine::robustica ? robustica_separate_bin(Z, cfg, seed)
                                            : fastica_separate_bin(Z, cfg, seed);
}

// Unmixing for one bin: u = W V (x - mean). Degenerate bins carry identities.
struct BinUnmixing {
  Eigen::MatrixXcd W;
  Eigen::MatrixXcd V;
  Eigen::MatrixXcd V_inv;
  Eigen::VectorXcd mean;
  bool converged = false;
  bool degenerate = false;
  int iterations_used = 0;

  Eigen::MatrixXcd total() const { return W * V; }
};

struct UnmixingSet {
  IcaConfig config;
  std::vector<BinUnmixing> bins;

  int degenerate_bins() const {
    int n = 0;
    for (const auto& b : bins) n += b.degenerate ? 1 : 0;
    return n;
  }
  int converged_bins() const {
    int n = 0;
    for (const auto& b : bins) n += b.converged ? 1 : 0;
    return n;
  }
  double mean_iterations() const {
    if (bins.empty()) return 0.0;
    double s = 0.0;
    for (const auto& b : bins) s += b.iterations_used;
    return s / static_cast<double>(bins.size());
  }
};

// Whiten and separate every bin independently. Deterministic per seed.
inline UnmixingSet separate_spectrogram(const Spectrogram& X, const IcaConfig& cfg,
                                        uint32_t seed = 0) {
  cfg.validate();
  UnmixingSet set;
  set.config = cfg;
  set.bins.resize(X.bins());
  const int n = X.channels();
  for (int f = 0; f < X.bins(); ++f) {
    BinUnmixing& bin = set.bins[f];
    const uint64_t bin_seed = (static_cast<uint64_t>(seed) << 24) ^ static_cast<uint64_t>(f);
    try {
      if (cfg.prewhiten) {
        const WhiteningTransform wt = compute_whitener(X.data[f], f);
        const Eigen::MatrixXcd Z = wt.apply(X.data[f]);
        const BinSeparation sep = separate_bin(Z, cfg, bin_seed);
        bin.W = sep.W;
        bin.V = wt.V;
        bin.V_inv = wt.V_inv;
        bin.mean = wt.mean;
        bin.converged = sep.converged;
        bin.iterations_used = sep.iterations_used;
      } else {
        const BinSeparation sep = separate_bin(X.data[f], cfg, bin_seed);
        bin.W = sep.W;
        bin.V = Eigen::MatrixXcd::Identity(n, n);
        bin.V_inv = bin.V;
        bin.mean = Eigen::VectorXcd::Zero(n);
        bin.converged = sep.converged;
        bin.iterations_used = sep.iterations_used;
      }
    } catch (const DegenerateBinError&) {
      bin.W = Eigen::MatrixXcd::Identity(n, n);
      bin.V = bin.W;
      bin.V_inv = bin.W;
      bin.mean = Eigen::VectorXcd::Zero(n);
      bin.degenerate = true;
    }
  }
  return set;
}

// Linear per-bin unmixing u(f,t) = W_f V_f x(f,t); no mean removal so that
// downstream source images stay additive.
inline Spectrogram apply_unmixing(const Spectrogram& X, const UnmixingSet& set) {
  if (static_cast<int>(set.bins.size()) != X.bins())
    throw ConfigError("apply_unmixing: bin count mismatch");
  Spectrogram out = X;
  for (int f = 0; f < X.bins(); ++f) out.data[f] = set.bins[f].total() * X.data[f];
  return out;
}

}  // namespace fdbss
