#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "fdbss/errors.hpp"
#include "fdbss/signal.hpp"

namespace fdbss {

// Volume envelope per source: beta(j, t) = (1/L) sum_f |u_j(f, t)|.
struct EnvelopeMatrix {
  Eigen::MatrixXd beta;  // source x frame
};

// Per-bin rescaling parameters gamma_ij = (1/T) sum_t |u_i(f,t)| / beta_j(t).
struct GammaMatrix {
  Eigen::MatrixXd gamma;
};

enum class PermMethod { lrj, rlrj };

// Eq.-style likelihood -sum log gamma by default; gamma_sum scores by the
// Laplacian ML sum instead. Both are maximized.
enum class LikelihoodConvention { log_product, gamma_sum };

struct PermOptions {
  LikelihoodConvention convention = LikelihoodConvention::log_product;
  double floor = 1e-12;
};

struct PermutationState {
  // perm[f][i] is the slot currently holding original component i of bin f.
  std::vector<std::vector<int>> perm;
  std::vector<uint8_t> changed_last_pass;
  uint64_t score_evaluations = 0;

  static PermutationState identity(int bins, int n) {
    PermutationState s;
    std::vector<int> id(n);
    std::iota(id.begin(), id.end(), 0);
    s.perm.assign(bins, id);
    s.changed_last_pass.assign(bins, 0);
    return s;
  }

  bool is_valid() const {
    for (const auto& p : perm) {
      std::vector<uint8_t> seen(p.size(), 0);
      for (int v : p) {
        if (v < 0 || v >= static_cast<int>(p.size()) || seen[v]) return false;
        seen[v] = 1;
      }
    }
    return true;
  }
};

struct TraceRow {
  int iteration = 0;
  int changed_bins = 0;
  PermMethod method = PermMethod::rlrj;
};

inline EnvelopeMatrix estimate_beta(const Spectrogram& U, double floor = 1e-12) {
  const int n = U.channels();
  const int t = U.frames();
  if (n == 0 || t == 0) throw DataError("estimate_beta: empty spectrogram");
  EnvelopeMatrix env;
  env.beta = Eigen::MatrixXd::Zero(n, t);
  for (int f = 0; f < U.bins(); ++f) env.beta += U.data[f].cwiseAbs();
  env.beta /= static_cast<double>(U.bins());
  env.beta = env.beta.cwiseMax(floor);
  return env;
}

inline GammaMatrix compute_gamma(const Eigen::MatrixXcd& bin_data,
                                 const EnvelopeMatrix& env, double floor = 1e-12) {
  const Eigen::MatrixXd mag = bin_data.cwiseAbs();
  GammaMatrix g;
  g.gamma = mag * env.beta.cwiseMax(floor).cwiseInverse().transpose() /
            static_cast<double>(bin_data.cols());
  g.gamma = g.gamma.cwiseMax(floor);
  return g;
}

// Score of mapping component i to slot pi[i]; higher is more probable.
inline double permutation_score(const GammaMatrix& g, const std::vector<int>& pi,
                                const PermOptions& opt = {}) {
  double acc = 0.0;
  for (int i = 0; i < static_cast<int>(pi.size()); ++i) {
    const double v = g.gamma(i, pi[i]);
    acc += opt.convention == LikelihoodConvention::log_product ? -std::log(v) : -v;
  }
  return acc;
}

namespace detail {

inline void apply_bin_permutation(Eigen::MatrixXcd& bin, const std::vector<int>& pi) {
  Eigen::MatrixXcd out(bin.rows(), bin.cols());
  for (int i = 0; i < static_cast<int>(pi.size()); ++i) out.row(pi[i]) = bin.row(i);
  bin.swap(out);
}

inline std::vector<int> compose(const std::vector<int>& outer,
                                const std::vector<int>& inner) {
  std::vector<int> out(inner.size());
  for (size_t i = 0; i < inner.size(); ++i) out[i] = outer[inner[i]];
  return out;
}

template <typename CandidateRange>
int argmax_pass(Spectrogram& U, const EnvelopeMatrix& env, PermutationState& state,
                const PermOptions& opt, const CandidateRange& candidates) {
  const int n = U.channels();
  int changed = 0;
  for (int f = 0; f < U.bins(); ++f) {
    const GammaMatrix g = compute_gamma(U.data[f], env, opt.floor);
    // Log-likelihoods reuse the per-entry log across candidates.
    Eigen::MatrixXd cost(n, n);
    if (opt.convention == LikelihoodConvention::log_product)
      cost = g.gamma.array().log().matrix();
    else
      cost = g.gamma;

    std::vector<int> best(n);
    std::iota(best.begin(), best.end(), 0);
    double best_score = 0.0;
    for (int i = 0; i < n; ++i) best_score -= cost(i, i);
    uint64_t evaluated = 1;  // identity is the incumbent

    for (const std::vector<int>& pi : candidates) {
      double score = 0.0;
      for (int i = 0; i < n; ++i) score -= cost(i, pi[i]);
      ++evaluated;
      if (score > best_score) {
        best_score = score;
        best = pi;
      }
    }
    state.score_evaluations += evaluated;

    bool is_identity = true;
    for (int i = 0; i < n; ++i) is_identity = is_identity && best[i] == i;
    state.changed_last_pass[f] = !is_identity;
    if (!is_identity) {
      apply_bin_permutation(U.data[f], best);
      state.perm[f] = compose(best, state.perm[f]);
      ++changed;
    }
  }
  return changed;
}

inline std::vector<std::vector<int>> all_permutations_except_identity(int n) {
  std::vector<int> pi(n);
  std::iota(pi.begin(), pi.end(), 0);
  std::vector<std::vector<int>> out;
  while (std::next_permutation(pi.begin(), pi.end())) out.push_back(pi);
  return out;
}

inline std::vector<std::vector<int>> all_transpositions(int n) {
  std::vector<std::vector<int>> out;
  std::vector<int> id(n);
  std::iota(id.begin(), id.end(), 0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      std::vector<int> pi = id;
      std::swap(pi[i], pi[j]);
      out.push_back(pi);
    }
  return out;
}

}  // namespace detail

// Full Likelihood Ratio Jump: all N! permutations per bin, ties kept on the
// current permutation. Exactly N! scores are evaluated per bin.
inline int lrj_pass(Spectrogram& U, const EnvelopeMatrix& env, PermutationState& state,
                    const PermOptions& opt = {}) {
  const int n = U.channels();
  if (n > 8) throw ConfigError("lrj_pass: N > 8 is rejected (N! explosion); use rlrj");
  return detail::argmax_pass(U, env, state, opt,
                             detail::all_permutations_except_identity(n));
}

// Reduced Likelihood Ratio Jump: identity plus all single transpositions,
// 1/2 N(N-1) + 1 candidates, at most one swapped pair per bin per pass.
inline int rlrj_pass(Spectrogram& U, const EnvelopeMatrix& env, PermutationState& state,
                     const PermOptions& opt = {}) {
  return detail::argmax_pass(U, env, state, opt,
                             detail::all_transpositions(U.channels()));
}

struct SortResult {
  PermutationState state;
  std::vector<TraceRow> trace;
  int initial_changed_bins = 0;  // bins permuted by the initial state
};

// Iterative permutation alignment: re-estimate beta, run one pass over all
// bins, repeat. An initial state (e.g. from DOA alignment) is applied to U
// before the first iteration.
inline SortResult sort_permutations(Spectrogram& U, PermMethod method, int iterations,
                                    const std::optional<PermutationState>& initial_state =
                                        std::nullopt,
                                    const PermOptions& opt = {}) {
  if (iterations < 1) throw ConfigError("sort_permutations: iterations must be >= 1");
  const int n = U.channels();
  SortResult result;
  result.state = PermutationState::identity(U.bins(), n);

  if (initial_state) {
    if (static_cast<int>(initial_state->perm.size()) != U.bins())
      throw ConfigError("sort_permutations: initial state bin count mismatch");
    if (!initial_state->is_valid())
      throw ConfigError("sort_permutations: initial state is not a set of bijections");
    for (int f = 0; f < U.bins(); ++f) {
      const std::vector<int>& pi = initial_state->perm[f];
      bool is_identity = true;
      for (int i = 0; i < n; ++i) is_identity = is_identity && pi[i] == i;
      if (!is_identity) {
        detail::apply_bin_permutation(U.data[f], pi);
        result.state.perm[f] = detail::compose(pi, result.state.perm[f]);
        ++result.initial_changed_bins;
      }
    }
  }

  for (int it = 1; it <= iterations; ++it) {
    const EnvelopeMatrix env = estimate_beta(U, opt.floor);
    const int changed = method == PermMethod::lrj ? lrj_pass(U, env, result.state, opt)
                                                  : rlrj_pass(U, env, result.state, opt);
    result.trace.push_back({it, changed, method});
  }
  return result;
}

}  // namespace fdbss
