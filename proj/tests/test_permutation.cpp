#include <catch2/catch_amalgamated.hpp>

#include "fdbss/permutation.hpp"

#include <map>
#include <random>

#include "test_support.hpp"

using namespace fdbss;

namespace {

StftConfig tiny_cfg() {
  StftConfig cfg;
  cfg.fft_size = 16;
  cfg.hop_size = 4;
  cfg.sample_rate = 8000.0;
  return cfg;
}

Spectrogram blank_spectrogram(int channels, int bins, int frames) {
  Spectrogram u;
  u.config = tiny_cfg();
  u.data.assign(bins, Eigen::MatrixXcd::Zero(channels, frames));
  return u;
}

// Sources with smooth, mostly-disjoint temporal bursts plus a low floor;
// per-bin random gains and phases. Ground truth: row j = source j.
Spectrogram envelope_fixture(int n, int bins, int frames, uint32_t seed) {
  Spectrogram u = blank_spectrogram(n, bins, frames);
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int j = 0; j < n; ++j) {
    const double center = (j + 0.5) * frames / static_cast<double>(n);
    const double width = frames / (2.5 * n);
    for (int f = 0; f < bins; ++f) {
      const double gain = 0.3 + std::abs(gauss(gen));
      for (int t = 0; t < frames; ++t) {
        const double env =
            0.05 + std::exp(-0.5 * std::pow((t - center) / width, 2.0));
        u.data[f](j, t) = std::polar(gain * env, phase(gen));
      }
    }
  }
  return u;
}

std::vector<int> random_permutation(int n, std::mt19937& gen) {
  std::vector<int> pi(n);
  std::iota(pi.begin(), pi.end(), 0);
  std::shuffle(pi.begin(), pi.end(), gen);
  return pi;
}

void apply_to_bin(Eigen::MatrixXcd& bin, const std::vector<int>& pi) {
  Eigen::MatrixXcd out(bin.rows(), bin.cols());
  for (int i = 0; i < static_cast<int>(pi.size()); ++i) out.row(pi[i]) = bin.row(i);
  bin.swap(out);
}

// Scrambles `frac` of the bins with random non-identity permutations.
std::vector<std::vector<int>> scramble(Spectrogram& u, double frac, uint32_t seed) {
  const int n = u.channels();
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<int> id(n);
  std::iota(id.begin(), id.end(), 0);
  std::vector<std::vector<int>> applied(u.bins(), id);
  for (int f = 0; f < u.bins(); ++f) {
    if (coin(gen) >= frac) continue;
    std::vector<int> pi = random_permutation(n, gen);
    while (pi == id) pi = random_permutation(n, gen);
    apply_to_bin(u.data[f], pi);
    applied[f] = pi;
  }
  return applied;
}

std::vector<int> compose(const std::vector<int>& outer, const std::vector<int>& inner) {
  std::vector<int> out(inner.size());
  for (size_t i = 0; i < inner.size(); ++i) out[i] = outer[inner[i]];
  return out;
}

// Fraction of bins whose net source-to-slot mapping agrees with the majority.
double majority_agreement(const SortResult& result,
                          const std::vector<std::vector<int>>& applied) {
  std::map<std::vector<int>, int> votes;
  std::vector<std::vector<int>> net(applied.size());
  for (size_t f = 0; f < applied.size(); ++f) {
    net[f] = compose(result.state.perm[f], applied[f]);
    votes[net[f]] += 1;
  }
  int best = 0;
  std::vector<int> majority;
  for (const auto& [pi, count] : votes)
    if (count > best) {
      best = count;
      majority = pi;
    }
  int agree = 0;
  for (const auto& pi : net) agree += pi == majority ? 1 : 0;
  return static_cast<double>(agree) / static_cast<double>(net.size());
}

}  // namespace

TEST_CASE("beta of a constant unit-magnitude source is one", "[permutation]") {
  Spectrogram u = blank_spectrogram(1, 20, 30);
  for (auto& bin : u.data) bin.setConstant(Complex(0.0, 1.0));
  const EnvelopeMatrix env = estimate_beta(u);
  REQUIRE(env.beta.rows() == 1);
  REQUIRE((env.beta.array() - 1.0).abs().maxCoeff() < 1e-14);
}

TEST_CASE("beta is local in time and scales linearly", "[permutation]") {
  Spectrogram u = blank_spectrogram(1, 8, 40);
  for (auto& bin : u.data)
    for (int t = 10; t <= 20; ++t) bin(0, t) = Complex(0.5, 0.5);
  const EnvelopeMatrix env = estimate_beta(u);
  for (int t = 0; t < 40; ++t) {
    if (t < 10 || t > 20)
      REQUIRE(env.beta(0, t) <= 1e-12);
    else
      REQUIRE(env.beta(0, t) > 0.1);
  }

  Spectrogram u2 = u;
  for (auto& bin : u2.data) bin *= 2.0;
  const EnvelopeMatrix env2 = estimate_beta(u2);
  for (int t = 10; t <= 20; ++t)
    REQUIRE(env2.beta(0, t) == Catch::Approx(2.0 * env.beta(0, t)).epsilon(1e-12));
}

TEST_CASE("permutation score follows the log-product likelihood", "[permutation]") {
  GammaMatrix g;

  SECTION("all-ones gamma ties every permutation at zero") {
    g.gamma = Eigen::MatrixXd::Ones(3, 3);
    std::vector<int> pi{0, 1, 2};
    std::sort(pi.begin(), pi.end());
    do {
      REQUIRE(permutation_score(g, pi) == 0.0);
    } while (std::next_permutation(pi.begin(), pi.end()));
  }

  SECTION("three-source cycle matches -log(g31 g12 g23)") {
    std::mt19937 gen(1);
    g.gamma = Eigen::MatrixXd::Random(3, 3).cwiseAbs() + 0.1 * Eigen::MatrixXd::Ones(3, 3);
    // IC3 -> slot 1, IC1 -> slot 2, IC2 -> slot 3 (1-based), zero-based below.
    const std::vector<int> pi{1, 2, 0};
    const double expected = -std::log(g.gamma(2, 0) * g.gamma(0, 1) * g.gamma(1, 2));
    REQUIRE(permutation_score(g, pi) == Catch::Approx(expected).epsilon(1e-12));
  }

  SECTION("diagonal-dominant gamma is maximized by the identity") {
    g.gamma = Eigen::MatrixXd::Ones(3, 3);
    g.gamma.diagonal().setConstant(0.1);
    std::vector<int> pi{0, 1, 2};
    const double id_score = permutation_score(g, pi);
    int evaluated = 0;
    while (std::next_permutation(pi.begin(), pi.end())) {
      REQUIRE(permutation_score(g, pi) < id_score);
      ++evaluated;
    }
    REQUIRE(evaluated == 5);
  }
}

TEST_CASE("candidate counts are exact", "[permutation]") {
  SECTION("lrj evaluates N! scores per bin") {
    for (int n : {3, 4, 5}) {
      Spectrogram u = envelope_fixture(n, 6, 32, 100 + n);
      PermutationState state = PermutationState::identity(u.bins(), n);
      const EnvelopeMatrix env = estimate_beta(u);
      lrj_pass(u, env, state);
      uint64_t factorial = 1;
      for (int k = 2; k <= n; ++k) factorial *= k;
      REQUIRE(state.score_evaluations == factorial * static_cast<uint64_t>(u.bins()));
    }
  }

  SECTION("rlrj evaluates N(N-1)/2 + 1 scores per bin") {
    for (int n : {1, 2, 4, 5}) {
      Spectrogram u = envelope_fixture(n, 6, 32, 200 + n);
      PermutationState state = PermutationState::identity(u.bins(), n);
      const EnvelopeMatrix env = estimate_beta(u);
      rlrj_pass(u, env, state);
      const uint64_t expected = static_cast<uint64_t>(n) * (n - 1) / 2 + 1;
      REQUIRE(state.score_evaluations == expected * static_cast<uint64_t>(u.bins()));
    }
  }

  SECTION("lrj rejects N > 8") {
    Spectrogram u = blank_spectrogram(9, 2, 16);
    for (auto& bin : u.data) bin.setConstant(Complex(1.0, 0.0));
    PermutationState state = PermutationState::identity(u.bins(), 9);
    const EnvelopeMatrix env = estimate_beta(u);
    REQUIRE_THROWS_AS(lrj_pass(u, env, state), ConfigError);
  }
}

TEST_CASE("N=1 rlrj never changes anything", "[permutation]") {
  Spectrogram u = envelope_fixture(1, 10, 24, 5);
  const Spectrogram before = u;
  SortResult res = sort_permutations(u, PermMethod::rlrj, 3);
  for (const auto& row : res.trace) REQUIRE(row.changed_bins == 0);
  for (int f = 0; f < u.bins(); ++f) REQUIRE(u.data[f] == before.data[f]);
}

TEST_CASE("already-aligned input is a fixed point", "[permutation]") {
  Spectrogram u = envelope_fixture(3, 40, 60, 6);
  SortResult res = sort_permutations(u, PermMethod::rlrj, 4);
  for (const auto& row : res.trace) REQUIRE(row.changed_bins == 0);
}

TEST_CASE("rlrj restores a scrambled fixture to a global permutation",
          "[permutation]") {
  Spectrogram u = envelope_fixture(3, 120, 90, 7);
  const auto applied = scramble(u, 0.4, 8);
  SortResult res = sort_permutations(u, PermMethod::rlrj, 15);
  REQUIRE(majority_agreement(res, applied) >= 0.95);
  REQUIRE(res.state.is_valid());
}

TEST_CASE("rlrj keeps at least as many bins unchanged as lrj late in the run",
          "[permutation]") {
  Spectrogram base = envelope_fixture(3, 120, 90, 9);
  scramble(base, 0.4, 10);

  Spectrogram u_lrj = base;
  Spectrogram u_rlrj = base;
  const SortResult lrj = sort_permutations(u_lrj, PermMethod::lrj, 12);
  const SortResult rlrj = sort_permutations(u_rlrj, PermMethod::rlrj, 12);
  for (int it = 8; it < 12; ++it)
    REQUIRE(rlrj.trace[it].changed_bins <= lrj.trace[it].changed_bins);
}

TEST_CASE("one rlrj pass swaps at most one pair per bin", "[permutation][property]") {
  Spectrogram u = envelope_fixture(4, 60, 80, 11);
  scramble(u, 0.5, 12);
  PermutationState state = PermutationState::identity(u.bins(), 4);
  const EnvelopeMatrix env = estimate_beta(u);
  rlrj_pass(u, env, state);
  for (int f = 0; f < u.bins(); ++f) {
    int moved = 0;
    for (int i = 0; i < 4; ++i) moved += state.perm[f][i] != i ? 1 : 0;
    REQUIRE((moved == 0 || moved == 2));
  }
  REQUIRE(state.is_valid());
}

TEST_CASE("bijections survive every pass", "[permutation][property]") {
  for (uint32_t seed = 0; seed < 100; ++seed) {
    Spectrogram u = envelope_fixture(3, 12, 40, 300 + seed);
    scramble(u, 0.6, 400 + seed);
    const PermMethod method = seed % 2 == 0 ? PermMethod::lrj : PermMethod::rlrj;
    SortResult res = sort_permutations(u, method, 3);
    REQUIRE(res.state.is_valid());
  }
}

TEST_CASE("global relabeling leaves decisions identical", "[permutation]") {
  Spectrogram u = envelope_fixture(3, 50, 70, 13);
  scramble(u, 0.4, 14);
  const std::vector<int> rho{2, 0, 1};
  Spectrogram u_relabeled = u;
  for (int f = 0; f < u.bins(); ++f) apply_to_bin(u_relabeled.data[f], rho);

  PermutationState s1 = PermutationState::identity(u.bins(), 3);
  PermutationState s2 = PermutationState::identity(u.bins(), 3);
  const EnvelopeMatrix e1 = estimate_beta(u);
  const EnvelopeMatrix e2 = estimate_beta(u_relabeled);
  const int c1 = rlrj_pass(u, e1, s1);
  const int c2 = rlrj_pass(u_relabeled, e2, s2);

  REQUIRE(c1 == c2);
  for (int f = 0; f < u.bins(); ++f)
    REQUIRE(s1.changed_last_pass[f] == s2.changed_last_pass[f]);
  // The relabeled run tracks the base run bin by bin.
  Spectrogram u_expected = u;
  for (int f = 0; f < u.bins(); ++f) apply_to_bin(u_expected.data[f], rho);
  for (int f = 0; f < u.bins(); ++f)
    REQUIRE((u_relabeled.data[f] - u_expected.data[f]).norm() < 1e-12);
}

TEST_CASE("an initial state is applied before the first iteration", "[permutation]") {
  Spectrogram u = envelope_fixture(3, 30, 60, 15);
  const auto applied = scramble(u, 0.5, 16);

  // Perfect initial state: undo the scramble exactly.
  PermutationState init = PermutationState::identity(u.bins(), 3);
  int scrambled_bins = 0;
  for (int f = 0; f < u.bins(); ++f) {
    std::vector<int> inverse(3);
    for (int i = 0; i < 3; ++i) inverse[applied[f][i]] = i;
    init.perm[f] = inverse;
    bool id = true;
    for (int i = 0; i < 3; ++i) id = id && inverse[i] == i;
    scrambled_bins += id ? 0 : 1;
  }

  SortResult res = sort_permutations(u, PermMethod::rlrj, 3, init);
  REQUIRE(res.initial_changed_bins == scrambled_bins);
  for (const auto& row : res.trace) REQUIRE(row.changed_bins == 0);
}
