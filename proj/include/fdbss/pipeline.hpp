#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdbss/beamforming.hpp"
#include "fdbss/errors.hpp"
#include "fdbss/evaluation.hpp"
#include "fdbss/ica.hpp"
#include "fdbss/permutation.hpp"
#include "fdbss/scale_fix.hpp"
#include "fdbss/signal.hpp"
#include "fdbss/synth.hpp"
#include "fdbss/wav.hpp"

namespace fdbss {

enum class PermSolver { none, lrj, rlrj, music_rlrj };
enum class ReportFormat { json, csv };

inline const char* to_string(PermSolver m) {
  switch (m) {
    case PermSolver::none: return "none";
    case PermSolver::lrj: return "lrj";
    case PermSolver::rlrj: return "rlrj";
    case PermSolver::music_rlrj: return "music_rlrj";
  }
  return "?";
}
inline const char* to_string(IcaEngine e) {
  return e == IcaEngine::robustica ? "robustica" : "fastica";
}

struct RunConfig {
  std::string input_wav;             // either a mixture file ...
  std::optional<RoomMixSpec> synth;  // ... or a synthetic scene
  int n_sources = 2;
  StftConfig stft;  // sample_rate is overwritten from the input
  IcaConfig ica;
  PermSolver perm_method = PermSolver::rlrj;
  int perm_iterations = 9;
  LikelihoodConvention perm_convention = LikelihoodConvention::log_product;
  double music_fmax_hz = 2000.0;
  std::string geometry_path;
  std::optional<ArrayGeometry> geometry;
  std::string output_dir = ".";
  ReportFormat report_format = ReportFormat::json;
  uint32_t seed = 0;
  int reference_mic = 0;
  std::vector<std::string> reference_paths;  // enables metrics for file input
  int eval_filter_len = 512;
  bool write_outputs = true;

  void validate() const {
    if (n_sources < 1) throw ConfigError("run: n_sources must be >= 1");
    if (perm_iterations < 1) throw ConfigError("run: perm_iterations must be >= 1");
    if (eval_filter_len < 1) throw ConfigError("run: filter_len must be >= 1");
    if (reference_mic < 0) throw ConfigError("run: reference_mic must be >= 0");
    if (input_wav.empty() && !synth)
      throw ConfigError("run: need an input wav or a synth spec");
    if (perm_method == PermSolver::music_rlrj && !geometry && geometry_path.empty())
      throw ConfigError("run: music_rlrj requires an array geometry");
    ica.validate();
  }
};

struct StageTiming {
  double separation_s = 0.0;
  double permutation_s = 0.0;
  double total_s = 0.0;
};

struct SeparationReport {
  std::vector<SourceScore> scores;          // empty without references
  std::vector<SourceScore> mixture_scores;  // raw mixture channels vs references
  int filter_len = 0;
  StageTiming timing;
  std::vector<TraceRow> convergence_trace;
  int degenerate_bins = 0;
  int singular_scale_bins = 0;
  int ica_converged_bins = 0;
  double ica_mean_iterations = 0.0;
  uint64_t perm_score_evaluations = 0;
  int doa_initial_bins = 0;
  int doa_unresolved_bins = 0;
  bool beamforming_requested = false;
  bool beamforming_skipped = false;
  std::string beamforming_skip_reason;
  std::optional<PThetaResult> p_theta;
  std::vector<double> doa_peaks_deg;
  int bins = 0, frames = 0;
  RunConfig config;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Stacks single-channel reference files into one multichannel signal.
inline TimeSignal load_references(const std::vector<std::string>& paths) {
  std::vector<TimeSignal> refs;
  Eigen::Index len = std::numeric_limits<Eigen::Index>::max();
  for (const auto& p : paths) {
    refs.push_back(load_wav(p));
    len = std::min(len, refs.back().samples());
  }
  TimeSignal out;
  out.sample_rate = refs[0].sample_rate;
  int channels = 0;
  for (const auto& r : refs) channels += r.channels();
  out.data.resize(channels, len);
  int row = 0;
  for (const auto& r : refs) {
    if (r.sample_rate != out.sample_rate)
      throw DataError("references: sample rates differ");
    out.data.middleRows(row, r.channels()) = r.data.leftCols(len);
    row += r.channels();
  }
  return out;
}

}  // namespace detail

// Full chain: STFT -> per-bin whitening + ICA -> microphone-domain scale fix
// -> optional MuSIC-initialized permutation alignment -> ISTFT -> metrics.
inline SeparationReport run_separation(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  const auto t_total = std::chrono::steady_clock::now();

  SeparationReport report;
  report.beamforming_requested = cfg.perm_method == PermSolver::music_rlrj;

  TimeSignal mixture;
  TimeSignal references;
  bool have_references = false;
  if (cfg.synth) {
    RoomMixSpec spec = *cfg.synth;
    spec.n_sources = cfg.n_sources;
    const SynthScene scene = synthesize_scene(spec);
    mixture = scene.mixture;
    references = scene.sources;
    have_references = true;
    if (!cfg.geometry && spec.geometry) cfg.geometry = spec.geometry;
  } else {
    mixture = load_wav(cfg.input_wav);
    if (!cfg.reference_paths.empty()) {
      references = detail::load_references(cfg.reference_paths);
      have_references = true;
      if (references.channels() != cfg.n_sources)
        throw ConfigError("run: reference count != n_sources");
    }
  }
  if (mixture.channels() != cfg.n_sources)
    throw DataError("run: determined case requires one microphone per source");
  if (cfg.reference_mic >= mixture.channels())
    throw ConfigError("run: reference_mic out of range");
  if (!cfg.geometry && !cfg.geometry_path.empty())
    cfg.geometry = ArrayGeometry::load(cfg.geometry_path);

  cfg.stft.sample_rate = mixture.sample_rate;
  const Spectrogram X = stft(mixture, cfg.stft);
  report.bins = X.bins();
  report.frames = X.frames();

  // Separation stage: whitening + ICA per bin, then the scale fix.
  const auto t_sep = std::chrono::steady_clock::now();
  const UnmixingSet unmixing = separate_spectrogram(X, cfg.ica, cfg.seed);
  ScaleFixStats scale_stats;
  const SourceImageSet images = map_to_microphone_domain(X, unmixing, &scale_stats);
  report.timing.separation_s = detail::seconds_since(t_sep);
  report.degenerate_bins = unmixing.degenerate_bins();
  report.singular_scale_bins = scale_stats.singular_bins;
  report.ica_converged_bins = unmixing.converged_bins();
  report.ica_mean_iterations = unmixing.mean_iterations();

  Spectrogram rendered = images.at_microphone(cfg.reference_mic);

  // Permutation stage.
  const auto t_perm = std::chrono::steady_clock::now();
  if (cfg.perm_method != PermSolver::none && cfg.n_sources > 1) {
    std::optional<PermutationState> initial;
    if (report.beamforming_requested) {
      const ArrayGeometry& geom = *cfg.geometry;
      if (geom.sensors() != mixture.channels())
        throw ConfigError("run: geometry sensor count != microphones");
      report.p_theta = compute_p_theta(images, geom, cfg.music_fmax_hz);
      const DoaPartition part =
          partition_doa(report.p_theta->p, report.p_theta->theta_deg, cfg.n_sources);
      report.doa_peaks_deg = part.peak_angles;
      if (part.valid) {
        const DoaAlignResult align =
            doa_align(images, part, geom, report.p_theta->f_max_used_hz);
        initial = align.state;
        report.doa_initial_bins = align.aligned_bins;
        report.doa_unresolved_bins = align.unresolved_bins;
      } else {
        report.beamforming_skipped = true;
        report.beamforming_skip_reason =
            "beamforming skipped: insufficient peaks (" +
            std::to_string(part.peak_angles.size()) + " of " +
            std::to_string(cfg.n_sources) + ")";
      }
    }
    const PermMethod method =
        cfg.perm_method == PermSolver::lrj ? PermMethod::lrj : PermMethod::rlrj;
    PermOptions opt;
    opt.convention = cfg.perm_convention;
    const SortResult sorted =
        sort_permutations(rendered, method, cfg.perm_iterations, initial, opt);
    report.convergence_trace = sorted.trace;
    report.perm_score_evaluations = sorted.state.score_evaluations;
  }
  report.timing.permutation_s = detail::seconds_since(t_perm);

  const TimeSignal estimates = istft(rendered, mixture.samples());

  if (cfg.write_outputs) {
    std::filesystem::create_directories(cfg.output_dir);
    for (int j = 0; j < cfg.n_sources; ++j) {
      TimeSignal one;
      one.sample_rate = estimates.sample_rate;
      one.data = estimates.data.row(j);
      save_wav(one, cfg.output_dir + "/source_" + std::to_string(j + 1) + ".wav");
    }
  }

  if (have_references) {
    const SeparationScores est_scores =
        bss_eval(estimates, references, cfg.eval_filter_len);
    report.scores = est_scores.per_source;
    report.filter_len = est_scores.filter_len;
    report.mixture_scores =
        bss_eval(mixture, references, cfg.eval_filter_len).per_source;
  }

  report.timing.total_s = detail::seconds_since(t_total);
  report.config = cfg;
  return report;
}

namespace detail {

inline nlohmann::json scores_to_json(const std::vector<SourceScore>& scores) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& sc : scores)
    arr.push_back({{"estimate", sc.estimate},
                   {"reference", sc.reference},
                   {"sdr_db", sc.sdr_db},
                   {"sir_db", sc.sir_db},
                   {"sar_db", sc.sar_db}});
  return arr;
}

}  // namespace detail

inline void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("report: cannot write " + path);
  out << "iteration,changed_bins,method\n";
  for (const auto& row : trace)
    out << row.iteration << ',' << row.changed_bins << ','
        << (row.method == PermMethod::lrj ? "lrj" : "rlrj") << '\n';
}

inline void write_p_theta_csv(const PThetaResult& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("report: cannot write " + path);
  out << "theta_deg,p\n";
  for (Eigen::Index i = 0; i < p.theta_deg.size(); ++i)
    out << p.theta_deg[i] << ',' << p.p[i] << '\n';
}

// JSON or CSV report plus sidecar CSVs (convergence trace, P(theta)).
// Returns the path of the main report file.
inline std::string emit_report(const SeparationReport& report) {
  const RunConfig& cfg = report.config;
  std::filesystem::create_directories(cfg.output_dir);
  std::string main_path;

  if (cfg.report_format == ReportFormat::json) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["config"] = {
        {"input", cfg.synth ? "synthetic" : cfg.input_wav},
        {"n_sources", cfg.n_sources},
        {"fft_size", cfg.stft.fft_size},
        {"hop_size", cfg.stft.hop_size},
        {"sample_rate", cfg.stft.sample_rate},
        {"engine", to_string(cfg.ica.engine)},
        {"ica_iterations", cfg.ica.iterations()},
        {"ica_tolerance", cfg.ica.tolerance},
        {"perm_method", to_string(cfg.perm_method)},
        {"perm_iterations", cfg.perm_iterations},
        {"perm_convention",
         cfg.perm_convention == LikelihoodConvention::log_product ? "log_product"
                                                                  : "gamma_sum"},
        {"music_fmax_hz", cfg.music_fmax_hz},
        {"reference_mic", cfg.reference_mic},
        {"filter_len", cfg.eval_filter_len},
        {"seed", cfg.seed},
    };
    j["sources"] = detail::scores_to_json(report.scores);
    j["mixture_baseline"] = detail::scores_to_json(report.mixture_scores);
    j["timing"] = {{"separation_s", report.timing.separation_s},
                   {"permutation_s", report.timing.permutation_s},
                   {"total_s", report.timing.total_s}};
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& row : report.convergence_trace)
      trace.push_back({{"iteration", row.iteration},
                       {"changed_bins", row.changed_bins},
                       {"method", row.method == PermMethod::lrj ? "lrj" : "rlrj"}});
    j["convergence_trace"] = trace;
    j["diagnostics"] = {
        {"bins", report.bins},
        {"frames", report.frames},
        {"degenerate_bins", report.degenerate_bins},
        {"singular_scale_bins", report.singular_scale_bins},
        {"ica_converged_bins", report.ica_converged_bins},
        {"ica_mean_iterations", report.ica_mean_iterations},
        {"perm_score_evaluations", report.perm_score_evaluations},
        {"doa_initial_bins", report.doa_initial_bins},
        {"doa_unresolved_bins", report.doa_unresolved_bins},
        {"beamforming_requested", report.beamforming_requested},
        {"beamforming_skipped", report.beamforming_skipped},
        {"beamforming_skip_reason", report.beamforming_skip_reason},
        {"doa_peaks_deg", report.doa_peaks_deg},
    };
    main_path = cfg.output_dir + "/report.json";
    std::ofstream out(main_path);
    if (!out) throw DataError("report: cannot write " + main_path);
    out << j.dump(2) << '\n';
  } else {
    main_path = cfg.output_dir + "/report.csv";
    std::ofstream out(main_path);
    if (!out) throw DataError("report: cannot write " + main_path);
    out << "source,reference,sdr_db,sir_db,sar_db,mixture_sir_db,separation_s,"
           "permutation_s,total_s\n";
    for (size_t i = 0; i < report.scores.size(); ++i) {
      const auto& sc = report.scores[i];
      const double mix_sir =
          i < report.mixture_scores.size() ? report.mixture_scores[i].sir_db : 0.0;
      out << sc.estimate + 1 << ',' << sc.reference + 1 << ',' << sc.sdr_db << ','
          << sc.sir_db << ',' << sc.sar_db << ',' << mix_sir << ','
          << report.timing.separation_s << ',' << report.timing.permutation_s << ','
          << report.timing.total_s << '\n';
    }
  }

  if (!report.convergence_trace.empty())
    write_trace_csv(report.convergence_trace, cfg.output_dir + "/convergence_trace.csv");
  if (report.p_theta)
    write_p_theta_csv(*report.p_theta, cfg.output_dir + "/p_theta.csv");
  return main_path;
}

}  // namespace fdbss
