// Command-line front end: separate / synth / eval / doa.
#include <CLI11.hpp>

#include <iomanip>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "fdbss/fdbss.hpp"

namespace {

using namespace fdbss;

const std::map<std::string, IcaEngine> kEngines{{"robustica", IcaEngine::robustica},
                                                {"fastica", IcaEngine::fastica}};
const std::map<std::string, PermSolver> kPermMethods{
    {"none", PermSolver::none},
    {"lrj", PermSolver::lrj},
    {"rlrj", PermSolver::rlrj},
    {"music-rlrj", PermSolver::music_rlrj}};
const std::map<std::string, LikelihoodConvention> kConventions{
    {"log-product", LikelihoodConvention::log_product},
    {"gamma-sum", LikelihoodConvention::gamma_sum}};
const std::map<std::string, ReportFormat> kFormats{{"json", ReportFormat::json},
                                                   {"csv", ReportFormat::csv}};
const std::map<std::string, RirModel> kRirModels{
    {"random-exponential-decay", RirModel::random_exponential_decay},
    {"delay-plus-echoes", RirModel::delay_plus_echoes},
    {"anechoic-farfield", RirModel::anechoic_farfield}};

struct SynthFlags {
  int n_mics = 3;
  std::string rir_model = "random-exponential-decay";
  int rir_length = 256;
  double decay_time = 64.0;
  double duration_s = 10.0;
  double sample_rate = 16000.0;
  double noise_snr_db = 1e9;
  std::vector<double> angles_deg;
};

void add_synth_flags(CLI::App* cmd, SynthFlags& f) {
  cmd->add_option("--n-mics", f.n_mics, "Microphone count");
  cmd->add_option("--rir-model", f.rir_model, "Room impulse response model")
      ->check(CLI::IsMember(
          {"random-exponential-decay", "delay-plus-echoes", "anechoic-farfield"}));
  cmd->add_option("--rir-length", f.rir_length, "RIR length in samples");
  cmd->add_option("--decay-time", f.decay_time, "Exponential decay constant (samples)");
  cmd->add_option("--duration", f.duration_s, "Material length in seconds");
  cmd->add_option("--sample-rate", f.sample_rate, "Sample rate in Hz");
  cmd->add_option("--noise-snr", f.noise_snr_db, "White noise floor SNR in dB");
  cmd->add_option("--angles", f.angles_deg, "Source angles in degrees");
}

RoomMixSpec to_spec(const SynthFlags& f, int n_sources, uint32_t seed,
                    const std::string& geometry_path) {
  RoomMixSpec spec;
  spec.n_sources = n_sources;
  spec.n_mics = f.n_mics;
  spec.rir_model = kRirModels.at(f.rir_model);
  spec.rir_length = f.rir_length;
  spec.decay_time = f.decay_time;
  spec.duration_s = f.duration_s;
  spec.sample_rate = f.sample_rate;
  spec.noise_snr_db = f.noise_snr_db;
  spec.seed = seed;
  spec.source_angles_deg = f.angles_deg;
  if (!geometry_path.empty()) spec.geometry = ArrayGeometry::load(geometry_path);
  return spec;
}

void print_scores(const std::string& label, const std::vector<SourceScore>& scores) {
  if (scores.empty()) return;
  std::cout << label << "\n";
  for (const auto& sc : scores)
    std::cout << "  source " << sc.estimate + 1 << " (ref " << sc.reference + 1
              << "): SDR " << std::setprecision(4) << sc.sdr_db << " dB, SIR "
              << sc.sir_db << " dB, SAR " << sc.sar_db << " dB\n";
}

int run_separate(const RunConfig& cfg) {
  const SeparationReport report = run_separation(cfg);
  const std::string path = emit_report(report);
  print_scores("separated sources:", report.scores);
  print_scores("mixture baseline:", report.mixture_scores);
  if (report.beamforming_skipped)
    std::cout << report.beamforming_skip_reason << "\n";
  std::cout << "separation time " << report.timing.separation_s << " s, permutation time "
            << report.timing.permutation_s << " s, total " << report.timing.total_s
            << " s\n";
  std::cout << "report written to " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequency-domain convolutive blind audio source separation"};
  app.require_subcommand(1);

  // ---- separate ----
  auto* sep = app.add_subcommand("separate", "Separate a mixture (file or synthetic)");
  sep->set_config("--config");
  RunConfig cfg;
  SynthFlags synth_flags;
  bool use_synth = false;
  std::string engine = "robustica", perm_method = "rlrj", convention = "log-product";
  std::string report_format = "json";
  sep->add_option("--input", cfg.input_wav, "Multichannel mixture wav");
  sep->add_flag("--synth", use_synth, "Use a synthetic scene instead of a file");
  sep->add_option("--n-sources", cfg.n_sources, "Source count")->required();
  sep->add_option("--references", cfg.reference_paths,
                  "Reference wavs (enables metrics for file input)");
  sep->add_option("--engine", engine)->check(CLI::IsMember({"robustica", "fastica"}));
  sep->add_option("--max-iterations", cfg.ica.max_iterations,
                  "ICA iterations (0 = engine default)");
  sep->add_option("--tolerance", cfg.ica.tolerance, "ICA early-stop tolerance");
  sep->add_option("--fft-size", cfg.stft.fft_size, "STFT size (default 4096)");
  sep->add_option("--hop-size", cfg.stft.hop_size, "STFT hop (default fft/4)")
      ->default_val(0);
  sep->add_option("--perm-method", perm_method)
      ->check(CLI::IsMember({"none", "lrj", "rlrj", "music-rlrj"}));
  sep->add_option("--perm-iterations", cfg.perm_iterations, "Alignment iterations");
  sep->add_option("--perm-convention", convention)
      ->check(CLI::IsMember({"log-product", "gamma-sum"}));
  sep->add_option("--music-fmax", cfg.music_fmax_hz, "DOA aggregation bound in Hz");
  sep->add_option("--geometry", cfg.geometry_path, "Array geometry file");
  sep->add_option("--output-dir", cfg.output_dir, "Output directory");
  sep->add_option("--report-format", report_format)->check(CLI::IsMember({"json", "csv"}));
  sep->add_option("--seed", cfg.seed, "Random seed");
  sep->add_option("--reference-mic", cfg.reference_mic, "Rendered microphone index");
  sep->add_option("--filter-len", cfg.eval_filter_len,
                  "Allowed distortion filter length for metrics");
  add_synth_flags(sep, synth_flags);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene as wav files");
  SynthFlags gen_flags;
  int gen_sources = 3;
  uint32_t gen_seed = 0;
  std::string gen_outdir = ".", gen_geometry;
  synth->add_option("--n-sources", gen_sources, "Source count");
  synth->add_option("--seed", gen_seed, "Random seed");
  synth->add_option("--output-dir", gen_outdir, "Output directory");
  synth->add_option("--geometry", gen_geometry, "Array geometry file");
  add_synth_flags(synth, gen_flags);

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "Score estimates against references");
  std::vector<std::string> est_paths, ref_paths;
  int eval_filter_len = 512;
  eval->add_option("--estimates", est_paths, "Estimate wavs")->required();
  eval->add_option("--references", ref_paths, "Reference wavs")->required();
  eval->add_option("--filter-len", eval_filter_len, "Allowed distortion filter length");

  // ---- doa ----
  auto* doa = app.add_subcommand("doa", "MuSIC P(theta) of a multichannel recording");
  std::string doa_input, doa_geometry, doa_outdir = ".";
  int doa_sources = 1;
  double doa_fmax = 2000.0, doa_step = 1.0;
  int doa_fft = 4096;
  doa->add_option("--input", doa_input, "Multichannel wav")->required();
  doa->add_option("--geometry", doa_geometry, "Array geometry file")->required();
  doa->add_option("--n-sources", doa_sources, "Expected source count");
  doa->add_option("--fmax", doa_fmax, "Aggregation bound in Hz");
  doa->add_option("--theta-step", doa_step, "Angular grid step in degrees");
  doa->add_option("--fft-size", doa_fft, "STFT size");
  doa->add_option("--output-dir", doa_outdir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sep->parsed()) {
      cfg.ica.engine = kEngines.at(engine);
      cfg.perm_method = kPermMethods.at(perm_method);
      cfg.perm_convention = kConventions.at(convention);
      cfg.report_format = kFormats.at(report_format);
      if (cfg.stft.hop_size <= 0) cfg.stft.hop_size = cfg.stft.fft_size / 4;
      if (use_synth)
        cfg.synth = to_spec(synth_flags, cfg.n_sources, cfg.seed, cfg.geometry_path);
      else if (cfg.input_wav.empty())
        throw ConfigError("separate: need --input or --synth");
      return run_separate(cfg);
    }
    if (synth->parsed()) {
      const RoomMixSpec spec = to_spec(gen_flags, gen_sources, gen_seed, gen_geometry);
      const SynthScene scene = synthesize_scene(spec);
      std::filesystem::create_directories(gen_outdir);
      save_wav(scene.mixture, gen_outdir + "/mixture.wav");
      for (int j = 0; j < gen_sources; ++j) {
        TimeSignal one;
        one.sample_rate = scene.sources.sample_rate;
        one.data = scene.sources.data.row(j);
        save_wav(one, gen_outdir + "/true_source_" + std::to_string(j + 1) + ".wav");
      }
      std::cout << "wrote mixture and " << gen_sources << " sources to " << gen_outdir
                << "\n";
      return 0;
    }
    if (eval->parsed()) {
      const TimeSignal estimates = fdbss::detail::load_references(est_paths);
      const TimeSignal references = fdbss::detail::load_references(ref_paths);
      const SeparationScores scores = bss_eval(estimates, references, eval_filter_len);
      print_scores("scores:", scores.per_source);
      return 0;
    }
    if (doa->parsed()) {
      const TimeSignal x = load_wav(doa_input);
      const ArrayGeometry geom = ArrayGeometry::load(doa_geometry);
      if (geom.sensors() != x.channels())
        throw ConfigError("doa: geometry sensor count != channels");
      StftConfig stft_cfg;
      stft_cfg.fft_size = doa_fft;
      stft_cfg.hop_size = doa_fft / 4;
      stft_cfg.sample_rate = x.sample_rate;
      const Spectrogram X = stft(x, stft_cfg);

      // Mixture-level MuSIC: the signal subspace holds up to M-1 dimensions.
      const int dims = std::min(doa_sources, geom.sensors() - 1);
      const double f_max = std::min(doa_fmax, geom.aliasing_bound_hz());
      PThetaResult agg;
      agg.theta_deg = theta_grid(doa_step);
      agg.p = Eigen::VectorXd::Zero(agg.theta_deg.size());
      agg.f_max_used_hz = f_max;
      for (int f = 0; f < X.bins(); ++f) {
        if (X.bin_frequency(f) > f_max) break;
        const MusicSpectrum spec =
            music_spectrum_bin(X.data[f], X.bin_frequency(f), geom, dims, doa_step);
        if (!spec.degenerate) agg.p += spec.values;
        ++agg.bins_used;
      }
      std::filesystem::create_directories(doa_outdir);
      write_p_theta_csv(agg, doa_outdir + "/p_theta.csv");
      const DoaPartition part = partition_doa(agg.p, agg.theta_deg, doa_sources);
      std::cout << "aggregated " << agg.bins_used << " bins up to " << agg.f_max_used_hz
                << " Hz\n";
      std::cout << "peaks (deg):";
      for (double a : part.peak_angles) std::cout << ' ' << a;
      std::cout << "\npartition " << (part.valid ? "valid" : "invalid") << "\n";
      std::cout << "p_theta written to " << doa_outdir << "/p_theta.csv\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
