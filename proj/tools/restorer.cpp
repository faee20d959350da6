#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "restorer/baselines.hpp"
#include "restorer/dataset.hpp"
#include "restorer/evaluation.hpp"
#include "restorer/model/generator.hpp"
#include "restorer/noise.hpp"
#include "restorer/train/trainer.hpp"
#include "restorer/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace restorer;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Runs a configuration check and reports failures as usage errors.
template <class F>
void check_usage(F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

// JSON config files: top-level keys are global flags, objects named after a
// subcommand hold that subcommand's flags.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void flatten(const json& obj, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_object()) {
        auto p = parents;
        p.push_back(key);
        flatten(value, p, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array())
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      else
        item.inputs.push_back(scalar(value));
      out.push_back(std::move(item));
    }
  }
};

struct Globals {
  std::uint64_t seed = 0;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool verbose = false;
};

// ---- extract-noise ----

struct ExtractArgs {
  fs::path input_dir, output_dir;
  double quantile = 0.005;
  double min_duration_ms = 100.0;
  double window_ms = 100.0;
};

int run_extract(const ExtractArgs& a) {
  noise::NoiseExtractionConfig cfg;
  cfg.quantile = a.quantile;
  cfg.min_duration = a.min_duration_ms / 1000.0;
  cfg.std_window = a.window_ms / 1000.0;
  check_usage([&] { cfg.validate(); });
  const auto files = data::list_wavs(a.input_dir);
  if (files.empty()) spdlog::warn("no WAV files in {}", a.input_dir.string());
  const auto bank = noise::scan_corpus(files, cfg, a.output_dir);
  std::cout << fmt::format("{} noise segments from {} files ({} skipped) -> {}\n", bank.segments.size(), files.size(),
                           bank.skipped.size(), (a.output_dir / "manifest.jsonl").string());
  return 0;
}

// ---- synth-dataset ----

struct SynthArgs {
  fs::path clean_dir, noise_bank, out;
  std::size_t pairs = 0;
  double clip_seconds = 5.0;
  double test_fraction = 0.2;
};

int run_synth(const SynthArgs& a, const Globals& g) {
  data::PairSynthesisConfig cfg;
  cfg.clip_seconds = a.clip_seconds;
  cfg.test_fraction = a.test_fraction;
  cfg.seed = g.seed;
  check_usage([&] { cfg.validate(); });
  if (a.pairs == 0) throw UsageError("--pairs must be positive");
  const auto bank = noise::load_noise_bank(a.noise_bank);
  if (bank.segments.empty()) throw std::runtime_error("noise bank " + a.noise_bank.string() + " has no segments");
  const auto ds = data::build_dataset(data::list_wavs(a.clean_dir), bank, cfg, a.pairs, a.out);
  std::cout << fmt::format("{} pairs ({} train, {} test) -> {}\n", ds.pairs.size(), ds.split("train").size(),
                           ds.split("test").size(), a.out.string());
  return 0;
}

// ---- train ----

struct TrainArgs {
  fs::path dataset, out_run, resume;
  int scales = 2;
  double lambda = 0.01;
  std::int64_t steps = 2000;
  int batch_size = 4;
  double crop_seconds = 1.0;
  std::int64_t val_every = 200;
  int val_clips = 16;
  std::int64_t checkpoint_every = 500;
  double lr = 1e-4;
  int base_window = 2048;
  std::vector<int> channels{16, 32, 64, 64};
  std::vector<std::string> downsample;
  bool bypass_phase = false;
  std::vector<int> disc_channels{16, 32, 64, 64};
  int wave_base_channels = 8;
  int wave_layers = 4;
  std::int64_t log_every = 50;
};

std::vector<model::Downsample> schedule(const std::vector<std::string>& names, std::size_t n) {
  static const std::vector<model::Downsample> fallback{model::Downsample::Freq, model::Downsample::TimeFreq,
                                                       model::Downsample::TimeFreq, model::Downsample::Freq};
  std::vector<model::Downsample> out;
  if (names.empty()) {
    if (n > fallback.size()) throw std::invalid_argument("--downsample is required for more than 4 blocks");
    out.assign(fallback.begin(), fallback.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }
  for (const auto& s : names) out.push_back(model::downsample_from_string(s));
  return out;
}

int run_train(const TrainArgs& a, const Globals& g) {
  train::TrainingConfig cfg;
  cfg.steps = a.steps;
  cfg.batch_size = a.batch_size;
  cfg.crop_seconds = a.crop_seconds;
  cfg.lambda = a.lambda;
  cfg.seed = g.seed;
  cfg.val_every = a.val_every;
  cfg.val_clips = a.val_clips;
  cfg.checkpoint_every = a.checkpoint_every;
  cfg.adam.lr = a.lr;
  check_usage([&] {
    cfg.generator.scales = a.scales;
    cfg.generator.base_window = a.base_window;
    cfg.generator.channels = a.channels;
    cfg.generator.downsample = schedule(a.downsample, a.channels.size());
    cfg.generator.bypass_phase = a.bypass_phase;
    cfg.discriminator.stft_channels = a.disc_channels;
    cfg.discriminator.stft_downsample = schedule({}, a.disc_channels.size());
    cfg.discriminator.wave_base_channels = a.wave_base_channels;
    cfg.discriminator.wave_layers = a.wave_layers;
    cfg.validate();
  });
  const auto ds = data::load_dataset(a.dataset);
  train::Trainer trainer(cfg, ds, a.out_run);
  if (!a.resume.empty()) {
    trainer.resume(a.resume);
    std::cout << fmt::format("resumed at step {}\n", trainer.step());
  }
  const auto t0 = std::chrono::steady_clock::now();
  trainer.run([&](const train::StepMetrics& m) {
    if (m.val_delta_snr || (a.log_every > 0 && m.step % a.log_every == 0) || m.step == cfg.steps) {
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::string line = fmt::format("step {:>6}  L_rec {:.5f}", m.step, m.rec);
      if (m.adv_g) line += fmt::format("  L_adv_G {:.4f}  L_D_wave {:.4f}  L_D_stft {:.4f}", *m.adv_g, *m.d_wave, *m.d_stft);
      if (m.val_delta_snr) line += fmt::format("  val dSNR {:.2f} dB", *m.val_delta_snr);
      std::cout << line << fmt::format("  ({:.0f} s)\n", elapsed) << std::flush;
    }
  });
  std::cout << fmt::format("done at step {}; checkpoints in {}\n", trainer.step(), a.out_run.string());
  return 0;
}

// ---- denoise / baseline ----

struct DenoiseArgs {
  fs::path checkpoint, in, out;
};

int run_denoise(const DenoiseArgs& a) {
  const auto gen = model::Generator<float>::load(a.checkpoint);
  const auto clip = read_wav(a.in);
  std::vector<float> x(clip.samples.begin(), clip.samples.end());
  const auto t0 = std::chrono::steady_clock::now();
  const auto y = gen->enhance(x);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_wav(a.out, AudioClip(std::vector<double>(y.begin(), y.end()), clip.sample_rate));
  std::cout << fmt::format("{:.2f} s of audio in {:.2f} s -> {}\n", clip.duration_s(), elapsed, a.out.string());
  return 0;
}

struct BaselineArgs {
  std::string method;
  fs::path in, out;
};

AudioClip apply_baseline(const std::string& method, const AudioClip& x) {
  if (method == "logmmse") return baselines::logmmse_denoise(x);
  if (method == "wiener") return baselines::wiener_denoise(x);
  if (method == "identity") return x;
  throw UsageError("unknown method " + method);
}

int run_baseline(const BaselineArgs& a) {
  write_wav(a.out, apply_baseline(a.method, read_wav(a.in)));
  std::cout << fmt::format("{} -> {}\n", a.method, a.out.string());
  return 0;
}

// ---- evaluate ----

struct EvaluateArgs {
  fs::path manifest, report, table, checkpoint;
  std::vector<std::string> methods;
  std::string split = "test";
  std::string model_name = "model";
  std::string embedding_cmd;
};

int run_evaluate(const EvaluateArgs& a) {
  const auto root = fs::is_directory(a.manifest) ? a.manifest : a.manifest.parent_path();
  const bool needs_model = std::count(a.methods.begin(), a.methods.end(), "model") > 0;
  if (needs_model && a.checkpoint.empty()) throw UsageError("method 'model' needs --checkpoint");
  const auto ds = data::load_dataset(root);
  std::unique_ptr<model::Generator<float>> gen;
  if (needs_model) gen = model::Generator<float>::load(a.checkpoint);

  eval::EvalReport report;
  for (const auto& method : a.methods) {
    eval::ObjectiveOptions opts;
    opts.method = method == "model" ? a.model_name : method;
    opts.split = a.split == "all" ? "" : a.split;
    if (!a.embedding_cmd.empty())
      opts.embedding = eval::external_embedding(a.embedding_cmd, fs::temp_directory_path() / "restorer_embedding");
    eval::DenoiseFn fn;
    if (method == "model") {
      fn = [&](const AudioClip& x) {
        std::vector<float> in(x.samples.begin(), x.samples.end());
        const auto y = gen->enhance(in);
        return AudioClip(std::vector<double>(y.begin(), y.end()), x.sample_rate);
      };
    } else {
      fn = [method](const AudioClip& x) { return apply_baseline(method, x); };
    }
    report.methods.push_back(eval::eval_objective(ds, fn, opts));
  }
  if (!a.report.parent_path().empty()) fs::create_directories(a.report.parent_path());
  std::ofstream(a.report) << report.to_json().dump(2) << "\n";
  const auto table = report.to_table();
  if (!a.table.empty()) std::ofstream(a.table) << table;
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectrogram U-Net denoiser for historical music recordings"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with flag values; explicit flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("-v,--verbose", g.verbose, "Debug logging");

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract-noise", "Mine quiet segments from noisy recordings into a noise bank");
  extract->add_option("--input-dir", ex.input_dir, "Directory of WAV recordings")->required()->check(CLI::ExistingDirectory);
  extract->add_option("--output-dir", ex.output_dir, "Noise bank directory")->required();
  extract->add_option("--quantile", ex.quantile, "Share of windows below the quiet threshold")->capture_default_str();
  extract->add_option("--min-duration-ms", ex.min_duration_ms, "Shortest kept segment")->capture_default_str();
  extract->add_option("--window-ms", ex.window_ms, "Rolling standard deviation window")->capture_default_str();

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth-dataset", "Synthesize clean/noisy training pairs");
  synth->add_option("--clean-dir", sy.clean_dir, "Directory of clean WAV recordings")->required()->check(CLI::ExistingDirectory);
  synth->add_option("--noise-bank", sy.noise_bank, "Noise bank directory or manifest")->required()->check(CLI::ExistingPath);
  synth->add_option("--pairs", sy.pairs, "Number of pairs")->required();
  synth->add_option("--out", sy.out, "Dataset directory")->required();
  synth->add_option("--clip-seconds", sy.clip_seconds, "Pair length")->capture_default_str();
  synth->add_option("--test-fraction", sy.test_fraction, "Share of source recordings held out")->capture_default_str();

  TrainArgs tr;
  auto* trn = app.add_subcommand("train", "Train the denoiser");
  trn->add_option("--dataset", tr.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  trn->add_option("--out-run", tr.out_run, "Run directory for checkpoints and metrics")->required();
  trn->add_option("--scales", tr.scales, "Number of scales K")->capture_default_str();
  trn->add_option("--lambda", tr.lambda, "Adversarial loss weight; 0 disables the discriminators")->capture_default_str();
  trn->add_option("--steps", tr.steps, "Total optimizer steps")->capture_default_str();
  trn->add_option("--batch-size", tr.batch_size, "Clips per step")->capture_default_str();
  trn->add_option("--crop-seconds", tr.crop_seconds, "Random crop length")->capture_default_str();
  trn->add_option("--val-every", tr.val_every, "Validation interval in steps")->capture_default_str();
  trn->add_option("--val-clips", tr.val_clips, "Validation clips (0 = whole test split)")->capture_default_str();
  trn->add_option("--checkpoint-every", tr.checkpoint_every, "Checkpoint interval in steps")->capture_default_str();
  trn->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  trn->add_option("--base-window", tr.base_window, "STFT window of the finest scale before splitting")->capture_default_str();
  trn->add_option("--channels", tr.channels, "U-Net channels per encoder block")->capture_default_str();
  trn->add_option("--downsample", tr.downsample, "Per block: freq or time_freq");
  trn->add_flag("--bypass-phase", tr.bypass_phase, "Enhance magnitudes only and reuse the noisy phase");
  trn->add_option("--disc-channels", tr.disc_channels, "STFT discriminator channels per block")->capture_default_str();
  trn->add_option("--wave-base-channels", tr.wave_base_channels, "Waveform discriminator base width")->capture_default_str();
  trn->add_option("--wave-layers", tr.wave_layers, "Waveform discriminator strided layers")->capture_default_str();
  trn->add_option("--resume", tr.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  trn->add_option("--log-every", tr.log_every, "Progress line interval in steps")->capture_default_str();

  DenoiseArgs dn;
  auto* den = app.add_subcommand("denoise", "Denoise a WAV file with a trained checkpoint");
  den->add_option("--checkpoint", dn.checkpoint, "Model or training checkpoint")->required()->check(CLI::ExistingFile);
  den->add_option("--in", dn.in, "Input WAV")->required()->check(CLI::ExistingFile);
  den->add_option("--out", dn.out, "Output WAV")->required();

  BaselineArgs bl;
  auto* base = app.add_subcommand("baseline", "Denoise a WAV file with a signal-processing baseline");
  base->add_option("--method", bl.method, "logmmse or wiener")->required()->check(CLI::IsMember({"logmmse", "wiener"}));
  base->add_option("--in", bl.in, "Input WAV")->required()->check(CLI::ExistingFile);
  base->add_option("--out", bl.out, "Output WAV")->required();

  EvaluateArgs ev;
  auto* evl = app.add_subcommand("evaluate", "Delta SNR report over a dataset split");
  evl->add_option("--manifest", ev.manifest, "Dataset directory or its manifest.jsonl")->required()->check(CLI::ExistingPath);
  evl->add_option("--method", ev.methods, "identity, logmmse, wiener or model (repeatable)")
      ->required()
      ->check(CLI::IsMember({"identity", "logmmse", "wiener", "model"}));
  evl->add_option("--checkpoint", ev.checkpoint, "Checkpoint for the model method")->check(CLI::ExistingFile);
  evl->add_option("--model-name", ev.model_name, "Row label of the model method")->capture_default_str();
  evl->add_option("--split", ev.split, "test, train or all")->check(CLI::IsMember({"test", "train", "all"}))->capture_default_str();
  evl->add_option("--report", ev.report, "JSON report path")->required();
  evl->add_option("--table", ev.table, "Also write the text table here");
  evl->add_option("--embedding-cmd", ev.embedding_cmd,
                  "Program called as CMD clean.wav estimate.wav that prints a distance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);
  spdlog::debug("seed {}, threads {}", g.seed, g.threads);

  try {
    if (*extract) return run_extract(ex);
    if (*synth) return run_synth(sy, g);
    if (*trn) return run_train(tr, g);
    if (*den) return run_denoise(dn);
    if (*base) return run_baseline(bl);
    if (*evl) return run_evaluate(ev);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
