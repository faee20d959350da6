#include "restorer/train/trainer.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace restorer::train {

void TrainingConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("training: steps must be nonnegative");
  if (batch_size < 1) throw std::invalid_argument("training: batch_size must be at least 1");
  if (!(crop_seconds > 0.0)) throw std::invalid_argument("training: crop_seconds must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("training: lambda must be >= 0");
  if (val_every < 1 || checkpoint_every < 1)
    throw std::invalid_argument("training: val_every and checkpoint_every must be positive");
  if (val_clips < 0) throw std::invalid_argument("training: val_clips must be nonnegative");
  adam.validate();
  generator.validate();
  discriminator.validate();
}

nlohmann::json to_json(const TrainingConfig& c) {
  return {{"steps", c.steps},
          {"batch_size", c.batch_size},
          {"crop_seconds", c.crop_seconds},
          {"lambda", c.lambda},
          {"seed", c.seed},
          {"val_every", c.val_every},
          {"val_clips", c.val_clips},
          {"checkpoint_every", c.checkpoint_every},
          {"adam", {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
          {"generator", model::to_json(c.generator)},
          {"discriminator", model::to_json(c.discriminator)}};
}

TrainingConfig training_config_from_json(const nlohmann::json& j) {
  TrainingConfig c;
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.crop_seconds = j.value("crop_seconds", c.crop_seconds);
  c.lambda = j.value("lambda", c.lambda);
  c.seed = j.value("seed", c.seed);
  c.val_every = j.value("val_every", c.val_every);
  c.val_clips = j.value("val_clips", c.val_clips);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  if (j.contains("adam")) {
    const auto& a = j["adam"];
    c.adam.lr = a.value("lr", c.adam.lr);
    c.adam.beta1 = a.value("beta1", c.adam.beta1);
    c.adam.beta2 = a.value("beta2", c.adam.beta2);
    c.adam.eps = a.value("eps", c.adam.eps);
  }
  if (j.contains("generator")) c.generator = model::generator_config_from_json(j["generator"]);
  if (j.contains("discriminator")) c.discriminator = model::discriminator_config_from_json(j["discriminator"]);
  c.validate();
  return c;
}

nlohmann::json StepMetrics::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"step", step},       {"L_rec", rec},       {"L_adv_G", opt(adv_g)},
          {"L_D_wave", opt(d_wave)}, {"L_D_stft", opt(d_stft)}, {"val_delta_snr", opt(val_delta_snr)}};
}

namespace {

std::vector<float> to_float(const AudioClip& c) { return {c.samples.begin(), c.samples.end()}; }

double snr_of(const std::vector<float>& ref, const std::vector<float>& est) {
  std::vector<double> r(ref.begin(), ref.end()), e(est.begin(), est.end());
  return dsp::snr_db(r, e);
}

bool finite(const nn::Var<float>& v) { return std::isfinite(static_cast<double>(v.item())); }

}  // namespace

Trainer::Trainer(TrainingConfig cfg, const data::Dataset& dataset, std::filesystem::path run_dir)
    : cfg_(std::move(cfg)), run_dir_(std::move(run_dir)), adam_g_(cfg_.adam), adam_d_(cfg_.adam) {
  cfg_.validate();
  const auto train = dataset.split("train");
  if (train.empty()) throw std::invalid_argument("training: dataset has no training pairs");
  for (const auto& r : train) {
    const auto clean = dataset.load_clean(r);
    const auto noisy = dataset.load_noisy(r);
    if (sample_rate_ == 0) sample_rate_ = clean.sample_rate;
    if (clean.sample_rate != sample_rate_ || noisy.sample_rate != sample_rate_)
      throw std::invalid_argument(fmt::format("training: pair {} has a different sample rate", r.pair_id));
    if (clean.size() != noisy.size())
      throw std::invalid_argument(fmt::format("training: pair {} clean and noisy lengths differ", r.pair_id));
    train_.push_back({to_float(clean), to_float(noisy)});
  }
  crop_ = static_cast<std::size_t>(std::lround(cfg_.crop_seconds * sample_rate_));
  if (crop_ < cfg_.generator.min_length())
    throw std::invalid_argument(fmt::format("training: crop of {} samples is shorter than the generator minimum {}",
                                            crop_, cfg_.generator.min_length()));
  for (const auto& c : train_)
    if (c.clean.size() < crop_)
      throw std::invalid_argument(fmt::format("training: a pair has {} samples, fewer than the {}-sample crop",
                                              c.clean.size(), crop_));
  auto test = dataset.split("test");
  if (cfg_.val_clips > 0 && test.size() > static_cast<std::size_t>(cfg_.val_clips)) test.resize(cfg_.val_clips);
  for (const auto& r : test) val_.push_back({to_float(dataset.load_clean(r)), to_float(dataset.load_noisy(r))});

  gen_ = std::make_unique<model::Generator<float>>(cfg_.generator, derive_seed(cfg_.seed, 1));
  if (cfg_.lambda > 0.0)
    disc_ = std::make_unique<model::DiscriminatorSet<float>>(cfg_.discriminator, cfg_.generator,
                                                             derive_seed(cfg_.seed, 2));
}

Trainer::~Trainer() = default;

std::filesystem::path Trainer::checkpoint_path(std::int64_t step) const {
  return run_dir_ / fmt::format("{}.ckpt", step);
}

Trainer::Batch Trainer::make_batch(std::int64_t step) const {
  Rng rng(derive_seed(cfg_.seed ^ 0xBA7C4ULL, static_cast<std::uint64_t>(step)));
  const auto b = static_cast<std::int64_t>(cfg_.batch_size), n = static_cast<std::int64_t>(crop_);
  Batch batch{nn::Tensor<float>({b, n}), nn::Tensor<float>({b, n})};
  for (std::int64_t i = 0; i < b; ++i) {
    const auto& clip = train_[rng.below(train_.size())];
    const auto offset = rng.below(clip.clean.size() - crop_ + 1);
    std::copy_n(clip.clean.begin() + offset, crop_, batch.clean.data() + i * n);
    std::copy_n(clip.noisy.begin() + offset, crop_, batch.noisy.data() + i * n);
  }
  return batch;
}

StepMetrics Trainer::train_step() {
  const std::int64_t s = step_ + 1;
  auto batch = make_batch(s);
  StepMetrics m;
  m.step = s;

  nn::Tape<float> gt;
  auto x = gt.constant(std::move(batch.noisy));
  auto y = gt.constant(std::move(batch.clean));
  auto out = gen_->forward(gt, x);
  auto pyramid = build_pyramid(y, out, cfg_.generator);
  auto rec = rec_loss(pyramid.clean_spec, pyramid.output_spec);
  m.rec = rec.item();
  if (!finite(rec)) throw TrainingDiverged(fmt::format("reconstruction loss is {} at step {}", m.rec, s));

  nn::Var<float> adv;
  if (disc_) {
    nn::Tape<float> dt;
    std::vector<nn::Var<float>> real, fake;
    for (std::size_t k = 0; k < pyramid.clean.size(); ++k) {
      real.push_back(dt.constant(pyramid.clean[k].value()));
      fake.push_back(dt.constant(pyramid.output[k].value()));
    }
    const auto lr = discriminate(dt, *disc_, real);
    const auto lf = discriminate(dt, *disc_, fake);
    auto d_wave = hinge_disc_loss(lr.wave, lf.wave);
    auto d_stft = hinge_disc_loss(lr.stft, lf.stft);
    m.d_wave = d_wave.item();
    m.d_stft = d_stft.item();
    if (!finite(d_wave) || !finite(d_stft))
      throw TrainingDiverged(fmt::format("discriminator loss is not finite at step {}", s));
    disc_->parameters().zero_grad();
    dt.backward(nn::add(d_wave, d_stft));
    adam_d_.step(disc_->parameters());

    const auto lg = discriminate(gt, *disc_, pyramid.output);
    adv = nn::add(hinge_gen_loss(lg.wave), hinge_gen_loss(lg.stft));
    m.adv_g = adv.item();
    if (!finite(adv)) throw TrainingDiverged(fmt::format("adversarial loss is not finite at step {}", s));
  }
  auto total = total_gen_loss(rec, adv, static_cast<float>(cfg_.lambda));
  gen_->parameters().zero_grad();
  gt.backward(total);
  try {
    adam_g_.step(gen_->parameters());
  } catch (const NonFiniteGradient& e) {
    throw TrainingDiverged(fmt::format("step {}: {}", s, e.what()));
  }
  step_ = s;
  return m;
}

double Trainer::validate() const {
  if (val_.empty()) throw std::logic_error("training: no validation clips");
  double total = 0.0;
  for (const auto& c : val_) {
    const auto enhanced = gen_->enhance(c.noisy);
    total += snr_of(c.clean, enhanced) - snr_of(c.clean, c.noisy);
  }
  return total / static_cast<double>(val_.size());
}

void Trainer::save(const std::filesystem::path& path) const {
  nn::Checkpoint ckpt;
  ckpt.header = {{"kind", "training"},
                 {"step", step_},
                 {"generator", model::to_json(cfg_.generator)},
                 {"training", to_json(cfg_)},
                 {"sample_rate", sample_rate_},
                 {"adam_g_steps", adam_g_.steps()},
                 {"adam_d_steps", adam_d_.steps()}};
  gen_->parameters().export_to(ckpt);
  adam_g_.export_to(ckpt, gen_->parameters(), "adam_g.");
  if (disc_) {
    ckpt.header["discriminator"] = model::to_json(cfg_.discriminator);
    disc_->parameters().export_to(ckpt, "disc.");
    adam_d_.export_to(ckpt, disc_->parameters(), "adam_d.");
  }
  nn::save_checkpoint(path, ckpt);
}

void Trainer::resume(const std::filesystem::path& checkpoint) {
  const auto ckpt = nn::load_checkpoint(checkpoint);
  if (ckpt.header.value("kind", "") != "training")
    throw nn::CheckpointError(checkpoint.string() + " is not a training checkpoint");
  if (ckpt.header["generator"] != model::to_json(cfg_.generator))
    throw nn::CheckpointError(checkpoint.string() + ": generator configuration differs from the training config");
  if (static_cast<bool>(disc_) != ckpt.header.contains("discriminator"))
    throw nn::CheckpointError(checkpoint.string() + ": discriminator presence differs from the training config");
  gen_->load_weights(ckpt);
  adam_g_.import_from(ckpt, gen_->parameters(), "adam_g.", ckpt.header["adam_g_steps"].get<std::int64_t>());
  if (disc_) {
    disc_->parameters().import_from(ckpt, "disc.");
    adam_d_.import_from(ckpt, disc_->parameters(), "adam_d.", ckpt.header["adam_d_steps"].get<std::int64_t>());
  }
  step_ = ckpt.header["step"].get<std::int64_t>();
}

std::vector<StepMetrics> Trainer::run(const std::function<void(const StepMetrics&)>& on_step) {
  std::filesystem::create_directories(run_dir_);
  {
    std::ofstream cfg_out(run_dir_ / "config.json");
    cfg_out << to_json(cfg_).dump(2) << '\n';
  }
  std::ofstream log(run_dir_ / "metrics.jsonl", step_ == 0 ? std::ios::trunc : std::ios::app);
  if (!log) throw std::runtime_error("cannot write " + (run_dir_ / "metrics.jsonl").string());
  if (step_ == 0) save(checkpoint_path(0));
  std::int64_t last_saved = step_;

  std::vector<StepMetrics> history;
  while (step_ < cfg_.steps) {
    StepMetrics m;
    try {
      m = train_step();
    } catch (const TrainingDiverged& e) {
      throw TrainingDiverged(fmt::format("{}; last good checkpoint: {}", e.what(), checkpoint_path(last_saved).string()));
    }
    if (!val_.empty() && (step_ % cfg_.val_every == 0 || step_ == cfg_.steps)) m.val_delta_snr = validate();
    log << m.to_json().dump() << '\n';
    log.flush();
    if (step_ % cfg_.checkpoint_every == 0 || step_ == cfg_.steps) {
      save(checkpoint_path(step_));
      last_saved = step_;
    }
    if (m.val_delta_snr) spdlog::info("step {}: rec {:.5f}, validation delta SNR {:.2f} dB", step_, m.rec, *m.val_delta_snr);
    if (on_step) on_step(m);
    history.push_back(m);
  }
  return history;
}

}  // namespace restorer::train
