#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "restorer/dataset.hpp"
#include "restorer/train/adam.hpp"
#include "restorer/train/losses.hpp"

namespace restorer::train {

struct TrainingConfig {
  std::int64_t steps = 2000;
  int batch_size = 4;
  double crop_seconds = 1.0;
  double lambda = 0.01;  // adversarial weight; 0 trains without discriminators
  std::uint64_t seed = 0;
  std::int64_t val_every = 200;
  int val_clips = 16;  // leading test-split pairs used for validation; 0 = all
  std::int64_t checkpoint_every = 500;
  AdamConfig adam;
  model::GeneratorConfig generator;
  model::DiscriminatorConfig discriminator;

  void validate() const;
};

nlohmann::json to_json(const TrainingConfig& c);
TrainingConfig training_config_from_json(const nlohmann::json& j);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepMetrics {
  std::int64_t step = 0;
  double rec = 0.0;
  std::optional<double> adv_g, d_wave, d_stft, val_delta_snr;

  nlohmann::json to_json() const;
};

// Alternating discriminator / generator updates on random crops of the
// training split. The batch of step s depends only on (seed, s), so runs and
// resumed runs are reproducible.
class Trainer {
 public:
  Trainer(TrainingConfig cfg, const data::Dataset& dataset, std::filesystem::path run_dir);
  ~Trainer();

  /// Restores weights, optimizer state and step counter.
  void resume(const std::filesystem::path& checkpoint);

  /// Trains up to cfg.steps, writing metrics.jsonl, config.json and checkpoints.
  std::vector<StepMetrics> run(const std::function<void(const StepMetrics&)>& on_step = {});
  /// One discriminator and one generator update.
  StepMetrics train_step();
  /// Mean delta-SNR (dB) of the generator over the validation clips.
  double validate() const;

  std::int64_t step() const { return step_; }
  const TrainingConfig& config() const { return cfg_; }
  model::Generator<float>& generator() { return *gen_; }
  model::DiscriminatorSet<float>* discriminators() { return disc_.get(); }
  int sample_rate() const { return sample_rate_; }
  std::filesystem::path checkpoint_path(std::int64_t step) const;
  void save(const std::filesystem::path& path) const;

  struct Batch {
    nn::Tensor<float> clean, noisy;  // [batch, crop]
  };
  Batch make_batch(std::int64_t step) const;

 private:
  struct Clip {
    std::vector<float> clean, noisy;
  };

  TrainingConfig cfg_;
  std::filesystem::path run_dir_;
  int sample_rate_ = 0;
  std::size_t crop_ = 0;
  std::vector<Clip> train_, val_;
  std::unique_ptr<model::Generator<float>> gen_;
  std::unique_ptr<model::DiscriminatorSet<float>> disc_;
  Adam<float> adam_g_, adam_d_;
  std::int64_t step_ = 0;
};

}  // namespace restorer::train
