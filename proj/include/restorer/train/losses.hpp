#pragma once

#include <vector>

#include "restorer/model/discriminator.hpp"
#include "restorer/model/generator.hpp"

namespace restorer::train {

// Per-scale clean targets y_k and outputs yhat_k with their spectrograms.
template <typename T>
struct ScalePyramid {
  std::vector<nn::Var<T>> clean;     // y_k [N, L_k]
  std::vector<nn::Var<T>> output;    // yhat_k [N, L_k]
  std::vector<nn::Var<T>> clean_spec;
  std::vector<nn::Var<T>> output_spec;
};

/// y_k = down^k(y) and yhat_k = down^k(composite_k), spectra with the generator's STFT.
template <typename T>
ScalePyramid<T> build_pyramid(const nn::Var<T>& clean, const model::MultiscaleOutput<T>& out,
                              const model::GeneratorConfig& cfg);

/// sum_k sum(|re| + |im|) / (frames * bins), averaged over the batch.
template <typename T>
nn::Var<T> rec_loss(const std::vector<nn::Var<T>>& clean_spec, const std::vector<nn::Var<T>>& output_spec);

/// mean(max(0, 1 - real)) + mean(max(0, 1 + fake)), summed over the list.
template <typename T>
nn::Var<T> hinge_disc_loss(const std::vector<nn::Var<T>>& real_logits, const std::vector<nn::Var<T>>& fake_logits);

/// sum of mean(max(0, 1 - fake)).
template <typename T>
nn::Var<T> hinge_gen_loss(const std::vector<nn::Var<T>>& fake_logits);

template <typename T>
nn::Var<T> total_gen_loss(const nn::Var<T>& rec, const nn::Var<T>& adv, T lambda);

template <typename T>
struct DiscLogits {
  std::vector<nn::Var<T>> wave;
  std::vector<nn::Var<T>> stft;
};

/// Evaluates every scale's discriminators on the given per-scale signals.
template <typename T>
DiscLogits<T> discriminate(nn::Tape<T>& tape, const model::DiscriminatorSet<T>& disc,
                           const std::vector<nn::Var<T>>& signals);

}  // namespace restorer::train
