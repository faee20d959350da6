#include "restorer/train/losses.hpp"

#include <fmt/format.h>

namespace restorer::train {

namespace {

template <typename T>
nn::Var<T> accumulate(nn::Var<T> total, const nn::Var<T>& term) {
  return total.defined() ? nn::add(total, term) : term;
}

// mean(max(0, 1 + sign * logits))
template <typename T>
nn::Var<T> hinge(const nn::Var<T>& logits, T sign) {
  return nn::mean(nn::relu(nn::add_scalar(nn::scale(logits, sign), T(1))));
}

}  // namespace

template <typename T>
ScalePyramid<T> build_pyramid(const nn::Var<T>& clean, const model::MultiscaleOutput<T>& out,
                              const model::GeneratorConfig& cfg) {
  if (static_cast<int>(out.composites.size()) != cfg.scales)
    throw std::invalid_argument(
        fmt::format("pyramid: {} composites for a {}-scale generator", out.composites.size(), cfg.scales));
  const auto stft = cfg.stft_config();
  ScalePyramid<T> p;
  nn::Var<T> y = clean;
  for (int k = 0; k < cfg.scales; ++k) {
    nn::Var<T> yhat = out.composites[static_cast<std::size_t>(k)];
    for (int j = 0; j < k; ++j) yhat = nn::downsample2(yhat);
    if (k > 0) y = nn::downsample2(y);
    p.clean.push_back(y);
    p.output.push_back(yhat);
    p.clean_spec.push_back(nn::stft(y, stft));
    p.output_spec.push_back(nn::stft(yhat, stft));
  }
  return p;
}

template <typename T>
nn::Var<T> rec_loss(const std::vector<nn::Var<T>>& clean_spec, const std::vector<nn::Var<T>>& output_spec) {
  if (clean_spec.size() != output_spec.size())
    throw nn::ShapeError(fmt::format("rec_loss: {} clean scales but {} output scales", clean_spec.size(),
                                     output_spec.size()));
  if (clean_spec.empty()) throw std::invalid_argument("rec_loss: no scales");
  nn::Var<T> total;
  for (std::size_t k = 0; k < clean_spec.size(); ++k) {
    const auto& a = clean_spec[k];
    const auto& b = output_spec[k];
    if (a.value().rank() != 4 || a.dim(1) != 2)
      throw nn::ShapeError("rec_loss: spectra must be [N, 2, frames, bins], got " + nn::to_string(a.shape()));
    const double denom = static_cast<double>(a.dim(0)) * a.dim(2) * a.dim(3);
    auto term = nn::scale(nn::sum(nn::abs(nn::sub(a, b))), static_cast<T>(1.0 / denom));
    total = accumulate(total, term);
  }
  return total;
}

template <typename T>
nn::Var<T> hinge_disc_loss(const std::vector<nn::Var<T>>& real_logits, const std::vector<nn::Var<T>>& fake_logits) {
  if (real_logits.size() != fake_logits.size())
    throw std::invalid_argument("hinge_disc_loss: real and fake lists differ in length");
  if (real_logits.empty()) throw std::invalid_argument("hinge_disc_loss: no logits");
  nn::Var<T> total;
  for (std::size_t k = 0; k < real_logits.size(); ++k) {
    total = accumulate(total, hinge(real_logits[k], T(-1)));
    total = accumulate(total, hinge(fake_logits[k], T(1)));
  }
  return total;
}

template <typename T>
nn::Var<T> hinge_gen_loss(const std::vector<nn::Var<T>>& fake_logits) {
  if (fake_logits.empty()) throw std::invalid_argument("hinge_gen_loss: no logits");
  nn::Var<T> total;
  for (const auto& l : fake_logits) total = accumulate(total, hinge(l, T(-1)));
  return total;
}

template <typename T>
nn::Var<T> total_gen_loss(const nn::Var<T>& rec, const nn::Var<T>& adv, T lambda) {
  if (lambda < T(0)) throw std::invalid_argument("total_gen_loss: lambda must be nonnegative");
  if (lambda == T(0) || !adv.defined()) return rec;
  return nn::add(rec, nn::scale(adv, lambda));
}

template <typename T>
DiscLogits<T> discriminate(nn::Tape<T>& tape, const model::DiscriminatorSet<T>& disc,
                           const std::vector<nn::Var<T>>& signals) {
  if (static_cast<int>(signals.size()) != disc.scales())
    throw std::invalid_argument(
        fmt::format("discriminate: {} signals for {} discriminator scales", signals.size(), disc.scales()));
  DiscLogits<T> out;
  for (int k = 0; k < disc.scales(); ++k) {
    out.wave.push_back(disc.wave(k)(tape, signals[static_cast<std::size_t>(k)]));
    out.stft.push_back(disc.stft(k)(tape, signals[static_cast<std::size_t>(k)]));
  }
  return out;
}

#define RESTORER_INSTANTIATE(T)                                                                                  \
  template ScalePyramid<T> build_pyramid(const nn::Var<T>&, const model::MultiscaleOutput<T>&,                    \
                                         const model::GeneratorConfig&);                                          \
  template nn::Var<T> rec_loss(const std::vector<nn::Var<T>>&, const std::vector<nn::Var<T>>&);                   \
  template nn::Var<T> hinge_disc_loss(const std::vector<nn::Var<T>>&, const std::vector<nn::Var<T>>&);            \
  template nn::Var<T> hinge_gen_loss(const std::vector<nn::Var<T>>&);                                             \
  template nn::Var<T> total_gen_loss(const nn::Var<T>&, const nn::Var<T>&, T);                                    \
  template DiscLogits<T> discriminate(nn::Tape<T>&, const model::DiscriminatorSet<T>&, const std::vector<nn::Var<T>>&);

RESTORER_INSTANTIATE(float)
RESTORER_INSTANTIATE(double)
#undef RESTORER_INSTANTIATE

}  // namespace restorer::train
