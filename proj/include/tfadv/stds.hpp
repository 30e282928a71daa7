#pragma once

#include <tfadv/attacks.hpp>
#include <tfadv/nn.hpp>
#include <tfadv/render.hpp>
#include <tfadv/tfa.hpp>
#include <tfadv/waveforms.hpp>

#include <optional>
#include <utility>

namespace tfadv {

struct StdsConfig {
  double lr = 0.001;
  int iterations = 200;
  bool early_stop = true;  // stop at the first replay-verified flip
  // Optional bound on ||x_noise||_2 / ||x||_2; enforced at the same cadence
  // as the early-stop checks by reverting to the last within-budget iterate.
  std::optional<double> max_noise_l2;
  int check_every = 10;

  void validate() const;
};

struct StdsOutcome {
  Vec adv_signal;      // x'(t), real waveform realized from the planes
  Vec noise_signal;    // x'(t) - x(t)
  StftGrid adv_grid;   // perturbed complex grid (joined planes)
  TFImage tf_image_clean;
  TFImage tf_image_adv;  // rendered from a fresh pass over adv_signal
  double l2_image = 0.0;      // pixel units, clean vs adv image
  double l2_signal = 0.0;     // ||noise||_2
  double l2_signal_rel = 0.0; // ||noise||_2 / ||x||_2
  bool success_replay = false;
  int iterations_used = 0;
};

// Gradient ascent on the classification loss over the real/imag STFT planes
// of sig, propagated through the differentiable colormap; the waveform is
// recovered by inverse STFT (real part). The signal's own label drives the
// loss. success_replay comes from a fresh stft -> render -> forward pass.
StdsOutcome stds_attack(const Model& m, const TimeSignal& sig,
                        const StdsConfig& cfg, const WindowSpec& w,
                        const ColorLut& lut);

// Fresh reception pipeline on a waveform: stft, render with re-derived
// normalization, classify. success = predicted label != clean_label.
std::pair<int, bool> replay_verify(const Model& m, const Vec& adv_signal,
                                   int clean_label, const WindowSpec& w,
                                   const ColorLut& lut);

// Flat Euclidean distance over H x W x 3 in pixel units (x255).
double image_l2(const TFImage& a, const TFImage& b);

}  // namespace tfadv
