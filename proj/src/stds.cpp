#include <tfadv/stds.hpp>

#include <cmath>

namespace tfadv {

void StdsConfig::validate() const {
  if (lr < 0.0) throw ConfigError("stds lr must be >= 0");
  if (iterations < 1) throw ConfigError("stds iterations must be >= 1");
  if (check_every < 1) throw ConfigError("stds check_every must be >= 1");
  if (max_noise_l2 && *max_noise_l2 < 0.0)
    throw ConfigError("stds noise budget must be >= 0");
}

double image_l2(const TFImage& a, const TFImage& b) {
  double acc = 0.0;
  for (int c = 0; c < 3; ++c) {
    if (a.chan[c].rows() != b.chan[c].rows() ||
        a.chan[c].cols() != b.chan[c].cols())
      throw ConfigError("image shapes differ");
    acc += (a.chan[c] - b.chan[c]).squaredNorm();
  }
  return 255.0 * std::sqrt(acc);
}

std::pair<int, bool> replay_verify(const Model& m, const Vec& adv_signal,
                                   int clean_label, const WindowSpec& w,
                                   const ColorLut& lut) {
  if (!adv_signal.allFinite())
    throw NumericError("replay of a non-finite waveform");
  const StftGrid g = stft(adv_signal, w);
  auto [re, im] = split_complex(g);
  const TFImage img = render_image(re, im, lut);
  const int pred = predict(m, img);
  return {pred, pred != clean_label};
}

namespace {

Vec realize_waveform(const Mat& re, const Mat& im, const WindowSpec& w,
                     Index n) {
  // Perturbed planes are not conjugate-symmetric in general; taking the
  // real part of the inverse is the transmittable realization.
  return istft(join_complex(re, im, w, n)).real();
}

}  // namespace

StdsOutcome stds_attack(const Model& m, const TimeSignal& sig,
                        const StdsConfig& cfg, const WindowSpec& w,
                        const ColorLut& lut) {
  cfg.validate();
  w.validate();
  const Index n = sig.samples.size();
  const int label = sig.label;

  const StftGrid grid0 = stft(sig.samples, w);
  auto [re, im] = split_complex(grid0);

  StdsOutcome out;
  out.tf_image_clean = render_image(re, im, lut);

  Mat re_good = re, im_good = im;
  int good_iters = 0;
  int used = 0;
  bool stopped = false;

  auto ascend_step = [&](Mat& r, Mat& i) {
    const TFImage img = render_image(r, i, lut);
    const LossGrad lg = loss_and_input_grad(m, img, label);
    auto [dre, dim] =
        render_backward(r, i, lut, lg.d_input, img.height(), img.width());
    r += cfg.lr * dre;  // ascent on the classification loss
    i += cfg.lr * dim;
  };

  for (int t = 1; t <= cfg.iterations && !stopped; ++t) {
    ascend_step(re, im);
    used = t;

    if (t % cfg.check_every == 0 || t == cfg.iterations) {
      const Vec x = realize_waveform(re, im, w, n);
      if (cfg.max_noise_l2) {
        const double rel = (x - sig.samples).norm() / sig.samples.norm();
        if (rel > *cfg.max_noise_l2) {
          re = re_good;
          im = im_good;
          used = good_iters;
          break;
        }
      }
      if (cfg.early_stop) {
        auto [pred, succ] = replay_verify(m, x, label, w, lut);
        if (succ) {
          // The flip happened somewhere in the last check window. Replay
          // the (deterministic) steps from the previous snapshot and stop
          // at the earliest verified crossing to keep the noise minimal.
          re = re_good;
          im = im_good;
          for (int k = good_iters + 1; k <= t; ++k) {
            ascend_step(re, im);
            used = k;
            auto [p2, s2] =
                replay_verify(m, realize_waveform(re, im, w, n), label, w, lut);
            if (s2) break;
          }
          stopped = true;
        }
      }
      if (!stopped) {
        re_good = re;
        im_good = im;
        good_iters = t;
      }
    }
  }

  out.adv_grid = join_complex(re, im, w, n);
  out.adv_signal = realize_waveform(re, im, w, n);
  out.noise_signal = out.adv_signal - sig.samples;
  out.iterations_used = used;

  const StftGrid replay_grid = stft(out.adv_signal, w);
  auto [rre, rim] = split_complex(replay_grid);
  out.tf_image_adv = render_image(rre, rim, lut);
  const int pred = predict(m, out.tf_image_adv);
  out.success_replay = pred != label;

  out.l2_image = image_l2(out.tf_image_clean, out.tf_image_adv);
  out.l2_signal = out.noise_signal.norm();
  const double clean_norm = sig.samples.norm();
  out.l2_signal_rel = clean_norm > 0.0 ? out.l2_signal / clean_norm : 0.0;
  return out;
}

}  // namespace tfadv
