#include <tfadv/attacks.hpp>

#include <cmath>

namespace tfadv {

void AttackConfig::validate() const {
  if (epsilon < 0.0) throw ConfigError("epsilon must be >= 0");
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (mu < 0.0) throw ConfigError("mu must be >= 0");
  if (di_probability < 0.0 || di_probability > 1.0)
    throw ConfigError("di_probability must be in [0,1]");
  if (ti.size < 1 || ti.size % 2 == 0)
    throw ConfigError("ti kernel size must be odd and >= 1");
  if (ti.sigma <= 0.0) throw ConfigError("ti sigma must be positive");
  if (cw.steps < 1 || cw.lr <= 0.0 || cw.c < 0.0)
    throw ConfigError("bad cw parameters");
}

namespace {

inline double sign_of(double v) {
  return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
}

Mat signs(const Mat& g) {
  return g.unaryExpr([](double v) { return sign_of(v); });
}

void clip_ball_and_range(TFImage& x, const TFImage& center, double eps) {
  for (int c = 0; c < 3; ++c)
    x.chan[c] = x.chan[c]
                    .cwiseMax((center.chan[c].array() - eps).matrix())
                    .cwiseMin((center.chan[c].array() + eps).matrix())
                    .cwiseMax(0.0)
                    .cwiseMin(1.0);
}

AttackOutcome finish_outcome(const Model& m, const TFImage& clean,
                             TFImage adv, int label, int label_clean,
                             int iterations) {
  AttackOutcome out;
  out.label_clean = label_clean;
  out.label_adv = predict(m, adv);
  out.success = out.label_adv != label;
  out.iterations_used = iterations;
  double l2sq = 0.0, linf = 0.0;
  for (int c = 0; c < 3; ++c) {
    out.noise_image[c] = adv.chan[c] - clean.chan[c];
    l2sq += out.noise_image[c].squaredNorm();
    linf = std::max(linf, out.noise_image[c].cwiseAbs().maxCoeff());
  }
  out.l2 = 255.0 * std::sqrt(l2sq);
  out.linf = linf;
  out.adv_image = std::move(adv);
  return out;
}

}  // namespace

AttackOutcome fgsm(const Model& m, const TFImage& img, int label,
                   const AttackConfig& cfg) {
  cfg.validate();
  const double eps = cfg.epsilon / 255.0;
  const LossGrad lg = loss_and_input_grad(m, img, label);
  Index arg;
  lg.logits.maxCoeff(&arg);
  TFImage adv = img;
  for (int c = 0; c < 3; ++c)
    adv.chan[c] = (img.chan[c] + eps * signs(lg.d_input[c]))
                      .cwiseMax(0.0)
                      .cwiseMin(1.0);
  return finish_outcome(m, img, std::move(adv), label, int(arg), 1);
}

AttackOutcome pgd(const Model& m, const TFImage& img, int label,
                  const AttackConfig& cfg) {
  cfg.validate();
  const double eps = cfg.epsilon / 255.0;
  int label_clean = -1;
  TFImage x = img;
  for (int t = 0; t < cfg.iterations; ++t) {
    const LossGrad lg = loss_and_input_grad(m, x, label);
    if (t == 0) {
      Index arg;
      lg.logits.maxCoeff(&arg);
      label_clean = int(arg);
    }
    for (int c = 0; c < 3; ++c)
      x.chan[c] += cfg.alpha * signs(lg.d_input[c]);
    clip_ball_and_range(x, img, eps);
  }
  return finish_outcome(m, img, std::move(x), label, label_clean,
                        cfg.iterations);
}

AttackOutcome cw(const Model& m, const TFImage& img, int label,
                 const AttackConfig& cfg) {
  cfg.validate();
  const int label_clean = predict(m, img);

  // tanh reparameterization keeps iterates strictly inside the pixel range.
  constexpr double kEdge = 1e-6;
  std::array<Mat, 3> w;
  for (int c = 0; c < 3; ++c)
    w[c] = img.chan[c]
               .cwiseMax(kEdge)
               .cwiseMin(1.0 - kEdge)
               .unaryExpr([](double v) { return std::atanh(2.0 * v - 1.0); });

  auto realize = [&](TFImage& x) {
    for (int c = 0; c < 3; ++c)
      x.chan[c] = w[c].unaryExpr(
          [](double v) { return 0.5 * (std::tanh(v) + 1.0); });
  };

  TFImage x = img;
  TFImage best = img;
  double best_l2sq = std::numeric_limits<double>::infinity();
  bool found = false;

  auto margin_loss = [&](const Eigen::Vector3d& logits) {
    // max(z_label - max_other, 0) with the runner-up as the competitor.
    int other = label == 0 ? 1 : 0;
    for (int j = 0; j < 3; ++j)
      if (j != label && logits[j] > logits[other]) other = j;
    const double margin = logits[label] - logits[other];
    Eigen::Vector3d d = Eigen::Vector3d::Zero();
    if (margin > 0.0) {
      d[label] = cfg.cw.c;
      d[other] = -cfg.cw.c;
    }
    return std::make_pair(cfg.cw.c * std::max(margin, 0.0), d);
  };

  auto consider = [&](const TFImage& cand) {
    Index arg;
    forward(m, cand).maxCoeff(&arg);
    if (int(arg) == label) return;
    double l2sq = 0.0;
    for (int c = 0; c < 3; ++c)
      l2sq += (cand.chan[c] - img.chan[c]).squaredNorm();
    if (l2sq < best_l2sq) {
      best_l2sq = l2sq;
      best = cand;
      found = true;
    }
  };

  // Adam on the tanh-space variable, the optimizer the method was designed
  // around; plain steps at this lr stall long before the margin closes.
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  std::array<Mat, 3> m1, m2;
  for (int c = 0; c < 3; ++c) {
    m1[c] = Mat::Zero(img.height(), img.width());
    m2[c] = Mat::Zero(img.height(), img.width());
  }

  for (int step = 0; step < cfg.cw.steps; ++step) {
    realize(x);
    const LossGrad lg = custom_loss_input_grad(m, x, margin_loss);
    Index arg;
    lg.logits.maxCoeff(&arg);
    if (int(arg) != label) {
      double l2sq = 0.0;
      for (int c = 0; c < 3; ++c)
        l2sq += (x.chan[c] - img.chan[c]).squaredNorm();
      if (l2sq < best_l2sq) {
        best_l2sq = l2sq;
        best = x;
        found = true;
      }
    }
    const double bc1 = 1.0 - std::pow(kBeta1, step + 1);
    const double bc2 = 1.0 - std::pow(kBeta2, step + 1);
    for (int c = 0; c < 3; ++c) {
      // d(total)/d(adv) = 2 (adv - clean) + margin gradient; chain through
      // the tanh slope.
      const Mat d_adv = 2.0 * (x.chan[c] - img.chan[c]) + lg.d_input[c];
      const Mat slope = w[c].unaryExpr([](double v) {
        const double t = std::tanh(v);
        return 0.5 * (1.0 - t * t);
      });
      const Mat g = d_adv.cwiseProduct(slope);
      m1[c] = kBeta1 * m1[c] + (1.0 - kBeta1) * g;
      m2[c] = kBeta2 * m2[c] + (1.0 - kBeta2) * g.cwiseProduct(g);
      w[c] -= (cfg.cw.lr * (m1[c] / bc1).array() /
               ((m2[c] / bc2).array().sqrt() + kAdamEps))
                  .matrix();
    }
  }
  realize(x);
  consider(x);

  return finish_outcome(m, img, found ? best : x, label, label_clean,
                        cfg.cw.steps);
}

Mat gaussian_kernel(const TiKernel& k) {
  if (k.size < 1 || k.size % 2 == 0)
    throw ConfigError("ti kernel size must be odd and >= 1");
  if (k.sigma <= 0.0) throw ConfigError("ti sigma must be positive");
  const int c = k.size / 2;
  Mat w(k.size, k.size);
  for (int y = 0; y < k.size; ++y)
    for (int x = 0; x < k.size; ++x) {
      const double dy = y - c, dx = x - c;
      w(y, x) = std::exp(-(dy * dy + dx * dx) / (2.0 * k.sigma * k.sigma));
    }
  w /= w.sum();
  return w;
}

std::array<Mat, 3> ti_smooth(const std::array<Mat, 3>& grad,
                             const Mat& kernel) {
  const Index ks = kernel.rows();
  const Index c = ks / 2;
  std::array<Mat, 3> out;
  for (int ch = 0; ch < 3; ++ch) {
    const Mat& in = grad[ch];
    const Index h = in.rows(), w = in.cols();
    Mat acc = Mat::Zero(h, w);
    for (Index dy = 0; dy < ks; ++dy)
      for (Index dx = 0; dx < ks; ++dx) {
        const Index oy = dy - c, ox = dx - c;
        const Index y0 = std::max<Index>(0, -oy), y1 = std::min<Index>(h, h - oy);
        const Index x0 = std::max<Index>(0, -ox), x1 = std::min<Index>(w, w - ox);
        if (y1 <= y0 || x1 <= x0) continue;
        acc.block(y0, x0, y1 - y0, x1 - x0) +=
            kernel(dy, dx) * in.block(y0 + oy, x0 + ox, y1 - y0, x1 - x0);
      }
    out[ch] = std::move(acc);
  }
  return out;
}

namespace {

struct DiDraw {
  bool active = false;
  int side = 0, oy = 0, ox = 0;
};

DiDraw di_draw(double p, Index h, Index w, RngState& rng) {
  DiDraw d;
  if (rng.uniform() >= p) return d;
  d.active = true;
  const int lo = int(std::max<Index>(2, h - 6));
  d.side = rng.uniform_int(lo, int(h));
  d.oy = rng.uniform_int(0, int(h) - d.side);
  d.ox = rng.uniform_int(0, int(w) - d.side);
  return d;
}

TFImage di_apply(const TFImage& img, const DiDraw& d) {
  if (!d.active) return img;
  TFImage out = img;
  for (int c = 0; c < 3; ++c) {
    const Mat small = resize_bilinear(img.chan[c], d.side, d.side);
    out.chan[c] = Mat::Zero(img.height(), img.width());
    out.chan[c].block(d.oy, d.ox, d.side, d.side) = small;
  }
  return out;
}

// Gradient w.r.t. the transformed image mapped back onto the iterate:
// transpose of the pad placement and of the bilinear resize.
std::array<Mat, 3> di_backward(const std::array<Mat, 3>& g, const DiDraw& d,
                               Index h, Index w) {
  if (!d.active) return g;
  const Mat ry = resize_matrix(h, d.side);
  const Mat rx = resize_matrix(w, d.side);
  std::array<Mat, 3> out;
  for (int c = 0; c < 3; ++c)
    out[c] = ry.transpose() * g[c].block(d.oy, d.ox, d.side, d.side) * rx;
  return out;
}

}  // namespace

TFImage di_transform(const TFImage& img, double p, RngState& rng) {
  if (p < 0.0 || p > 1.0) throw ConfigError("di probability must be in [0,1]");
  return di_apply(img, di_draw(p, img.height(), img.width(), rng));
}

AttackOutcome ditimi_fgsm(const Model& m, const TFImage& img, int label,
                          const AttackConfig& cfg) {
  cfg.validate();
  const double eps = cfg.epsilon / 255.0;
  const Mat kernel = gaussian_kernel(cfg.ti);
  RngState rng(cfg.seed);

  const int label_clean = predict(m, img);
  std::array<Mat, 3> g{Mat::Zero(img.height(), img.width()),
                       Mat::Zero(img.height(), img.width()),
                       Mat::Zero(img.height(), img.width())};
  TFImage x = img;
  // T-1 effective updates; the returned image is the penultimate iterate of
  // the T-step loop.
  const int updates = cfg.iterations - 1;
  for (int t = 0; t < updates; ++t) {
    const DiDraw draw = di_draw(cfg.di_probability, x.height(), x.width(), rng);
    const TFImage probe = di_apply(x, draw);
    const LossGrad lg = loss_and_input_grad(m, probe, label);
    const std::array<Mat, 3> grad =
        di_backward(lg.d_input, draw, x.height(), x.width());
    std::array<Mat, 3> sm = ti_smooth(grad, kernel);
    double l1 = 0.0;
    for (int c = 0; c < 3; ++c) l1 += sm[c].cwiseAbs().sum();
    for (int c = 0; c < 3; ++c) {
      if (l1 > 0.0)
        g[c] = cfg.mu * g[c] + sm[c] / l1;
      else
        g[c] = cfg.mu * g[c];  // zero-gradient iterate: momentum only
    }
    for (int c = 0; c < 3; ++c) x.chan[c] += cfg.alpha * signs(g[c]);
    clip_ball_and_range(x, img, eps);
  }
  return finish_outcome(m, img, std::move(x), label, label_clean, updates);
}

}  // namespace tfadv
