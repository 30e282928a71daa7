#pragma once

#include <tfadv/common.hpp>
#include <tfadv/nn.hpp>
#include <tfadv/render.hpp>

#include <array>

namespace tfadv {

// Colormapped inputs tolerate far less gradient blur than natural images:
// neighboring pixels on different LUT segments carry opposite-sign
// gradients, so wide kernels cancel the attack direction. The default is
// the widest smoothing that keeps white-box success intact while still
// helping transfer.
struct TiKernel {
  int size = 3;
  double sigma = 0.4;
};

struct CwParams {
  double c = 1.0;  // fixed trade-off constant
  int steps = 100;
  double lr = 0.01;
};

struct AttackConfig {
  double epsilon = 10.0;       // pixel units out of 255
  double alpha = 1.0 / 255.0;  // step size, fraction of the pixel range
  int iterations = 10;
  double mu = 1.0;             // momentum decay
  double di_probability = 0.5;
  TiKernel ti;
  CwParams cw;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AttackOutcome {
  TFImage adv_image;
  std::array<Mat, 3> noise_image;  // adv - clean
  double linf = 0.0;               // fraction units (<= epsilon/255 when constrained)
  double l2 = 0.0;                 // pixel units (x255), flat over H*W*3
  int label_clean = -1;            // model prediction on the clean image
  int label_adv = -1;              // model prediction on the adversarial image
  bool success = false;            // label_adv differs from the true label
  int iterations_used = 0;
};

// Single sign step of size epsilon/255.
AttackOutcome fgsm(const Model& m, const TFImage& img, int label,
                   const AttackConfig& cfg);

// Iterated alpha-sized sign steps, each projected onto the epsilon ball and
// the valid pixel range.
AttackOutcome pgd(const Model& m, const TFImage& img, int label,
                  const AttackConfig& cfg);

// L2 attack in tanh-reparameterized pixel space with a fixed trade-off
// constant; returns the lowest-distortion misclassifying iterate.
AttackOutcome cw(const Model& m, const TFImage& img, int label,
                 const AttackConfig& cfg);

// With probability p: bilinear resize to a random side in [H-6, H], zero-pad
// back at a random offset. Otherwise the identity.
TFImage di_transform(const TFImage& img, double p, RngState& rng);

// Normalized Gaussian kernel for gradient smoothing; size must be odd.
Mat gaussian_kernel(const TiKernel& k);

// Channel-wise same-size zero-padded 2-D convolution.
std::array<Mat, 3> ti_smooth(const std::array<Mat, 3>& grad, const Mat& kernel);

// Momentum-accumulated iterative sign attack with stochastic input
// transforms and kernel-smoothed gradients. Runs T-1 update steps and
// returns that iterate (the final update of the T-step loop is dropped by
// the return convention x_noise = x_adv^{T-1} - x).
AttackOutcome ditimi_fgsm(const Model& m, const TFImage& img, int label,
                          const AttackConfig& cfg);

}  // namespace tfadv
