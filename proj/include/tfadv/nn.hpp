#pragma once

#include <tfadv/common.hpp>
#include <tfadv/render.hpp>

#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

namespace tfadv {

enum class ArchId : std::uint8_t { TinyA = 0, TinyB = 1, TinyC = 2 };

struct LayerSpec {
  enum class Kind { Conv, Relu, MaxPool, GlobalAvgPool, Dense };
  Kind kind = Kind::Relu;
  // conv fields; padding is always (k-1)/2 ("same" for stride 1)
  int k = 0, stride = 1, in_ch = 0, out_ch = 0;
  // dense fields
  int in_dim = 0, out_dim = 0;
};

// Three fixed toy architectures over 64x64x3 inputs, 3 output classes:
//   tinyA: conv3x3(8) pool conv3x3(16) pool dense
//   tinyB: conv5x5(6,s2) conv5x5(12,s2) conv5x5(16) global-avg-pool dense
//   tinyC: conv7x7(8,s2) pool dense(32) dense
struct ArchDescriptor {
  ArchId id = ArchId::TinyA;
  std::string name = "tinyA";
  std::vector<LayerSpec> layers;
  // Plain SGD step that trains this architecture reliably; the global-pool
  // trunk (tinyB) sits at chance for ~10 epochs under smaller steps.
  double suggested_lr = 0.01;

  static ArchDescriptor make(ArchId id);
  static ArchDescriptor by_name(const std::string& name);
  Index param_count() const;
};

const char* arch_name(ArchId id);

// Flat parameter offsets per layer. Conv weights are stored row-major as
// w[oc][ic][ky][kx] (flat index w_offset + ((oc*in_ch + ic)*k + ky)*k + kx),
// dense weights as w[o][i]; biases follow at b_offset.
struct LayerParams {
  Index w_offset = -1;
  Index b_offset = -1;
  Index w_count = 0;
  Index b_count = 0;
};
std::vector<LayerParams> param_layout(const ArchDescriptor& arch);

struct Model {
  ArchDescriptor arch;
  Vec params;
  std::uint64_t init_seed = 0;

  // He-uniform weights, zero biases, deterministic in the seed.
  static Model init(ArchId id, std::uint64_t seed);
};

struct LossGrad {
  double loss = 0.0;
  std::array<Mat, 3> d_input;
  Eigen::Vector3d logits = Eigen::Vector3d::Zero();
};

Eigen::Vector3d softmax(const Eigen::Vector3d& logits);
double cross_entropy(const Eigen::Vector3d& logits, int label);

Eigen::Vector3d forward(const Model& m, const TFImage& img);
int predict(const Model& m, const TFImage& img);

// Cross-entropy loss plus the exact gradient w.r.t. the input pixels.
LossGrad loss_and_input_grad(const Model& m, const TFImage& img, int label);

// Input gradient for an arbitrary upstream logit gradient (margin losses).
std::array<Mat, 3> input_grad_from_logits(const Model& m, const TFImage& img,
                                          const Eigen::Vector3d& d_logits);

// One forward pass, then backward for a caller-supplied loss on the logits.
// `loss_fn` maps logits to (loss value, d loss / d logits).
using LogitLoss =
    std::function<std::pair<double, Eigen::Vector3d>(const Eigen::Vector3d&)>;
LossGrad custom_loss_input_grad(const Model& m, const TFImage& img,
                                const LogitLoss& loss_fn);

// Cross-entropy loss plus gradient w.r.t. the flat parameter store.
std::pair<double, Vec> loss_and_param_grad(const Model& m, const TFImage& img,
                                           int label);

struct TrainSample {
  TFImage image;
  int label = 0;
};

struct TrainConfig {
  int epochs = 20;
  double lr = 0.01;
  int batch = 32;
};

struct TrainHistory {
  std::vector<double> train_loss;  // mean per epoch
  std::vector<double> train_acc;   // percent per epoch
  std::vector<double> test_acc;    // percent per epoch (empty test set: none)
};

// Minibatch SGD on cross-entropy. Deterministic in (model, data, cfg, rng):
// samples are shuffled with the supplied stream and gradients are averaged
// in index order.
TrainHistory train(Model& m, const std::vector<TrainSample>& train_set,
                   const std::vector<TrainSample>& test_set,
                   const TrainConfig& cfg, RngState& rng);

double accuracy(const Model& m, const std::vector<TrainSample>& set);

// TFADV001 weight file: {magic "TFADV001", arch id u8, param count u64 LE,
// little-endian f32 parameters}.
void save_model(const std::filesystem::path& path, const Model& m);
Model load_model(const std::filesystem::path& path);

}  // namespace tfadv
