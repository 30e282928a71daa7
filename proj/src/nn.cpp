#include <tfadv/nn.hpp>
#include <tfadv/waveforms.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace tfadv {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
using IdxMat = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic>;

constexpr Index kInput = 64;

LayerSpec conv(int k, int stride, int in_ch, int out_ch) {
  LayerSpec l;
  l.kind = LayerSpec::Kind::Conv;
  l.k = k;
  l.stride = stride;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  return l;
}

LayerSpec relu() { return LayerSpec{LayerSpec::Kind::Relu}; }
LayerSpec maxpool() { return LayerSpec{LayerSpec::Kind::MaxPool}; }
LayerSpec gap() { return LayerSpec{LayerSpec::Kind::GlobalAvgPool}; }

LayerSpec dense(int in_dim, int out_dim) {
  LayerSpec l;
  l.kind = LayerSpec::Kind::Dense;
  l.in_dim = in_dim;
  l.out_dim = out_dim;
  return l;
}

}  // namespace

const char* arch_name(ArchId id) {
  switch (id) {
    case ArchId::TinyA: return "tinyA";
    case ArchId::TinyB: return "tinyB";
    case ArchId::TinyC: return "tinyC";
  }
  throw ConfigError("unknown architecture id");
}

ArchDescriptor ArchDescriptor::make(ArchId id) {
  ArchDescriptor a;
  a.id = id;
  a.name = arch_name(id);
  switch (id) {
    case ArchId::TinyA:
      a.layers = {conv(3, 1, 3, 8),  relu(), maxpool(),
                  conv(3, 1, 8, 16), relu(), maxpool(),
                  dense(16 * 16 * 16, 3)};
      a.suggested_lr = 0.005;
      break;
    case ArchId::TinyB:
      // Pool down to 8x8 before the global pool: averaging over larger maps
      // starves the trunk of gradient under plain SGD.
      a.layers = {conv(5, 2, 3, 8),   relu(), maxpool(),
                  conv(5, 1, 8, 16),  relu(), maxpool(),
                  conv(5, 1, 16, 32), relu(), gap(),
                  dense(32, 3)};
      a.suggested_lr = 0.05;
      break;
    case ArchId::TinyC:
      a.layers = {conv(7, 2, 3, 8), relu(), maxpool(),
                  dense(8 * 16 * 16, 32), relu(), dense(32, 3)};
      break;
  }
  return a;
}

ArchDescriptor ArchDescriptor::by_name(const std::string& name) {
  for (ArchId id : {ArchId::TinyA, ArchId::TinyB, ArchId::TinyC})
    if (name == arch_name(id)) return make(id);
  throw ConfigError("unknown architecture '" + name +
                    "' (expected tinyA, tinyB or tinyC)");
}

std::vector<LayerParams> param_layout(const ArchDescriptor& arch) {
  std::vector<LayerParams> layout(arch.layers.size());
  Index off = 0;
  for (size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    LayerParams lp;
    if (l.kind == LayerSpec::Kind::Conv) {
      lp.w_count = Index(l.out_ch) * l.in_ch * l.k * l.k;
      lp.b_count = l.out_ch;
    } else if (l.kind == LayerSpec::Kind::Dense) {
      lp.w_count = Index(l.out_dim) * l.in_dim;
      lp.b_count = l.out_dim;
    }
    if (lp.w_count > 0) {
      lp.w_offset = off;
      off += lp.w_count;
      lp.b_offset = off;
      off += lp.b_count;
    }
    layout[i] = lp;
  }
  return layout;
}

Index ArchDescriptor::param_count() const {
  Index n = 0;
  for (const auto& lp : param_layout(*this)) n += lp.w_count + lp.b_count;
  return n;
}

Model Model::init(ArchId id, std::uint64_t seed) {
  Model m;
  m.arch = ArchDescriptor::make(id);
  m.init_seed = seed;
  m.params = Vec::Zero(m.arch.param_count());
  RngState rng(seed);
  const auto layout = param_layout(m.arch);
  for (size_t i = 0; i < m.arch.layers.size(); ++i) {
    const LayerSpec& l = m.arch.layers[i];
    const LayerParams& lp = layout[i];
    if (lp.w_count == 0) continue;
    const Index fan_in = l.kind == LayerSpec::Kind::Conv
                             ? Index(l.in_ch) * l.k * l.k
                             : Index(l.in_dim);
    const double limit = std::sqrt(6.0 / double(fan_in));
    for (Index j = 0; j < lp.w_count; ++j)
      m.params[lp.w_offset + j] = rng.uniform(-limit, limit);
    // biases stay zero
  }
  return m;
}

// ---------------------------------------------------------------------------
// Forward/backward engine. Convolutions run as im2col + GEMM; the caches
// below keep what the backward pass needs.
// ---------------------------------------------------------------------------

namespace {

struct Acts {
  std::vector<Mat> maps;
  Vec vec;
  bool spatial = true;
};

struct LayerCache {
  Acts in;          // activation entering the layer
  Mat col;          // conv: im2col matrix
  Mat out_mat;      // conv: pre-bias GEMM output (out_ch x oh*ow)
  std::vector<IdxMat> pool_arg;  // maxpool: flat argmax into the input map
  Index flat_h = 0, flat_w = 0;  // dense-on-spatial: source map shape
  bool flattened = false;        // dense consumed a spatial input
};

struct Workspace {
  std::vector<LayerCache> cache;
  Acts out;
};

Index conv_out(Index in, int k, int stride) {
  const int p = (k - 1) / 2;
  return (in + 2 * p - k) / stride + 1;
}

void im2col(const std::vector<Mat>& in, const LayerSpec& l, Mat& col) {
  const Index h = in[0].rows(), w = in[0].cols();
  const int p = (l.k - 1) / 2;
  const Index oh = conv_out(h, l.k, l.stride), ow = conv_out(w, l.k, l.stride);
  col.resize(Index(l.in_ch) * l.k * l.k, oh * ow);
  for (int ic = 0; ic < l.in_ch; ++ic) {
    const Mat& src = in[ic];
    for (int ky = 0; ky < l.k; ++ky)
      for (int kx = 0; kx < l.k; ++kx) {
        const Index row = (Index(ic) * l.k + ky) * l.k + kx;
        for (Index oy = 0; oy < oh; ++oy) {
          const Index iy = oy * l.stride + ky - p;
          if (iy < 0 || iy >= h) {
            col.row(row).segment(oy * ow, ow).setZero();
            continue;
          }
          for (Index ox = 0; ox < ow; ++ox) {
            const Index ix = ox * l.stride + kx - p;
            col(row, oy * ow + ox) = (ix >= 0 && ix < w) ? src(iy, ix) : 0.0;
          }
        }
      }
  }
}

void col2im(const Mat& dcol, const LayerSpec& l, Index h, Index w,
            std::vector<Mat>& din) {
  const int p = (l.k - 1) / 2;
  const Index oh = conv_out(h, l.k, l.stride), ow = conv_out(w, l.k, l.stride);
  din.assign(l.in_ch, Mat::Zero(h, w));
  for (int ic = 0; ic < l.in_ch; ++ic) {
    Mat& dst = din[ic];
    for (int ky = 0; ky < l.k; ++ky)
      for (int kx = 0; kx < l.k; ++kx) {
        const Index row = (Index(ic) * l.k + ky) * l.k + kx;
        for (Index oy = 0; oy < oh; ++oy) {
          const Index iy = oy * l.stride + ky - p;
          if (iy < 0 || iy >= h) continue;
          for (Index ox = 0; ox < ow; ++ox) {
            const Index ix = ox * l.stride + kx - p;
            if (ix >= 0 && ix < w) dst(iy, ix) += dcol(row, oy * ow + ox);
          }
        }
      }
  }
}

void forward_pass(const Model& m, const TFImage& img, Workspace& ws) {
  if (img.height() != kInput || img.width() != kInput)
    throw ConfigError("classifier input must be 64x64x3");
  for (int c = 0; c < 3; ++c)
    if (!img.chan[c].allFinite())
      throw NumericError("non-finite pixels in classifier input");

  const auto layout = param_layout(m.arch);
  ws.cache.assign(m.arch.layers.size(), {});

  Acts a;
  a.maps = {img.chan[0], img.chan[1], img.chan[2]};
  a.spatial = true;

  for (size_t li = 0; li < m.arch.layers.size(); ++li) {
    const LayerSpec& l = m.arch.layers[li];
    LayerCache& lc = ws.cache[li];
    lc.in = a;
    switch (l.kind) {
      case LayerSpec::Kind::Conv: {
        const Index h = a.maps[0].rows(), w = a.maps[0].cols();
        const Index oh = conv_out(h, l.k, l.stride);
        const Index ow = conv_out(w, l.k, l.stride);
        im2col(a.maps, l, lc.col);
        Eigen::Map<const RowMat> wm(m.params.data() + layout[li].w_offset,
                                    l.out_ch, Index(l.in_ch) * l.k * l.k);
        lc.out_mat.noalias() = wm * lc.col;
        std::vector<Mat> out(l.out_ch);
        for (int oc = 0; oc < l.out_ch; ++oc) {
          const double b = m.params[layout[li].b_offset + oc];
          out[oc].resize(oh, ow);
          for (Index oy = 0; oy < oh; ++oy)
            for (Index ox = 0; ox < ow; ++ox)
              out[oc](oy, ox) = lc.out_mat(oc, oy * ow + ox) + b;
        }
        a.maps = std::move(out);
        break;
      }
      case LayerSpec::Kind::Relu: {
        if (a.spatial)
          for (Mat& ch : a.maps) ch = ch.cwiseMax(0.0);
        else
          a.vec = a.vec.cwiseMax(0.0);
        break;
      }
      case LayerSpec::Kind::MaxPool: {
        lc.pool_arg.resize(a.maps.size());
        for (size_t c = 0; c < a.maps.size(); ++c) {
          const Mat& src = a.maps[c];
          const Index oh = src.rows() / 2, ow = src.cols() / 2;
          Mat out(oh, ow);
          IdxMat arg(oh, ow);
          for (Index oy = 0; oy < oh; ++oy)
            for (Index ox = 0; ox < ow; ++ox) {
              double best = src(2 * oy, 2 * ox);
              Index bi = 2 * oy * src.cols() + 2 * ox;
              for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                  const double v = src(2 * oy + dy, 2 * ox + dx);
                  if (v > best) {
                    best = v;
                    bi = (2 * oy + dy) * src.cols() + (2 * ox + dx);
                  }
                }
              out(oy, ox) = best;
              arg(oy, ox) = bi;
            }
          a.maps[c] = std::move(out);
          lc.pool_arg[c] = std::move(arg);
        }
        break;
      }
      case LayerSpec::Kind::GlobalAvgPool: {
        Vec v(Index(a.maps.size()));
        for (size_t c = 0; c < a.maps.size(); ++c)
          v[Index(c)] = a.maps[c].mean();
        a.vec = std::move(v);
        a.maps.clear();
        a.spatial = false;
        break;
      }
      case LayerSpec::Kind::Dense: {
        if (a.spatial) {
          lc.flattened = true;
          lc.flat_h = a.maps[0].rows();
          lc.flat_w = a.maps[0].cols();
          Vec flat(Index(a.maps.size()) * lc.flat_h * lc.flat_w);
          for (size_t c = 0; c < a.maps.size(); ++c)
            for (Index y = 0; y < lc.flat_h; ++y)
              for (Index x = 0; x < lc.flat_w; ++x)
                flat[(Index(c) * lc.flat_h + y) * lc.flat_w + x] =
                    a.maps[c](y, x);
          a.vec = std::move(flat);
          a.maps.clear();
          a.spatial = false;
          lc.in = a;  // cache the flattened view for the backward pass
        }
        if (a.vec.size() != l.in_dim)
          throw ConfigError("dense layer input size mismatch");
        Eigen::Map<const RowMat> wm(m.params.data() + layout[li].w_offset,
                                    l.out_dim, l.in_dim);
        Vec out = wm * a.vec;
        out += m.params.segment(layout[li].b_offset, l.out_dim);
        a.vec = std::move(out);
        break;
      }
    }
  }
  ws.out = std::move(a);
}

// Backward from d(loss)/d(logits). Fills d_params and/or d_input when the
// pointers are non-null.
void backward_pass(const Model& m, Workspace& ws, const Vec& d_logits,
                   Vec* d_params, std::array<Mat, 3>* d_input) {
  const auto layout = param_layout(m.arch);
  if (d_params) d_params->setZero(m.params.size());

  Acts d;
  d.vec = d_logits;
  d.spatial = false;

  for (int li = int(m.arch.layers.size()) - 1; li >= 0; --li) {
    const LayerSpec& l = m.arch.layers[li];
    LayerCache& lc = ws.cache[li];
    switch (l.kind) {
      case LayerSpec::Kind::Dense: {
        Eigen::Map<const RowMat> wm(m.params.data() + layout[li].w_offset,
                                    l.out_dim, l.in_dim);
        if (d_params) {
          Eigen::Map<RowMat> dwm(d_params->data() + layout[li].w_offset,
                                 l.out_dim, l.in_dim);
          dwm.noalias() = d.vec * lc.in.vec.transpose();
          d_params->segment(layout[li].b_offset, l.out_dim) = d.vec;
        }
        Vec din = wm.transpose() * d.vec;
        if (lc.flattened) {
          // restore the spatial view
          const Index h = lc.flat_h, w = lc.flat_w;
          const Index ch = din.size() / (h * w);
          d.maps.assign(ch, Mat(h, w));
          for (Index c = 0; c < ch; ++c)
            for (Index y = 0; y < h; ++y)
              for (Index x = 0; x < w; ++x)
                d.maps[c](y, x) = din[(c * h + y) * w + x];
          d.spatial = true;
          d.vec.resize(0);
        } else {
          d.vec = std::move(din);
        }
        break;
      }
      case LayerSpec::Kind::GlobalAvgPool: {
        const auto& in_maps = lc.in.maps;
        const Index h = in_maps[0].rows(), w = in_maps[0].cols();
        const double scale = 1.0 / double(h * w);
        d.maps.assign(in_maps.size(), Mat());
        for (size_t c = 0; c < in_maps.size(); ++c)
          d.maps[c] = Mat::Constant(h, w, d.vec[Index(c)] * scale);
        d.spatial = true;
        d.vec.resize(0);
        break;
      }
      case LayerSpec::Kind::MaxPool: {
        const auto& in_maps = lc.in.maps;
        for (size_t c = 0; c < in_maps.size(); ++c) {
          const Index h = in_maps[c].rows(), w = in_maps[c].cols();
          Mat din = Mat::Zero(h, w);
          const Mat& dout = d.maps[c];
          const IdxMat& arg = lc.pool_arg[c];
          for (Index oy = 0; oy < dout.rows(); ++oy)
            for (Index ox = 0; ox < dout.cols(); ++ox) {
              const Index flat = arg(oy, ox);
              din(flat / w, flat % w) += dout(oy, ox);
            }
          d.maps[c] = std::move(din);
        }
        break;
      }
      case LayerSpec::Kind::Relu: {
        if (d.spatial) {
          for (size_t c = 0; c < d.maps.size(); ++c)
            d.maps[c] =
                (lc.in.maps[c].array() > 0.0).select(d.maps[c], 0.0);
        } else {
          d.vec = (lc.in.vec.array() > 0.0).select(d.vec, 0.0);
        }
        break;
      }
      case LayerSpec::Kind::Conv: {
        const Index h = lc.in.maps[0].rows(), w = lc.in.maps[0].cols();
        const Index ow = conv_out(w, l.k, l.stride);
        const Index oh = conv_out(h, l.k, l.stride);
        Mat dout_mat(l.out_ch, oh * ow);
        for (int oc = 0; oc < l.out_ch; ++oc)
          for (Index oy = 0; oy < oh; ++oy)
            for (Index ox = 0; ox < ow; ++ox)
              dout_mat(oc, oy * ow + ox) = d.maps[oc](oy, ox);
        if (d_params) {
          Eigen::Map<RowMat> dwm(d_params->data() + layout[li].w_offset,
                                 l.out_ch, Index(l.in_ch) * l.k * l.k);
          dwm.noalias() = dout_mat * lc.col.transpose();
          d_params->segment(layout[li].b_offset, l.out_ch) =
              dout_mat.rowwise().sum();
        }
        if (li > 0 || d_input) {
          Eigen::Map<const RowMat> wm(m.params.data() + layout[li].w_offset,
                                      l.out_ch, Index(l.in_ch) * l.k * l.k);
          Mat dcol = wm.transpose() * dout_mat;
          col2im(dcol, l, h, w, d.maps);
        }
        break;
      }
    }
  }

  if (d_input) {
    if (!d.spatial || d.maps.size() != 3)
      throw NumericError("input gradient shape lost in backward pass");
    for (int c = 0; c < 3; ++c) (*d_input)[c] = std::move(d.maps[c]);
  }
}

Vec logits_of(Workspace& ws) {
  if (ws.out.spatial || ws.out.vec.size() != 3)
    throw ConfigError("network head must produce 3 logits");
  return ws.out.vec;
}

}  // namespace

Eigen::Vector3d softmax(const Eigen::Vector3d& logits) {
  const double m = logits.maxCoeff();
  Eigen::Vector3d e = (logits.array() - m).exp();
  return e / e.sum();
}

double cross_entropy(const Eigen::Vector3d& logits, int label) {
  if (label < 0 || label > 2) throw ConfigError("label out of range");
  const Eigen::Vector3d p = softmax(logits);
  return -std::log(std::max(p[label], 1e-300));
}

Eigen::Vector3d forward(const Model& m, const TFImage& img) {
  Workspace ws;
  forward_pass(m, img, ws);
  return logits_of(ws);
}

int predict(const Model& m, const TFImage& img) {
  Index arg = 0;
  forward(m, img).maxCoeff(&arg);
  return int(arg);
}

LossGrad loss_and_input_grad(const Model& m, const TFImage& img, int label) {
  Workspace ws;
  forward_pass(m, img, ws);
  LossGrad out;
  out.logits = logits_of(ws);
  out.loss = cross_entropy(out.logits, label);
  Eigen::Vector3d d_logits = softmax(out.logits);
  d_logits[label] -= 1.0;
  backward_pass(m, ws, d_logits, nullptr, &out.d_input);
  return out;
}

std::array<Mat, 3> input_grad_from_logits(const Model& m, const TFImage& img,
                                          const Eigen::Vector3d& d_logits) {
  Workspace ws;
  forward_pass(m, img, ws);
  logits_of(ws);
  std::array<Mat, 3> d_input;
  backward_pass(m, ws, Vec(d_logits), nullptr, &d_input);
  return d_input;
}

LossGrad custom_loss_input_grad(const Model& m, const TFImage& img,
                                const LogitLoss& loss_fn) {
  Workspace ws;
  forward_pass(m, img, ws);
  LossGrad out;
  out.logits = logits_of(ws);
  auto [loss, d_logits] = loss_fn(out.logits);
  out.loss = loss;
  backward_pass(m, ws, Vec(d_logits), nullptr, &out.d_input);
  return out;
}

std::pair<double, Vec> loss_and_param_grad(const Model& m, const TFImage& img,
                                           int label) {
  Workspace ws;
  forward_pass(m, img, ws);
  const Eigen::Vector3d logits = logits_of(ws);
  const double loss = cross_entropy(logits, label);
  Eigen::Vector3d d_logits = softmax(logits);
  d_logits[label] -= 1.0;
  Vec grad;
  backward_pass(m, ws, Vec(d_logits), &grad, nullptr);
  return {loss, std::move(grad)};
}

double accuracy(const Model& m, const std::vector<TrainSample>& set) {
  if (set.empty()) throw ConfigError("accuracy over an empty set");
  int hits = 0;
  for (const auto& s : set)
    if (predict(m, s.image) == s.label) ++hits;
  return 100.0 * double(hits) / double(set.size());
}

TrainHistory train(Model& m, const std::vector<TrainSample>& train_set,
                   const std::vector<TrainSample>& test_set,
                   const TrainConfig& cfg, RngState& rng) {
  if (train_set.empty()) throw ConfigError("empty training set");
  if (cfg.epochs < 0 || cfg.batch < 1) throw ConfigError("bad train config");
  for (const auto& s : train_set)
    if (s.label < 0 || s.label >= kNumClasses)
      throw ConfigError("train label out of range");

  TrainHistory hist;
  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  Vec grad_acc(m.params.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the caller's stream.
    for (size_t i = order.size() - 1; i > 0; --i) {
      const size_t j = size_t(rng.uniform_int(0, int(i)));
      std::swap(order[i], order[j]);
    }
    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += size_t(cfg.batch)) {
      const size_t stop = std::min(order.size(), start + size_t(cfg.batch));
      grad_acc.setZero();
      for (size_t i = start; i < stop; ++i) {
        const TrainSample& s = train_set[order[i]];
        auto [loss, g] = loss_and_param_grad(m, s.image, s.label);
        grad_acc += g;
        loss_sum += loss;
      }
      m.params -= (cfg.lr / double(stop - start)) * grad_acc;
    }
    hist.train_loss.push_back(loss_sum / double(train_set.size()));
    hist.train_acc.push_back(accuracy(m, train_set));
    if (!test_set.empty()) hist.test_acc.push_back(accuracy(m, test_set));
  }
  return hist;
}

namespace {
constexpr char kModelMagic[8] = {'T', 'F', 'A', 'D', 'V', '0', '0', '1'};
}

void save_model(const std::filesystem::path& path, const Model& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(kModelMagic, 8);
  const std::uint8_t id = static_cast<std::uint8_t>(m.arch.id);
  f.write(reinterpret_cast<const char*>(&id), 1);
  const std::uint64_t count = static_cast<std::uint64_t>(m.params.size());
  f.write(reinterpret_cast<const char*>(&count), 8);
  for (Index i = 0; i < m.params.size(); ++i) {
    const float v = static_cast<float>(m.params[i]);
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  if (!f) throw IoError("write failed for " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  char magic[8];
  f.read(magic, 8);
  if (f.gcount() != 8 || std::memcmp(magic, kModelMagic, 8) != 0)
    throw FormatError("bad TFADV001 header in " + path.string());
  std::uint8_t id = 0;
  f.read(reinterpret_cast<char*>(&id), 1);
  std::uint64_t count = 0;
  f.read(reinterpret_cast<char*>(&count), 8);
  if (!f || id > 2) throw FormatError("bad TFADV001 header in " + path.string());
  Model m;
  m.arch = ArchDescriptor::make(static_cast<ArchId>(id));
  if (count != std::uint64_t(m.arch.param_count()))
    throw FormatError("parameter count mismatch in " + path.string());
  m.params.resize(Index(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    float v;
    f.read(reinterpret_cast<char*>(&v), 4);
    if (!f) throw FormatError("truncated parameters in " + path.string());
    m.params[Index(i)] = double(v);
  }
  char extra;
  if (f.read(&extra, 1))
    throw FormatError("trailing bytes in " + path.string());
  return m;
}

}  // namespace tfadv
