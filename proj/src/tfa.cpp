#include <tfadv/tfa.hpp>

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace tfadv {

void WindowSpec::validate() const {
  if (length <= 0 || hop <= 0 || fft_size <= 0)
    throw ConfigError("window fields must be positive");
  if (fft_size < length) throw ConfigError("fft_size must be >= length");
  if (length % hop != 0 || length / hop < 2)
    throw ConfigError(
        "hop must divide the window length with at least 2x overlap");
}

Vec WindowSpec::window() const {
  validate();
  Vec h(length);
  for (Index n = 0; n < length; ++n)
    h[n] = 0.5 * (1.0 - std::cos(2.0 * M_PI * double(n) / double(length)));
  return h;
}

Index num_frames(const WindowSpec& w, Index n) {
  w.validate();
  const Index padded = n + 2 * (w.length / 2);
  if (padded <= w.length) return 1;
  return (padded - w.length + w.hop - 1) / w.hop + 1;
}

double grid_scale(const WindowSpec& w) {
  // Fixed coefficient normalization: unit-RMS pulses produce grids peaking
  // near 0.06, a range where the fixed-step plane optimizer is productive.
  return 1.0 / (8.0 * double(w.fft_size));
}

StftGrid stft(const Vec& x, const WindowSpec& w) {
  w.validate();
  const Index n = x.size();
  const Index pad = w.length / 2;
  const Index frames = num_frames(w, n);
  const Vec h = w.window();
  const double scale = grid_scale(w);

  Vec padded = Vec::Zero(n + 2 * pad);
  padded.segment(pad, n) = x;

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> in(w.fft_size), out(w.fft_size);

  StftGrid g;
  g.window = w;
  g.original_length = n;
  g.data.resize(w.fft_size, frames);
  for (Index m = 0; m < frames; ++m) {
    for (Index i = 0; i < w.fft_size; ++i) {
      const Index q = m * w.hop + i;
      const double v =
          (i < w.length && q < padded.size()) ? padded[q] * h[i] : 0.0;
      in[i] = {v, 0.0};
    }
    fft.fwd(out, in);
    for (Index k = 0; k < w.fft_size; ++k) g.data(k, m) = out[k] * scale;
  }
  return g;
}

StftGrid stft(const TimeSignal& sig, const WindowSpec& w) {
  return stft(sig.samples, w);
}

CVec istft(const StftGrid& grid) {
  const WindowSpec& w = grid.window;
  w.validate();
  const Index n = grid.original_length;
  const Index frames = num_frames(w, n);
  if (grid.data.rows() != w.fft_size || grid.data.cols() != frames)
    throw ConfigError("grid dimensions inconsistent with window/length");

  const Vec h = w.window();
  const double scale = 1.0 / grid_scale(w);  // undo the analysis normalization
  const Index pad = w.length / 2;
  const Index span = (frames - 1) * w.hop + w.length;

  CVec acc = CVec::Zero(span);
  Vec wsq = Vec::Zero(span);

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> in(w.fft_size), out(w.fft_size);
  for (Index m = 0; m < frames; ++m) {
    for (Index k = 0; k < w.fft_size; ++k) in[k] = grid.data(k, m) * scale;
    fft.inv(out, in);
    // Synthesis window over the window support; the fft_size tail beyond
    // the window length carries no weight.
    for (Index i = 0; i < w.length; ++i) {
      acc[m * w.hop + i] += out[i] * h[i];
      wsq[m * w.hop + i] += h[i] * h[i];
    }
  }

  CVec y(n);
  for (Index q = 0; q < n; ++q) {
    const double den = wsq[pad + q];
    y[q] = den > 0.0 ? acc[pad + q] / den : std::complex<double>(0.0, 0.0);
  }
  return y;
}

std::pair<Mat, Mat> split_complex(const StftGrid& grid) {
  return {grid.data.real(), grid.data.imag()};
}

StftGrid join_complex(const Mat& re, const Mat& im, const WindowSpec& w,
                      Index original_length) {
  if (re.rows() != im.rows() || re.cols() != im.cols())
    throw ConfigError("real/imag plane shapes differ");
  StftGrid g;
  g.window = w;
  g.original_length = original_length;
  g.data.resize(re.rows(), re.cols());
  for (Index m = 0; m < re.cols(); ++m)
    for (Index k = 0; k < re.rows(); ++k) g.data(k, m) = {re(k, m), im(k, m)};
  return g;
}

namespace {
constexpr char kGridMagic[8] = {'T', 'F', 'G', 'R', 'D', '0', '0', '1'};

void put_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::ifstream& f) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
}  // namespace

void write_grid(const std::filesystem::path& path, const StftGrid& grid) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(kGridMagic, 8);
  put_u32(f, static_cast<std::uint32_t>(grid.data.rows()));
  put_u32(f, static_cast<std::uint32_t>(grid.data.cols()));
  put_u32(f, static_cast<std::uint32_t>(grid.window.length));
  put_u32(f, static_cast<std::uint32_t>(grid.window.hop));
  put_u32(f, static_cast<std::uint32_t>(grid.window.fft_size));
  put_u32(f, static_cast<std::uint32_t>(grid.original_length));
  for (Index m = 0; m < grid.data.cols(); ++m)
    for (Index k = 0; k < grid.data.rows(); ++k) {
      const float re = static_cast<float>(grid.data(k, m).real());
      const float im = static_cast<float>(grid.data(k, m).imag());
      f.write(reinterpret_cast<const char*>(&re), 4);
      f.write(reinterpret_cast<const char*>(&im), 4);
    }
  if (!f) throw IoError("write failed for " + path.string());
}

StftGrid read_grid(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  char magic[8];
  f.read(magic, 8);
  if (f.gcount() != 8 || std::memcmp(magic, kGridMagic, 8) != 0)
    throw FormatError("bad TFGRD001 header in " + path.string());
  const std::uint32_t bins = get_u32(f), frames = get_u32(f);
  StftGrid g;
  g.window.length = get_u32(f);
  g.window.hop = get_u32(f);
  g.window.fft_size = get_u32(f);
  g.original_length = get_u32(f);
  if (!f) throw FormatError("truncated TFGRD001 header in " + path.string());
  g.data.resize(bins, frames);
  for (std::uint32_t m = 0; m < frames; ++m)
    for (std::uint32_t k = 0; k < bins; ++k) {
      float re, im;
      f.read(reinterpret_cast<char*>(&re), 4);
      f.read(reinterpret_cast<char*>(&im), 4);
      if (!f)
        throw FormatError("truncated TFGRD001 payload in " + path.string());
      g.data(k, m) = {double(re), double(im)};
    }
  return g;
}

}  // namespace tfadv
