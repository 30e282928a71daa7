#include <tfadv/render.hpp>

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

namespace tfadv {

namespace {

// MATLAB-style parula, 64 entries.
constexpr double kParula[64][3] = {
    {0.2081, 0.1663, 0.5292}, {0.2116, 0.1898, 0.5777},
    {0.2123, 0.2138, 0.6270}, {0.2081, 0.2386, 0.6771},
    {0.1959, 0.2645, 0.7279}, {0.1707, 0.2919, 0.7792},
    {0.1253, 0.3242, 0.8303}, {0.0591, 0.3598, 0.8683},
    {0.0117, 0.3875, 0.8820}, {0.0060, 0.4086, 0.8828},
    {0.0165, 0.4266, 0.8786}, {0.0329, 0.4430, 0.8720},
    {0.0498, 0.4586, 0.8641}, {0.0629, 0.4737, 0.8554},
    {0.0723, 0.4887, 0.8467}, {0.0779, 0.5040, 0.8384},
    {0.0793, 0.5200, 0.8312}, {0.0749, 0.5375, 0.8263},
    {0.0641, 0.5570, 0.8240}, {0.0488, 0.5772, 0.8228},
    {0.0343, 0.5966, 0.8199}, {0.0265, 0.6137, 0.8135},
    {0.0239, 0.6287, 0.8038}, {0.0231, 0.6418, 0.7913},
    {0.0228, 0.6535, 0.7768}, {0.0267, 0.6642, 0.7607},
    {0.0384, 0.6743, 0.7436}, {0.0590, 0.6838, 0.7254},
    {0.0843, 0.6928, 0.7062}, {0.1133, 0.7015, 0.6859},
    {0.1453, 0.7098, 0.6646}, {0.1801, 0.7177, 0.6424},
    {0.2178, 0.7250, 0.6193}, {0.2586, 0.7317, 0.5954},
    {0.3022, 0.7376, 0.5712}, {0.3482, 0.7424, 0.5473},
    {0.3953, 0.7459, 0.5244}, {0.4420, 0.7481, 0.5033},
    {0.4871, 0.7491, 0.4840}, {0.5300, 0.7491, 0.4661},
    {0.5709, 0.7485, 0.4494}, {0.6099, 0.7473, 0.4337},
    {0.6473, 0.7456, 0.4188}, {0.6834, 0.7435, 0.4044},
    {0.7184, 0.7411, 0.3905}, {0.7525, 0.7384, 0.3768},
    {0.7858, 0.7356, 0.3633}, {0.8185, 0.7327, 0.3498},
    {0.8507, 0.7299, 0.3360}, {0.8824, 0.7274, 0.3217},
    {0.9139, 0.7258, 0.3063}, {0.9450, 0.7261, 0.2886},
    {0.9739, 0.7314, 0.2666}, {0.9938, 0.7455, 0.2403},
    {0.9990, 0.7653, 0.2164}, {0.9955, 0.7861, 0.1967},
    {0.9880, 0.8066, 0.1794}, {0.9789, 0.8271, 0.1633},
    {0.9697, 0.8481, 0.1475}, {0.9626, 0.8705, 0.1309},
    {0.9589, 0.8949, 0.1132}, {0.9598, 0.9218, 0.0948},
    {0.9661, 0.9514, 0.0755}, {0.9763, 0.9831, 0.0538}};

}  // namespace

ColorLut ColorLut::parula() {
  ColorLut lut;
  lut.table.resize(64, 3);
  for (Index i = 0; i < 64; ++i)
    for (Index c = 0; c < 3; ++c) lut.table(i, c) = kParula[i][c];
  return lut;
}

void ColorLut::validate() const {
  if (table.rows() < 2 || table.cols() != 3)
    throw ConfigError("colormap table must be n x 3 with n >= 2");
  if (!table.allFinite() || table.minCoeff() < 0.0 || table.maxCoeff() > 1.0)
    throw ConfigError("colormap entries must be finite and in [0,1]");
}

ColorLut ColorLut::from_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::array<double, 3>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::array<double, 3> rgb{};
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &rgb[0], &rgb[1], &rgb[2]) !=
        3)
      throw FormatError("bad colormap row '" + line + "' in " + path.string());
    rows.push_back(rgb);
  }
  ColorLut lut;
  lut.table.resize(static_cast<Index>(rows.size()), 3);
  for (size_t i = 0; i < rows.size(); ++i)
    for (Index c = 0; c < 3; ++c) lut.table(static_cast<Index>(i), c) = rows[i][c];
  lut.validate();
  return lut;
}

void ColorLut::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  char buf[64];
  for (Index i = 0; i < table.rows(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%.4f\n", table(i, 0),
                  table(i, 1), table(i, 2));
    f << buf;
  }
}

namespace {

// Active segment for a normalized value: index in [0, n-2] plus fraction.
inline void lut_segment(const Mat& table, double u, Index& i, double& f) {
  const double t = std::clamp(u, 0.0, 1.0) * double(table.rows() - 1);
  i = static_cast<Index>(std::floor(t));
  i = std::max<Index>(0, std::min<Index>(i, table.rows() - 2));
  f = t - double(i);
}

}  // namespace

Eigen::Vector3d ColorLut::color(double u) const {
  Index i;
  double f;
  lut_segment(table, u, i, f);
  Eigen::Vector3d out;
  for (Index c = 0; c < 3; ++c)
    out[c] = table(i, c) * (1.0 - f) + table(i + 1, c) * f;
  return out;
}

Eigen::Vector3d ColorLut::slope(double u) const {
  Index i;
  double f;
  lut_segment(table, u, i, f);
  Eigen::Vector3d out;
  for (Index c = 0; c < 3; ++c)
    out[c] = (table(i + 1, c) - table(i, c)) * double(table.rows() - 1);
  return out;
}

Mat resize_matrix(Index src, Index dst) {
  if (src < 1 || dst < 2)
    throw ConfigError("resize needs src >= 1 and dst >= 2");
  Mat w = Mat::Zero(dst, src);
  for (Index o = 0; o < dst; ++o) {
    const double s = double(o) * double(src - 1) / double(dst - 1);
    Index i0 = static_cast<Index>(std::floor(s));
    i0 = std::min<Index>(i0, src - 1);
    const double f = s - double(i0);
    w(o, i0) += 1.0 - f;
    if (i0 + 1 < src) w(o, i0 + 1) += f;
  }
  return w;
}

Mat resize_bilinear(const Mat& src, Index out_h, Index out_w) {
  const Mat ry = resize_matrix(src.rows(), out_h);
  const Mat rx = resize_matrix(src.cols(), out_w);
  return ry * src * rx.transpose();
}

namespace {

Mat scaled_magnitude(const Mat& re, const Mat& im, const RenderOptions& opts) {
  Mat mag = (re.array().square() + im.array().square()).sqrt();
  if (opts.db_scale)
    mag = mag.unaryExpr([&](double m) {
      return 20.0 * std::log10(std::max(m, opts.db_floor));
    });
  return mag;
}

}  // namespace

TFImage render_image(const Mat& re, const Mat& im, const ColorLut& lut,
                     Index out_h, Index out_w, const RenderOptions& opts) {
  if (re.rows() != im.rows() || re.cols() != im.cols())
    throw ConfigError("real/imag plane shapes differ");
  lut.validate();
  const Index rows = re.rows(), cols = re.cols();

  const Mat mag = scaled_magnitude(re, im, opts);
  const double mn = mag.minCoeff(), mx = mag.maxCoeff();
  if (!(mx > mn))
    throw NumericError("degenerate magnitude field: max == min");
  const double inv = 1.0 / (mx - mn);

  std::array<Mat, 3> rgb;
  for (int c = 0; c < 3; ++c) rgb[c].resize(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) {
      const Eigen::Vector3d col = lut.color((mag(i, j) - mn) * inv);
      for (int c = 0; c < 3; ++c) rgb[c](i, j) = col[c];
    }

  const Mat ry = resize_matrix(rows, out_h);
  const Mat rx = resize_matrix(cols, out_w);

  TFImage img;
  img.norm = {mn, mx};
  img.src_bins = rows;
  img.src_frames = cols;
  for (int c = 0; c < 3; ++c) img.chan[c] = ry * rgb[c] * rx.transpose();
  return img;
}

std::pair<Mat, Mat> render_backward(const Mat& re, const Mat& im,
                                    const ColorLut& lut,
                                    const std::array<Mat, 3>& d_pixels,
                                    Index out_h, Index out_w,
                                    const RenderOptions& opts) {
  if (re.rows() != im.rows() || re.cols() != im.cols())
    throw ConfigError("real/imag plane shapes differ");
  for (int c = 0; c < 3; ++c)
    if (d_pixels[c].rows() != out_h || d_pixels[c].cols() != out_w)
      throw ConfigError("upstream gradient shape mismatch");
  lut.validate();
  const Index rows = re.rows(), cols = re.cols();

  const Mat raw_mag = (re.array().square() + im.array().square()).sqrt();
  const Mat mag = scaled_magnitude(re, im, opts);
  const double mn = mag.minCoeff(), mx = mag.maxCoeff();
  if (!(mx > mn))
    throw NumericError("degenerate magnitude field: max == min");
  const double inv = 1.0 / (mx - mn);

  const Mat ry = resize_matrix(rows, out_h);
  const Mat rx = resize_matrix(cols, out_w);

  // Resize transpose per channel, then collapse through the LUT slope.
  std::array<Mat, 3> d_rgb;
  for (int c = 0; c < 3; ++c)
    d_rgb[c] = ry.transpose() * d_pixels[c] * rx;

  constexpr double kLog10 = 2.302585092994046;
  Mat d_re(rows, cols), d_im(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) {
      const double m = raw_mag(i, j);
      const Eigen::Vector3d sl = lut.slope((mag(i, j) - mn) * inv);
      double du = 0.0;
      for (int c = 0; c < 3; ++c) du += d_rgb[c](i, j) * sl[c];
      double dm = du * inv;  // min/max held constant
      if (opts.db_scale) {
        // d(20 log10 max(m, floor))/dm: zero in the clamped region.
        dm = m > opts.db_floor ? dm * 20.0 / (kLog10 * m) : 0.0;
      }
      if (m > 0.0) {
        d_re(i, j) = dm * re(i, j) / m;
        d_im(i, j) = dm * im(i, j) / m;
      } else {
        d_re(i, j) = 0.0;
        d_im(i, j) = 0.0;
      }
    }
  return {std::move(d_re), std::move(d_im)};
}

namespace {

inline unsigned char quantize(double v) {
  const double q = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<unsigned char>(std::min(q, 255.0));
}

std::vector<unsigned char> interleave_rgb(const std::array<Mat, 3>& px) {
  const Index h = px[0].rows(), w = px[0].cols();
  std::vector<unsigned char> out;
  out.reserve(static_cast<size_t>(h) * w * 3);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.push_back(quantize(px[c](y, x)));
  return out;
}

}  // namespace

void write_ppm(const std::filesystem::path& path,
               const std::array<Mat, 3>& pixels) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << "P6\n" << pixels[0].cols() << " " << pixels[0].rows() << "\n255\n";
  const auto bytes = interleave_rgb(pixels);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

void write_ppm(const std::filesystem::path& path, const TFImage& img) {
  write_ppm(path, img.chan);
}

namespace {

void put_be32(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back(static_cast<unsigned char>(x >> 24));
  v.push_back(static_cast<unsigned char>(x >> 16));
  v.push_back(static_cast<unsigned char>(x >> 8));
  v.push_back(static_cast<unsigned char>(x));
}

void png_chunk(std::ofstream& f, const char type[4],
               const std::vector<unsigned char>& payload) {
  std::vector<unsigned char> head;
  put_be32(head, static_cast<std::uint32_t>(payload.size()));
  f.write(reinterpret_cast<const char*>(head.data()), 4);
  f.write(type, 4);
  if (!payload.empty())
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  if (!payload.empty()) crc = crc32(crc, payload.data(), static_cast<uInt>(payload.size()));
  std::vector<unsigned char> tail;
  put_be32(tail, static_cast<std::uint32_t>(crc));
  f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void write_png(const std::filesystem::path& path,
               const std::array<Mat, 3>& pixels) {
  const Index h = pixels[0].rows(), w = pixels[0].cols();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  f.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<unsigned char> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(w));
  put_be32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  png_chunk(f, "IHDR", ihdr);

  // Filter byte 0 before each scanline.
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<size_t>(h) * (w * 3 + 1));
  for (Index y = 0; y < h; ++y) {
    raw.push_back(0);
    for (Index x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) raw.push_back(quantize(pixels[c](y, x)));
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> idat(bound);
  if (compress2(idat.data(), &bound, raw.data(),
                static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw IoError("png compression failed for " + path.string());
  idat.resize(bound);
  png_chunk(f, "IDAT", idat);
  png_chunk(f, "IEND", {});
  if (!f) throw IoError("write failed for " + path.string());
}

void write_png(const std::filesystem::path& path, const TFImage& img) {
  write_png(path, img.chan);
}

}  // namespace tfadv
