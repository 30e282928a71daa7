#include <tfadv/waveforms.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

namespace tfadv {

const std::array<int, 13> kBarker13 = {+1, +1, +1, +1, +1, -1, -1,
                                       +1, +1, -1, +1, -1, +1};

const std::array<int, 7> kCostas7 = {0, 2, 5, 1, 6, 3, 4};

const char* class_name(int label) {
  switch (label) {
    case 0: return "barker";
    case 1: return "costas";
    case 2: return "lfm";
    default: throw ConfigError("unknown class label " + std::to_string(label));
  }
}

int class_label(const std::string& name) {
  if (name == "barker") return 0;
  if (name == "costas") return 1;
  if (name == "lfm") return 2;
  throw ConfigError("unknown class name '" + name + "'");
}

void WaveformConfig::validate() const {
  if (n_samples <= 0) throw ConfigError("n_samples must be positive");
  if (sample_rate <= 0.0) throw ConfigError("sample_rate must be positive");
  const double nyq = 0.5 * sample_rate;
  if (!carrier_range.valid() || carrier_range.lo < 0.0)
    throw ConfigError("carrier_range must be a nonnegative interval");
  if (carrier_range.hi >= nyq)
    throw ConfigError("carrier_range reaches the Nyquist frequency");
  if (!lfm_bandwidth_range.valid() || lfm_bandwidth_range.lo < 0.0)
    throw ConfigError("lfm_bandwidth_range must be a nonnegative interval");
  if (carrier_range.hi + lfm_bandwidth_range.hi >= nyq)
    throw ConfigError("LFM sweep would cross the Nyquist frequency");
  if (barker_code_length != 13)
    throw ConfigError("barker_code_length must be 13");
  if (costas_order != 7) throw ConfigError("costas_order must be 7");
  // The Costas hop ladder tops out at 0.9 * Nyquist; the base must sit below.
  if (carrier_range.hi >= 0.9 * nyq)
    throw ConfigError("carrier_range too high for the Costas hop ladder");
  if (!snr_range_db.valid()) throw ConfigError("snr_range_db inverted");
}

namespace {

void normalize_rms(Vec& x) {
  const double ms = x.squaredNorm() / double(x.size());
  if (ms > 0.0) x *= 1.0 / std::sqrt(ms);
}

TimeSignal finish(Vec samples, const WaveformConfig& cfg, int label,
                  std::uint64_t seed) {
  normalize_rms(samples);
  TimeSignal s;
  s.samples = std::move(samples);
  s.sample_rate = cfg.sample_rate;
  s.label = label;
  s.seed = seed;
  return s;
}

}  // namespace

TimeSignal synth_barker(const WaveformConfig& cfg, RngState& rng) {
  cfg.validate();
  const double f0 = rng.uniform(cfg.carrier_range.lo, cfg.carrier_range.hi);
  const Index n_samp = cfg.n_samples;
  const int n_chips = cfg.barker_code_length;
  Vec x(n_samp);
  for (Index n = 0; n < n_samp; ++n) {
    const int chip = static_cast<int>((n * n_chips) / n_samp);
    const double ph = 2.0 * M_PI * f0 * double(n) / cfg.sample_rate;
    x[n] = double(kBarker13[chip]) * std::sin(ph);
  }
  return finish(std::move(x), cfg, 0, rng.seed());
}

TimeSignal synth_costas(const WaveformConfig& cfg, RngState& rng) {
  cfg.validate();
  const double f_base = rng.uniform(cfg.carrier_range.lo, cfg.carrier_range.hi);
  const Index n_samp = cfg.n_samples;
  const int order = cfg.costas_order;
  // Hop ladder spans [f_base, 0.9 * Nyquist] in `order`-1 steps.
  const double df =
      (0.45 * cfg.sample_rate - f_base) / double(order - 1);
  Vec x(n_samp);
  double phase = 0.0;
  for (Index n = 0; n < n_samp; ++n) {
    const int k = static_cast<int>((n * order) / n_samp);
    const double f = f_base + double(kCostas7[k]) * df;
    x[n] = std::sin(phase);
    phase += 2.0 * M_PI * f / cfg.sample_rate;
  }
  return finish(std::move(x), cfg, 1, rng.seed());
}

TimeSignal synth_lfm(const WaveformConfig& cfg, RngState& rng) {
  cfg.validate();
  const double f0 = rng.uniform(cfg.carrier_range.lo, cfg.carrier_range.hi);
  const double bw =
      rng.uniform(cfg.lfm_bandwidth_range.lo, cfg.lfm_bandwidth_range.hi);
  if (f0 + bw >= 0.5 * cfg.sample_rate)
    throw ConfigError("LFM draw crosses the Nyquist frequency");
  const Index n_samp = cfg.n_samples;
  Vec x(n_samp);
  for (Index n = 0; n < n_samp; ++n) {
    const double t = double(n);
    const double ph =
        2.0 * M_PI * (f0 * t + 0.5 * bw * t * t / double(n_samp)) /
        cfg.sample_rate;
    x[n] = std::sin(ph);
  }
  return finish(std::move(x), cfg, 2, rng.seed());
}

TimeSignal synth_class(int label, const WaveformConfig& cfg, RngState& rng) {
  switch (label) {
    case 0: return synth_barker(cfg, rng);
    case 1: return synth_costas(cfg, rng);
    case 2: return synth_lfm(cfg, rng);
    default: throw ConfigError("unknown class label " + std::to_string(label));
  }
}

TimeSignal add_awgn(const TimeSignal& sig, double snr_db, RngState& rng) {
  if (!sig.samples.allFinite() || !std::isfinite(snr_db))
    throw NumericError("add_awgn requires finite inputs");
  const Index n = sig.samples.size();
  const double ps = sig.samples.squaredNorm() / double(n);
  if (ps <= 0.0) throw NumericError("SNR undefined for an all-zero signal");
  const double pn = ps / std::pow(10.0, snr_db / 10.0);
  const double sigma = std::sqrt(pn);
  TimeSignal out = sig;
  for (Index i = 0; i < n; ++i) out.samples[i] += sigma * rng.normal();
  out.snr_db = snr_db;
  return out;
}

TimeSignal make_sample(const WaveformConfig& cfg, int label,
                       std::uint64_t stream_seed) {
  RngState rng(stream_seed);
  TimeSignal s = synth_class(label, cfg, rng);
  const double snr = rng.uniform(cfg.snr_range_db.lo, cfg.snr_range_db.hi);
  s = add_awgn(s, snr, rng);
  s.seed = stream_seed;
  return s;
}

namespace {
constexpr char kSignalMagic[8] = {'T', 'F', 'S', 'I', 'G', '0', '0', '1'};
}

void write_signal_record(const std::filesystem::path& path,
                         const TimeSignal& sig) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  char header[16] = {};
  std::memcpy(header, kSignalMagic, 8);
  header[8] = static_cast<char>(sig.label);
  f.write(header, 16);
  for (Index i = 0; i < sig.samples.size(); ++i) {
    const float v = static_cast<float>(sig.samples[i]);
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  if (!f) throw IoError("write failed for " + path.string());
}

TimeSignal read_signal_record(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  char header[16];
  f.read(header, 16);
  if (f.gcount() != 16 || std::memcmp(header, kSignalMagic, 8) != 0)
    throw FormatError("bad TFSIG001 header in " + path.string());
  const int label = static_cast<unsigned char>(header[8]);
  if (label >= kNumClasses)
    throw FormatError("bad class label in " + path.string());
  std::vector<float> raw;
  float v;
  while (f.read(reinterpret_cast<char*>(&v), 4)) raw.push_back(v);
  if (f.gcount() != 0)
    throw FormatError("truncated sample payload in " + path.string());
  TimeSignal s;
  s.samples.resize(static_cast<Index>(raw.size()));
  for (size_t i = 0; i < raw.size(); ++i) s.samples[i] = double(raw[i]);
  s.label = label;
  s.snr_db = std::numeric_limits<double>::quiet_NaN();  // not stored
  return s;
}

}  // namespace tfadv
