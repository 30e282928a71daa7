#pragma once

#include <tfadv/common.hpp>

#include <array>
#include <filesystem>
#include <limits>

namespace tfadv {

inline constexpr int kNumClasses = 3;

// Class labels: 0 = Barker, 1 = Costas, 2 = LFM.
const char* class_name(int label);
int class_label(const std::string& name);  // throws ConfigError on unknown

// 13-chip biphase Barker code.
extern const std::array<int, 13> kBarker13;
// Order-7 Costas permutation of {0..6}; every (Δindex, Δvalue) pair distinct.
extern const std::array<int, 7> kCostas7;

struct WaveformConfig {
  Index n_samples = 1024;
  double sample_rate = 1.0;  // frequencies below are fractions of this
  Interval carrier_range{0.06, 0.24};
  Interval lfm_bandwidth_range{0.06, 0.18};
  int barker_code_length = 13;  // only 13 supported
  int costas_order = 7;         // only 7 supported (one embedded permutation)
  Interval snr_range_db{-10.0, 10.0};

  void validate() const;  // throws ConfigError
};

struct TimeSignal {
  Vec samples;
  double sample_rate = 1.0;
  int label = 0;
  // SNR of the additive noise; +inf marks a noise-free synthesizer output.
  double snr_db = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
};

// Noise-free synthesizers. Each returns a unit-RMS waveform so that the SNR
// of a later add_awgn call is well defined. Carrier/start frequencies are
// drawn from the config ranges using the supplied RNG stream.
TimeSignal synth_barker(const WaveformConfig& cfg, RngState& rng);
TimeSignal synth_costas(const WaveformConfig& cfg, RngState& rng);
TimeSignal synth_lfm(const WaveformConfig& cfg, RngState& rng);
TimeSignal synth_class(int label, const WaveformConfig& cfg, RngState& rng);

// sig + white Gaussian noise at the requested SNR relative to the empirical
// signal power. Throws NumericError on an all-zero signal.
TimeSignal add_awgn(const TimeSignal& sig, double snr_db, RngState& rng);

// One sample end to end: synthesize the class, draw an SNR uniformly from
// cfg.snr_range_db, add noise. The stream seed is recorded on the signal.
TimeSignal make_sample(const WaveformConfig& cfg, int label,
                       std::uint64_t stream_seed);

// TFSIG001 record: 16-byte header {magic "TFSIG001", label u8, 7 pad bytes}
// followed by the samples as little-endian f32.
void write_signal_record(const std::filesystem::path& path,
                         const TimeSignal& sig);
TimeSignal read_signal_record(const std::filesystem::path& path);

}  // namespace tfadv
