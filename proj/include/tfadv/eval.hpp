#pragma once

#include <tfadv/attacks.hpp>
#include <tfadv/stds.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <vector>

namespace tfadv {

struct DatasetConfig {
  WaveformConfig waveform;
  int train_per_class = 300;
  int test_per_class = 100;
};

// In-memory dataset: the time signals plus their rendered images, indexed
// identically.
struct Dataset {
  std::vector<TimeSignal> signals;
  std::vector<TrainSample> samples;
};

// Deterministic build: sample i of class c uses the RNG stream
// (seed, split_tag, c, i), so datasets are reproducible in any order.
Dataset build_dataset(const WaveformConfig& cfg, int per_class,
                      std::uint64_t seed, std::uint64_t split_tag,
                      const WindowSpec& w, const ColorLut& lut);

// Disk form: one TFSIG001 record per sample plus a JSON manifest carrying
// class names, counts, the config echo, the global seed and per-record
// metadata.
void write_dataset(const std::filesystem::path& dir,
                   const std::vector<TimeSignal>& signals,
                   const WaveformConfig& cfg, std::uint64_t seed);
std::vector<TimeSignal> read_dataset(const std::filesystem::path& dir);

struct ExperimentPlan {
  DatasetConfig dataset;
  std::vector<ArchId> models{ArchId::TinyA, ArchId::TinyB, ArchId::TinyC};
  std::vector<std::string> attacks{"fgsm", "pgd", "cw", "ditimi", "stds"};
  AttackConfig attack_cfg;
  StdsConfig stds_cfg;
  TrainConfig train_cfg;
  WindowSpec window;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir;
  int threads = 1;
  int figure_samples = 4;
  std::string image_format = "ppm";  // ppm | png

  void validate() const;
};

struct TransferCell {
  double rate = 0.0;  // percent
  int n = 0;          // eligible sample count
};

// (attack, source, victim) -> cell
using TransferMatrix =
    std::map<std::tuple<std::string, std::string, std::string>, TransferCell>;

struct StdsStats {
  int n = 0;          // attacked samples (source-eligible)
  int n_success = 0;  // replay-verified successes
  double mean_l2_image = 0.0;   // over successes, pixel units
  double mean_l2_rel = 0.0;     // over successes, time domain
  double mean_iterations = 0.0; // over successes
};

struct PlanResult {
  TransferMatrix matrix;
  std::map<std::string, TrainHistory> history;
  std::map<std::string, double> test_accuracy;
  std::map<std::string, StdsStats> stds_stats;  // keyed by source model
  std::map<std::string, double> train_seconds;  // keyed by model
  std::map<std::string, double> craft_seconds;  // keyed by "attack/source"
};

// Full experiment: dataset, training, every attack from every source model
// against every victim, CSV matrix + per-sample CSVs + image dumps.
// Deterministic given plan.seed, independent of plan.threads.
PlanResult run_plan(const ExperimentPlan& plan);

// Percent of adversarial examples the victim misclassifies, over samples it
// classifies correctly when clean. outcomes[i] pairs with clean[i].
double success_rate(const std::vector<AttackOutcome>& outcomes,
                    const std::vector<TrainSample>& clean, const Model& victim);

// Deterministic parallel map over [0, n): worker k takes indices k, k+T, ...
// Results must land in per-index slots; then output order is thread-free.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

// matrix.csv serialization (attack,source,victim,success_rate,n).
void write_matrix_csv(const std::filesystem::path& path,
                      const TransferMatrix& matrix);
TransferMatrix read_matrix_csv(const std::filesystem::path& path);

// Aligned text table, one block per (attack, source) row group.
std::string format_matrix_table(const TransferMatrix& matrix);

}  // namespace tfadv
