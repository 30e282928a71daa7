#include <tfadv/eval.hpp>

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace tfadv {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int k = 0; k < threads; ++k)
    pool.emplace_back([&, k] {
      for (int i = k; i < n; i += threads) fn(i);
    });
  for (auto& t : pool) t.join();
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

Dataset build_dataset(const WaveformConfig& cfg, int per_class,
                      std::uint64_t seed, std::uint64_t split_tag,
                      const WindowSpec& w, const ColorLut& lut) {
  cfg.validate();
  Dataset ds;
  for (int cls = 0; cls < kNumClasses; ++cls)
    for (int i = 0; i < per_class; ++i) {
      TimeSignal s = make_sample(
          cfg, cls, mix_stream(seed, split_tag, std::uint64_t(cls) * 1000003 + i));
      auto [re, im] = split_complex(stft(s.samples, w));
      ds.samples.push_back({render_image(re, im, lut), cls});
      ds.signals.push_back(std::move(s));
    }
  return ds;
}

void write_dataset(const fs::path& dir, const std::vector<TimeSignal>& signals,
                   const WaveformConfig& cfg, std::uint64_t seed) {
  fs::create_directories(dir);
  ordered_json manifest;
  manifest["format"] = "TFSIG001";
  manifest["seed"] = seed;
  manifest["classes"] = {"barker", "costas", "lfm"};
  manifest["count"] = signals.size();
  manifest["waveform"] = {
      {"n_samples", cfg.n_samples},
      {"sample_rate", cfg.sample_rate},
      {"carrier_range", {cfg.carrier_range.lo, cfg.carrier_range.hi}},
      {"lfm_bandwidth_range",
       {cfg.lfm_bandwidth_range.lo, cfg.lfm_bandwidth_range.hi}},
      {"barker_code_length", cfg.barker_code_length},
      {"costas_order", cfg.costas_order},
      {"snr_range_db", {cfg.snr_range_db.lo, cfg.snr_range_db.hi}}};
  ordered_json records = ordered_json::array();
  for (size_t i = 0; i < signals.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%05zu.sig", i);
    write_signal_record(dir / name, signals[i]);
    records.push_back({{"file", name},
                       {"label", signals[i].label},
                       {"snr_db", signals[i].snr_db},
                       {"seed", signals[i].seed}});
  }
  manifest["records"] = std::move(records);
  std::ofstream f(dir / "manifest.json");
  if (!f) throw IoError("cannot write " + (dir / "manifest.json").string());
  f << manifest.dump(2) << "\n";
}

std::vector<TimeSignal> read_dataset(const fs::path& dir) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw IoError("cannot open " + (dir / "manifest.json").string());
  ordered_json manifest;
  try {
    f >> manifest;
  } catch (const std::exception& e) {
    throw FormatError("bad manifest in " + dir.string() + ": " + e.what());
  }
  std::vector<TimeSignal> out;
  for (const auto& rec : manifest.at("records")) {
    TimeSignal s = read_signal_record(dir / rec.at("file").get<std::string>());
    const int label = rec.at("label").get<int>();
    if (label != s.label)
      throw FormatError("manifest/record label mismatch in " + dir.string());
    s.snr_db = rec.at("snr_db").get<double>();
    s.seed = rec.at("seed").get<std::uint64_t>();
    out.push_back(std::move(s));
  }
  return out;
}

void ExperimentPlan::validate() const {
  dataset.waveform.validate();
  attack_cfg.validate();
  stds_cfg.validate();
  window.validate();
  if (dataset.train_per_class < 1 || dataset.test_per_class < 1)
    throw ConfigError("per-class counts must be positive");
  if (models.empty()) throw ConfigError("plan needs at least one model");
  if (out_dir.empty()) throw ConfigError("plan needs an output directory");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  for (const auto& a : attacks)
    if (a != "fgsm" && a != "pgd" && a != "cw" && a != "ditimi" && a != "stds")
      throw ConfigError("unknown attack '" + a + "'");
  if (image_format != "ppm" && image_format != "png")
    throw ConfigError("image format must be ppm or png");
}

double success_rate(const std::vector<AttackOutcome>& outcomes,
                    const std::vector<TrainSample>& clean,
                    const Model& victim) {
  if (outcomes.empty() || outcomes.size() != clean.size())
    throw ConfigError("outcomes and clean samples must align");
  int eligible = 0, hits = 0;
  for (size_t i = 0; i < outcomes.size(); ++i) {
    if (predict(victim, clean[i].image) != clean[i].label) continue;
    ++eligible;
    hits += (predict(victim, outcomes[i].adv_image) != clean[i].label);
  }
  if (eligible == 0) throw NumericError("no eligible samples for this victim");
  return 100.0 * double(hits) / double(eligible);
}

void write_matrix_csv(const fs::path& path, const TransferMatrix& matrix) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "attack,source,victim,success_rate,n\n";
  for (const auto& [key, cell] : matrix) {
    const auto& [attack, source, victim] = key;
    f << attack << "," << source << "," << victim << ","
      << fmt("%.2f", cell.rate) << "," << cell.n << "\n";
  }
}

TransferMatrix read_matrix_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != "attack,source,victim,success_rate,n")
    throw FormatError("bad matrix header in " + path.string());
  TransferMatrix m;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string attack, source, victim, rate, n;
    if (!std::getline(ss, attack, ',') || !std::getline(ss, source, ',') ||
        !std::getline(ss, victim, ',') || !std::getline(ss, rate, ',') ||
        !std::getline(ss, n))
      throw FormatError("bad matrix row '" + line + "'");
    try {
      m[{attack, source, victim}] = {std::stod(rate), std::stoi(n)};
    } catch (const std::exception&) {
      throw FormatError("bad matrix row '" + line + "'");
    }
  }
  return m;
}

std::string format_matrix_table(const TransferMatrix& matrix) {
  // Column set: union of victims, in matrix order.
  std::vector<std::string> victims;
  for (const auto& [key, cell] : matrix) {
    const std::string& v = std::get<2>(key);
    if (std::find(victims.begin(), victims.end(), v) == victims.end())
      victims.push_back(v);
  }
  std::ostringstream out;
  out << "success rates (%), computed over samples the victim classifies "
         "correctly when clean; self-attack = white-box\n\n";
  char head[64];
  std::snprintf(head, sizeof(head), "%-8s %-8s", "attack", "source");
  out << head;
  for (const auto& v : victims) {
    std::snprintf(head, sizeof(head), " %9s", v.c_str());
    out << head;
  }
  out << "\n";

  std::vector<std::pair<std::string, std::string>> groups;
  for (const auto& [key, cell] : matrix) {
    const auto g = std::pair{std::get<0>(key), std::get<1>(key)};
    if (std::find(groups.begin(), groups.end(), g) == groups.end())
      groups.push_back(g);
  }
  for (const auto& [attack, source] : groups) {
    std::snprintf(head, sizeof(head), "%-8s %-8s", attack.c_str(),
                  source.c_str());
    out << head;
    for (const auto& v : victims) {
      const auto it = matrix.find({attack, source, v});
      if (it == matrix.end())
        out << "         -";
      else
        out << " " << fmt("%9.2f", it->second.rate);
    }
    out << "\n";
  }
  return out.str();
}

namespace {

struct CsvRow {
  int sample = 0;
  std::string method, source, victim;
  int clean_label = 0, adv_label = 0;
  bool success = false;
  double l2 = 0.0, linf = 0.0;
  int iterations = 0;
};

void write_sample_csv(const fs::path& path, const std::vector<CsvRow>& rows) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "sample,method,source,victim,clean_label,adv_label,success,l2,linf,"
       "iterations\n";
  for (const auto& r : rows)
    f << r.sample << "," << r.method << "," << r.source << "," << r.victim
      << "," << r.clean_label << "," << r.adv_label << "," << (r.success ? 1 : 0)
      << "," << fmt("%.6f", r.l2) << "," << fmt("%.8f", r.linf) << ","
      << r.iterations << "\n";
}

struct StdsCsvRow {
  int sample = 0;
  std::string source;
  int clean_label = 0;
  int replay_label_self = 0;
  bool success_replay = false;
  double l2_image = 0.0, l2_signal = 0.0, l2_signal_rel = 0.0;
  int iterations_used = 0;
};

void write_stds_csv(const fs::path& path, const std::vector<StdsCsvRow>& rows) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "sample,source,clean_label,replay_label,success_replay,l2_image,"
       "l2_signal,l2_signal_rel,iterations_used\n";
  for (const auto& r : rows)
    f << r.sample << "," << r.source << "," << r.clean_label << ","
      << r.replay_label_self << "," << (r.success_replay ? 1 : 0) << ","
      << fmt("%.6f", r.l2_image) << "," << fmt("%.6f", r.l2_signal) << ","
      << fmt("%.6f", r.l2_signal_rel) << "," << r.iterations_used << "\n";
}

void write_image(const fs::path& stem, const std::array<Mat, 3>& px,
                 const std::string& format) {
  if (format == "png")
    write_png(fs::path(stem).concat(".png"), px);
  else
    write_ppm(fs::path(stem).concat(".ppm"), px);
}

// Noise visualization: signed difference mapped to gray = 0.5, scaled by
// the largest deviation so the structure is visible.
std::array<Mat, 3> noise_view(const std::array<Mat, 3>& noise) {
  double peak = 0.0;
  for (int c = 0; c < 3; ++c)
    peak = std::max(peak, noise[c].cwiseAbs().maxCoeff());
  std::array<Mat, 3> out;
  const double s = peak > 0.0 ? 0.5 / peak : 0.0;
  for (int c = 0; c < 3; ++c)
    out[c] = (noise[c].array() * s + 0.5).cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

}  // namespace

PlanResult run_plan(const ExperimentPlan& plan) {
  plan.validate();
  const ColorLut lut = ColorLut::parula();
  const fs::path out = plan.out_dir;
  fs::create_directories(out / "datasets");
  fs::create_directories(out / "models");
  fs::create_directories(out / "results" / "samples");
  fs::create_directories(out / "figures");

  // Datasets (split tags: 0 = train, 1 = test).
  Dataset train_ds = build_dataset(plan.dataset.waveform,
                                   plan.dataset.train_per_class, plan.seed, 0,
                                   plan.window, lut);
  Dataset test_ds = build_dataset(plan.dataset.waveform,
                                  plan.dataset.test_per_class, plan.seed, 1,
                                  plan.window, lut);
  write_dataset(out / "datasets" / "train", train_ds.signals,
                plan.dataset.waveform, plan.seed);
  write_dataset(out / "datasets" / "test", test_ds.signals,
                plan.dataset.waveform, plan.seed);

  PlanResult result;

  // Train, save, reload (the evaluated weights are the serialized ones).
  std::vector<Model> models;
  for (size_t k = 0; k < plan.models.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    Model m = Model::init(plan.models[k], mix_stream(plan.seed, 10, k));
    RngState trng(mix_stream(plan.seed, 11, k));
    TrainConfig tc = plan.train_cfg;
    tc.lr = m.arch.suggested_lr;
    TrainHistory h = train(m, train_ds.samples, test_ds.samples, tc, trng);
    const std::string name = arch_name(plan.models[k]);
    result.train_seconds[name] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    const fs::path mp = out / "models" / (name + ".tfadv");
    save_model(mp, m);
    models.push_back(load_model(mp));
    result.test_accuracy[name] = accuracy(models.back(), test_ds.samples);
    result.history[name] = std::move(h);
  }

  const int n_test = int(test_ds.samples.size());

  // Clean predictions per victim, for eligibility and adv evaluation.
  std::vector<std::vector<int>> clean_pred(models.size(),
                                           std::vector<int>(n_test));
  for (size_t v = 0; v < models.size(); ++v)
    parallel_for(n_test, plan.threads, [&, v](int i) {
      clean_pred[v][i] = predict(models[v], test_ds.samples[i].image);
    });

  std::uint64_t attack_tag = 100;
  for (const std::string& attack : plan.attacks) {
    ++attack_tag;
    for (size_t s = 0; s < models.size(); ++s) {
      const std::string source = arch_name(plan.models[s]);
      const Model& src_model = models[s];

      const auto craft_t0 = std::chrono::steady_clock::now();
      auto record_craft_time = [&] {
        result.craft_seconds[attack + "/" + source] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          craft_t0)
                .count();
      };

      if (attack == "stds") {
        std::vector<StdsOutcome> outs(n_test);
        parallel_for(n_test, plan.threads, [&](int i) {
          outs[i] = stds_attack(src_model, test_ds.signals[i], plan.stds_cfg,
                                plan.window, lut);
        });
        record_craft_time();

        StdsStats stats;
        std::vector<StdsCsvRow> rows;
        for (int i = 0; i < n_test; ++i) {
          const StdsOutcome& o = outs[i];
          ++stats.n;
          if (o.success_replay) {
            ++stats.n_success;
            stats.mean_l2_image += o.l2_image;
            stats.mean_l2_rel += o.l2_signal_rel;
            stats.mean_iterations += o.iterations_used;
          }
          StdsCsvRow r;
          r.sample = i;
          r.source = source;
          r.clean_label = test_ds.samples[i].label;
          // tf_image_adv is the fresh-pipeline render of adv_signal, so
          // victim predictions on it are exactly the replay predictions.
          r.replay_label_self = predict(src_model, o.tf_image_adv);
          r.success_replay = o.success_replay;
          r.l2_image = o.l2_image;
          r.l2_signal = o.l2_signal;
          r.l2_signal_rel = o.l2_signal_rel;
          r.iterations_used = o.iterations_used;
          rows.push_back(r);
        }
        if (stats.n_success > 0) {
          stats.mean_l2_image /= stats.n_success;
          stats.mean_l2_rel /= stats.n_success;
          stats.mean_iterations /= stats.n_success;
        }
        result.stds_stats[source] = stats;
        write_stds_csv(out / "results" / "samples" / ("stds_" + source + ".csv"),
                       rows);

        // Victim rates over victim-eligible samples via the replay image.
        for (size_t v = 0; v < models.size(); ++v) {
          const std::string victim = arch_name(plan.models[v]);
          int eligible = 0, hits = 0;
          for (int i = 0; i < n_test; ++i) {
            if (clean_pred[v][i] != test_ds.samples[i].label) continue;
            ++eligible;
            hits += (predict(models[v], outs[i].tf_image_adv) !=
                     test_ds.samples[i].label);
          }
          if (eligible > 0)
            result.matrix[{attack, source, victim}] = {
                100.0 * hits / eligible, eligible};
        }

        // Figure dumps from the first source.
        if (s == 0) {
          int wrote = 0;
          for (int i = 0; i < n_test && wrote < plan.figure_samples; ++i) {
            if (!outs[i].success_replay) continue;
            char stem[64];
            std::snprintf(stem, sizeof(stem), "stds_%s_%03d", source.c_str(),
                          i);
            const fs::path base = out / "figures" / stem;
            write_image(fs::path(base).concat("_clean"),
                        outs[i].tf_image_clean.chan, plan.image_format);
            write_image(fs::path(base).concat("_adv"),
                        outs[i].tf_image_adv.chan, plan.image_format);
            std::array<Mat, 3> noise;
            for (int c = 0; c < 3; ++c)
              noise[c] = outs[i].tf_image_adv.chan[c] -
                         outs[i].tf_image_clean.chan[c];
            write_image(fs::path(base).concat("_noise"), noise_view(noise),
                        plan.image_format);
            ++wrote;
          }
        }
        continue;
      }

      // Image-domain attacks: craft once per sample, evaluate on every
      // victim directly.
      std::vector<AttackOutcome> outs(n_test);
      parallel_for(n_test, plan.threads, [&](int i) {
        AttackConfig cfg = plan.attack_cfg;
        cfg.seed = mix_stream(plan.seed, attack_tag * 1000 + s, i);
        const TFImage& img = test_ds.samples[i].image;
        const int label = test_ds.samples[i].label;
        if (attack == "fgsm")
          outs[i] = fgsm(src_model, img, label, cfg);
        else if (attack == "pgd")
          outs[i] = pgd(src_model, img, label, cfg);
        else if (attack == "cw")
          outs[i] = cw(src_model, img, label, cfg);
        else
          outs[i] = ditimi_fgsm(src_model, img, label, cfg);
      });
      record_craft_time();

      std::vector<CsvRow> rows;
      for (size_t v = 0; v < models.size(); ++v) {
        const std::string victim = arch_name(plan.models[v]);
        int eligible = 0, hits = 0;
        for (int i = 0; i < n_test; ++i) {
          if (clean_pred[v][i] != test_ds.samples[i].label) continue;
          ++eligible;
          const int adv_label = v == s
                                    ? outs[i].label_adv
                                    : predict(models[v], outs[i].adv_image);
          const bool success = adv_label != test_ds.samples[i].label;
          hits += success;
          CsvRow r;
          r.sample = i;
          r.method = attack;
          r.source = source;
          r.victim = victim;
          r.clean_label = test_ds.samples[i].label;
          r.adv_label = adv_label;
          r.success = success;
          r.l2 = outs[i].l2;
          r.linf = outs[i].linf;
          r.iterations = outs[i].iterations_used;
          rows.push_back(r);
        }
        if (eligible > 0)
          result.matrix[{attack, source, victim}] = {100.0 * hits / eligible,
                                                     eligible};
      }
      write_sample_csv(
          out / "results" / "samples" / (attack + "_" + source + ".csv"), rows);

      if (s == 0 && attack == "ditimi") {
        int wrote = 0;
        for (int i = 0; i < n_test && wrote < plan.figure_samples; ++i) {
          if (clean_pred[s][i] != test_ds.samples[i].label) continue;
          if (!outs[i].success) continue;
          char stem[64];
          std::snprintf(stem, sizeof(stem), "ditimi_%s_%03d", source.c_str(),
                        i);
          const fs::path base = out / "figures" / stem;
          write_image(fs::path(base).concat("_clean"),
                      test_ds.samples[i].image.chan, plan.image_format);
          write_image(fs::path(base).concat("_adv"), outs[i].adv_image.chan,
                      plan.image_format);
          write_image(fs::path(base).concat("_noise"),
                      noise_view(outs[i].noise_image), plan.image_format);
          ++wrote;
        }
      }
    }
  }

  write_matrix_csv(out / "results" / "matrix.csv", result.matrix);
  return result;
}

}  // namespace tfadv
