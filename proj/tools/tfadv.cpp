// Command-line front end: gen | train | attack | transfer | report.
// Exit codes: 0 success, 2 usage/config, 3 io/format, 4 numeric failure.

#include <CLI11.hpp>

#include <tfadv/eval.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using namespace tfadv;

namespace {

struct SnrRange {
  double lo = -10.0, hi = 10.0;
};

SnrRange parse_snr(const std::string& text) {
  SnrRange r;
  char colon;
  std::istringstream ss(text);
  if (!(ss >> r.lo >> colon >> r.hi) || colon != ':' || !ss.eof())
    throw ConfigError("bad --snr range '" + text + "' (expected lo:hi)");
  if (r.lo > r.hi)
    throw ConfigError("bad --snr range '" + text + "': lo exceeds hi");
  return r;
}

std::vector<TrainSample> render_all(const std::vector<TimeSignal>& sigs,
                                    const WindowSpec& w, const ColorLut& lut,
                                    int threads) {
  std::vector<TrainSample> out(sigs.size());
  parallel_for(int(sigs.size()), threads, [&](int i) {
    auto [re, im] = split_complex(stft(sigs[i].samples, w));
    out[i] = {render_image(re, im, lut), sigs[i].label};
  });
  return out;
}

void dump_image(const fs::path& stem, const std::array<Mat, 3>& px,
                const std::string& format) {
  if (format == "png")
    write_png(fs::path(stem).concat(".png"), px);
  else
    write_ppm(fs::path(stem).concat(".ppm"), px);
}

std::array<Mat, 3> noise_view(const std::array<Mat, 3>& noise) {
  double peak = 0.0;
  for (int c = 0; c < 3; ++c)
    peak = std::max(peak, noise[c].cwiseAbs().maxCoeff());
  const double s = peak > 0.0 ? 0.5 / peak : 0.0;
  std::array<Mat, 3> out;
  for (int c = 0; c < 3; ++c)
    out[c] = (noise[c].array() * s + 0.5).cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

int run_gen(const std::vector<std::string>& classes, int per_class,
            const std::string& snr, std::uint64_t seed, const fs::path& out) {
  const SnrRange r = parse_snr(snr);
  WaveformConfig cfg;
  cfg.snr_range_db = {r.lo, r.hi};
  cfg.validate();
  std::vector<int> labels;
  for (const auto& c : classes) labels.push_back(class_label(c));

  std::printf("config: gen classes=");
  for (size_t i = 0; i < classes.size(); ++i)
    std::printf("%s%s", i ? "," : "", classes[i].c_str());
  std::printf(" per_class=%d snr=%g:%g seed=%llu out=%s\n", per_class, r.lo,
              r.hi, (unsigned long long)seed, out.string().c_str());

  std::vector<TimeSignal> sigs;
  for (int label : labels)
    for (int i = 0; i < per_class; ++i)
      sigs.push_back(make_sample(
          cfg, label, mix_stream(seed, 0, std::uint64_t(label) * 1000003 + i)));
  write_dataset(out, sigs, cfg, seed);
  std::printf("wrote %zu records to %s\n", sigs.size(), out.string().c_str());
  return 0;
}

int run_train(const std::string& arch, const fs::path& data,
              const fs::path& test_data, int epochs, double lr, int batch,
              std::uint64_t seed, const fs::path& out, int threads) {
  const ArchDescriptor ad = ArchDescriptor::by_name(arch);
  if (lr < 0.0) lr = ad.suggested_lr;
  std::printf(
      "config: train arch=%s data=%s test_data=%s epochs=%d lr=%g batch=%d "
      "seed=%llu out=%s threads=%d\n",
      arch.c_str(), data.string().c_str(), test_data.string().c_str(), epochs,
      lr, batch, (unsigned long long)seed, out.string().c_str(), threads);

  const WindowSpec w;
  const ColorLut lut = ColorLut::parula();
  const auto train_sigs = read_dataset(data);
  const auto train_set = render_all(train_sigs, w, lut, threads);
  std::vector<TrainSample> test_set;
  if (!test_data.empty())
    test_set = render_all(read_dataset(test_data), w, lut, threads);

  Model m = Model::init(ad.id, seed);
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.lr = lr;
  cfg.batch = batch;
  RngState rng(mix_stream(seed, 11, 0));
  const TrainHistory h = train(m, train_set, test_set, cfg, rng);
  for (size_t e = 0; e < h.train_acc.size(); ++e) {
    std::printf("epoch %zu: loss=%.4f train_acc=%.2f", e, h.train_loss[e],
                h.train_acc[e]);
    if (!h.test_acc.empty()) std::printf(" test_acc=%.2f", h.test_acc[e]);
    std::printf("\n");
  }
  save_model(out, m);
  const double final_acc =
      test_set.empty() ? accuracy(m, train_set) : accuracy(m, test_set);
  std::printf("%s accuracy: %.2f%%\n", test_set.empty() ? "train" : "test",
              final_acc);
  std::printf("saved %s\n", out.string().c_str());
  return 0;
}

struct AttackFlags {
  std::string method;
  fs::path model, data, out;
  double eps = 10.0, alpha = 1.0 / 255.0, mu = 1.0, p = 0.5, lr = 0.001;
  int iters = 10, stds_iters = 200, cw_steps = 100;
  std::uint64_t seed = 1;
  std::string format = "ppm";
  int figures = 4;
};

// Shared crafting for `attack` and `transfer`.
struct CraftedBatch {
  std::vector<AttackOutcome> image_outcomes;  // image-domain methods
  std::vector<StdsOutcome> stds_outcomes;     // stds
  bool is_stds = false;
};

CraftedBatch craft(const Model& src, const std::vector<TimeSignal>& sigs,
                   const std::vector<TrainSample>& samples,
                   const AttackFlags& f, int threads) {
  CraftedBatch b;
  const WindowSpec w;
  const ColorLut lut = ColorLut::parula();
  const int n = int(samples.size());
  if (f.method == "stds") {
    b.is_stds = true;
    b.stds_outcomes.resize(n);
    StdsConfig cfg;
    cfg.lr = f.lr;
    cfg.iterations = f.stds_iters;
    parallel_for(n, threads, [&](int i) {
      b.stds_outcomes[i] = stds_attack(src, sigs[i], cfg, w, lut);
    });
    return b;
  }
  b.image_outcomes.resize(n);
  parallel_for(n, threads, [&](int i) {
    AttackConfig cfg;
    cfg.epsilon = f.eps;
    cfg.alpha = f.alpha;
    cfg.iterations = f.iters;
    cfg.mu = f.mu;
    cfg.di_probability = f.p;
    cfg.cw.steps = f.cw_steps;
    cfg.seed = mix_stream(f.seed, 100, i);
    const TFImage& img = samples[i].image;
    const int label = samples[i].label;
    if (f.method == "fgsm")
      b.image_outcomes[i] = fgsm(src, img, label, cfg);
    else if (f.method == "pgd")
      b.image_outcomes[i] = pgd(src, img, label, cfg);
    else if (f.method == "cw")
      b.image_outcomes[i] = cw(src, img, label, cfg);
    else if (f.method == "ditimi")
      b.image_outcomes[i] = ditimi_fgsm(src, img, label, cfg);
    else
      throw ConfigError("unknown method '" + f.method +
                        "' (expected fgsm, pgd, cw, ditimi or stds)");
  });
  return b;
}

int run_attack(const AttackFlags& f, int threads) {
  std::printf(
      "config: attack method=%s model=%s data=%s eps=%g alpha=%g iters=%d "
      "mu=%g p=%g lr=%g seed=%llu out=%s format=%s threads=%d\n",
      f.method.c_str(), f.model.string().c_str(), f.data.string().c_str(),
      f.eps, f.alpha, f.iters, f.mu, f.p, f.lr, (unsigned long long)f.seed,
      f.out.string().c_str(), f.format.c_str(), threads);

  const Model m = load_model(f.model);
  const WindowSpec w;
  const ColorLut lut = ColorLut::parula();
  const auto sigs = read_dataset(f.data);
  const auto samples = render_all(sigs, w, lut, threads);
  fs::create_directories(f.out);

  const CraftedBatch b = craft(m, sigs, samples, f, threads);
  const int n = int(samples.size());

  int eligible = 0, hits = 0;
  std::ofstream csv(f.out / "samples.csv");
  if (!csv) throw IoError("cannot write " + (f.out / "samples.csv").string());
  if (b.is_stds) {
    fs::create_directories(f.out / "waveforms");
    csv << "sample,source,clean_label,replay_label,success_replay,l2_image,"
           "l2_signal,l2_signal_rel,iterations_used\n";
    int figs = 0;
    for (int i = 0; i < n; ++i) {
      const StdsOutcome& o = b.stds_outcomes[i];
      const int replay_label = predict(m, o.tf_image_adv);
      char line[256];
      std::snprintf(line, sizeof(line), "%d,%s,%d,%d,%d,%.6f,%.6f,%.6f,%d\n",
                    i, m.arch.name.c_str(), samples[i].label, replay_label,
                    o.success_replay ? 1 : 0, o.l2_image, o.l2_signal,
                    o.l2_signal_rel, o.iterations_used);
      csv << line;
      if (predict(m, samples[i].image) == samples[i].label) {
        ++eligible;
        hits += o.success_replay;
      }
      TimeSignal adv;
      adv.samples = o.adv_signal;
      adv.label = samples[i].label;
      char name[32];
      std::snprintf(name, sizeof(name), "adv_%05d.sig", i);
      write_signal_record(f.out / "waveforms" / name, adv);
      if (figs < f.figures && o.success_replay) {
        char stem[64];
        std::snprintf(stem, sizeof(stem), "stds_%03d", i);
        dump_image((f.out / stem).concat("_clean"), o.tf_image_clean.chan,
                   f.format);
        dump_image((f.out / stem).concat("_adv"), o.tf_image_adv.chan,
                   f.format);
        std::array<Mat, 3> nz;
        for (int c = 0; c < 3; ++c)
          nz[c] = o.tf_image_adv.chan[c] - o.tf_image_clean.chan[c];
        dump_image((f.out / stem).concat("_noise"), noise_view(nz), f.format);
        ++figs;
      }
    }
  } else {
    csv << "sample,method,source,victim,clean_label,adv_label,success,l2,"
           "linf,iterations\n";
    int figs = 0;
    for (int i = 0; i < n; ++i) {
      const AttackOutcome& o = b.image_outcomes[i];
      const bool success = o.label_adv != samples[i].label;
      char line[256];
      std::snprintf(line, sizeof(line), "%d,%s,%s,%s,%d,%d,%d,%.6f,%.8f,%d\n",
                    i, f.method.c_str(), m.arch.name.c_str(),
                    m.arch.name.c_str(), samples[i].label, o.label_adv,
                    success ? 1 : 0, o.l2, o.linf, o.iterations_used);
      csv << line;
      if (predict(m, samples[i].image) == samples[i].label) {
        ++eligible;
        hits += success;
      }
      if (figs < f.figures && success) {
        char stem[64];
        std::snprintf(stem, sizeof(stem), "%s_%03d", f.method.c_str(), i);
        dump_image((f.out / stem).concat("_clean"), samples[i].image.chan,
                   f.format);
        dump_image((f.out / stem).concat("_adv"), o.adv_image.chan, f.format);
        dump_image((f.out / stem).concat("_noise"), noise_view(o.noise_image),
                   f.format);
        ++figs;
      }
    }
  }
  if (eligible == 0) throw NumericError("no eligible samples");
  std::printf("summary: method=%s n=%d eligible=%d success=%d rate=%.2f\n",
              f.method.c_str(), n, eligible, hits,
              100.0 * hits / eligible);
  return 0;
}

int run_transfer(const AttackFlags& f, const std::vector<fs::path>& victims,
                 int threads) {
  std::printf("config: transfer method=%s source=%s victims=",
              f.method.c_str(), f.model.string().c_str());
  for (size_t i = 0; i < victims.size(); ++i)
    std::printf("%s%s", i ? "," : "", victims[i].string().c_str());
  std::printf(" data=%s out=%s seed=%llu threads=%d\n",
              f.data.string().c_str(), f.out.string().c_str(),
              (unsigned long long)f.seed, threads);

  const Model src = load_model(f.model);
  std::vector<Model> vms;
  for (const auto& p : victims) vms.push_back(load_model(p));

  const WindowSpec w;
  const ColorLut lut = ColorLut::parula();
  const auto sigs = read_dataset(f.data);
  const auto samples = render_all(sigs, w, lut, threads);
  fs::create_directories(f.out);

  const CraftedBatch b = craft(src, sigs, samples, f, threads);
  const int n = int(samples.size());

  TransferMatrix matrix;
  auto add_victim = [&](const Model& vm) {
    int eligible = 0, hits = 0;
    for (int i = 0; i < n; ++i) {
      if (predict(vm, samples[i].image) != samples[i].label) continue;
      ++eligible;
      const TFImage& adv = b.is_stds ? b.stds_outcomes[i].tf_image_adv
                                     : b.image_outcomes[i].adv_image;
      hits += predict(vm, adv) != samples[i].label;
    }
    if (eligible == 0) throw NumericError("no eligible samples for victim");
    matrix[{f.method, src.arch.name, vm.arch.name}] = {
        100.0 * hits / eligible, eligible};
  };
  add_victim(src);
  for (const auto& vm : vms) add_victim(vm);

  write_matrix_csv(f.out / "matrix.csv", matrix);
  std::printf("%s", format_matrix_table(matrix).c_str());
  return 0;
}

int run_report(const fs::path& results, const fs::path& out) {
  std::printf("config: report results=%s out=%s\n", results.string().c_str(),
              out.string().c_str());
  const fs::path csv = fs::is_directory(results) ? results / "matrix.csv"
                                                 : results;
  if (!fs::exists(csv)) throw IoError("no matrix csv at " + csv.string());
  const TransferMatrix m = read_matrix_csv(csv);
  const std::string table = format_matrix_table(m);
  std::printf("%s", table.c_str());
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw IoError("cannot write " + out.string());
    f << table;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"time-frequency radar classifier attack toolkit"};
  app.require_subcommand(1);
  int threads = int(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  app.add_option("--threads", threads, "worker threads (default: all cores)");

  // gen
  auto* gen = app.add_subcommand("gen", "synthesize a labeled dataset");
  std::vector<std::string> classes{"barker", "costas", "lfm"};
  int per_class = 100;
  std::string snr = "-10:10";
  std::uint64_t gen_seed = 1;
  fs::path gen_out;
  gen->add_option("--classes", classes, "classes to generate")
      ->delimiter(',');
  gen->add_option("--per-class", per_class, "samples per class");
  gen->add_option("--snr", snr, "SNR range in dB, lo:hi");
  gen->add_option("--seed", gen_seed, "global seed");
  gen->add_option("--out", gen_out, "output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "train a classifier");
  std::string arch = "tinyA";
  fs::path tr_data, tr_test, tr_out;
  int epochs = 20, batch = 32;
  double lr = -1.0;
  std::uint64_t tr_seed = 1;
  tr->add_option("--arch", arch, "tinyA | tinyB | tinyC");
  tr->add_option("--data", tr_data, "training dataset directory")->required();
  tr->add_option("--test-data", tr_test, "held-out dataset directory");
  tr->add_option("--epochs", epochs, "training epochs");
  tr->add_option("--lr", lr, "SGD learning rate (default: per architecture)");
  tr->add_option("--batch", batch, "minibatch size");
  tr->add_option("--seed", tr_seed, "init/shuffle seed");
  tr->add_option("--out", tr_out, "weight file to write")->required();

  // attack + transfer share flags
  AttackFlags af;
  auto add_attack_flags = [&](CLI::App* cmd, bool with_model) {
    cmd->add_option("--method", af.method,
                    "fgsm | pgd | cw | ditimi | stds")
        ->required()
        ->check(CLI::IsMember({"fgsm", "pgd", "cw", "ditimi", "stds"}));
    if (with_model)
      cmd->add_option("--model", af.model, "weight file")->required();
    cmd->add_option("--data", af.data, "dataset directory")->required();
    cmd->add_option("--eps", af.eps, "max perturbation, /255 pixel units");
    cmd->add_option("--alpha", af.alpha, "step size, fraction of range");
    cmd->add_option("--iters", af.iters, "iterations (iterative methods)");
    cmd->add_option("--mu", af.mu, "momentum decay");
    cmd->add_option("--p", af.p, "input-transform probability");
    cmd->add_option("--lr", af.lr, "stds learning rate");
    cmd->add_option("--stds-iters", af.stds_iters, "stds iterations");
    cmd->add_option("--cw-steps", af.cw_steps, "cw optimizer steps");
    cmd->add_option("--seed", af.seed, "attack seed");
    cmd->add_option("--out", af.out, "output directory")->required();
    cmd->add_option("--format", af.format, "image format")
        ->check(CLI::IsMember({"ppm", "png"}));
    cmd->add_option("--figures", af.figures, "image triptychs to write");
  };
  auto* at = app.add_subcommand("attack", "craft adversarial examples");
  add_attack_flags(at, true);
  auto* tf = app.add_subcommand("transfer",
                                "craft on a source model, test on victims");
  std::vector<fs::path> victims;
  add_attack_flags(tf, false);
  tf->add_option("--source", af.model, "source weight file")->required();
  tf->add_option("--victims", victims, "victim weight files")
      ->required()
      ->delimiter(',');

  // report
  auto* rp = app.add_subcommand("report", "format a transfer matrix");
  fs::path rp_results, rp_out;
  rp->add_option("--results", rp_results, "results directory or matrix.csv")
      ->required();
  rp->add_option("--out", rp_out, "text file to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return run_gen(classes, per_class, snr, gen_seed, gen_out);
    if (tr->parsed())
      return run_train(arch, tr_data, tr_test, epochs, lr, batch, tr_seed,
                       tr_out, threads);
    if (at->parsed()) return run_attack(af, threads);
    if (tf->parsed()) return run_transfer(af, victims, threads);
    if (rp->parsed()) return run_report(rp_results, rp_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}
