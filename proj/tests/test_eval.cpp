#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <tfadv/eval.hpp>

#include <filesystem>
#include <fstream>

using namespace tfadv;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

// Deterministic victim: channel-0 pixels at three pool-stable positions act
// as the class logits, so predictions are controlled without any training.
Model pixel_gate_model() {
  Model m = Model::init(ArchId::TinyA, 0);
  m.params.setZero();
  const auto layout = param_layout(m.arch);
  m.params[layout[0].w_offset + ((0 * 3 + 0) * 3 + 1) * 3 + 1] = 1.0;
  m.params[layout[3].w_offset + ((0 * 8 + 0) * 3 + 1) * 3 + 1] = 1.0;
  // pixel (9,9) -> pooled (2,2) drives class 0; (9,25) -> (2,6) class 1;
  // (25,9) -> (6,2) class 2
  m.params[layout[6].w_offset + 0 * 4096 + (0 * 16 + 2) * 16 + 2] = 4.0;
  m.params[layout[6].w_offset + 1 * 4096 + (0 * 16 + 2) * 16 + 6] = 4.0;
  m.params[layout[6].w_offset + 2 * 4096 + (0 * 16 + 6) * 16 + 2] = 4.0;
  return m;
}

TFImage gate_image(int cls) {
  TFImage img;
  for (int c = 0; c < 3; ++c) img.chan[c] = Mat::Zero(64, 64);
  const Index y = cls == 2 ? 25 : 9;
  const Index x = cls == 1 ? 25 : 9;
  img.chan[0](y, x) = 0.8;
  return img;
}

}  // namespace

TEST_CASE("success_rate: hand-built outcomes give the exact percentages") {
  const Model victim = pixel_gate_model();
  std::vector<TrainSample> clean;
  for (int cls = 0; cls < 3; ++cls) clean.push_back({gate_image(cls), cls});
  for (int cls = 0; cls < 3; ++cls)
    REQUIRE(predict(victim, clean[cls].image) == cls);

  auto outcome_with = [](TFImage adv) {
    AttackOutcome o;
    o.adv_image = std::move(adv);
    return o;
  };

  // Two samples moved to a different class, one unchanged: 2/3.
  std::vector<AttackOutcome> two{outcome_with(gate_image(1)),
                                 outcome_with(gate_image(2)),
                                 outcome_with(gate_image(2))};
  CHECK(success_rate(two, clean, victim) == doctest::Approx(66.67).epsilon(1e-4));

  std::vector<AttackOutcome> all{outcome_with(gate_image(1)),
                                 outcome_with(gate_image(2)),
                                 outcome_with(gate_image(0))};
  CHECK(success_rate(all, clean, victim) == 100.0);

  std::vector<AttackOutcome> none{outcome_with(gate_image(0)),
                                  outcome_with(gate_image(1)),
                                  outcome_with(gate_image(2))};
  CHECK(success_rate(none, clean, victim) == 0.0);

  // No eligible samples: every clean sample is mislabeled for this victim.
  std::vector<TrainSample> wrong;
  for (int cls = 0; cls < 3; ++cls)
    wrong.push_back({gate_image(cls), (cls + 1) % 3});
  CHECK_THROWS_AS(success_rate(none, wrong, victim), NumericError);
}

TEST_CASE("dataset io: records plus manifest round trip") {
  const fs::path dir = fs::temp_directory_path() / "tfadv_ds_io";
  fs::remove_all(dir);

  WaveformConfig cfg;
  std::vector<TimeSignal> sigs;
  for (int cls = 0; cls < 3; ++cls)
    for (int i = 0; i < 2; ++i)
      sigs.push_back(make_sample(cfg, cls, mix_stream(5, cls, i)));
  write_dataset(dir, sigs, cfg, 5);

  CHECK(fs::exists(dir / "manifest.json"));
  const std::vector<TimeSignal> back = read_dataset(dir);
  REQUIRE(back.size() == sigs.size());
  for (size_t i = 0; i < sigs.size(); ++i) {
    CHECK(back[i].label == sigs[i].label);
    CHECK(back[i].snr_db == doctest::Approx(sigs[i].snr_db));
    CHECK(back[i].samples.size() == sigs[i].samples.size());
  }

  CHECK_THROWS_AS(read_dataset(dir / "missing"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("run_plan: micro plan writes artifacts deterministically") {
  const fs::path out1 = fs::temp_directory_path() / "tfadv_plan1";
  const fs::path out2 = fs::temp_directory_path() / "tfadv_plan2";
  fs::remove_all(out1);
  fs::remove_all(out2);

  ExperimentPlan plan;
  plan.dataset.train_per_class = 6;
  plan.dataset.test_per_class = 3;
  plan.models = {ArchId::TinyA, ArchId::TinyB};
  plan.attacks = {"fgsm", "stds"};
  plan.train_cfg.epochs = 2;
  plan.stds_cfg.iterations = 15;
  plan.seed = 42;
  plan.figure_samples = 1;
  plan.out_dir = out1;

  const PlanResult r1 = run_plan(plan);
  CHECK(r1.matrix.size() == 2 * 2 * 2);  // attacks x sources x victims
  for (const auto& [key, cell] : r1.matrix) {
    CHECK(cell.rate >= 0.0);
    CHECK(cell.rate <= 100.0);
    CHECK(cell.n > 0);
  }
  CHECK(fs::exists(out1 / "results" / "matrix.csv"));
  CHECK(fs::exists(out1 / "results" / "samples" / "fgsm_tinyA.csv"));
  CHECK(fs::exists(out1 / "results" / "samples" / "stds_tinyB.csv"));
  CHECK(fs::exists(out1 / "models" / "tinyA.tfadv"));
  CHECK(fs::exists(out1 / "datasets" / "train" / "manifest.json"));
  CHECK(r1.history.at("tinyA").train_acc.size() == 2);

  // Same seed, fresh directory: byte-identical result CSVs.
  plan.out_dir = out2;
  run_plan(plan);
  CHECK(slurp(out1 / "results" / "matrix.csv") ==
        slurp(out2 / "results" / "matrix.csv"));
  for (const char* f : {"fgsm_tinyA.csv", "fgsm_tinyB.csv", "stds_tinyA.csv",
                        "stds_tinyB.csv"})
    CHECK(slurp(out1 / "results" / "samples" / f) ==
          slurp(out2 / "results" / "samples" / f));

  // Threads must not change results.
  const fs::path out3 = fs::temp_directory_path() / "tfadv_plan3";
  fs::remove_all(out3);
  plan.out_dir = out3;
  plan.threads = 3;
  run_plan(plan);
  CHECK(slurp(out1 / "results" / "matrix.csv") ==
        slurp(out3 / "results" / "matrix.csv"));

  // Empty attack list: empty matrix, no sample artifacts.
  const fs::path out4 = fs::temp_directory_path() / "tfadv_plan4";
  fs::remove_all(out4);
  plan.out_dir = out4;
  plan.attacks = {};
  const PlanResult r4 = run_plan(plan);
  CHECK(r4.matrix.empty());
  CHECK(fs::is_empty(out4 / "results" / "samples"));

  fs::remove_all(out1);
  fs::remove_all(out2);
  fs::remove_all(out3);
  fs::remove_all(out4);
}
