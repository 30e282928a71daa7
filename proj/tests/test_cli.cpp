#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kCli = TFADV_CLI_PATH;

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

RunResult run(const std::string& args) {
  const fs::path dir = fs::temp_directory_path() / "tfadv_cli_io";
  fs::create_directories(dir);
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = kCli.string() + " " + args + " >" + out.string() +
                          " 2>" + err.string();
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream fo(out), fe(err);
  r.out.assign((std::istreambuf_iterator<char>(fo)), {});
  r.err.assign((std::istreambuf_iterator<char>(fe)), {});
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

fs::path fresh_dir(const char* name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("gen: determinism, balanced labels, usage errors") {
  const fs::path d1 = fresh_dir("tfadv_cli_gen1");
  const fs::path d2 = fresh_dir("tfadv_cli_gen2");

  auto r1 = run("gen --per-class 2 --seed 7 --out " + d1.string());
  CHECK(r1.code == 0);
  auto r2 = run("gen --per-class 2 --seed 7 --out " + d2.string());
  CHECK(r2.code == 0);

  CHECK(slurp(d1 / "manifest.json") == slurp(d2 / "manifest.json"));
  CHECK(slurp(d1 / "sample_00000.sig") == slurp(d2 / "sample_00000.sig"));
  CHECK(slurp(d1 / "sample_00005.sig") == slurp(d2 / "sample_00005.sig"));

  nlohmann::json manifest;
  std::ifstream(d1 / "manifest.json") >> manifest;
  CHECK(manifest.at("count").get<int>() == 6);
  int counts[3] = {0, 0, 0};
  for (const auto& rec : manifest.at("records"))
    counts[rec.at("label").get<int>()]++;
  CHECK(counts[0] == 2);
  CHECK(counts[1] == 2);
  CHECK(counts[2] == 2);

  // Inverted SNR range is a usage error.
  auto bad = run("gen --per-class 1 --snr 10:-10 --out " +
                 fresh_dir("tfadv_cli_gen3").string());
  CHECK(bad.code == 2);
  CHECK(bad.err.find("snr") != std::string::npos);

  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("train/attack pipeline: exit codes and artifacts") {
  const fs::path data = fresh_dir("tfadv_cli_data");
  REQUIRE(run("gen --per-class 2 --seed 3 --out " + data.string()).code == 0);

  // epochs 0 saves the initialized weights; accuracy near chance.
  const fs::path w1 = fs::temp_directory_path() / "tfadv_cli_w1.tfadv";
  const fs::path w2 = fs::temp_directory_path() / "tfadv_cli_w2.tfadv";
  auto t1 = run("train --arch tinyC --data " + data.string() +
                " --epochs 0 --seed 5 --out " + w1.string());
  CHECK(t1.code == 0);
  CHECK(t1.out.find("accuracy") != std::string::npos);
  auto t2 = run("train --arch tinyC --data " + data.string() +
                " --epochs 0 --seed 5 --out " + w2.string());
  CHECK(t2.code == 0);
  CHECK(slurp(w1) == slurp(w2));  // same seed, identical weight files

  CHECK(run("train --arch resnet18 --data " + data.string() + " --out " +
            w1.string())
            .code == 2);

  const fs::path adir = fresh_dir("tfadv_cli_attack");
  auto a1 = run("attack --method fgsm --model " + w1.string() + " --data " +
                data.string() + " --seed 2 --out " + adir.string());
  if (a1.code == 4) {
    // A freshly initialized net may classify every sample wrong, leaving no
    // eligible samples; that exit path is also a valid contract.
    CHECK(a1.err.find("eligible") != std::string::npos);
  } else {
    CHECK(a1.code == 0);
    CHECK(a1.out.find("summary: method=fgsm") != std::string::npos);
  }
  CHECK(fs::exists(adir / "samples.csv"));

  // stds emits waveform records alongside the csv.
  const fs::path sdir = fresh_dir("tfadv_cli_stds");
  auto a2 = run("attack --method stds --model " + w1.string() + " --data " +
                data.string() + " --stds-iters 10 --seed 2 --out " +
                sdir.string());
  CHECK((a2.code == 0 || a2.code == 4));
  CHECK(fs::exists(sdir / "samples.csv"));
  CHECK(fs::exists(sdir / "waveforms" / "adv_00000.sig"));

  auto bad = run("attack --method deepfool --model " + w1.string() +
                 " --data " + data.string() + " --out " + adir.string());
  CHECK(bad.code == 2);
  CHECK(bad.err.find("fgsm") != std::string::npos);  // lists valid methods

  // Missing/corrupt model file is an io/format error.
  auto miss = run("attack --method fgsm --model /nonexistent.tfadv --data " +
                  data.string() + " --out " + adir.string());
  CHECK(miss.code == 3);

  fs::remove_all(data);
  fs::remove_all(adir);
  fs::remove_all(sdir);
  fs::remove(w1);
  fs::remove(w2);
}

TEST_CASE("report: golden table from a fixed matrix, io errors") {
  const fs::path dir = fresh_dir("tfadv_cli_report");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "matrix.csv");
    f << "attack,source,victim,success_rate,n\n";
    f << "fgsm,tinyA,tinyA,39.17,288\n";
    f << "fgsm,tinyA,tinyB,10.33,290\n";
    f << "pgd,tinyA,tinyA,100.00,288\n";
    f << "pgd,tinyA,tinyB,23.50,290\n";
  }
  auto r = run("report --results " + dir.string() + " --out " +
               (dir / "table.txt").string());
  CHECK(r.code == 0);

  const std::string golden =
      "success rates (%), computed over samples the victim classifies "
      "correctly when clean; self-attack = white-box\n"
      "\n"
      "attack   source       tinyA     tinyB\n"
      "fgsm     tinyA        39.17     10.33\n"
      "pgd      tinyA       100.00     23.50\n";
  CHECK(slurp(dir / "table.txt") == golden);
  CHECK(r.out.find("tinyB") != std::string::npos);

  auto miss = run("report --results /nonexistent_dir_xyz");
  CHECK(miss.code == 3);

  auto usage = run("report");
  CHECK(usage.code == 2);

  fs::remove_all(dir);
}
