// Exercises the installed command-line surface by spawning the binary:
// exit codes, determinism of emitted artifacts, and the evidence-CSV fuse
// path. The binary path arrives via MAINET_CLI_PATH from the build.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mainet/media_io.hpp"
#include "mainet/rng.hpp"
#include "mainet/serialize.hpp"

using namespace mainet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("mainet_cli_" + std::to_string(rng::splitmix64(counter)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static inline std::uint64_t counter = 0xCA11;
};

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(MAINET_CLI_PATH) + " " + args + " 2>&1";
  std::array<char, 4096> buf{};
  RunResult res;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  while (std::fgets(buf.data(), buf.size(), pipe)) res.output += buf.data();
  const int status = pclose(pipe);
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

}  // namespace

TEST_CASE("--help exits 0 and lists the subcommands") {
  const RunResult r = run("--help");
  CHECK(r.exit_code == 0);
  for (const char* sub : {"gen", "prep", "train", "eval", "fuse", "ablate", "verify"})
    CHECK(r.output.find(sub) != std::string::npos);
  CHECK(run("train --help").exit_code == 0);
}

TEST_CASE("gen twice with the same seed emits byte-identical payload and manifest") {
  TempDir tmp;
  const std::string a = (tmp.path / "a").string();
  const std::string b = (tmp.path / "b").string();
  const std::string flags = "gen --n 40 --seed 7 --profile smoke --set synth.map_size=12 --out ";
  CHECK(run(flags + a).exit_code == 0);
  CHECK(run(flags + b).exit_code == 0);
  CHECK(io::read_file(a + "/samples.bin") == io::read_file(b + "/samples.bin"));
  CHECK(io::read_file(a + "/manifest.json") == io::read_file(b + "/manifest.json"));
  CHECK(io::read_file(a + "/effective_config.txt") == io::read_file(b + "/effective_config.txt"));

  const json manifest = json::parse(io::read_file(a + "/manifest.json"));
  CHECK(manifest.at("count").get<std::size_t>() == 40);
  std::size_t total = 0;
  for (const auto& c : manifest.at("class_counts")) total += c.get<std::size_t>();
  CHECK(total == 40);
  CHECK(manifest.at("config_hash").get<std::string>().size() == 16);
}

TEST_CASE("unknown config keys exit 2 and name the key") {
  TempDir tmp;
  const RunResult r = run("gen --out " + (tmp.path / "x").string() + " --set bogus.key=1");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("bogus.key") != std::string::npos);
}

TEST_CASE("train on a missing dataset exits 3") {
  TempDir tmp;
  const RunResult r = run("train --data " + (tmp.path / "nowhere").string() + " --out " +
                          (tmp.path / "o").string() + " --profile smoke");
  CHECK(r.exit_code == 3);
}

TEST_CASE("fuse with single-evidence rows returns the input distributions") {
  TempDir tmp;
  const std::string csv = (tmp.path / "ev.csv").string();
  io::write_file(csv,
                 "sample_id,modality_id,p_1,p_2,p_3,w,r\n"
                 "s1,0,0.7,0.2,0.1,0.9,0.8\n"
                 "s2,0,0.1,0.6,0.3,0.5,0.5\n");
  const RunResult r =
      run("fuse --evidence " + csv + " --method er --out " + (tmp.path / "f").string());
  CHECK(r.exit_code == 0);
  const json records = json::parse(io::read_file((tmp.path / "f" / "fused.json").string()));
  REQUIRE(records.size() == 2);
  CHECK(records[0].at("sample_id") == "s1");
  CHECK(records[0].at("method") == "er");
  CHECK(records[0].at("p")[0].get<double>() == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(records[0].at("decision").get<int>() == 0);
  CHECK(records[1].at("p")[1].get<double>() == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(records[1].at("decision").get<int>() == 1);
}

TEST_CASE("fuse combines multi-modality rows with every method") {
  TempDir tmp;
  const std::string csv = (tmp.path / "ev.csv").string();
  io::write_file(csv,
                 "sample_id,modality_id,p_1,p_2,p_3,w,r\n"
                 "s1,0,0.7,0.2,0.1,1,1\n"
                 "s1,1,0.6,0.3,0.1,1,1\n"
                 "s1,2,0.2,0.5,0.3,1,1\n");
  const RunResult r =
      run("fuse --evidence " + csv + " --method all --out " + (tmp.path / "f").string());
  CHECK(r.exit_code == 0);
  const json records = json::parse(io::read_file((tmp.path / "f" / "fused.json").string()));
  REQUIRE(records.size() == 4);  // mv, pa, dst, er
  // with all r = 1, er equals dst
  json er, dst;
  for (const auto& rec : records) {
    if (rec.at("method") == "er") er = rec;
    if (rec.at("method") == "dst") dst = rec;
  }
  for (std::size_t c = 0; c < 3; ++c)
    CHECK(er.at("p")[c].get<double>() ==
          doctest::Approx(dst.at("p")[c].get<double>()).epsilon(1e-9));
}

TEST_CASE("malformed evidence CSV rows exit 4 and cite the row number") {
  TempDir tmp;
  const std::string csv = (tmp.path / "bad.csv").string();
  io::write_file(csv,
                 "sample_id,modality_id,p_1,p_2,p_3,w,r\n"
                 "s1,0,0.7,0.2,0.1,0.9,0.8\n"
                 "s2,0,0.7,oops,0.1,0.9,0.8\n");
  const RunResult r =
      run("fuse --evidence " + csv + " --out " + (tmp.path / "f").string());
  CHECK(r.exit_code == 4);
  CHECK(r.output.find("3") != std::string::npos);  // offending row (1-based with header)

  io::write_file(csv,
                 "sample_id,modality_id,p_1,p_2,p_3,w,r\n"
                 "s1,0,0.7,0.7,0.1,0.9,0.8\n");
  CHECK(run("fuse --evidence " + csv + " --out " + (tmp.path / "g").string()).exit_code == 4);
}

TEST_CASE("prep windows a recording directory into raw dataset records") {
  TempDir tmp;
  const fs::path rec = tmp.path / "rec";
  fs::create_directories(rec / "frames");

  // 2.0 s recording: frames and labels at 0/500/1000 ms, 4 kHz stereo audio,
  // 200 Hz wave csv
  rng::Xoshiro256 gen(3);
  for (const long ts : {0L, 500L, 1000L}) {
    Tensor img({3, 16, 16});
    for (auto& v : img.mutable_data()) v = gen.uniform();
    mainet::io::write_png((rec / "frames" / (std::to_string(ts) + ".png")).string(), img);
  }
  Tensor pcm({2, 8000});
  for (auto& v : pcm.mutable_data()) v = gen.uniform(-0.5, 0.5);
  mainet::io::write_wav((rec / "audio.wav").string(), pcm, 4000.0);

  std::string wave_csv;
  for (int t = 0; t < 400; ++t) {
    wave_csv += std::to_string(t * 5);
    for (int c = 0; c < 9; ++c) wave_csv += "," + std::to_string(0.01 * (t % 7) + 0.1 * c);
    wave_csv += "\n";
  }
  mainet::io::write_file((rec / "wave.csv").string(), wave_csv);
  mainet::io::write_file((rec / "labels.csv").string(),
                         "window_start_ms,label\n0,0\n500,1\n1000,2\n");

  const std::string out = (tmp.path / "windows").string();
  const RunResult r = run("prep --input " + rec.string() + " --out " + out);
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("3 windows") != std::string::npos);

  const json manifest = json::parse(io::read_file(out + "/manifest.json"));
  CHECK(manifest.at("kind") == "raw_windows");
  CHECK(manifest.at("count").get<std::size_t>() == 3);

  // records load back as model-ready samples: pooled 224 image, mel audio
  // map, raw wave for the learned embedding
  const RunResult missing = run("prep --input " + (tmp.path / "nope").string() + " --out " +
                                (tmp.path / "w2").string());
  CHECK(missing.exit_code == 3);
}

TEST_CASE("verify exits 0 on a healthy build and writes its transcript") {
  TempDir tmp;
  const RunResult r = run("verify --out " + (tmp.path / "v").string());
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("[PASS]") != std::string::npos);
  CHECK(r.output.find("[FAIL]") == std::string::npos);
  CHECK(fs::exists(tmp.path / "v" / "verify.txt"));
}

TEST_CASE("ablate emits the comparison tables deterministically and saves the LF layer") {
  TempDir tmp;
  const std::string flags =
      "ablate --seed 11 --profile smoke --set synth.n=48 --set train.epochs=2 --out ";
  const std::string a = (tmp.path / "a").string();
  const std::string b = (tmp.path / "b").string();
  CHECK(run(flags + a).exit_code == 0);
  CHECK(run(flags + b).exit_code == 0);

  const json rep = json::parse(io::read_file(a + "/ablation.json"));
  CHECK(rep.at("modality").size() == 7);   // singles, pairs, trimodal
  CHECK(rep.at("mechanism").size() == 6);  // concat, 3x primary, ER only, full
  CHECK(rep.at("fusion").size() == 5);     // MV, PA, LF, DST, ER
  CHECK(rep.at("modality")[6].at("name") == "wave+audio+image (ARPM+ER)");
  for (const auto& row : rep.at("fusion")) CHECK(row.at("accuracy").get<double>() >= 0.0);

  // identical seed, identical report and artifacts
  CHECK(io::read_file(a + "/ablation.json") == io::read_file(b + "/ablation.json"));
  CHECK(io::read_file(a + "/ablation.txt") == io::read_file(b + "/ablation.txt"));
  CHECK(io::read_file(a + "/lf/checkpoint.bin") == io::read_file(b + "/lf/checkpoint.bin"));
  CHECK(fs::exists(fs::path(a) / "lf" / "checkpoint.json"));
}

TEST_CASE("smoke-profile training completes, writes checkpoints, and resumes identically") {
  TempDir tmp;
  const std::string data = (tmp.path / "data").string();
  CHECK(run("gen --seed 5 --profile smoke --out " + data).exit_code == 0);

  const std::string full_out = (tmp.path / "full").string();
  const RunResult full = run("train --data " + data + " --seed 5 --profile smoke --out " + full_out);
  CHECK(full.exit_code == 0);
  CHECK(fs::exists(fs::path(full_out) / "best" / "checkpoint.bin"));
  CHECK(fs::exists(fs::path(full_out) / "train_log.csv"));

  // run the first two epochs, then resume for the third: the resumed epoch-3
  // line must equal the uninterrupted run's
  const std::string part_out = (tmp.path / "part").string();
  CHECK(run("train --data " + data + " --seed 5 --profile smoke --set train.epochs=2 --out " +
            part_out).exit_code == 0);
  const std::string resumed_out = (tmp.path / "resumed").string();
  CHECK(run("train --data " + data + " --seed 5 --profile smoke --resume " + part_out +
            " --out " + resumed_out).exit_code == 0);

  auto last_line = [&](const std::string& p) {
    std::istringstream is(io::read_file(p));
    std::string line, last;
    while (std::getline(is, line))
      if (!line.empty()) last = line;
    return last;
  };
  CHECK(last_line(full_out + "/train_log.csv") == last_line(resumed_out + "/train_log.csv"));

  // eval produces a metrics report from the checkpoint
  const std::string eval_out = (tmp.path / "eval").string();
  const RunResult ev = run("eval --data " + data + " --checkpoint " + full_out +
                           " --seed 5 --profile smoke --out " + eval_out);
  CHECK(ev.exit_code == 0);
  const json rep = json::parse(io::read_file(eval_out + "/report.json"));
  CHECK(rep.at("accuracy").get<double>() >= 0.0);
  CHECK(rep.at("confusion").size() == 3);
}
