#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mmfuse/adapter.hpp"
#include "mmfuse/core.hpp"
#include "mmfuse/pipeline.hpp"

using namespace mmfuse;

namespace {

struct CliResult {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(MMFUSE_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CliResult result;
  std::array<char, 4096> buffer;
  std::size_t n = 0;
  while ((n = ::fread(buffer.data(), 1, buffer.size(), pipe)) > 0)
    result.output.append(buffer.data(), n);
  const int status = ::pclose(pipe);
  result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::filesystem::path fresh_dir(const char* stem) {
  const auto dir = std::filesystem::temp_directory_path() /
                   (std::string(stem) + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// First word of each report line -> remainder. Repeated keys keep the last
// occurrence; count_prefix covers the repeated ones.
std::map<std::string, std::string> report_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto space = line.find(' ');
    if (space == std::string::npos) continue;
    out[line.substr(0, space)] = line.substr(space + 1);
  }
  return out;
}

int count_prefix(const std::string& text, const std::string& prefix) {
  int count = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(prefix, 0) == 0) count++;
  return count;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

}  // namespace

TEST_CASE("the full command chain runs deterministically end to end") {
  const auto dir = fresh_dir("mmfuse_cli_chain");
  const auto archive = (dir / "clips.emb").string();
  const auto labels = (dir / "clips.labels").string();
  const auto model = (dir / "fusion.model").string();
  const auto preds = (dir / "preds.tsv").string();
  const auto report = (dir / "eval.txt").string();

  write_file(dir / "gen.conf", "seed = 42\n"
                               "paths.archive = " + archive + "\n"
                               "paths.labels = " + labels + "\n"
                               "dataset.segments = 150\n"
                               "dataset.prefix = clip\n"
                               "synthetic.noise = 0.3\n");
  write_file(dir / "train.conf", "seed = 42\n"
                                 "paths.archive = " + archive + "\n"
                                 "paths.labels = " + labels + "\n"
                                 "paths.model = " + model + "\n"
                                 "cv.folds = 5\n"
                                 "cv.c_grid = 0.1, 1\n");
  write_file(dir / "infer.conf", "seed = 42\n"
                                 "paths.model = " + model + "\n"
                                 "paths.archive = " + archive + "\n"
                                 "paths.predictions = " + preds + "\n");
  write_file(dir / "eval.conf", "seed = 42\n"
                                "paths.predictions = " + preds + "\n"
                                "paths.labels = " + labels + "\n"
                                "paths.report = " + report + "\n");

  // --- gen-synthetic ---
  const CliResult gen = run_cli("gen-synthetic --config " + (dir / "gen.conf").string());
  REQUIRE(gen.code == 0);
  auto values = report_values(gen.output);
  CHECK(values["command"] == "gen-synthetic");
  CHECK(values["seed"] == "42");
  CHECK(values["segments"] == "150");
  CHECK(values["archive"] == archive);
  {
    std::istringstream counts(values["class_counts"]);
    int total = 0, c = 0;
    while (counts >> c) total += c;
    CHECK(total == 150);
  }
  const std::vector<LabelRecord> label_records = read_label_file(labels);
  CHECK(label_records.size() == 150);

  const std::string archive_bytes = read_file(archive);
  const std::string labels_bytes = read_file(labels);
  const CliResult gen2 = run_cli("gen-synthetic --config " + (dir / "gen.conf").string());
  REQUIRE(gen2.code == 0);
  CHECK(gen2.output == gen.output);
  CHECK(read_file(archive) == archive_bytes);
  CHECK(read_file(labels) == labels_bytes);

  // --- train-classifier ---
  const CliResult train = run_cli("train-classifier --config " + (dir / "train.conf").string());
  REQUIRE(train.code == 0);
  values = report_values(train.output);
  CHECK(values["command"] == "train-classifier");
  CHECK(values["samples"] == "150");
  CHECK(values["train_rows"] == "120");  // holdout = 1 of 5 folds
  CHECK(values["test_rows"] == "30");
  CHECK(count_prefix(train.output, "cv_fold ") == 10);  // 2 C values x 5 folds
  CHECK(count_prefix(train.output, "cv_mean ") == 2);
  CHECK(count_prefix(train.output, "refit ") == 1);
  const double selected_c = std::stod(values["selected_c"]);
  CHECK((selected_c == 0.1 || selected_c == 1.0));
  {
    std::istringstream holdout(values["holdout"]);
    std::string word;
    double accuracy = -1.0;
    holdout >> word >> accuracy;
    REQUIRE(word == "accuracy");
    CHECK(accuracy >= 0.75);
  }
  const FusionModel loaded = FusionModel::load(model);
  CHECK(loaded.seed == 42);
  CHECK(loaded.metadata.find("config_digest=" + values["config_digest"]) != std::string::npos);

  const CliResult train2 = run_cli("train-classifier --config " + (dir / "train.conf").string());
  REQUIRE(train2.code == 0);
  CHECK(train2.output == train.output);

  // --- infer ---
  const CliResult infer = run_cli("infer --config " + (dir / "infer.conf").string());
  REQUIRE(infer.code == 0);
  values = report_values(infer.output);
  CHECK(values["command"] == "infer");
  CHECK(values["segments"] == "150");
  CHECK(values["degraded"] == "0");
  CHECK(values["errors"] == "0");

  std::istringstream pred_in(read_file(preds));
  std::string line;
  int rows = 0;
  while (std::getline(pred_in, line)) {
    rows++;
    const auto fields = split_tabs(line);
    REQUIRE(fields.size() == 9);
    CHECK(sentiment_from_name(fields[1]).has_value());
    double sum = 0.0;
    for (int c = 0; c < 5; ++c) sum += std::stod(fields[static_cast<std::size_t>(2 + c)]);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fields[7] == "intact");
    CHECK(fields[8] == "FED:ok,SER:ok,TED:ok,AED:ok");
  }
  CHECK(rows == 150);

  const std::string pred_bytes = read_file(preds);
  const CliResult infer2 = run_cli("infer --config " + (dir / "infer.conf").string());
  REQUIRE(infer2.code == 0);
  CHECK(infer2.output == infer.output);
  CHECK(read_file(preds) == pred_bytes);

  // --- evaluate ---
  const CliResult eval = run_cli("evaluate --config " + (dir / "eval.conf").string());
  REQUIRE(eval.code == 0);
  CHECK(read_file(report) == eval.output);  // body goes to both file and stdout
  values = report_values(eval.output);
  CHECK(values["samples"] == "150");
  CHECK(values["skipped"] == "0");

  // Hand tally from the artifacts themselves.
  std::map<std::string, double> score_of;
  for (const auto& r : read_label_file(labels)) score_of[r.key.str()] = r.score;
  std::istringstream tally_in(pred_bytes);
  int correct = 0, total = 0;
  while (std::getline(tally_in, line)) {
    const auto fields = split_tabs(line);
    total++;
    if (*sentiment_from_name(fields[1]) == discretize_sentiment(score_of.at(fields[0]))) correct++;
  }
  const double accuracy = static_cast<double>(correct) / static_cast<double>(total);
  CHECK(std::stod(values["accuracy"]) == doctest::Approx(accuracy).epsilon(1e-15));

  std::filesystem::remove_all(dir);
}

TEST_CASE("class balance weights shape the generated label distribution") {
  const auto dir = fresh_dir("mmfuse_cli_balance");
  const auto archive = (dir / "clips.emb").string();
  const auto labels = (dir / "clips.labels").string();
  write_file(dir / "gen.conf", "seed = 7\n"
                               "paths.archive = " + archive + "\n"
                               "paths.labels = " + labels + "\n"
                               "dataset.segments = 50\n"
                               "dataset.balance = 2, 1, 1, 1, 0\n");
  const CliResult gen = run_cli("gen-synthetic --config " + (dir / "gen.conf").string());
  REQUIRE(gen.code == 0);
  CHECK(report_values(gen.output)["class_counts"] == "20 10 10 10 0");

  std::array<int, 5> tally{};
  for (const auto& r : read_label_file(labels))
    tally[static_cast<std::size_t>(discretize_sentiment(r.score))]++;
  CHECK(tally == std::array<int, 5>{20, 10, 10, 10, 0});

  write_file(dir / "bad.conf", "paths.archive = " + archive + "\n"
                               "dataset.balance = 1, 1, 1, 1\n");
  CHECK(run_cli("gen-synthetic --config " + (dir / "bad.conf").string()).code == 2);
  write_file(dir / "neg.conf", "paths.archive = " + archive + "\n"
                               "dataset.balance = 1, 1, 1, 1, -1\n");
  CHECK(run_cli("gen-synthetic --config " + (dir / "neg.conf").string()).code == 2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("train-adapter scores an alpha grid and writes a loadable adapter") {
  const auto dir = fresh_dir("mmfuse_cli_adapter");
  const auto archive = (dir / "clips.emb").string();
  const auto adapter = (dir / "map.adapter").string();
  write_file(dir / "gen.conf", "seed = 11\n"
                               "paths.archive = " + archive + "\n"
                               "dataset.segments = 30\n");
  REQUIRE(run_cli("gen-synthetic --config " + (dir / "gen.conf").string()).code == 0);

  write_file(dir / "adapter.conf", "seed = 11\n"
                                   "paths.current = " + archive + "\n"
                                   "paths.target = " + archive + "\n"
                                   "paths.adapter = " + adapter + "\n"
                                   "adapter.alpha_grid = 0.1, 1, 10\n");
  const CliResult result = run_cli("train-adapter --config " + (dir / "adapter.conf").string());
  REQUIRE(result.code == 0);
  auto values = report_values(result.output);
  CHECK(values["command"] == "train-adapter");
  CHECK(values["rows"] == "30");
  CHECK(values["train_rows"] == "24");
  CHECK(values["val_rows"] == "6");
  CHECK(count_prefix(result.output, "alpha_candidate ") == 3);
  CHECK(values.count("alpha") == 1);
  CHECK(values.count("rmse") == 1);
  CHECK(std::stod(values["r2"]) <= 1.0);
  CHECK(values["adapter"] == adapter);

  const AdapterModel loaded = AdapterModel::load(adapter);
  CHECK(loaded.dim() == kFusedDim);

  const std::string adapter_bytes = read_file(adapter);
  const CliResult rerun = run_cli("train-adapter --config " + (dir / "adapter.conf").string());
  REQUIRE(rerun.code == 0);
  CHECK(rerun.output == result.output);
  CHECK(read_file(adapter) == adapter_bytes);
  std::filesystem::remove_all(dir);
}

TEST_CASE("seed, out, and strict-cv flags override the config file") {
  const auto dir = fresh_dir("mmfuse_cli_flags");
  const auto archive = (dir / "clips.emb").string();
  const auto labels = (dir / "clips.labels").string();
  write_file(dir / "gen.conf", "seed = 42\n"
                               "paths.archive = " + archive + "\n"
                               "paths.labels = " + labels + "\n"
                               "dataset.segments = 40\n");

  const CliResult base = run_cli("gen-synthetic --config " + (dir / "gen.conf").string());
  REQUIRE(base.code == 0);
  const std::string base_digest = report_values(base.output)["config_digest"];

  // --seed beats the file value and lands in the digest.
  const CliResult seeded =
      run_cli("gen-synthetic --seed 7 --config " + (dir / "gen.conf").string());
  REQUIRE(seeded.code == 0);
  CHECK(report_values(seeded.output)["seed"] == "7");
  CHECK(report_values(seeded.output)["config_digest"] != base_digest);

  // --out supplies the primary output path when the file omits it.
  const auto alt = (dir / "alt.emb").string();
  write_file(dir / "noout.conf", "seed = 42\ndataset.segments = 10\n");
  const CliResult redirected =
      run_cli("gen-synthetic --out " + alt + " --config " + (dir / "noout.conf").string());
  REQUIRE(redirected.code == 0);
  CHECK(report_values(redirected.output)["archive"] == alt);
  CHECK(std::filesystem::exists(alt));

  // --strict-cv flips fold scoring; the digest must record it.
  const auto model = (dir / "fusion.model").string();
  write_file(dir / "train.conf", "seed = 42\n"
                                 "paths.archive = " + archive + "\n"
                                 "paths.labels = " + labels + "\n"
                                 "paths.model = " + model + "\n"
                                 "cv.folds = 3\n"
                                 "cv.c_grid = 1\n");
  const CliResult loose = run_cli("train-classifier --config " + (dir / "train.conf").string());
  REQUIRE(loose.code == 0);
  const CliResult strict =
      run_cli("train-classifier --strict-cv --config " + (dir / "train.conf").string());
  REQUIRE(strict.code == 0);
  CHECK(report_values(strict.output)["config_digest"] !=
        report_values(loose.output)["config_digest"]);
  std::filesystem::remove_all(dir);
}

TEST_CASE("usage and config mistakes exit with code 2, data problems with 3") {
  const auto dir = fresh_dir("mmfuse_cli_errors");

  CHECK(run_cli("").code == 2);                 // a subcommand is required
  CHECK(run_cli("frobnicate").code == 2);       // unknown subcommand
  CHECK(run_cli("gen-synthetic").code == 2);    // --config is required
  CHECK(run_cli("--help").code == 0);

  write_file(dir / "typo.conf", "paths.archive = x.emb\ndataset.segmets = 10\n");
  const CliResult typo = run_cli("gen-synthetic --config " + (dir / "typo.conf").string());
  CHECK(typo.code == 2);
  CHECK(typo.output.find("dataset.segmets") != std::string::npos);

  write_file(dir / "incomplete.conf", "dataset.segments = 10\n");
  CHECK(run_cli("gen-synthetic --config " + (dir / "incomplete.conf").string()).code == 2);

  CHECK(run_cli("gen-synthetic --config " + (dir / "missing.conf").string()).code == 2);

  // Readable config, but the referenced data file does not exist.
  write_file(dir / "eval.conf", "paths.predictions = " + (dir / "none.tsv").string() + "\n" +
                                "paths.labels = " + (dir / "none.labels").string() + "\n" +
                                "paths.report = " + (dir / "report.txt").string() + "\n");
  CHECK(run_cli("evaluate --config " + (dir / "eval.conf").string()).code == 3);

  // A corrupt model file is a data error, not a crash.
  write_file(dir / "bogus.model", "this is not a model file");
  write_file(dir / "infer.conf", "paths.model = " + (dir / "bogus.model").string() + "\n" +
                                 "paths.archive = " + (dir / "none.emb").string() + "\n" +
                                 "paths.predictions = " + (dir / "p.tsv").string() + "\n");
  CHECK(run_cli("infer --config " + (dir / "infer.conf").string()).code == 3);
  std::filesystem::remove_all(dir);
}

TEST_CASE("evaluate names every prediction key missing from the labels") {
  const auto dir = fresh_dir("mmfuse_cli_unknown");
  write_file(dir / "labels.tsv", "clip_0\t0.5\n");  // 0.5 lands in the Positive bin
  write_file(dir / "preds.tsv",
             "clip_0\tPositive\t0\t0\t0\t1\t0\tintact\tFED:ok,SER:ok,TED:ok,AED:ok\n"
             "ghost_1\tNeutral\t0\t0\t1\t0\t0\tintact\tFED:ok,SER:ok,TED:ok,AED:ok\n"
             "ghost_2\tNeutral\t0\t0\t1\t0\t0\tintact\tFED:ok,SER:ok,TED:ok,AED:ok\n");
  write_file(dir / "eval.conf", "paths.predictions = " + (dir / "preds.tsv").string() + "\n" +
                                "paths.labels = " + (dir / "labels.tsv").string() + "\n" +
                                "paths.report = " + (dir / "report.txt").string() + "\n");
  const CliResult result = run_cli("evaluate --config " + (dir / "eval.conf").string());
  CHECK(result.code == 3);
  CHECK(result.output.find("ghost_1") != std::string::npos);
  CHECK(result.output.find("ghost_2") != std::string::npos);

  // Error rows are skipped, not failed.
  write_file(dir / "preds.tsv",
             "clip_0\tPositive\t0\t0\t0\t1\t0\tintact\tFED:ok,SER:ok,TED:ok,AED:ok\n"
             "clip_0\terror\tbackend unavailable\n");
  const CliResult skipped = run_cli("evaluate --config " + (dir / "eval.conf").string());
  REQUIRE(skipped.code == 0);
  auto values = report_values(skipped.output);
  CHECK(values["samples"] == "1");
  CHECK(values["skipped"] == "1");
  CHECK(std::stod(values["accuracy"]) == 1.0);
  std::filesystem::remove_all(dir);
}
