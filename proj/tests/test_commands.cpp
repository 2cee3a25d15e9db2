#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "vqaug/binary_io.hpp"
#include "vqaug/commands.hpp"
#include "vqaug/config.hpp"

using namespace vqaug;
using namespace vqaug::test;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> small_overrides(const fs::path& out) {
  return {"out=" + nlohmann::json(out.string()).dump(),
          "world.train_size=120",
          "world.val_size=40",
          "model.d_emb=6",
          "model.d_hidden=8",
          "training.epochs=3",
          "training.adv_start=1",
          "training.adv_end=2",
          "training.batch_size=16",
          "attackers=[{\"kind\":\"ifgsm\",\"epsilon\":0.3,\"alpha\":0.0625,\"iterations\":2}]"};
}

RunConfig small_config(const fs::path& out, std::vector<std::string> extra = {}) {
  auto o = small_overrides(out);
  o.insert(o.end(), extra.begin(), extra.end());
  return load_config("", o);
}

std::string slurp(const fs::path& p) { return read_text_file(p); }

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& text, const std::string& part) {
  return text.find(part) != std::string::npos;
}

}  // namespace

TEST_CASE("defaults round trip through json") {
  const auto d = RunConfig::defaults();
  CHECK(d.problems().empty());
  const auto back = config_from_json(to_json_value(d));
  CHECK(to_json_value(back) == to_json_value(d));
  CHECK(d.training.attack.epsilon == 0.3);
  CHECK(d.training.adv_weight == 50.0);
  CHECK(d.paraphrase.top_k == 1);
}

TEST_CASE("overrides set nested keys and reject unknown ones") {
  nlohmann::json doc = to_json_value(RunConfig::defaults());
  apply_override(doc, "training.adv_weight=7.5");
  apply_override(doc, "world.colors=[\"red\",\"blue\"]");
  apply_override(doc, "out=somewhere");
  CHECK(doc["training"]["adv_weight"] == 7.5);
  CHECK(doc["world"]["colors"].size() == 2);
  CHECK(doc["out"] == "somewhere");
  CHECK_THROWS_AS(apply_override(doc, "training.adv_wieght=1"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(doc, "novalue"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(doc, "seed.inner=1"), std::invalid_argument);
}

TEST_CASE("all configuration problems are reported together") {
  const auto msg = message_of([] {
    load_config("", {"training.adv_start=30", "world.colors=[]", "fraction=0", "bogus.key=1"});
  });
  CHECK(contains(msg, "invalid configuration"));
  CHECK(contains(msg, "bogus.key"));
  CHECK(contains(msg, "world.colors"));
  CHECK(contains(msg, "fraction"));
  CHECK(contains(msg, "training period"));
}

TEST_CASE("negative counts are rejected instead of wrapping") {
  const auto msg = message_of([] { load_config("", {"training.epochs=-3"}); });
  CHECK(contains(msg, "non-negative integer"));
}

TEST_CASE("config file then overrides") {
  TempDir dir("cfg");
  {
    std::ofstream f(dir.path() / "c.json");
    f << R"({"seed": 9, "training": {"adv_weight": 3}})";
  }
  const auto c = load_config(dir.path() / "c.json", {"training.adv_weight=4"});
  CHECK(c.seed == 9);
  CHECK(c.training.adv_weight == 4.0);
  CHECK(c.resolved_training().seed == c.train_seed());
  CHECK(c.world_seed() != c.train_seed());
  {
    std::ofstream f(dir.path() / "bad.json");
    f << "{not json";
  }
  CHECK_THROWS_AS(load_config(dir.path() / "bad.json", {}), std::invalid_argument);
  CHECK_THROWS(load_config(dir.path() / "missing.json", {}));
}

TEST_CASE("invalid configuration leaves no output behind") {
  TempDir dir("nopartial");
  auto c = small_config(dir.path() / "run");
  c.world.colors.clear();
  CHECK_THROWS_AS(cmd_generate(c), std::invalid_argument);
  CHECK_THROWS_AS(cmd_paraphrase(c), std::invalid_argument);
  CHECK_THROWS_AS(cmd_train(c, TrainingMode::kVanilla), std::invalid_argument);
  CHECK_FALSE(fs::exists(dir.path() / "run"));
}

TEST_CASE("generate writes a stable manifest and honours the fraction") {
  TempDir dir("gen");
  const auto c = small_config(dir.path() / "a");
  const auto r1 = cmd_generate(c);
  const auto m1 = slurp(r1.manifest);
  const auto r2 = cmd_generate(c);
  CHECK(slurp(r2.manifest) == m1);
  CHECK(r1.train_examples == 120);
  CHECK(r1.train_sha256 == sha256_file(RunPaths{c.out}.train_split()));
  const auto manifest = nlohmann::json::parse(m1);
  CHECK(manifest["files"]["train.bin"]["sha256"] == r1.train_sha256);

  const auto f = small_config(dir.path() / "b", {"fraction=0.2"});
  const auto rf = cmd_generate(f);
  CHECK(rf.train_examples == 24);
  CHECK(rf.val_examples == 40);
  CHECK(load_dataset(RunPaths{f.out}).train.back().id == 23);
}

TEST_CASE("commands name the missing prerequisite") {
  TempDir dir("missing");
  const auto c = small_config(dir.path() / "run");
  CHECK(contains(message_of([&] { cmd_paraphrase(c); }), "'generate'"));
  cmd_generate(c);
  CHECK(contains(message_of([&] { cmd_train(c, TrainingMode::kAdversarial); }), "'paraphrase'"));
  CHECK(contains(message_of([&] { cmd_evaluate(c, {TrainingMode::kVanilla}); }), "train --mode vanilla"));
  const auto lex = small_config(dir.path() / "run", {"paraphrase.lexicons=[\"nope-a.tsv\",\"nope-b.tsv\"]"});
  CHECK(contains(message_of([&] { cmd_paraphrase(lex); }), "nope-a.tsv"));
}

TEST_CASE("full pipeline is byte-identical on rerun") {
  TempDir dir("pipeline");
  auto run = [&](const fs::path& out) {
    const auto c = small_config(out);
    cmd_generate(c);
    const auto p = cmd_paraphrase(c);
    CHECK(p.examples == 160);
    CHECK(p.coverage() >= 0.95);
    cmd_train(c, TrainingMode::kVanilla);
    const auto t = cmd_train(c, TrainingMode::kAdversarial);
    CHECK(t.paraphrased_examples > 0);
    const auto reports = cmd_evaluate(c, {TrainingMode::kVanilla, TrainingMode::kAdversarial});
    CHECK(reports.size() == 2);
    CHECK(reports[0].paraphrased > 0);
    return c;
  };
  const auto a = run(dir.path() / "a");
  const auto b = run(dir.path() / "b");
  const RunPaths pa{a.out}, pb{b.out};
  for (const auto& [x, y] : std::vector<std::pair<fs::path, fs::path>>{
           {pa.train_split(), pb.train_split()},
           {pa.paraphrase_cache(), pb.paraphrase_cache()},
           {pa.lexicon(0), pb.lexicon(0)},
           {pa.checkpoint(TrainingMode::kVanilla), pb.checkpoint(TrainingMode::kVanilla)},
           {pa.checkpoint(TrainingMode::kAdversarial), pb.checkpoint(TrainingMode::kAdversarial)},
           {pa.epoch_log(TrainingMode::kAdversarial), pb.epoch_log(TrainingMode::kAdversarial)},
           {pa.report(), pb.report()}}) {
    CAPTURE(x.string());
    CHECK(slurp(x) == slurp(y));
  }

  // Window epochs log adversarial terms, the rest log zeros.
  std::istringstream log(slurp(pa.epoch_log(TrainingMode::kAdversarial)));
  std::string line;
  std::getline(log, line);
  for (int epoch = 0; std::getline(log, line); ++epoch) {
    CHECK(contains(line, epoch == 1 ? ",adversarial," : ",clean,"));
  }

  // Evaluating the same checkpoint twice gives the same bytes.
  const auto before = slurp(pa.report());
  cmd_evaluate(a, {TrainingMode::kVanilla, TrainingMode::kAdversarial});
  CHECK(slurp(pa.report()) == before);

  // Empty attacker list gives a clean-only report.
  auto clean_only = a;
  clean_only.attackers.clear();
  const auto r = cmd_evaluate(clean_only, {TrainingMode::kVanilla});
  CHECK(r[0].attackers.empty());
  const auto csv = slurp(pa.report());
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}

TEST_CASE("checkpoint with other dims is rejected naming both") {
  TempDir dir("dims");
  const auto c = small_config(dir.path() / "run");
  cmd_generate(c);
  cmd_train(c, TrainingMode::kVanilla);
  auto other = small_config(dir.path() / "run", {"world.feature_dim=18"});
  cmd_generate(other);
  const auto msg = message_of([&] { cmd_evaluate(other, {TrainingMode::kVanilla}); });
  CHECK(contains(msg, "D=16"));
  CHECK(contains(msg, "D=18"));
}

TEST_CASE("sweep writes one row per cell and resumes") {
  TempDir dir("sweep");
  const auto c = small_config(dir.path() / "run", {"sweep.epsilons=[0.3,0.5,1.0,1.3]"});
  cmd_generate(c);
  CHECK(contains(message_of([&] { cmd_sweep(c); }), "'train'"));
  cmd_train(c, TrainingMode::kVanilla);
  const auto first = cmd_sweep(c);
  CHECK(first.computed == 4);
  const auto text = slurp(first.csv);
  CHECK(text.rfind(std::string(kSweepHeader) + "\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  const auto again = cmd_sweep(c);
  CHECK(again.computed == 0);
  CHECK(again.skipped == 4);
  CHECK(slurp(first.csv) == text);

  // Dropping the last row recomputes only that cell, with the same bytes.
  fs::path csv = first.csv;
  const auto cut = text.rfind('\n', text.size() - 2);
  write_file_atomic(csv, text.substr(0, cut + 1));
  const auto resumed = cmd_sweep(c);
  CHECK(resumed.computed == 1);
  CHECK(slurp(csv) == text);
}

TEST_CASE("a one-cell sweep equals evaluate with that attacker") {
  TempDir dir("onecell");
  const auto c = small_config(dir.path() / "run",
                              {"sweep.epsilons=[0.3]", "sweep.alphas=[0.0625]", "sweep.iterations=2"});
  cmd_generate(c);
  cmd_train(c, TrainingMode::kVanilla);
  const auto r = cmd_sweep(c);
  REQUIRE(r.computed == 1);
  const auto reports = cmd_evaluate(c, {TrainingMode::kVanilla});
  std::istringstream in(slurp(r.csv));
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  const double attacked = std::stod(line.substr(line.rfind(',') + 1));
  // The configured attacker is ifgsm(0.3, 0.0625, 2) in feature units; the
  // sweep rescales by v_max / 83, which is 1 for the default world.
  CHECK(attacked == doctest::Approx(reports[0].attackers[0].accuracy).epsilon(1e-9));
}

TEST_CASE("period and fraction grids train their runs") {
  TempDir dir("grids");
  const auto c = small_config(dir.path() / "run", {"sweep.periods=[[0,1],[1,2]]", "sweep.fractions=[0.5]",
                                                   "training.epochs=2"});
  cmd_generate(c);
  CHECK(contains(message_of([&] { cmd_sweep(c); }), "'paraphrase'"));
  cmd_paraphrase(c);
  const auto r = cmd_sweep(c);
  CHECK(r.computed == 4);
  const auto text = slurp(r.csv);
  CHECK(contains(text, "\nperiod,adversarial,0,1,"));
  CHECK(contains(text, "\nfraction,vanilla,"));
}

#ifdef VQAUG_CLI_PATH
namespace {

std::pair<int, std::string> run_cli(const std::string& args) {
  const std::string cmd = std::string(VQAUG_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 256> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  const int status = ::pclose(pipe);
  return {WEXITSTATUS(status), out};
}

}  // namespace

TEST_CASE("command line tool") {
  TempDir dir("cli");
  const std::string out = (dir.path() / "run").string();
  std::string common = "--out " + out;
  for (const auto& o : small_overrides(dir.path() / "run")) {
    if (o.rfind("out=", 0) == 0 || o.rfind("attackers=", 0) == 0) continue;
    common += " --set " + o;
  }
  CHECK(run_cli("--help").first == 0);
  auto [code, text] = run_cli("generate " + common + " --set training.nope=1");
  CHECK(code == 1);
  CHECK(contains(text, "error: invalid configuration"));
  CHECK_FALSE(fs::exists(out));

  std::tie(code, text) = run_cli("train " + common + " --mode adversarial");
  CHECK(code == 1);
  CHECK(contains(text, "'generate'"));

  std::tie(code, text) = run_cli("generate " + common + " --fraction 0.5 --seed 4");
  CHECK(code == 0);
  CHECK(contains(text, "train 60 examples"));
  std::tie(code, text) = run_cli("train " + common + " --fraction 0.5 --seed 4");
  CHECK(code == 0);
  CHECK(fs::exists(fs::path(out) / "vanilla" / "checkpoint.bin"));
  std::tie(code, text) = run_cli("evaluate " + common + " --fraction 0.5 --seed 4");
  CHECK(code == 0);
  CHECK(contains(text, "model,attacker,"));
  CHECK(run_cli("train " + common + " --mode sideways").first != 0);
}
#endif
