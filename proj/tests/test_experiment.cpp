#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "unirule/errors.hpp"
#include "unirule/experiment.hpp"

using namespace unirule;
namespace fs = std::filesystem;

namespace {

// Deterministic toy victim: predicts 1 exactly when the text contains 'q'.
struct StubVictim final : VictimModel {
  Prediction predict(std::string_view text) const override {
    const bool has_q = text.find('q') != std::string_view::npos;
    return {has_q ? 1 : 0, 1.0};
  }
  std::string kind() const override { return "stub"; }
  nlohmann::json to_json() const override { return nlohmann::json::object(); }
};

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "unirule_experiment_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string make_corpus_tsv(const fs::path& path) {
  const char* pos_words[] = {"great", "wonderful", "charming", "excellent", "delightful",
                             "brilliant"};
  const char* neg_words[] = {"awful", "boring", "tedious", "terrible", "messy", "bland"};
  std::ofstream out(path);
  for (int i = 0; i < 30; ++i) {
    out << "1\ta " << pos_words[i % 6] << " and " << pos_words[(i + 1) % 6] << " film number "
        << i << "\n";
    out << "0\ta " << neg_words[i % 6] << " and " << neg_words[(i + 1) % 6] << " film number "
        << i << "\n";
  }
  return path.string();
}

ExperimentSpec small_spec(const fs::path& dir) {
  ExperimentSpec spec;
  spec.tsv_path = make_corpus_tsv(dir / "corpus.tsv");
  spec.split_fraction = 0.7;
  spec.seeds = {1, 2};
  spec.outdir = (dir / "out").string();
  spec.opt.population = 10;
  spec.opt.rules_per_gen = 8;
  spec.opt.rule_len = 4;
  spec.opt.generations = 4;
  spec.opt.eval_subset = 15;
  return spec;
}

std::vector<std::string> tsv_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

}  // namespace

TEST_CASE("config files and CLI overrides share one strict vocabulary") {
  const auto dir = fresh_dir("config");
  const auto cfg_path = dir / "run.cfg";
  {
    std::ofstream out(cfg_path);
    out << "# comment line\n"
        << "data_tsv = corpus.tsv\n"
        << "victim = word_avg_mlp\n"
        << "seeds = 3, 5, 8\n"
        << "generations = 12\n"
        << "replace_frac = 0.25\n";
  }
  ExperimentSpec spec;
  load_spec_file(spec, cfg_path.string());
  CHECK(spec.tsv_path == "corpus.tsv");
  CHECK(spec.victim_kind == "word_avg_mlp");
  CHECK(spec.seeds == std::vector<std::uint64_t>{3, 5, 8});
  CHECK(spec.opt.generations == 12);
  CHECK(spec.opt.replace_frac == 0.25);

  apply_spec_setting(spec, "generations", "7");
  CHECK(spec.opt.generations == 7);

  CHECK_THROWS_AS(apply_spec_setting(spec, "generaitons", "7"), ConfigError);
  CHECK_THROWS_AS(apply_spec_setting(spec, "generations", "seven"), ConfigError);
  CHECK_THROWS_AS(apply_spec_setting(spec, "algo", "hillclimb"), ConfigError);
  CHECK_THROWS_AS(apply_spec_setting(spec, "seeds", "1,,2"), ConfigError);
  CHECK_THROWS_AS(apply_spec_setting(spec, "victim", "resnet"), ConfigError);

  {
    std::ofstream out(cfg_path);
    out << "data_tsv corpus.tsv\n";
  }
  ExperimentSpec bad;
  CHECK_THROWS_AS(load_spec_file(bad, cfg_path.string()), ConfigError);
}

TEST_CASE("spec validation rejects incoherent dataset declarations") {
  ExperimentSpec spec;
  CHECK_THROWS_AS(validate_spec(spec), ConfigError);  // no dataset at all
  spec.tsv_path = "x.tsv";
  spec.pos_path = "x.pos";
  spec.neg_path = "x.neg";
  CHECK_THROWS_AS(validate_spec(spec), ConfigError);  // both layouts
  spec.tsv_path.clear();
  spec.neg_path.clear();
  CHECK_THROWS_AS(validate_spec(spec), ConfigError);  // pos without neg
  spec.neg_path = "x.neg";
  spec.split_fraction = 1.5;
  CHECK_THROWS_AS(validate_spec(spec), ConfigError);
  spec.split_fraction = 0.9;
  CHECK_NOTHROW(validate_spec(spec));
}

TEST_CASE("atomic writes land complete files") {
  const auto dir = fresh_dir("atomic");
  const auto path = dir / "nested" / "deep" / "file.txt";
  atomic_write_file(path, "payload\n");
  CHECK(read_text_file(path.string()) == "payload\n");
  CHECK_FALSE(fs::exists(path.string() + ".tmp"));
  atomic_write_file(path, "rewritten\n");
  CHECK(read_text_file(path.string()) == "rewritten\n");
}

TEST_CASE("prepare_seed freezes a correct, capped evaluation subset") {
  const auto dir = fresh_dir("prepare");
  ExperimentSpec spec = small_spec(dir);
  const auto samples = load_dataset(spec);
  const SeedContext ctx = prepare_seed(spec, samples, 1);
  CHECK(ctx.eval_set.size() <= static_cast<std::size_t>(spec.opt.eval_subset));
  CHECK_FALSE(ctx.eval_set.empty());
  for (const auto& s : ctx.eval_set) {
    CHECK(ctx.victim->predict(s.text).label == s.label);
  }
  const SeedContext again = prepare_seed(spec, samples, 1);
  REQUIRE(again.eval_set.size() == ctx.eval_set.size());
  for (std::size_t i = 0; i < ctx.eval_set.size(); ++i) {
    CHECK(again.eval_set[i].text == ctx.eval_set[i].text);
  }

  ExperimentSpec tight = spec;
  tight.opt.eval_subset = 5;
  const SeedContext capped = prepare_seed(tight, samples, 1);
  CHECK(capped.eval_set.size() == 5);
}

TEST_CASE("experiment artifacts are complete, deterministic, and rebuildable") {
  const auto dir = fresh_dir("artifacts");
  const ExperimentSpec spec = small_spec(dir);
  const std::vector<OptimizerConfig::Algo> both = {OptimizerConfig::Algo::RS,
                                                   OptimizerConfig::Algo::CAURO};
  const auto outcomes = run_experiment(spec, both);
  REQUIRE(outcomes.size() == 4);  // 2 optimizers x 2 seeds

  for (const char* algo : {"rs", "cauro"}) {
    for (const char* seed : {"1", "2"}) {
      const fs::path run_dir = fs::path(spec.outdir) / algo / seed;
      const auto hist = parse_history_csv((run_dir / "history.csv").string());
      CHECK(hist.records.size() == 4);
      CHECK_NOTHROW(parse_rule(read_text_file((run_dir / "best_rule.json").string())));
      const auto tsv = read_text_file((run_dir / "adversarial.tsv").string());
      CHECK(tsv.rfind("original\tperturbed\t", 0) == 0);
    }
  }
  CHECK(fs::exists(fs::path(spec.outdir) / "summary.json"));

  SECTION("an identical spec reproduces every artifact byte for byte") {
    const auto dir2 = fresh_dir("artifacts_rerun");
    ExperimentSpec spec2 = small_spec(dir2);
    run_experiment(spec2, both);
    for (const char* rel : {"rs/1/history.csv", "rs/2/history.csv", "cauro/1/history.csv",
                            "cauro/2/history.csv", "cauro/1/best_rule.json",
                            "rs/1/best_rule.json", "cauro/1/adversarial.tsv", "summary.json"}) {
      CHECK(read_text_file((fs::path(spec.outdir) / rel).string()) ==
            read_text_file((fs::path(spec2.outdir) / rel).string()));
    }
  }

  SECTION("rebuild_summary reproduces the summary from artifacts alone") {
    const std::string before = read_text_file((fs::path(spec.outdir) / "summary.json").string());
    const auto rebuilt = rebuild_summary(spec.outdir);
    CHECK(rebuilt.size() == outcomes.size());
    const std::string after = read_text_file((fs::path(spec.outdir) / "summary.json").string());
    CHECK(before == after);
  }

  SECTION("adversarial rows replay under the saved rule and victim") {
    const auto samples = load_dataset(spec);
    for (const std::uint64_t seed : {std::uint64_t{1}, std::uint64_t{2}}) {
      const SeedContext ctx = prepare_seed(spec, samples, seed);
      const fs::path run_dir = fs::path(spec.outdir) / "cauro" / std::to_string(seed);
      const auto rule = parse_rule(read_text_file((run_dir / "best_rule.json").string()));
      std::ifstream tsv(run_dir / "adversarial.tsv");
      std::string line;
      std::getline(tsv, line);  // header
      while (std::getline(tsv, line)) {
        const auto f = tsv_fields(line);
        REQUIRE(f.size() == 6);
        const auto replay = apply_rule(rule, f[0]);
        CHECK(replay.perturbed_text == f[1]);
        CHECK(std::to_string(replay.perturb_count) == f[4]);
        CHECK(format_prediction(ctx.victim->predict(f[0])) == f[2]);
        CHECK(format_prediction(ctx.victim->predict(f[1])) == f[3]);
        CHECK(f[2][0] != f[3][0]);  // the labels differ on every dumped row
        CHECK(f[5] == rule_id_hex(rule));
        CHECK(replay.perturb_count >= 1);
      }
    }
  }
}

TEST_CASE("the adversarial dump lists exactly the flipped samples") {
  StubVictim victim;
  UniversalRule rule;
  rule.budget = 5;
  rule.procs = {PerturbProc{ProcKind::Insert, 'a', 'b', 'q'}};
  const std::vector<LabeledSample> eval_set = {{"ab cd", 0}, {"zz yy", 0}};
  const auto ev = evaluate_rule(rule, eval_set, victim);
  const std::string tsv = adversarial_tsv(rule, ev, eval_set, victim);

  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < tsv.size()) {
    const auto nl = tsv.find('\n', start);
    lines.push_back(tsv.substr(start, nl - start));
    start = nl + 1;
  }
  REQUIRE(lines.size() == 2);  // header + the one flip
  const auto f = tsv_fields(lines[1]);
  REQUIRE(f.size() == 6);
  CHECK(f[0] == "ab cd");
  CHECK(f[1] == "abq cd");
  CHECK(f[2] == "0:1.000000");
  CHECK(f[3] == "1:1.000000");
  CHECK(f[4] == "1");
  CHECK(f[5] == rule_id_hex(rule));
}

TEST_CASE("prediction and id formatting are stable") {
  CHECK(format_prediction({1, 0.8}) == "1:0.800000");
  CHECK(format_prediction({0, 0.53125}) == "0:0.531250");
  UniversalRule rule;
  rule.procs = {PerturbProc{ProcKind::Swap, 'a', 'b', 0}};
  const auto id = rule_id_hex(rule);
  CHECK(id.size() == 16);
  CHECK(id == rule_id_hex(rule));
  CHECK(round6(1.0 / 3.0) == 0.333333);
}

TEST_CASE("history parsing rejects malformed files") {
  const auto dir = fresh_dir("history");
  const auto path = dir / "history.csv";
  atomic_write_file(path, "wrong,header\n1,0,0,0,0,0\n");
  CHECK_THROWS_AS(parse_history_csv(path.string()), DataError);
  atomic_write_file(path,
                    "generation,best_rate,mean_rate,best_so_far,frac_modified,frac_capped\n");
  CHECK_THROWS_AS(parse_history_csv(path.string()), DataError);
  atomic_write_file(path,
                    "generation,best_rate,mean_rate,best_so_far,frac_modified,frac_capped\n"
                    "1,0.1,0.05\n");
  CHECK_THROWS_AS(parse_history_csv(path.string()), DataError);
  CHECK_THROWS_AS(rebuild_summary((dir / "does_not_exist").string()), DataError);
}
