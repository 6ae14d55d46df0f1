// Command-line front end: train victims, evolve universal perturbation
// rules, apply saved rules, and re-render run summaries.

#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "unirule/experiment.hpp"
#include "unirule/text.hpp"

namespace {

using namespace unirule;

struct SpecArgs {
  std::string config;
  std::vector<std::string> overrides;
};

void add_spec_options(CLI::App* cmd, SpecArgs& args) {
  cmd->add_option("--config", args.config, "flat key=value config file");
  cmd->add_option("--set", args.overrides,
                  "override one config key (repeatable), e.g. --set seeds=1,2,3");
}

ExperimentSpec build_spec(const SpecArgs& args) {
  ExperimentSpec spec;
  if (!args.config.empty()) load_spec_file(spec, args.config);
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    }
    apply_spec_setting(spec, detail::trim_view(std::string_view(kv).substr(0, eq)),
                       detail::trim_view(std::string_view(kv).substr(eq + 1)));
  }
  return spec;
}

void cmd_train_victim(const SpecArgs& args, const std::string& out_path) {
  ExperimentSpec spec = build_spec(args);
  validate_spec(spec);
  if (spec.seeds.size() != 1) {
    throw ConfigError("train-victim uses exactly one seed (got " +
                      std::to_string(spec.seeds.size()) + ")");
  }
  const auto seed = spec.seeds.front();
  LoadStats stats;
  const auto samples = load_dataset(spec, &stats);
  if (stats.dropped_empty > 0) {
    std::cout << "note: dropped " << stats.dropped_empty << " empty line(s)\n";
  }
  auto [train, held_out] =
      split_samples(samples, spec.split_fraction, derive_seed(seed, "split"));
  const auto victim = train_victim(spec.victim_kind, train, seed);
  const double acc = accuracy(*victim, held_out);
  atomic_write_file(out_path, victim->to_json().dump(2) + "\n");
  char line[160];
  std::snprintf(line, sizeof(line),
                "%s seed %llu: held-out accuracy %.6f (train %zu, held-out %zu)\n",
                victim->kind().c_str(), static_cast<unsigned long long>(seed), acc,
                train.size(), held_out.size());
  std::cout << line << "wrote " << out_path << "\n";
}

void cmd_run(const SpecArgs& args, bool compare_mode, bool progress) {
  const ExperimentSpec spec = build_spec(args);
  const std::vector<OptimizerConfig::Algo> algos =
      compare_mode
          ? std::vector<OptimizerConfig::Algo>{OptimizerConfig::Algo::RS,
                                               OptimizerConfig::Algo::CAURO}
          : std::vector<OptimizerConfig::Algo>{spec.opt.algo};
  run_experiment(spec, algos, &std::cout, progress);
  std::cout << "wrote " << spec.outdir << "/summary.json\n";
}

void cmd_apply_rule(const std::string& rule_path, const std::string& victim_path,
                    const std::string& text, const std::string& input_path) {
  const UniversalRule rule = parse_rule(read_text_file(rule_path));
  std::unique_ptr<VictimModel> victim;
  if (!victim_path.empty()) victim = load_victim_file(victim_path);

  const auto emit = [&](const std::string& raw) {
    const std::string cleaned = clean(raw);
    const ApplyResult ar = apply_rule(rule, cleaned);
    std::cout << ar.perturbed_text;
    if (victim) {
      std::cout << '\t' << format_prediction(victim->predict(cleaned)) << '\t'
                << format_prediction(victim->predict(ar.perturbed_text));
    }
    std::cout << '\n';
  };

  if (!text.empty()) {
    emit(text);
    return;
  }
  std::istream* in = &std::cin;
  std::ifstream file;
  if (!input_path.empty()) {
    file.open(input_path);
    if (!file) throw DataError("cannot open " + input_path);
    in = &file;
  }
  std::string line;
  while (std::getline(*in, line)) emit(line);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"universal character-perturbation attacks on text classifiers"};
  app.require_subcommand(1);

  SpecArgs train_args;
  std::string train_out = "victim.json";
  auto* train = app.add_subcommand("train-victim", "train a victim model and save it");
  add_spec_options(train, train_args);
  train->add_option("--out", train_out, "output model file")->capture_default_str();

  SpecArgs attack_args;
  bool attack_progress = false;
  auto* attack = app.add_subcommand("attack", "run one optimizer over the configured seeds");
  add_spec_options(attack, attack_args);
  attack->add_flag("--progress", attack_progress, "log every generation");

  SpecArgs compare_args;
  bool compare_progress = false;
  auto* compare =
      app.add_subcommand("compare", "run RS and CAURO on shared victims and seeds");
  add_spec_options(compare, compare_args);
  compare->add_flag("--progress", compare_progress, "log every generation");

  std::string rule_path, victim_path, text, input_path;
  auto* apply = app.add_subcommand("apply-rule", "apply a saved rule to text");
  apply->add_option("--rule", rule_path, "rule JSON file")->required();
  apply->add_option("--victim", victim_path, "also print before/after predictions");
  auto* text_opt = apply->add_option("--text", text, "one input text");
  apply->add_option("--input", input_path, "file of input lines (default: stdin)")
      ->excludes(text_opt);

  std::string report_dir;
  auto* report = app.add_subcommand("report", "re-render summary.json from run artifacts");
  report->add_option("--outdir", report_dir, "experiment output directory")->required();

  train->callback([&] { cmd_train_victim(train_args, train_out); });
  attack->callback([&] { cmd_run(attack_args, false, attack_progress); });
  compare->callback([&] { cmd_run(compare_args, true, compare_progress); });
  apply->callback([&] { cmd_apply_rule(rule_path, victim_path, text, input_path); });
  report->callback([&] {
    unirule::rebuild_summary(report_dir, &std::cout);
    std::cout << "wrote " << report_dir << "/summary.json\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const unirule::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const unirule::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
