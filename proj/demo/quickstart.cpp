// Minimal end-to-end walk through the library: train a tiny victim, evolve a
// universal rule against it for a few generations, then apply the rule to
// fresh text. Mirrors what the `attack` CLI subcommand does at full scale.

#include <cstdio>
#include <string>
#include <vector>

#include "unirule/evolve.hpp"
#include "unirule/perturb.hpp"
#include "unirule/victim.hpp"

int main() {
  using namespace unirule;

  std::vector<LabeledSample> train;
  const char* positive[] = {"a warm and funny delight", "simply wonderful acting",
                            "great fun from start to finish", "charming and heartfelt",
                            "brilliant and moving work", "an excellent little film"};
  const char* negative[] = {"a dull and tedious mess", "simply awful acting",
                            "boring from start to finish", "clumsy and hollow",
                            "a terrible waste of time", "an utterly bland film"};
  for (const auto* t : positive) train.push_back({t, 1});
  for (const auto* t : negative) train.push_back({t, 0});

  // One epoch keeps the margins thin enough that a short evolution run can
  // find flips on a 12-sample corpus.
  CharNGramLinear::Hyper hyper;
  hyper.epochs = 1;
  const auto victim = CharNGramLinear::train(train, 7, hyper);

  std::vector<LabeledSample> eval_set;
  for (const auto& s : train) {
    if (victim.predict(s.text).label == s.label) eval_set.push_back(s);
  }

  OptimizerConfig cfg;
  cfg.algo = OptimizerConfig::Algo::CAURO;
  cfg.population = 40;
  cfg.rules_per_gen = 20;
  cfg.rule_len = 10;
  cfg.generations = 30;
  cfg.seed = 7;
  const RunHistory hist = run_optimizer(cfg, eval_set, victim);

  std::printf("best misclassification rate after %d generations: %.3f\n", cfg.generations,
              hist.best_rate);
  std::printf("best rule:\n%s", rule_to_canonical_json(hist.best_rule).c_str());

  for (const auto& s : eval_set) {
    const ApplyResult r = apply_rule(hist.best_rule, s.text);
    const auto before = victim.predict(s.text);
    const auto after = victim.predict(r.perturbed_text);
    if (after.label == before.label) continue;
    std::printf("\n'%s' -> '%s' (%d perturbations)\n", s.text.c_str(),
                r.perturbed_text.c_str(), r.perturb_count);
    std::printf("prediction %d (%.3f) -> %d (%.3f)\n", before.label, before.confidence,
                after.label, after.confidence);
    break;
  }
  return 0;
}
