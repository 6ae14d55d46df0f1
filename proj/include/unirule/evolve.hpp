#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "unirule/errors.hpp"
#include "unirule/perturb.hpp"
#include "unirule/rng.hpp"
#include "unirule/victim.hpp"

namespace unirule {

// One population member: a perturbation procedure plus the evaluation
// statistics accumulated within the current generation. n_evals counts
// sample-level evaluations (rules participated in, times evaluation-set
// size).
struct Individual {
  PerturbProc proc;
  std::uint64_t n_evals = 0;
  std::uint64_t success_count = 0;  // samples whose prediction flipped
  std::uint64_t fire_count = 0;     // samples this procedure perturbed
  int birth_generation = 0;

  void reset_stats() { n_evals = success_count = fire_count = 0; }
};

using Population = std::vector<Individual>;

// Share of participated evaluations that flipped the prediction. Empty when
// the individual has not been evaluated yet; unevaluated individuals rank
// below every evaluated one.
inline std::optional<double> accuracy_fitness(const Individual& ind) {
  if (ind.n_evals == 0) return std::nullopt;
  return static_cast<double>(ind.success_count) / static_cast<double>(ind.n_evals);
}

// Share of participated evaluations where the procedure matched and fired.
inline std::optional<double> utility_fitness(const Individual& ind) {
  if (ind.n_evals == 0) return std::nullopt;
  return static_cast<double>(ind.fire_count) / static_cast<double>(ind.n_evals);
}

struct OptimizerConfig {
  enum class Algo { RS, CAURO };

  Algo algo = Algo::CAURO;
  int population = 100;     // P
  int rules_per_gen = 100;  // R
  int rule_len = 30;        // k, procedures per rule
  int generations = 100;    // G
  int budget = 5;
  double replace_frac = 0.20;
  int eval_subset = 500;  // frozen evaluation-set size cap
  std::uint64_t seed = 0;
  int threads = 1;  // rule evaluations per generation run on this many workers
};

inline const char* algo_name(OptimizerConfig::Algo a) {
  return a == OptimizerConfig::Algo::RS ? "rs" : "cauro";
}

inline void validate_config(const OptimizerConfig& cfg) {
  if (cfg.population < 1) throw ConfigError("population must be >= 1");
  if (cfg.rule_len < 1) throw ConfigError("rule_len must be >= 1");
  if (cfg.rule_len > cfg.population) throw ConfigError("rule_len must not exceed population");
  if (cfg.rules_per_gen < 1) throw ConfigError("rules_per_gen must be >= 1");
  if (cfg.generations < 1) throw ConfigError("generations must be >= 1");
  if (cfg.budget < 1) throw ConfigError("budget must be >= 1");
  if (!(cfg.replace_frac > 0.0 && cfg.replace_frac < 0.5)) {
    throw ConfigError("replace_frac must be in (0, 0.5)");
  }
  if (cfg.eval_subset < 1) throw ConfigError("eval_subset must be >= 1");
  if (cfg.algo == OptimizerConfig::Algo::RS && cfg.population < 3) {
    throw ConfigError("rs needs population >= 3 for differential mixing");
  }
  if (cfg.threads < 0) throw ConfigError("threads must be >= 0");
}

// Outcome of one rule across the frozen evaluation set.
struct RuleEvaluation {
  UniversalRule rule;
  double misclass_rate = 0.0;
  struct SampleOutcome {
    bool attack_success = false;
    int perturb_count = 0;
    std::vector<bool> applied_mask;
  };
  std::vector<SampleOutcome> per_sample;
  double frac_modified = 0.0;  // samples with perturb_count >= 1
  double frac_capped = 0.0;    // samples with perturb_count == budget
  // aggregates folded during evaluation, used for fitness attribution
  std::uint64_t success_total = 0;
  std::vector<std::uint64_t> fire_per_proc;
};

// Applies the rule to every sample and predicts on the perturbed text. A
// sample counts as an attack success when the perturbed prediction differs
// from the original one; the evaluation set holds only samples the victim
// classifies correctly, so the original prediction is the stored label, and
// an unmodified sample can never flip.
inline RuleEvaluation evaluate_rule(const UniversalRule& rule,
                                    const std::vector<LabeledSample>& eval_set,
                                    const VictimModel& victim) {
  if (eval_set.empty()) throw ConfigError("evaluation set is empty");
  RuleEvaluation ev;
  ev.rule = rule;
  ev.per_sample.reserve(eval_set.size());
  ev.fire_per_proc.assign(rule.procs.size(), 0);
  std::size_t modified = 0, capped = 0;
  for (const auto& s : eval_set) {
    ApplyResult ar = apply_rule(rule, s.text);
    bool success = false;
    if (ar.perturb_count > 0) {
      success = victim.predict(ar.perturbed_text).label != s.label;
      ++modified;
      if (ar.perturb_count == rule.budget) ++capped;
      for (std::size_t j = 0; j < ar.applied_mask.size(); ++j) {
        if (ar.applied_mask[j]) ++ev.fire_per_proc[j];
      }
    }
    ev.success_total += success ? 1 : 0;
    ev.per_sample.push_back({success, ar.perturb_count, std::move(ar.applied_mask)});
  }
  const auto n = static_cast<double>(eval_set.size());
  ev.misclass_rate = static_cast<double>(ev.success_total) / n;
  ev.frac_modified = static_cast<double>(modified) / n;
  ev.frac_capped = static_cast<double>(capped) / n;
  return ev;
}

inline PerturbProc random_proc(Rng& rng) {
  PerturbProc p;
  switch (rng.below(3)) {
    case 0:
      p.kind = ProcKind::Swap;
      break;
    case 1:
      p.kind = ProcKind::Delete;
      break;
    default:
      p.kind = ProcKind::Insert;
      break;
  }
  const int a = rng.below_int(26);
  p.match_a = static_cast<char>('a' + a);
  if (p.kind == ProcKind::Swap) {
    int b = rng.below_int(25);  // uniform over the 25 letters != match_a
    if (b >= a) ++b;
    p.match_b = static_cast<char>('a' + b);
  } else {
    p.match_b = static_cast<char>('a' + rng.below_int(26));
  }
  if (p.kind == ProcKind::Insert) p.insert_c = static_cast<char>('a' + rng.below_int(26));
  return p;
}

inline Population make_population(int size, int birth_generation, Rng& rng) {
  Population pop;
  pop.reserve(size);
  for (int i = 0; i < size; ++i) {
    Individual ind;
    ind.proc = random_proc(rng);
    ind.birth_generation = birth_generation;
    pop.push_back(ind);
  }
  return pop;
}

// Letter-index arithmetic of the differential mixing operator:
// a + round(0.5 * (b - c)), wrapped onto the 26-letter ring.
inline int mix_letter_index(int a, int b, int c) {
  long v = a + std::lround(0.5 * static_cast<double>(b - c));
  v %= 26;
  if (v < 0) v += 26;
  return static_cast<int>(v);
}

// Differential mixing of three parent procedures. The kind comes from the
// first parent; letters mix positionally with a missing third letter treated
// as index 0. A Swap offspring with equal letters gets match_b re-drawn from
// the other 25 letters.
inline PerturbProc mix_procs(const PerturbProc& a, const PerturbProc& b, const PerturbProc& c,
                             Rng& rng) {
  const auto third = [](const PerturbProc& p) {
    return p.kind == ProcKind::Insert ? p.insert_c - 'a' : 0;
  };
  PerturbProc out;
  out.kind = a.kind;
  out.match_a = static_cast<char>(
      'a' + mix_letter_index(a.match_a - 'a', b.match_a - 'a', c.match_a - 'a'));
  out.match_b = static_cast<char>(
      'a' + mix_letter_index(a.match_b - 'a', b.match_b - 'a', c.match_b - 'a'));
  if (out.kind == ProcKind::Insert) {
    out.insert_c = static_cast<char>('a' + mix_letter_index(third(a), third(b), third(c)));
  }
  if (out.kind == ProcKind::Swap && out.match_a == out.match_b) {
    int nb = rng.below_int(25);
    if (nb >= out.match_a - 'a') ++nb;
    out.match_b = static_cast<char>('a' + nb);
  }
  return out;
}

struct GenerationStats {
  int generation = 0;
  double best_rate = 0.0;
  double mean_rate = 0.0;
  RuleEvaluation best;  // full evaluation of the generation's best rule
};

namespace detail {

// Deterministic parallel map over [0, n): chunked by index, results land in
// caller-owned slots, so scheduling cannot change any outcome.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  std::mutex err_mutex;
  std::exception_ptr first_error;
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      const int lo = static_cast<int>(static_cast<long>(n) * t / workers);
      const int hi = static_cast<int>(static_cast<long>(n) * (t + 1) / workers);
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// R membership lists of k distinct population indices, order = draw order.
inline std::vector<std::vector<int>> draw_rule_memberships(int rules, int rule_len, int pop_size,
                                                           Rng& rng) {
  std::vector<std::vector<int>> out(rules);
  std::vector<int> perm(pop_size);
  for (auto& members : out) {
    std::iota(perm.begin(), perm.end(), 0);
    for (int j = 0; j < rule_len; ++j) {
      std::swap(perm[j], perm[j + rng.below_int(pop_size - j)]);
    }
    members.assign(perm.begin(), perm.begin() + rule_len);
  }
  return out;
}

// Generation core shared by both optimizers: reset statistics, compose R
// rules by sampling k distinct individuals each, evaluate them, and fold the
// per-sample outcomes back onto the participating individuals. Rule
// evaluations may run on several workers; attribution is a sequential
// reduction in rule order.
inline GenerationStats evaluate_generation(Population& pop,
                                           const std::vector<LabeledSample>& eval_set,
                                           const VictimModel& victim, const OptimizerConfig& cfg,
                                           Rng& rng, int generation) {
  if (eval_set.empty()) throw ConfigError("evaluation set is empty");
  const int p = static_cast<int>(pop.size());
  if (cfg.rule_len > p) throw ConfigError("rule_len must not exceed population");

  for (auto& ind : pop) ind.reset_stats();

  const auto memberships = draw_rule_memberships(cfg.rules_per_gen, cfg.rule_len, p, rng);
  std::vector<RuleEvaluation> evals(cfg.rules_per_gen);
  parallel_for(cfg.rules_per_gen, cfg.threads, [&](int r) {
    UniversalRule rule;
    rule.budget = cfg.budget;
    rule.procs.reserve(cfg.rule_len);
    for (const int idx : memberships[r]) rule.procs.push_back(pop[idx].proc);
    evals[r] = evaluate_rule(rule, eval_set, victim);
  });

  const auto sample_count = static_cast<std::uint64_t>(eval_set.size());
  for (int r = 0; r < cfg.rules_per_gen; ++r) {
    const auto& ev = evals[r];
    for (int j = 0; j < cfg.rule_len; ++j) {
      auto& ind = pop[memberships[r][j]];
      ind.n_evals += sample_count;
      ind.success_count += ev.success_total;
      ind.fire_count += ev.fire_per_proc[j];
    }
  }

  GenerationStats st;
  st.generation = generation;
  int best_r = 0;
  double sum = 0.0;
  for (int r = 0; r < cfg.rules_per_gen; ++r) {
    sum += evals[r].misclass_rate;
    if (evals[r].misclass_rate > evals[best_r].misclass_rate) best_r = r;
  }
  st.mean_rate = sum / static_cast<double>(cfg.rules_per_gen);
  st.best_rate = evals[best_r].misclass_rate;
  st.best = std::move(evals[best_r]);
  return st;
}

// Ascending "badness" order for one fitness ranking. Unevaluated individuals
// rank below all evaluated ones; ties break toward lower birth_generation,
// then lower index, so stale randomness is replaced first and the order is a
// deterministic total order.
template <typename FitnessFn>
inline std::vector<int> rank_worst_first(const Population& pop, FitnessFn&& fitness) {
  std::vector<int> idx(pop.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int x, int y) {
    const auto fx = fitness(pop[x]);
    const auto fy = fitness(pop[y]);
    if (fx.has_value() != fy.has_value()) return !fx.has_value();
    if (fx.has_value() && *fx != *fy) return *fx < *fy;
    if (pop[x].birth_generation != pop[y].birth_generation) {
      return pop[x].birth_generation < pop[y].birth_generation;
    }
    return x < y;
  });
  return idx;
}

}  // namespace detail

// One CAURO generation: evaluate, rank by both fitnesses, and replace the
// union of the two bottom replace_frac slices with fresh random individuals.
inline GenerationStats cauro_generation(Population& pop,
                                        const std::vector<LabeledSample>& eval_set,
                                        const VictimModel& victim, const OptimizerConfig& cfg,
                                        Rng& rng, int generation) {
  GenerationStats st = detail::evaluate_generation(pop, eval_set, victim, cfg, rng, generation);

  const int p = static_cast<int>(pop.size());
  const int bottom = static_cast<int>(std::ceil(cfg.replace_frac * static_cast<double>(p)));
  const auto by_accuracy = detail::rank_worst_first(pop, accuracy_fitness);
  const auto by_utility = detail::rank_worst_first(pop, utility_fitness);
  std::vector<char> replace(p, 0);
  for (int i = 0; i < bottom; ++i) {
    replace[by_accuracy[i]] = 1;
    replace[by_utility[i]] = 1;
  }
  for (int i = 0; i < p; ++i) {
    if (!replace[i]) continue;
    Individual fresh;
    fresh.proc = random_proc(rng);
    fresh.birth_generation = generation;
    pop[i] = fresh;
  }
  return st;
}

// One RS generation: evaluate exactly like CAURO, then rebuild the whole
// population with the differential mixing operator. No fitness-based
// selection; the caller tracks the best rule seen so far.
inline GenerationStats rs_generation(Population& pop, const std::vector<LabeledSample>& eval_set,
                                     const VictimModel& victim, const OptimizerConfig& cfg,
                                     Rng& rng, int generation) {
  GenerationStats st = detail::evaluate_generation(pop, eval_set, victim, cfg, rng, generation);

  const int p = static_cast<int>(pop.size());
  Population next;
  next.reserve(p);
  for (int slot = 0; slot < p; ++slot) {
    const int a = rng.below_int(p);
    int b;
    do {
      b = rng.below_int(p);
    } while (b == a);
    int c;
    do {
      c = rng.below_int(p);
    } while (c == a || c == b);
    Individual child;
    child.proc = mix_procs(pop[a].proc, pop[b].proc, pop[c].proc, rng);
    child.birth_generation = generation;
    next.push_back(child);
  }
  pop = std::move(next);
  return st;
}

struct GenerationRecord {
  int generation = 0;
  double best_rate = 0.0;
  double mean_rate = 0.0;
  double best_so_far = 0.0;
  double frac_modified = 0.0;  // of this generation's best rule
  double frac_capped = 0.0;
};

struct RunHistory {
  std::vector<GenerationRecord> records;
  UniversalRule best_rule;   // global best across all generations
  RuleEvaluation best_eval;  // its evaluation on the frozen subset
  double best_rate = 0.0;
};

using ProgressSink = std::function<void(const GenerationRecord&)>;

// Executes G generations of the configured optimizer against a frozen
// evaluation set. Fully deterministic under a fixed config seed.
inline RunHistory run_optimizer(const OptimizerConfig& cfg,
                                const std::vector<LabeledSample>& eval_set,
                                const VictimModel& victim, const ProgressSink& sink = {}) {
  validate_config(cfg);
  if (eval_set.empty()) throw ConfigError("evaluation set is empty");
  Rng rng(cfg.seed);
  Population pop = make_population(cfg.population, 0, rng);

  RunHistory hist;
  hist.records.reserve(cfg.generations);
  bool have_best = false;
  for (int g = 1; g <= cfg.generations; ++g) {
    GenerationStats st = cfg.algo == OptimizerConfig::Algo::CAURO
                             ? cauro_generation(pop, eval_set, victim, cfg, rng, g)
                             : rs_generation(pop, eval_set, victim, cfg, rng, g);
    if (static_cast<int>(pop.size()) != cfg.population) {
      throw InternalError("population size changed across a generation");
    }
    GenerationRecord rec;
    rec.generation = g;
    rec.best_rate = st.best_rate;
    rec.mean_rate = st.mean_rate;
    rec.frac_modified = st.best.frac_modified;
    rec.frac_capped = st.best.frac_capped;
    if (!have_best || st.best_rate > hist.best_rate) {
      hist.best_rate = st.best_rate;
      hist.best_rule = st.best.rule;
      hist.best_eval = std::move(st.best);
      have_best = true;
    }
    rec.best_so_far = hist.best_rate;
    hist.records.push_back(rec);
    if (sink) sink(rec);
  }
  return hist;
}

// History CSV, the plotting contract: one row per generation, rates with six
// decimal digits.
inline std::string history_to_csv(const RunHistory& hist) {
  std::string out = "generation,best_rate,mean_rate,best_so_far,frac_modified,frac_capped\n";
  char buf[160];
  for (const auto& r : hist.records) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.generation, r.best_rate,
                  r.mean_rate, r.best_so_far, r.frac_modified, r.frac_capped);
    out += buf;
  }
  return out;
}

}  // namespace unirule
