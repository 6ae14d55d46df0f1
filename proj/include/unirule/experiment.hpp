#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <json.hpp>

#include "unirule/dataset.hpp"
#include "unirule/errors.hpp"
#include "unirule/evolve.hpp"
#include "unirule/perturb.hpp"
#include "unirule/rng.hpp"
#include "unirule/victim.hpp"

namespace unirule {

// Everything one experiment needs: where the data lives, which victim to
// attack, optimizer settings, seeds, and where artifacts go. Built from a
// flat key=value config file, then overridden by CLI flags.
struct ExperimentSpec {
  std::string pos_path;  // polarity layout: one file per class
  std::string neg_path;
  std::string tsv_path;  // alternative layout: "label\ttext" lines
  std::string victim_kind = "char_ngram_linear";
  std::string victim_file;  // pretrained model; skips per-seed training
  double split_fraction = 0.9;
  std::vector<std::uint64_t> seeds = {1};
  std::string outdir = "runs";
  OptimizerConfig opt;
};

namespace detail {

inline std::string_view trim_view(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline long long parse_int(std::string_view key, std::string_view value) {
  long long out = 0;
  const auto* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("config: " + std::string(key) + " expects an integer, got '" +
                      std::string(value) + "'");
  }
  return out;
}

inline double parse_double(std::string_view key, std::string_view value) {
  const std::string buf(value);
  char* end = nullptr;
  const double out = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size() || buf.empty()) {
    throw ConfigError("config: " + std::string(key) + " expects a number, got '" + buf + "'");
  }
  return out;
}

inline std::vector<std::uint64_t> parse_seed_list(std::string_view value) {
  std::vector<std::uint64_t> seeds;
  std::size_t start = 0;
  while (start <= value.size()) {
    std::size_t comma = value.find(',', start);
    if (comma == std::string_view::npos) comma = value.size();
    const auto item = trim_view(value.substr(start, comma - start));
    if (item.empty()) throw ConfigError("config: empty entry in seed list");
    std::uint64_t s = 0;
    const auto* end = item.data() + item.size();
    const auto res = std::from_chars(item.data(), end, s);
    if (res.ec != std::errc() || res.ptr != end) {
      throw ConfigError("config: bad seed '" + std::string(item) + "'");
    }
    seeds.push_back(s);
    if (comma == value.size()) break;
    start = comma + 1;
  }
  if (seeds.empty()) throw ConfigError("config: seed list is empty");
  return seeds;
}

}  // namespace detail

inline OptimizerConfig::Algo parse_algo(std::string_view value) {
  if (value == "rs") return OptimizerConfig::Algo::RS;
  if (value == "cauro") return OptimizerConfig::Algo::CAURO;
  throw ConfigError("config: algo must be 'rs' or 'cauro', got '" + std::string(value) + "'");
}

// Applies one key=value setting. Shared by the config-file parser and the
// CLI override path so both accept the same vocabulary; unknown keys are
// hard errors.
inline void apply_spec_setting(ExperimentSpec& spec, std::string_view key,
                               std::string_view value) {
  if (key == "data_pos") {
    spec.pos_path = std::string(value);
  } else if (key == "data_neg") {
    spec.neg_path = std::string(value);
  } else if (key == "data_tsv") {
    spec.tsv_path = std::string(value);
  } else if (key == "victim") {
    if (value != "char_ngram_linear" && value != "word_avg_mlp") {
      throw ConfigError("config: victim must be 'char_ngram_linear' or 'word_avg_mlp'");
    }
    spec.victim_kind = std::string(value);
  } else if (key == "victim_file") {
    spec.victim_file = std::string(value);
  } else if (key == "split_fraction") {
    spec.split_fraction = detail::parse_double(key, value);
  } else if (key == "seeds") {
    spec.seeds = detail::parse_seed_list(value);
  } else if (key == "outdir") {
    spec.outdir = std::string(value);
  } else if (key == "algo") {
    spec.opt.algo = parse_algo(value);
  } else if (key == "population") {
    spec.opt.population = static_cast<int>(detail::parse_int(key, value));
  } else if (key == "rules_per_gen") {
    spec.opt.rules_per_gen = static_cast<int>(detail::parse_int(key, value));
  } else if (key == "rule_len") {
    spec.opt.rule_len = static_cast<int>(detail::parse_int(key, value));
  } else if (key == "generations") {
    spec.opt.generations = static_cast<int>(detail::parse_int(key, value));
  } else if (key == "budget") {
    spec.opt.budget = static_cast<int>(detail::parse_int(key, value));
  } else if (key == "replace_frac") {
    spec.opt.replace_frac = detail::parse_double(key, value);
  } else if (key == "eval_subset") {
    spec.opt.eval_subset = static_cast<int>(detail::parse_int(key, value));
  } else if (key == "threads") {
    spec.opt.threads = static_cast<int>(detail::parse_int(key, value));
  } else {
    throw ConfigError("config: unknown key '" + std::string(key) + "'");
  }
}

// Flat key=value file; blank lines and #-comments skipped.
inline void load_spec_file(ExperimentSpec& spec, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto stripped = detail::trim_view(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config: " + path + ":" + std::to_string(line_no) +
                        ": expected key=value");
    }
    const auto key = detail::trim_view(stripped.substr(0, eq));
    const auto value = detail::trim_view(stripped.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config: " + path + ":" + std::to_string(line_no) + ": empty key");
    }
    apply_spec_setting(spec, key, value);
  }
}

inline void validate_spec(const ExperimentSpec& spec) {
  const bool polarity = !spec.pos_path.empty() || !spec.neg_path.empty();
  const bool tsv = !spec.tsv_path.empty();
  if (polarity && tsv) throw ConfigError("config: give either data_pos/data_neg or data_tsv");
  if (polarity && (spec.pos_path.empty() || spec.neg_path.empty())) {
    throw ConfigError("config: data_pos and data_neg must be given together");
  }
  if (!polarity && !tsv) throw ConfigError("config: no dataset given");
  if (!(spec.split_fraction > 0.0 && spec.split_fraction < 1.0)) {
    throw ConfigError("config: split_fraction must be in (0, 1)");
  }
  if (spec.seeds.empty()) throw ConfigError("config: at least one seed required");
  validate_config(spec.opt);
}

inline std::vector<LabeledSample> load_dataset(const ExperimentSpec& spec,
                                               LoadStats* stats = nullptr) {
  if (!spec.tsv_path.empty()) return load_tsv(spec.tsv_path, stats);
  return load_polarity_files(spec.pos_path, spec.neg_path, stats);
}

// Atomic file write: the final path either holds the complete new content or
// whatever was there before, never a torn file.
inline void atomic_write_file(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw DataError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return content;
}

inline std::unique_ptr<VictimModel> train_victim(std::string_view kind,
                                                 const std::vector<LabeledSample>& train,
                                                 std::uint64_t seed) {
  if (kind == "char_ngram_linear") {
    return std::make_unique<CharNGramLinear>(CharNGramLinear::train(train, seed));
  }
  if (kind == "word_avg_mlp") {
    return std::make_unique<WordAvgMLP>(WordAvgMLP::train(train, seed));
  }
  throw ConfigError("unknown victim kind '" + std::string(kind) + "'");
}

inline std::unique_ptr<VictimModel> load_victim_file(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model file " + path + ": " + e.what());
  }
  return victim_from_json(j);
}

inline double accuracy(const VictimModel& victim, const std::vector<LabeledSample>& samples) {
  if (samples.empty()) throw ConfigError("accuracy over an empty sample set");
  std::size_t hits = 0;
  for (const auto& s : samples) {
    if (victim.predict(s.text).label == s.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

// Per-seed working state shared by every optimizer run under that seed: one
// victim, one frozen evaluation subset.
struct SeedContext {
  std::uint64_t seed = 0;
  std::unique_ptr<VictimModel> victim;
  std::vector<LabeledSample> eval_set;
  double victim_accuracy = 0.0;
  std::size_t held_out_size = 0;
};

// Splits, trains (or loads) the victim, and freezes the evaluation subset:
// held-out samples the victim classifies correctly, capped at
// opt.eval_subset by a seeded draw that preserves held-out order.
inline SeedContext prepare_seed(const ExperimentSpec& spec,
                                const std::vector<LabeledSample>& samples, std::uint64_t seed) {
  SeedContext ctx;
  ctx.seed = seed;
  auto [train, held_out] =
      split_samples(samples, spec.split_fraction, derive_seed(seed, "split"));
  ctx.held_out_size = held_out.size();
  if (!spec.victim_file.empty()) {
    ctx.victim = load_victim_file(spec.victim_file);
  } else {
    ctx.victim = train_victim(spec.victim_kind, train, seed);
  }
  ctx.victim_accuracy = accuracy(*ctx.victim, held_out);

  std::vector<LabeledSample> pool;
  for (const auto& s : held_out) {
    if (ctx.victim->predict(s.text).label == s.label) pool.push_back(s);
  }
  if (pool.empty()) throw DataError("victim classifies no held-out sample correctly");
  const auto cap = static_cast<std::size_t>(spec.opt.eval_subset);
  if (pool.size() <= cap) {
    ctx.eval_set = std::move(pool);
    return ctx;
  }
  Rng rng(derive_seed(seed, "eval-subset"));
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t j = 0; j < cap; ++j) {
    std::swap(idx[j], idx[j + rng.below(idx.size() - j)]);
  }
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  ctx.eval_set.reserve(cap);
  for (const auto i : idx) ctx.eval_set.push_back(std::move(pool[i]));
  return ctx;
}

inline std::string rule_id_hex(const UniversalRule& rule) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(rule_content_id(rule)));
  return std::string(buf);
}

inline std::string format_prediction(const Prediction& p) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%d:%.6f", p.label, p.confidence);
  return std::string(buf);
}

// TSV dump of the run's best rule in action: one row per evaluation sample
// whose prediction flipped. Every row replays exactly under apply_rule and
// predict.
inline std::string adversarial_tsv(const UniversalRule& rule, const RuleEvaluation& eval,
                                   const std::vector<LabeledSample>& eval_set,
                                   const VictimModel& victim) {
  if (eval.per_sample.size() != eval_set.size()) {
    throw InternalError("evaluation does not match the evaluation set");
  }
  std::string out =
      "original\tperturbed\toriginal_pred\tperturbed_pred\tperturb_count\trule_id\n";
  const std::string id = rule_id_hex(rule);
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    const auto& outcome = eval.per_sample[i];
    if (!outcome.attack_success) continue;
    const auto& s = eval_set[i];
    const ApplyResult ar = apply_rule(rule, s.text);
    out += s.text;
    out += '\t';
    out += ar.perturbed_text;
    out += '\t';
    out += format_prediction(victim.predict(s.text));
    out += '\t';
    out += format_prediction(victim.predict(ar.perturbed_text));
    out += '\t';
    out += std::to_string(ar.perturb_count);
    out += '\t';
    out += id;
    out += '\n';
  }
  return out;
}

// Result of one (optimizer, seed) run, reduced to what the summary reports.
struct RunOutcome {
  OptimizerConfig::Algo algo = OptimizerConfig::Algo::CAURO;
  std::uint64_t seed = 0;
  double final_best_rate = 0.0;
  double frac_modified = 0.0;  // of the run's best rule
  double frac_capped = 0.0;
  std::string rule_id;
  double victim_accuracy = 0.0;
  std::size_t eval_set_size = 0;
};

// Rounds through the same "%.6f" text the CSVs carry, so summary values are
// exactly what a reader of the CSV reconstructs.
inline double round6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return std::strtod(buf, nullptr);
}

namespace detail {

// Summary JSON built from per-run outcomes. All rates round to six decimals
// so the file equals its own recomputation from the history CSVs.
inline nlohmann::json summary_json(const std::vector<RunOutcome>& outcomes) {
  std::map<std::string, std::vector<const RunOutcome*>> by_algo;
  for (const auto& o : outcomes) by_algo[algo_name(o.algo)].push_back(&o);
  nlohmann::json optimizers = nlohmann::json::object();
  for (auto& [name, runs] : by_algo) {
    std::sort(runs.begin(), runs.end(),
              [](const RunOutcome* a, const RunOutcome* b) { return a->seed < b->seed; });
    nlohmann::json per_seed = nlohmann::json::array();
    double sum = 0.0, lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const double rate = round6(runs[i]->final_best_rate);
      sum += rate;
      lo = i == 0 ? rate : std::min(lo, rate);
      hi = i == 0 ? rate : std::max(hi, rate);
      per_seed.push_back({{"seed", runs[i]->seed},
                          {"final_best_rate", rate},
                          {"frac_modified", round6(runs[i]->frac_modified)},
                          {"frac_capped", round6(runs[i]->frac_capped)},
                          {"rule_id", runs[i]->rule_id}});
    }
    optimizers[name] = {{"per_seed", per_seed},
                        {"final_best_rate",
                         {{"mean", round6(sum / static_cast<double>(runs.size()))},
                          {"min", lo},
                          {"max", hi}}}};
  }
  return nlohmann::json{
      {"format", "unirule-summary"}, {"version", 1}, {"optimizers", optimizers}};
}

}  // namespace detail

inline void write_summary(const std::string& outdir, const std::vector<RunOutcome>& outcomes) {
  atomic_write_file(std::filesystem::path(outdir) / "summary.json",
                    detail::summary_json(outcomes).dump(2) + "\n");
}

// Runs the configured optimizers for every seed and writes all artifacts.
// In comparison mode the victim is trained once per seed and shared, so
// optimizer differences are the only difference between the runs.
inline std::vector<RunOutcome> run_experiment(const ExperimentSpec& spec,
                                              const std::vector<OptimizerConfig::Algo>& algos,
                                              std::ostream* log = nullptr,
                                              bool per_generation_log = false) {
  validate_spec(spec);
  LoadStats stats;
  const auto samples = load_dataset(spec, &stats);
  if (log && stats.dropped_empty > 0) {
    *log << "note: dropped " << stats.dropped_empty << " empty line(s) from the dataset\n";
  }
  std::vector<RunOutcome> outcomes;
  for (const auto seed : spec.seeds) {
    const SeedContext ctx = prepare_seed(spec, samples, seed);
    if (log) {
      *log << "seed " << seed << ": victim " << ctx.victim->kind() << " accuracy "
           << round6(ctx.victim_accuracy) << " on " << ctx.held_out_size
           << " held-out samples; evaluation set " << ctx.eval_set.size() << "\n";
    }
    for (const auto algo : algos) {
      OptimizerConfig cfg = spec.opt;
      cfg.algo = algo;
      cfg.seed = derive_seed(seed, algo_name(algo));
      ProgressSink sink;
      if (log && per_generation_log) {
        sink = [&](const GenerationRecord& r) {
          char line[160];
          std::snprintf(line, sizeof(line),
                        "%s seed %llu gen %d best %.6f mean %.6f best-so-far %.6f\n",
                        algo_name(algo), static_cast<unsigned long long>(seed), r.generation,
                        r.best_rate, r.mean_rate, r.best_so_far);
          *log << line;
        };
      }
      const RunHistory hist = run_optimizer(cfg, ctx.eval_set, *ctx.victim, sink);

      namespace fs = std::filesystem;
      const fs::path run_dir =
          fs::path(spec.outdir) / algo_name(algo) / std::to_string(seed);
      atomic_write_file(run_dir / "history.csv", history_to_csv(hist));
      atomic_write_file(run_dir / "best_rule.json", rule_to_canonical_json(hist.best_rule));
      atomic_write_file(run_dir / "adversarial.tsv",
                        adversarial_tsv(hist.best_rule, hist.best_eval, ctx.eval_set,
                                        *ctx.victim));

      RunOutcome out;
      out.algo = algo;
      out.seed = seed;
      out.final_best_rate = hist.best_rate;
      out.frac_modified = hist.best_eval.frac_modified;
      out.frac_capped = hist.best_eval.frac_capped;
      out.rule_id = rule_id_hex(hist.best_rule);
      out.victim_accuracy = ctx.victim_accuracy;
      out.eval_set_size = ctx.eval_set.size();
      outcomes.push_back(std::move(out));
      if (log) {
        *log << algo_name(algo) << " seed " << seed << ": final best rate "
             << round6(outcomes.back().final_best_rate) << ", modified "
             << round6(outcomes.back().frac_modified) << ", capped "
             << round6(outcomes.back().frac_capped) << "\n";
      }
    }
  }
  write_summary(spec.outdir, outcomes);
  return outcomes;
}

// One parsed history CSV, the plotting contract read back.
struct HistoryFile {
  std::vector<GenerationRecord> records;
};

inline HistoryFile parse_history_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  if (line == "generation,best_rate,mean_rate,best_so_far,frac_modified,frac_capped\r") {
    line.pop_back();
  }
  if (line != "generation,best_rate,mean_rate,best_so_far,frac_modified,frac_capped") {
    throw DataError(path + ":1: unexpected header");
  }
  HistoryFile hist;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    GenerationRecord rec;
    double cols[6];
    int n = 0;
    std::size_t start = 0;
    while (n < 6 && start <= line.size()) {
      std::size_t comma = line.find(',', start);
      if (comma == std::string_view::npos) comma = line.size();
      cols[n++] = detail::parse_double("history column", line.substr(start, comma - start));
      start = comma + 1;
    }
    if (n != 6 || start <= line.size()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected 6 columns");
    }
    rec.generation = static_cast<int>(cols[0]);
    rec.best_rate = cols[1];
    rec.mean_rate = cols[2];
    rec.best_so_far = cols[3];
    rec.frac_modified = cols[4];
    rec.frac_capped = cols[5];
    hist.records.push_back(rec);
  }
  if (hist.records.empty()) throw DataError(path + ": no data rows");
  return hist;
}

// Rebuilds a RunOutcome from a run directory's artifacts alone. The best
// rule's modification stats come from the first row that reaches the final
// best-so-far rate: that is the generation whose best rule became the global
// best.
inline RunOutcome outcome_from_artifacts(const std::filesystem::path& run_dir,
                                         OptimizerConfig::Algo algo, std::uint64_t seed) {
  const HistoryFile hist = parse_history_csv((run_dir / "history.csv").string());
  RunOutcome out;
  out.algo = algo;
  out.seed = seed;
  out.final_best_rate = hist.records.back().best_so_far;
  for (const auto& rec : hist.records) {
    if (rec.best_so_far == out.final_best_rate) {
      out.frac_modified = rec.frac_modified;
      out.frac_capped = rec.frac_capped;
      break;
    }
  }
  out.rule_id = rule_id_hex(parse_rule(read_text_file((run_dir / "best_rule.json").string())));
  return out;
}

// Re-renders summary.json from the artifacts under outdir and returns the
// outcomes. With matching runs present this reproduces the run-time summary
// byte for byte.
inline std::vector<RunOutcome> rebuild_summary(const std::string& outdir,
                                               std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  std::vector<RunOutcome> outcomes;
  for (const auto algo : {OptimizerConfig::Algo::CAURO, OptimizerConfig::Algo::RS}) {
    const fs::path algo_dir = fs::path(outdir) / algo_name(algo);
    if (!fs::is_directory(algo_dir)) continue;
    std::vector<std::uint64_t> seeds;
    for (const auto& entry : fs::directory_iterator(algo_dir)) {
      if (!entry.is_directory()) continue;
      const std::string name = entry.path().filename().string();
      std::uint64_t seed = 0;
      const auto* end = name.data() + name.size();
      const auto res = std::from_chars(name.data(), end, seed);
      if (res.ec != std::errc() || res.ptr != end) continue;
      seeds.push_back(seed);
    }
    std::sort(seeds.begin(), seeds.end());
    for (const auto seed : seeds) {
      outcomes.push_back(
          outcome_from_artifacts(algo_dir / std::to_string(seed), algo, seed));
    }
  }
  if (outcomes.empty()) throw DataError("no run artifacts under " + outdir);
  write_summary(outdir, outcomes);
  if (log) {
    *log << "optimizer  seed  final_best_rate  frac_modified  frac_capped\n";
    char line[160];
    for (const auto& o : outcomes) {
      std::snprintf(line, sizeof(line), "%-9s  %4llu  %15.6f  %13.6f  %11.6f\n",
                    algo_name(o.algo), static_cast<unsigned long long>(o.seed),
                    o.final_best_rate, o.frac_modified, o.frac_capped);
      *log << line;
    }
  }
  return outcomes;
}

}  // namespace unirule
