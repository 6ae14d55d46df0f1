#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "unirule/errors.hpp"
#include "unirule/rng.hpp"

namespace unirule {

enum class ProcKind : std::uint8_t { Swap, Delete, Insert };

inline const char* proc_kind_name(ProcKind k) {
  switch (k) {
    case ProcKind::Swap:
      return "swap";
    case ProcKind::Delete:
      return "delete";
    case ProcKind::Insert:
      return "insert";
  }
  return "?";
}

// One perturbation procedure. It matches the first place where match_a is
// immediately followed by match_b inside a single token, then either swaps
// the pair, deletes the second letter, or inserts insert_c after the pair.
struct PerturbProc {
  ProcKind kind = ProcKind::Swap;
  char match_a = 'a';
  char match_b = 'b';
  char insert_c = 0;  // set only when kind == Insert

  friend bool operator==(const PerturbProc&, const PerturbProc&) = default;
};

// The deployable attack artifact: an ordered procedure sequence plus the cap
// on how many procedures may fire against one sample.
struct UniversalRule {
  std::vector<PerturbProc> procs;
  int budget = 5;
};

struct MatchPos {
  std::size_t token = 0;   // 0-based token index
  std::size_t offset = 0;  // offset of match_a within that token
  std::size_t abs = 0;     // absolute offset of match_a in the text
};

struct ApplyResult {
  std::string perturbed_text;
  int perturb_count = 0;
  std::vector<bool> applied_mask;  // per procedure, in rule order
};

// First match in scan order: leftmost token, then leftmost offset. match_b is
// a letter, so text[i + 1] == match_b already pins both characters to the same
// token. Neither generation nor parsing produces a Swap with equal letters;
// the guard keeps the function total on hand-built structs.
inline std::optional<MatchPos> find_match(const PerturbProc& proc, std::string_view text) {
  if (proc.kind == ProcKind::Swap && proc.match_a == proc.match_b) return std::nullopt;
  std::size_t token = 0;
  std::size_t token_start = 0;
  bool seen_token = false;
  bool in_token = false;
  for (std::size_t i = 0; i + 1 < text.size(); ++i) {
    if (text[i] == ' ') {
      in_token = false;
      continue;
    }
    if (!in_token) {
      in_token = true;
      token_start = i;
      if (seen_token) ++token;
      seen_token = true;
    }
    if (text[i] == proc.match_a && text[i + 1] == proc.match_b) {
      return MatchPos{token, i - token_start, i};
    }
  }
  return std::nullopt;
}

// Applies proc at its first match, mutating text in place. True iff it fired.
inline bool apply_proc_inplace(const PerturbProc& proc, std::string& text) {
  const auto m = find_match(proc, text);
  if (!m) return false;
  const std::size_t i = m->abs;
  switch (proc.kind) {
    case ProcKind::Swap:
      std::swap(text[i], text[i + 1]);
      break;
    case ProcKind::Delete:
      text.erase(i + 1, 1);
      break;
    case ProcKind::Insert:
      text.insert(i + 2, 1, proc.insert_c);
      break;
  }
  return true;
}

inline std::optional<std::string> apply_proc(const PerturbProc& proc, std::string_view text) {
  std::string out(text);
  if (!apply_proc_inplace(proc, out)) return std::nullopt;
  return out;
}

// Runs the procedures in order against the progressively perturbed text.
// Each procedure fires at most once, non-matching procedures are skipped, and
// the walk ends once `budget` perturbations have fired. Pure function of
// (rule, text).
inline ApplyResult apply_rule(const UniversalRule& rule, std::string_view text) {
  ApplyResult res;
  res.perturbed_text.assign(text);
  res.applied_mask.assign(rule.procs.size(), false);
  for (std::size_t j = 0; j < rule.procs.size(); ++j) {
    if (res.perturb_count >= rule.budget) break;
    if (apply_proc_inplace(rule.procs[j], res.perturbed_text)) {
      res.applied_mask[j] = true;
      ++res.perturb_count;
    }
  }
  return res;
}

// --- serialization ----------------------------------------------------------

inline nlohmann::json proc_to_json(const PerturbProc& p) {
  nlohmann::json j{{"kind", proc_kind_name(p.kind)},
                   {"a", std::string(1, p.match_a)},
                   {"b", std::string(1, p.match_b)}};
  if (p.kind == ProcKind::Insert) j["c"] = std::string(1, p.insert_c);
  return j;
}

inline nlohmann::json rule_to_json(const UniversalRule& r) {
  nlohmann::json procs = nlohmann::json::array();
  for (const auto& p : r.procs) procs.push_back(proc_to_json(p));
  return nlohmann::json{{"budget", r.budget}, {"procs", std::move(procs)}};
}

// Canonical text form: sorted keys, two-space indent, trailing newline.
// Serialize/parse round trips are byte-stable on this form.
inline std::string rule_to_canonical_json(const UniversalRule& r) {
  return rule_to_json(r).dump(2) + "\n";
}

// Stable content id of a rule, reported in adversarial dumps.
inline std::uint64_t rule_content_id(const UniversalRule& r) {
  return fnv1a64(rule_to_canonical_json(r));
}

namespace detail {

inline char parse_rule_letter(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw DataError(std::string("rule schema: procedure is missing letter '") + key + "'");
  }
  const auto s = j.at(key).get<std::string>();
  if (s.size() != 1 || s[0] < 'a' || s[0] > 'z') {
    throw DataError(std::string("rule schema: letter '") + key + "' must be a single a-z character, got \"" + s + "\"");
  }
  return s[0];
}

}  // namespace detail

inline PerturbProc proc_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("rule schema: procedure must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "kind" && key != "a" && key != "b" && key != "c") {
      throw DataError("rule schema: unknown procedure key '" + key + "'");
    }
  }
  if (!j.contains("kind") || !j.at("kind").is_string()) {
    throw DataError("rule schema: procedure needs a string 'kind'");
  }
  const auto kind = j.at("kind").get<std::string>();
  PerturbProc p;
  if (kind == "swap") {
    p.kind = ProcKind::Swap;
  } else if (kind == "delete") {
    p.kind = ProcKind::Delete;
  } else if (kind == "insert") {
    p.kind = ProcKind::Insert;
  } else {
    throw DataError("rule schema: unknown kind '" + kind + "'");
  }
  p.match_a = detail::parse_rule_letter(j, "a");
  p.match_b = detail::parse_rule_letter(j, "b");
  if (p.kind == ProcKind::Swap && p.match_a == p.match_b) {
    throw DataError("rule schema: swap letters must differ");
  }
  if (p.kind == ProcKind::Insert) {
    p.insert_c = detail::parse_rule_letter(j, "c");
  } else if (j.contains("c")) {
    throw DataError("rule schema: 'c' is only valid for insert procedures");
  }
  return p;
}

inline UniversalRule rule_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("rule schema: top level must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "budget" && key != "procs") {
      throw DataError("rule schema: unknown key '" + key + "'");
    }
  }
  if (!j.contains("budget") || !j.at("budget").is_number_integer()) {
    throw DataError("rule schema: integer 'budget' is required");
  }
  if (!j.contains("procs") || !j.at("procs").is_array() || j.at("procs").empty()) {
    throw DataError("rule schema: non-empty 'procs' array is required");
  }
  UniversalRule r;
  r.budget = j.at("budget").get<int>();
  if (r.budget < 1) throw DataError("rule schema: budget must be >= 1");
  for (const auto& pj : j.at("procs")) r.procs.push_back(proc_from_json(pj));
  return r;
}

inline UniversalRule parse_rule(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("rule schema: not valid JSON: ") + e.what());
  }
  return rule_from_json(j);
}

}  // namespace unirule
