// Randomized invariant checks for the rule-application engine, shared by the
// unit tests and the acceptance gate. Assertion-framework-free: failures come
// back as printable descriptions.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "unirule/perturb.hpp"

namespace property {

struct Result {
  int cases = 0;
  std::vector<std::string> failures;
};

namespace detail {

inline std::string describe(const unirule::UniversalRule& rule, const std::string& text,
                            const std::string& what) {
  return what + " | text '" + text + "' | rule " + unirule::rule_to_json(rule).dump();
}

}  // namespace detail

// Runs n_cases random (rule, text) pairs through apply_rule and checks, per
// case: budget cap, mask/count agreement, determinism, identity on no-match,
// token-count preservation, the Damerau-Levenshtein bound, agreement of every
// procedure's match with the brute-force enumerator, and full agreement with
// the independent re-simulation.
inline Result run_perturb_properties(int n_cases, std::uint64_t seed,
                                     std::size_t max_failures = 8) {
  oracle::CaseGen gen(seed);
  Result res;
  for (int i = 0; i < n_cases && res.failures.size() < max_failures; ++i) {
    ++res.cases;
    const std::string text = gen.random_text();
    const unirule::UniversalRule rule = gen.random_rule(text);
    const auto fail = [&](const std::string& what) {
      res.failures.push_back(detail::describe(rule, text, what));
    };

    const unirule::ApplyResult out = unirule::apply_rule(rule, text);

    if (out.perturb_count < 0 || out.perturb_count > rule.budget) {
      fail("perturb_count " + std::to_string(out.perturb_count) + " breaks budget " +
           std::to_string(rule.budget));
      continue;
    }
    if (out.applied_mask.size() != rule.procs.size()) {
      fail("applied_mask size mismatch");
      continue;
    }
    int fired = 0;
    for (const bool b : out.applied_mask) fired += b ? 1 : 0;
    if (fired != out.perturb_count) {
      fail("mask count " + std::to_string(fired) + " != perturb_count " +
           std::to_string(out.perturb_count));
      continue;
    }

    const unirule::ApplyResult again = unirule::apply_rule(rule, text);
    if (again.perturbed_text != out.perturbed_text || again.perturb_count != out.perturb_count ||
        again.applied_mask != out.applied_mask) {
      fail("apply_rule is not deterministic");
      continue;
    }

    if (out.perturb_count == 0 && out.perturbed_text != text) {
      fail("text changed although no procedure fired");
      continue;
    }

    if (oracle::split_tokens(out.perturbed_text).size() != oracle::split_tokens(text).size()) {
      fail("token count changed: '" + out.perturbed_text + "'");
      continue;
    }

    const std::size_t dist = oracle::damerau_levenshtein(text, out.perturbed_text);
    if (dist > static_cast<std::size_t>(out.perturb_count)) {
      fail("edit distance " + std::to_string(dist) + " exceeds perturb_count " +
           std::to_string(out.perturb_count) + " ('" + out.perturbed_text + "')");
      continue;
    }

    bool match_ok = true;
    for (const auto& proc : rule.procs) {
      const auto got = unirule::find_match(proc, text);
      const auto want = oracle::first_match(proc, text);
      if (got.has_value() != want.has_value()) {
        match_ok = false;
      } else if (got && (got->token != want->token || got->offset != want->offset ||
                         got->abs != want->abs)) {
        match_ok = false;
      }
      if (!match_ok) {
        fail("find_match disagrees with brute-force enumerator for " +
             unirule::proc_to_json(proc).dump());
        break;
      }
    }
    if (!match_ok) continue;

    const oracle::SimResult sim = oracle::simulate_rule(rule, text);
    if (sim.text != out.perturbed_text || sim.count != out.perturb_count ||
        sim.mask != out.applied_mask) {
      fail("progressive application disagrees with re-simulation: got '" + out.perturbed_text +
           "', want '" + sim.text + "'");
      continue;
    }
  }
  return res;
}

}  // namespace property
