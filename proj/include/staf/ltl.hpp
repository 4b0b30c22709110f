#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "staf/judge.hpp"
#include "staf/mealy.hpp"

namespace staf {

enum class LtlOp {
  atom,
  constant,
  negation,
  conjunction,
  disjunction,
  implication,
  globally,
  eventually,
  next,
  until,
};

struct LtlFormula {
  LtlOp op = LtlOp::constant;
  std::string atom_name;              // op == atom
  bool value = false;                 // op == constant
  std::vector<LtlFormula> children;   // 1 for unary ops, 2 for binary ops

  bool operator==(const LtlFormula&) const = default;
};

LtlFormula ltl_atom(std::string name);
LtlFormula ltl_const(bool value);
LtlFormula ltl_not(LtlFormula f);
LtlFormula ltl_and(LtlFormula a, LtlFormula b);
LtlFormula ltl_or(LtlFormula a, LtlFormula b);
LtlFormula ltl_implies(LtlFormula a, LtlFormula b);
LtlFormula ltl_globally(LtlFormula f);
LtlFormula ltl_eventually(LtlFormula f);
LtlFormula ltl_next(LtlFormula f);
LtlFormula ltl_until(LtlFormula a, LtlFormula b);

/// Accepts unicode operators (□ ◇ ∧ ∨ ¬ →) and their ASCII forms
/// (G F X U & | ! -> plus && and ||). Precedence, tightest first:
/// unary (¬ G F X) > ∧ > ∨ > U > →; U and → associate right.
/// G, F, X, U, true, false are reserved words. Throws LtlSyntaxError with a
/// byte position.
LtlFormula parse_ltl(const std::string& text);

/// ASCII rendering that parse_ltl accepts; round-trip stable.
std::string to_string(const LtlFormula& formula);

/// One atom set per simulation step.
using LabeledTrace = std::vector<std::set<std::string>>;

/// Finite-trace semantics with strong next: X f is false at the last
/// position, G over an empty suffix is true, F false, atoms false.
/// position may be at most trace.size().
bool evaluate(const LtlFormula& formula, const LabeledTrace& trace, std::size_t position = 0);

struct NamedProperty {
  std::string name;
  std::string formula;  // source text
  LtlFormula ast;
  std::string rationale;

  bool operator==(const NamedProperty&) const = default;
};

nlohmann::json to_json(const NamedProperty& prop);
nlohmann::json to_json(const std::vector<NamedProperty>& props);

/// Parses a provider reply: a JSON array (or {"properties":[...]}) of
/// {name, formula, rationale} entries. Formulas go through parse_ltl;
/// duplicate names or unparseable formulas throw OutputParseError naming the
/// entry. An empty list yields an empty result plus a warning.
std::vector<NamedProperty> parse_property_list(const std::string& raw,
                                               std::vector<std::string>* warnings = nullptr);

std::optional<std::string> property_reply_validator(const std::string& text);

/// Pattern on a simulation step. All present fields must match exactly.
struct LabelRule {
  std::map<std::string, std::string> when;  // keys: state_before, state_after, input, output
  std::vector<std::string> atoms;
};

using Labeling = std::vector<LabelRule>;

Labeling labeling_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Labeling& labeling);

std::set<std::string> atoms_for_step(const StepResult& step, const Labeling& labeling);
LabeledTrace label_trace(const std::vector<StepResult>& trace, const Labeling& labeling);

struct PropertyVerdict {
  bool holds_on_all = true;
  bool vacuous = false;  // no input suites supplied
  std::optional<std::size_t> failing_suite;
  std::vector<StepResult> counterexample;
  LabeledTrace counterexample_labels;
};

/// Bounded check: simulate each input sequence from the initial state, label
/// it, evaluate the property at position 0. The first failing sequence
/// becomes the counterexample.
PropertyVerdict check_property(const NamedProperty& prop, const MealyMachine& machine,
                               const Labeling& labeling,
                               const std::vector<std::vector<std::string>>& input_suites);

/// Property-generation prompt: same inputs as test generation, output format
/// [{name, formula, rationale}] over uppercase atoms. Tag
/// "property-generation".
ChatRequest build_property_prompt(const AnalysisResult& analysis, const ContextBundle& context,
                                  const std::optional<std::string>& mealy_text = std::nullopt);

/// Judge prompt for a property set, reusing the EvaluationReport shape. Tag
/// "property-judge". Throws InvalidArgument on an empty set.
ChatRequest build_property_judge_prompt(const std::vector<NamedProperty>& props,
                                        const AttackTree& tree);

/// Refinement prompt for properties. Throws EmptyRefinement when the report
/// carries no improvements and no missing threats. Tag "property-refinement".
ChatRequest build_property_refinement_prompt(const std::vector<NamedProperty>& props,
                                             const EvaluationReport& report);

/// Replace-by-name / append merge, mirroring suite refinement.
std::vector<NamedProperty> merge_properties(const std::vector<NamedProperty>& original,
                                            const std::vector<NamedProperty>& regenerated,
                                            std::vector<std::string>* warnings = nullptr);

}  // namespace staf
