#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace staf {

struct MealyTransition {
  std::string from;
  std::string input;
  std::string output;
  std::string to;
};

struct StepResult {
  std::string state_before;
  std::string input;
  std::string output;
  std::string state_after;
};

/// Deterministic Mealy machine over string inputs/outputs. Transitions are
/// total only over what the model declares; stepping an undefined input
/// stays in place and emits "undefined".
class MealyMachine {
 public:
  MealyMachine() = default;
  MealyMachine(std::string name, std::string initial_state);

  const std::string& name() const { return name_; }
  const std::string& initial_state() const { return initial_state_; }

  void add_state(const std::string& state);
  /// Throws NondeterminismError when (from, input) is already defined with a
  /// different output or target; re-adding the identical transition is a
  /// no-op. Unknown endpoint states are created implicitly.
  void add_transition(const MealyTransition& t);

  std::vector<std::string> states() const;          // sorted
  std::vector<MealyTransition> transitions() const; // sorted by (from, input)
  bool has_state(const std::string& state) const;
  std::optional<MealyTransition> transition_for(const std::string& state,
                                                const std::string& input) const;
  /// Inputs defined in at least one state, sorted.
  std::vector<std::string> input_alphabet() const;
  /// Outputs appearing on at least one transition, sorted.
  std::vector<std::string> output_alphabet() const;

  /// Throws UnknownState for a state the machine does not declare.
  StepResult step(const std::string& state, const std::string& input) const;
  /// Runs the input word from the initial state.
  std::vector<StepResult> simulate(const std::vector<std::string>& inputs) const;

 private:
  std::string name_;
  std::string initial_state_;
  std::map<std::string, std::map<std::string, MealyTransition>> by_state_;
};

/// Parses the DOT subset used for protocol models: a named digraph whose
/// edges carry "input/output" labels (first '/' splits). A `__start -> s`
/// edge marks the initial state; without one the first declared node is
/// initial. Throws DotSyntaxError / MissingLabelError / NondeterminismError.
MealyMachine parse_dot(const std::string& dot_text);

/// Canonical DOT rendering: states sorted lexicographically, transitions
/// sorted by (state, input), `__start` pseudo-node marking the initial
/// state. parse_dot(to_dot(m)) reproduces m exactly.
std::string to_dot(const MealyMachine& machine);

/// Prompt-sized rendering: a short legend plus the canonical DOT body. When
/// the result would exceed max_chars, transitions are elided from the tail
/// until it fits and a `// N transitions elided` marker is appended.
std::string render_for_prompt(const MealyMachine& machine, std::size_t max_chars = 4000);

}  // namespace staf
