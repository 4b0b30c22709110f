#include "staf/mealy.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "staf/errors.hpp"

namespace staf {

MealyMachine::MealyMachine(std::string name, std::string initial_state)
    : name_(std::move(name)), initial_state_(std::move(initial_state)) {
  if (!initial_state_.empty()) by_state_[initial_state_];
}

void MealyMachine::add_state(const std::string& state) {
  if (state.empty()) throw InvalidArgument("state name must not be empty");
  by_state_[state];
  if (initial_state_.empty()) initial_state_ = state;
}

void MealyMachine::add_transition(const MealyTransition& t) {
  if (t.from.empty() || t.to.empty()) throw InvalidArgument("transition endpoints must be named");
  add_state(t.from);
  add_state(t.to);
  auto& outgoing = by_state_[t.from];
  auto it = outgoing.find(t.input);
  if (it != outgoing.end()) {
    const MealyTransition& existing = it->second;
    if (existing.output == t.output && existing.to == t.to) return;
    throw NondeterminismError(t.from, t.input);
  }
  outgoing.emplace(t.input, t);
}

std::vector<std::string> MealyMachine::states() const {
  std::vector<std::string> out;
  out.reserve(by_state_.size());
  for (const auto& [state, _] : by_state_) out.push_back(state);
  return out;
}

std::vector<MealyTransition> MealyMachine::transitions() const {
  std::vector<MealyTransition> out;
  for (const auto& [state, outgoing] : by_state_) {
    for (const auto& [input, t] : outgoing) out.push_back(t);
  }
  return out;
}

bool MealyMachine::has_state(const std::string& state) const {
  return by_state_.count(state) > 0;
}

std::optional<MealyTransition> MealyMachine::transition_for(const std::string& state,
                                                            const std::string& input) const {
  auto it = by_state_.find(state);
  if (it == by_state_.end()) return std::nullopt;
  auto jt = it->second.find(input);
  if (jt == it->second.end()) return std::nullopt;
  return jt->second;
}

std::vector<std::string> MealyMachine::input_alphabet() const {
  std::set<std::string> inputs;
  for (const auto& [state, outgoing] : by_state_) {
    for (const auto& [input, _] : outgoing) inputs.insert(input);
  }
  return {inputs.begin(), inputs.end()};
}

std::vector<std::string> MealyMachine::output_alphabet() const {
  std::set<std::string> outputs;
  for (const auto& [state, outgoing] : by_state_) {
    for (const auto& [input, t] : outgoing) outputs.insert(t.output);
  }
  return {outputs.begin(), outputs.end()};
}

StepResult MealyMachine::step(const std::string& state, const std::string& input) const {
  auto it = by_state_.find(state);
  if (it == by_state_.end()) throw UnknownState("unknown state \"" + state + "\"");
  auto jt = it->second.find(input);
  if (jt == it->second.end()) {
    // Inputs the model does not define are absorbed in place.
    return {state, input, "undefined", state};
  }
  return {state, input, jt->second.output, jt->second.to};
}

std::vector<StepResult> MealyMachine::simulate(const std::vector<std::string>& inputs) const {
  if (inputs.empty()) return {};
  if (initial_state_.empty()) throw UnknownState("machine has no states");
  std::vector<StepResult> trace;
  std::string current = initial_state_;
  for (const std::string& input : inputs) {
    StepResult r = step(current, input);
    current = r.state_after;
    trace.push_back(std::move(r));
  }
  return trace;
}

namespace {

constexpr const char* kStartNode = "__start";

struct Token {
  enum Kind { identifier, symbol, arrow, end } kind = end;
  std::string text;
  std::size_t line = 1;
};

class DotLexer {
 public:
  explicit DotLexer(const std::string& text) : text_(text) {}

  Token next() {
    skip_ws_and_comments();
    Token tok;
    tok.line = line_;
    if (pos_ >= text_.size()) {
      tok.kind = Token::end;
      return tok;
    }
    char c = text_[pos_];
    if (c == '-' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '>') {
      pos_ += 2;
      tok.kind = Token::arrow;
      tok.text = "->";
      return tok;
    }
    if (c == '{' || c == '}' || c == '[' || c == ']' || c == '=' || c == ';' || c == ',') {
      ++pos_;
      tok.kind = Token::symbol;
      tok.text = std::string(1, c);
      return tok;
    }
    if (c == '"') {
      ++pos_;
      std::string value;
      while (pos_ < text_.size() && text_[pos_] != '"') {
        if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) ++pos_;
        if (text_[pos_] == '\n') ++line_;
        value.push_back(text_[pos_++]);
      }
      if (pos_ >= text_.size()) {
        throw DotSyntaxError("unterminated quoted string at line " + std::to_string(tok.line));
      }
      ++pos_;  // closing quote
      tok.kind = Token::identifier;
      tok.text = std::move(value);
      return tok;
    }
    if (is_id_char(c)) {
      std::string value;
      while (pos_ < text_.size() && is_id_char(text_[pos_])) value.push_back(text_[pos_++]);
      tok.kind = Token::identifier;
      tok.text = std::move(value);
      return tok;
    }
    throw DotSyntaxError("unexpected character '" + std::string(1, c) + "' at line " +
                         std::to_string(line_));
  }

 private:
  static bool is_id_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '.' || c == '-';
  }

  void skip_ws_and_comments() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '\n') {
        ++line_;
        ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\r') {
        ++pos_;
      } else if (c == '/' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '/') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else {
        return;
      }
    }
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

std::string quote_if_needed(const std::string& id) {
  bool bare = !id.empty();
  for (char c : id) {
    if (!((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
          c == '_' || c == '.' || c == '-')) {
      bare = false;
      break;
    }
  }
  if (bare) return id;
  std::string out = "\"";
  for (char c : id) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

MealyMachine parse_dot(const std::string& dot_text) {
  DotLexer lexer(dot_text);
  Token tok = lexer.next();
  if (tok.kind != Token::identifier || tok.text != "digraph") {
    throw DotSyntaxError("expected \"digraph\" at line " + std::to_string(tok.line));
  }
  tok = lexer.next();
  std::string graph_name;
  if (tok.kind == Token::identifier) {
    graph_name = tok.text;
    tok = lexer.next();
  }
  if (!(tok.kind == Token::symbol && tok.text == "{")) {
    throw DotSyntaxError("expected '{' at line " + std::to_string(tok.line));
  }

  MealyMachine machine(graph_name, "");
  std::string explicit_initial;
  std::string first_declared;

  auto note_declared = [&](const std::string& state) {
    if (first_declared.empty() && state != kStartNode) first_declared = state;
  };

  tok = lexer.next();
  while (!(tok.kind == Token::symbol && tok.text == "}")) {
    if (tok.kind == Token::end) {
      throw DotSyntaxError("unexpected end of input: missing '}'");
    }
    if (tok.kind != Token::identifier) {
      throw DotSyntaxError("expected node or edge statement at line " + std::to_string(tok.line));
    }
    std::string from = tok.text;
    std::size_t stmt_line = tok.line;
    tok = lexer.next();

    std::optional<std::string> to;
    if (tok.kind == Token::arrow) {
      tok = lexer.next();
      if (tok.kind != Token::identifier) {
        throw DotSyntaxError("expected target node after '->' at line " + std::to_string(tok.line));
      }
      to = tok.text;
      tok = lexer.next();
    }

    std::optional<std::string> label;
    if (tok.kind == Token::symbol && tok.text == "[") {
      tok = lexer.next();
      while (!(tok.kind == Token::symbol && tok.text == "]")) {
        if (tok.kind != Token::identifier) {
          throw DotSyntaxError("expected attribute name at line " + std::to_string(tok.line));
        }
        std::string key = tok.text;
        tok = lexer.next();
        if (!(tok.kind == Token::symbol && tok.text == "=")) {
          throw DotSyntaxError("expected '=' after attribute \"" + key + "\" at line " +
                               std::to_string(tok.line));
        }
        tok = lexer.next();
        if (tok.kind != Token::identifier) {
          throw DotSyntaxError("expected attribute value at line " + std::to_string(tok.line));
        }
        if (key == "label") label = tok.text;
        tok = lexer.next();
        if (tok.kind == Token::symbol && (tok.text == "," || tok.text == ";")) tok = lexer.next();
      }
      tok = lexer.next();
    }
    if (tok.kind == Token::symbol && tok.text == ";") tok = lexer.next();

    if (!to) {
      // Bare node declaration.
      if (from != kStartNode) {
        note_declared(from);
        machine.add_state(from);
      }
      continue;
    }

    if (from == kStartNode) {
      if (!explicit_initial.empty() && explicit_initial != *to) {
        throw DotSyntaxError("conflicting start markers: \"" + explicit_initial + "\" and \"" +
                             *to + "\"");
      }
      explicit_initial = *to;
      note_declared(*to);
      machine.add_state(*to);
      continue;
    }

    if (!label) {
      throw MissingLabelError("edge " + from + " -> " + *to + " at line " +
                              std::to_string(stmt_line) + " has no label");
    }
    std::size_t slash = label->find('/');
    if (slash == std::string::npos) {
      throw MissingLabelError("edge " + from + " -> " + *to + " label \"" + *label +
                              "\" has no '/' separating input from output");
    }
    MealyTransition t;
    t.from = from;
    t.to = *to;
    t.input = label->substr(0, slash);
    t.output = label->substr(slash + 1);
    note_declared(from);
    machine.add_transition(t);
  }

  tok = lexer.next();
  if (tok.kind != Token::end) {
    throw DotSyntaxError("trailing content after '}' at line " + std::to_string(tok.line));
  }

  std::string initial = !explicit_initial.empty() ? explicit_initial : first_declared;
  if (initial.empty() && !machine.states().empty()) initial = machine.states().front();

  // Rebuild with the initial state pinned so states() listing stays stable.
  MealyMachine out(graph_name, initial);
  for (const std::string& s : machine.states()) out.add_state(s);
  for (const MealyTransition& t : machine.transitions()) out.add_transition(t);
  return out;
}

std::string to_dot(const MealyMachine& machine) {
  std::ostringstream out;
  std::string name = machine.name().empty() ? "mealy" : machine.name();
  out << "digraph " << quote_if_needed(name) << " {\n";
  if (!machine.initial_state().empty()) {
    out << "  " << kStartNode << " -> " << quote_if_needed(machine.initial_state()) << ";\n";
  }
  for (const std::string& state : machine.states()) {
    out << "  " << quote_if_needed(state) << ";\n";
  }
  for (const MealyTransition& t : machine.transitions()) {
    out << "  " << quote_if_needed(t.from) << " -> " << quote_if_needed(t.to) << " [label="
        << quote_if_needed(t.input + "/" + t.output) << "];\n";
  }
  out << "}\n";
  return out.str();
}

std::string render_for_prompt(const MealyMachine& machine, std::size_t max_chars) {
  const std::string legend =
      "Protocol state machine (Mealy). Edge labels are input/output pairs; __start marks the "
      "initial state.\n";

  std::vector<MealyTransition> transitions = machine.transitions();
  std::size_t keep = transitions.size();
  while (true) {
    std::ostringstream out;
    out << legend;
    std::string name = machine.name().empty() ? "mealy" : machine.name();
    out << "digraph " << quote_if_needed(name) << " {\n";
    if (!machine.initial_state().empty()) {
      out << "  " << kStartNode << " -> " << quote_if_needed(machine.initial_state()) << ";\n";
    }
    for (const std::string& state : machine.states()) {
      out << "  " << quote_if_needed(state) << ";\n";
    }
    for (std::size_t i = 0; i < keep; ++i) {
      const MealyTransition& t = transitions[i];
      out << "  " << quote_if_needed(t.from) << " -> " << quote_if_needed(t.to) << " [label="
          << quote_if_needed(t.input + "/" + t.output) << "];\n";
    }
    if (keep < transitions.size()) {
      out << "  // " << (transitions.size() - keep) << " transitions elided\n";
    }
    out << "}\n";
    std::string text = out.str();
    if (text.size() <= max_chars || keep == 0) return text;
    --keep;
  }
}

}  // namespace staf
