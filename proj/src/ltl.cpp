#include "staf/ltl.hpp"

#include <algorithm>
#include <sstream>

#include "staf/errors.hpp"
#include "staf/text.hpp"

namespace staf {

LtlFormula ltl_atom(std::string name) {
  LtlFormula f;
  f.op = LtlOp::atom;
  f.atom_name = std::move(name);
  return f;
}

LtlFormula ltl_const(bool value) {
  LtlFormula f;
  f.op = LtlOp::constant;
  f.value = value;
  return f;
}

namespace {

LtlFormula unary(LtlOp op, LtlFormula f) {
  LtlFormula out;
  out.op = op;
  out.children.push_back(std::move(f));
  return out;
}

LtlFormula binary(LtlOp op, LtlFormula a, LtlFormula b) {
  LtlFormula out;
  out.op = op;
  out.children.push_back(std::move(a));
  out.children.push_back(std::move(b));
  return out;
}

}  // namespace

LtlFormula ltl_not(LtlFormula f) { return unary(LtlOp::negation, std::move(f)); }
LtlFormula ltl_and(LtlFormula a, LtlFormula b) {
  return binary(LtlOp::conjunction, std::move(a), std::move(b));
}
LtlFormula ltl_or(LtlFormula a, LtlFormula b) {
  return binary(LtlOp::disjunction, std::move(a), std::move(b));
}
LtlFormula ltl_implies(LtlFormula a, LtlFormula b) {
  return binary(LtlOp::implication, std::move(a), std::move(b));
}
LtlFormula ltl_globally(LtlFormula f) { return unary(LtlOp::globally, std::move(f)); }
LtlFormula ltl_eventually(LtlFormula f) { return unary(LtlOp::eventually, std::move(f)); }
LtlFormula ltl_next(LtlFormula f) { return unary(LtlOp::next, std::move(f)); }
LtlFormula ltl_until(LtlFormula a, LtlFormula b) {
  return binary(LtlOp::until, std::move(a), std::move(b));
}

namespace {

enum class TokKind { lparen, rparen, op_not, op_and, op_or, op_implies, op_g, op_f, op_x, op_u,
                     lit_true, lit_false, identifier, end };

struct LtlToken {
  TokKind kind = TokKind::end;
  std::string text;
  std::size_t pos = 0;
};

class LtlLexer {
 public:
  explicit LtlLexer(const std::string& text) : text_(text) { advance(); }

  const LtlToken& peek() const { return current_; }

  LtlToken take() {
    LtlToken t = current_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < text_.size() &&
           (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
            text_[pos_] == '\r')) {
      ++pos_;
    }
    current_ = LtlToken{};
    current_.pos = pos_;
    if (pos_ >= text_.size()) {
      current_.kind = TokKind::end;
      return;
    }

    // Multi-byte unicode operators first.
    static const struct {
      const char* utf8;
      TokKind kind;
    } kUnicode[] = {
        {"□", TokKind::op_g},        // white square
        {"◇", TokKind::op_f},        // white diamond
        {"∧", TokKind::op_and},
        {"∨", TokKind::op_or},
        {"¬", TokKind::op_not},
        {"→", TokKind::op_implies},
    };
    for (const auto& u : kUnicode) {
      std::size_t len = std::char_traits<char>::length(u.utf8);
      if (text_.compare(pos_, len, u.utf8) == 0) {
        current_.kind = u.kind;
        current_.text = u.utf8;
        pos_ += len;
        return;
      }
    }

    char c = text_[pos_];
    switch (c) {
      case '(': current_.kind = TokKind::lparen; ++pos_; return;
      case ')': current_.kind = TokKind::rparen; ++pos_; return;
      case '!': current_.kind = TokKind::op_not; ++pos_; return;
      case '&':
        current_.kind = TokKind::op_and;
        ++pos_;
        if (pos_ < text_.size() && text_[pos_] == '&') ++pos_;
        return;
      case '|':
        current_.kind = TokKind::op_or;
        ++pos_;
        if (pos_ < text_.size() && text_[pos_] == '|') ++pos_;
        return;
      case '-':
        if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '>') {
          current_.kind = TokKind::op_implies;
          pos_ += 2;
          return;
        }
        throw LtlSyntaxError("unexpected '-'", pos_);
      default: break;
    }

    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string word;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
        word.push_back(text_[pos_++]);
      }
      if (word == "G") {
        current_.kind = TokKind::op_g;
      } else if (word == "F") {
        current_.kind = TokKind::op_f;
      } else if (word == "X") {
        current_.kind = TokKind::op_x;
      } else if (word == "U") {
        current_.kind = TokKind::op_u;
      } else if (word == "true") {
        current_.kind = TokKind::lit_true;
      } else if (word == "false") {
        current_.kind = TokKind::lit_false;
      } else {
        current_.kind = TokKind::identifier;
      }
      current_.text = std::move(word);
      return;
    }
    throw LtlSyntaxError("unexpected character '" + std::string(1, c) + "'", pos_);
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  LtlToken current_;
};

class LtlParser {
 public:
  explicit LtlParser(const std::string& text) : lexer_(text) {}

  LtlFormula parse() {
    LtlFormula f = parse_implies();
    if (lexer_.peek().kind != TokKind::end) {
      throw LtlSyntaxError("unexpected trailing token", lexer_.peek().pos);
    }
    return f;
  }

 private:
  // implies := until ('->' implies)?      (right-associative)
  LtlFormula parse_implies() {
    LtlFormula left = parse_until();
    if (lexer_.peek().kind == TokKind::op_implies) {
      lexer_.take();
      return ltl_implies(std::move(left), parse_implies());
    }
    return left;
  }

  // until := or ('U' until)?              (right-associative)
  LtlFormula parse_until() {
    LtlFormula left = parse_or();
    if (lexer_.peek().kind == TokKind::op_u) {
      lexer_.take();
      return ltl_until(std::move(left), parse_until());
    }
    return left;
  }

  LtlFormula parse_or() {
    LtlFormula left = parse_and();
    while (lexer_.peek().kind == TokKind::op_or) {
      lexer_.take();
      left = ltl_or(std::move(left), parse_and());
    }
    return left;
  }

  LtlFormula parse_and() {
    LtlFormula left = parse_unary();
    while (lexer_.peek().kind == TokKind::op_and) {
      lexer_.take();
      left = ltl_and(std::move(left), parse_unary());
    }
    return left;
  }

  LtlFormula parse_unary() {
    const LtlToken& tok = lexer_.peek();
    switch (tok.kind) {
      case TokKind::op_not: lexer_.take(); return ltl_not(parse_unary());
      case TokKind::op_g: lexer_.take(); return ltl_globally(parse_unary());
      case TokKind::op_f: lexer_.take(); return ltl_eventually(parse_unary());
      case TokKind::op_x: lexer_.take(); return ltl_next(parse_unary());
      default: return parse_primary();
    }
  }

  LtlFormula parse_primary() {
    LtlToken tok = lexer_.take();
    switch (tok.kind) {
      case TokKind::lit_true: return ltl_const(true);
      case TokKind::lit_false: return ltl_const(false);
      case TokKind::identifier: return ltl_atom(tok.text);
      case TokKind::lparen: {
        LtlFormula inner = parse_implies();
        LtlToken close = lexer_.take();
        if (close.kind != TokKind::rparen) {
          throw LtlSyntaxError("expected ')'", close.pos);
        }
        return inner;
      }
      case TokKind::end: throw LtlSyntaxError("unexpected end of formula", tok.pos);
      default: throw LtlSyntaxError("expected a formula", tok.pos);
    }
  }

  LtlLexer lexer_;
};

}  // namespace

LtlFormula parse_ltl(const std::string& text) { return LtlParser(text).parse(); }

namespace {

int precedence_of(LtlOp op) {
  switch (op) {
    case LtlOp::implication: return 1;
    case LtlOp::until: return 2;
    case LtlOp::disjunction: return 3;
    case LtlOp::conjunction: return 4;
    default: return 5;  // unary ops and leaves
  }
}

void render(const LtlFormula& f, std::ostringstream& out, int parent_prec) {
  int prec = precedence_of(f.op);
  bool needs_parens = prec < parent_prec;
  auto open = [&] { if (needs_parens) out << "("; };
  auto close = [&] { if (needs_parens) out << ")"; };
  switch (f.op) {
    case LtlOp::atom: out << f.atom_name; return;
    case LtlOp::constant: out << (f.value ? "true" : "false"); return;
    case LtlOp::negation:
      out << "!";
      render(f.children[0], out, 5);
      return;
    case LtlOp::globally:
    case LtlOp::eventually:
    case LtlOp::next: {
      out << (f.op == LtlOp::globally ? "G " : f.op == LtlOp::eventually ? "F " : "X ");
      render(f.children[0], out, 5);
      return;
    }
    case LtlOp::conjunction:
      open();
      render(f.children[0], out, prec);
      out << " & ";
      render(f.children[1], out, prec + 1);
      close();
      return;
    case LtlOp::disjunction:
      open();
      render(f.children[0], out, prec);
      out << " | ";
      render(f.children[1], out, prec + 1);
      close();
      return;
    case LtlOp::until:
      open();
      render(f.children[0], out, prec + 1);
      out << " U ";
      render(f.children[1], out, prec);
      close();
      return;
    case LtlOp::implication:
      open();
      render(f.children[0], out, prec + 1);
      out << " -> ";
      render(f.children[1], out, prec);
      close();
      return;
  }
}

}  // namespace

std::string to_string(const LtlFormula& formula) {
  std::ostringstream out;
  render(formula, out, 0);
  return out.str();
}

bool evaluate(const LtlFormula& formula, const LabeledTrace& trace, std::size_t position) {
  if (position > trace.size()) {
    throw InvalidArgument("evaluation position beyond end of trace");
  }
  switch (formula.op) {
    case LtlOp::atom:
      return position < trace.size() && trace[position].count(formula.atom_name) > 0;
    case LtlOp::constant:
      return formula.value;
    case LtlOp::negation:
      return !evaluate(formula.children[0], trace, position);
    case LtlOp::conjunction:
      return evaluate(formula.children[0], trace, position) &&
             evaluate(formula.children[1], trace, position);
    case LtlOp::disjunction:
      return evaluate(formula.children[0], trace, position) ||
             evaluate(formula.children[1], trace, position);
    case LtlOp::implication:
      return !evaluate(formula.children[0], trace, position) ||
             evaluate(formula.children[1], trace, position);
    case LtlOp::globally:
      for (std::size_t j = position; j < trace.size(); ++j) {
        if (!evaluate(formula.children[0], trace, j)) return false;
      }
      return true;
    case LtlOp::eventually:
      for (std::size_t j = position; j < trace.size(); ++j) {
        if (evaluate(formula.children[0], trace, j)) return true;
      }
      return false;
    case LtlOp::next:
      // Strong next: no successor position means false.
      if (position + 1 >= trace.size()) return false;
      return evaluate(formula.children[0], trace, position + 1);
    case LtlOp::until:
      for (std::size_t j = position; j < trace.size(); ++j) {
        if (evaluate(formula.children[1], trace, j)) {
          bool all_hold = true;
          for (std::size_t k = position; k < j; ++k) {
            if (!evaluate(formula.children[0], trace, k)) {
              all_hold = false;
              break;
            }
          }
          if (all_hold) return true;
        }
      }
      return false;
  }
  return false;
}

nlohmann::json to_json(const NamedProperty& prop) {
  return nlohmann::json{
      {"name", prop.name},
      {"formula", prop.formula},
      {"rationale", prop.rationale},
  };
}

nlohmann::json to_json(const std::vector<NamedProperty>& props) {
  nlohmann::json arr = nlohmann::json::array();
  for (const NamedProperty& p : props) arr.push_back(to_json(p));
  return arr;
}

std::vector<NamedProperty> parse_property_list(const std::string& raw,
                                               std::vector<std::string>* warnings) {
  std::string text = strip_code_fence(raw);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw OutputParseError(std::string("property reply is not valid JSON: ") + e.what());
  }
  nlohmann::json arr;
  if (j.is_array()) {
    arr = std::move(j);
  } else if (j.is_object() && j.contains("properties") && j.at("properties").is_array()) {
    arr = j.at("properties");
  } else {
    throw OutputParseError("property reply must be a JSON array of {name, formula, rationale}");
  }

  std::vector<NamedProperty> out;
  std::set<std::string> names;
  std::size_t index = 0;
  for (const auto& entry : arr) {
    const std::string where = "property " + std::to_string(index++);
    if (!entry.is_object()) throw OutputParseError(where + " is not a JSON object");
    for (const char* field : {"name", "formula", "rationale"}) {
      if (!entry.contains(field) || !entry.at(field).is_string()) {
        throw OutputParseError(where + " missing string field \"" + field + "\"");
      }
    }
    NamedProperty prop;
    prop.name = entry.at("name").get<std::string>();
    prop.formula = entry.at("formula").get<std::string>();
    prop.rationale = entry.at("rationale").get<std::string>();
    if (prop.name.empty()) throw OutputParseError(where + " has empty \"name\"");
    if (!names.insert(prop.name).second) {
      throw OutputParseError("duplicate property name \"" + prop.name + "\"");
    }
    try {
      prop.ast = parse_ltl(prop.formula);
    } catch (const LtlSyntaxError& e) {
      throw OutputParseError("property \"" + prop.name + "\" formula invalid: " + e.what());
    }
    out.push_back(std::move(prop));
  }
  if (out.empty() && warnings) warnings->push_back("property reply contained no properties");
  return out;
}

std::optional<std::string> property_reply_validator(const std::string& text) {
  try {
    parse_property_list(text, nullptr);
    return std::nullopt;
  } catch (const OutputParseError& e) {
    return std::string(e.what());
  }
}

Labeling labeling_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw SchemaViolation("labeling must be a JSON array of rules");
  static const std::set<std::string> kKeys = {"state_before", "state_after", "input", "output"};
  Labeling out;
  for (const auto& rule : j) {
    if (!rule.is_object() || !rule.contains("when") || !rule.at("when").is_object() ||
        !rule.contains("atoms") || !rule.at("atoms").is_array()) {
      throw SchemaViolation("labeling rule needs a \"when\" object and an \"atoms\" array");
    }
    LabelRule r;
    for (const auto& [key, value] : rule.at("when").items()) {
      if (kKeys.count(key) == 0) {
        throw SchemaViolation("labeling rule has unknown field \"" + key + "\"");
      }
      if (!value.is_string()) throw SchemaViolation("labeling conditions must be strings");
      r.when[key] = value.get<std::string>();
    }
    for (const auto& atom : rule.at("atoms")) {
      if (!atom.is_string()) throw SchemaViolation("labeling atoms must be strings");
      r.atoms.push_back(atom.get<std::string>());
    }
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json to_json(const Labeling& labeling) {
  nlohmann::json arr = nlohmann::json::array();
  for (const LabelRule& r : labeling) {
    arr.push_back(nlohmann::json{{"when", r.when}, {"atoms", r.atoms}});
  }
  return arr;
}

std::set<std::string> atoms_for_step(const StepResult& step, const Labeling& labeling) {
  std::set<std::string> atoms;
  for (const LabelRule& rule : labeling) {
    bool matches = true;
    for (const auto& [key, value] : rule.when) {
      const std::string& actual = key == "state_before" ? step.state_before
                                  : key == "state_after" ? step.state_after
                                  : key == "input"       ? step.input
                                                         : step.output;
      if (actual != value) {
        matches = false;
        break;
      }
    }
    if (matches) atoms.insert(rule.atoms.begin(), rule.atoms.end());
  }
  return atoms;
}

LabeledTrace label_trace(const std::vector<StepResult>& trace, const Labeling& labeling) {
  LabeledTrace out;
  out.reserve(trace.size());
  for (const StepResult& step : trace) out.push_back(atoms_for_step(step, labeling));
  return out;
}

PropertyVerdict check_property(const NamedProperty& prop, const MealyMachine& machine,
                               const Labeling& labeling,
                               const std::vector<std::vector<std::string>>& input_suites) {
  PropertyVerdict verdict;
  if (input_suites.empty()) {
    verdict.vacuous = true;
    return verdict;
  }
  for (std::size_t i = 0; i < input_suites.size(); ++i) {
    std::vector<StepResult> trace = machine.simulate(input_suites[i]);
    LabeledTrace labels = label_trace(trace, labeling);
    if (!evaluate(prop.ast, labels, 0)) {
      verdict.holds_on_all = false;
      verdict.failing_suite = i;
      verdict.counterexample = std::move(trace);
      verdict.counterexample_labels = std::move(labels);
      return verdict;
    }
  }
  return verdict;
}

namespace {

constexpr const char* kPropertyFormatInstructions =
    "Reply with a single JSON array and nothing else (no commentary, no code fences):\n"
    "[{\"name\": \"...\", \"formula\": \"...\", \"rationale\": \"...\"}]\n"
    "Formulas use atoms in UPPER_SNAKE_CASE and the operators G F X U & | ! -> with "
    "parentheses; every parenthesis must be balanced.";

}  // namespace

ChatRequest build_property_prompt(const AnalysisResult& analysis, const ContextBundle& context,
                                  const std::optional<std::string>& mealy_text) {
  if (analysis.threats.empty()) {
    throw InvalidArgument("cannot build a property prompt without threats");
  }
  std::ostringstream system;
  system << "You are a security verification engineer. From the threat profiles and reference "
            "material provided, write linear temporal logic properties that a compliant "
            "implementation of the system must satisfy. Each property gets a short "
            "UPPER_SNAKE_CASE name and a rationale tying it to a threat.\n\n"
         << kPropertyFormatInstructions;

  std::ostringstream user;
  user << "## Threat profiles\n";
  for (const ThreatProfile& t : analysis.threats) {
    user << "- " << t.threat_id << " " << t.title << "\n";
    if (!t.impact.empty()) user << "  impact: " << t.impact << "\n";
  }
  user << "\n## Reference material\n";
  if (context.entries.empty()) {
    user << kLowContextMarker << "\n";
  } else {
    for (const ContextEntry& e : context.entries) {
      user << "[" << e.doc_id << "] " << e.title << "\n" << e.excerpt << "\n\n";
    }
  }
  if (mealy_text) {
    user << "\n## Protocol state machine\n" << *mealy_text;
    if (mealy_text->empty() || mealy_text->back() != '\n') user << "\n";
  }

  ChatRequest req;
  req.tag = "property-generation";
  req.messages.push_back({Role::system, system.str()});
  req.messages.push_back({Role::user, user.str()});
  return req;
}

ChatRequest build_property_judge_prompt(const std::vector<NamedProperty>& props,
                                        const AttackTree& tree) {
  if (props.empty()) throw InvalidArgument("cannot judge an empty property set");

  std::ostringstream system;
  system << "You are a formal verification reviewer. Score the property set against the attack "
            "tree in three categories on a 0-100 integer scale:\n"
            "- alignment: how directly the properties rule out the tree's threats.\n"
            "- runnability: syntactic well-formedness and checkability of the formulas.\n"
            "- completeness: coverage of the tree's attack paths.\n\n"
            "Also list missing threats and per-property improvement suggestions (use the "
            "property name as \"test_case_name\").\n\n"
            "Reply with a single JSON object, no commentary and no code fences:\n"
            "{\"alignment\": 0, \"runnability\": 0, \"completeness\": 0, "
            "\"missing_threats\": [\"...\"], "
            "\"improvements\": [{\"test_case_name\": \"...\", \"details\": [\"...\"]}], "
            "\"breakdown\": \"...\"}";

  std::ostringstream user;
  user << "## Attack tree\n" << serialize(tree);
  user << "\n## Properties\n" << to_json(props).dump(2) << "\n";

  ChatRequest req;
  req.tag = "property-judge";
  req.messages.push_back({Role::system, system.str()});
  req.messages.push_back({Role::user, user.str()});
  return req;
}

ChatRequest build_property_refinement_prompt(const std::vector<NamedProperty>& props,
                                             const EvaluationReport& report) {
  if (report.improvements.empty() && report.missing_threats.empty()) {
    throw EmptyRefinement("property refinement has no suggestions and no missing threats");
  }

  std::ostringstream user;
  user << "Your critical task is to modify specific properties based on the provided "
          "improvement suggestions, and to add new properties for any missing "
          "vulnerabilities.\n\n";
  user << "### Properties to Modify:\n" << to_json(props).dump(2) << "\n";
  user << "\n### Improvement Suggestions:\n";
  if (report.improvements.empty()) {
    user << "(none)\n";
  } else {
    for (const Improvement& imp : report.improvements) {
      user << "- " << imp.test_case_name << ":\n";
      for (const std::string& d : imp.details) user << "  - " << d << "\n";
    }
  }
  user << "\n### Missing Vulnerabilities:\n";
  if (report.missing_threats.empty()) {
    user << "(none)\n";
  } else {
    for (const std::string& t : report.missing_threats) user << "- " << t << "\n";
  }
  user << "\n### Instructions:\n"
          "1. Modify each listed property so it incorporates every suggestion given for it.\n"
          "2. For each missing vulnerability, create a new property that rules out exactly "
          "that vulnerability.\n"
          "3. Keep every formula well-formed with balanced parentheses.\n\n"
       << kPropertyFormatInstructions
       << "\nReturn the modified properties and the new properties only.";

  ChatRequest req;
  req.tag = "property-refinement";
  req.messages.push_back(
      {Role::system, "You are an elite security verification engineer for automotive systems."});
  req.messages.push_back({Role::user, user.str()});
  return req;
}

std::vector<NamedProperty> merge_properties(const std::vector<NamedProperty>& original,
                                            const std::vector<NamedProperty>& regenerated,
                                            std::vector<std::string>* warnings) {
  std::vector<NamedProperty> out = original;
  if (regenerated.empty() && warnings) {
    warnings->push_back("property refinement returned no properties; set carried forward");
  }
  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < out.size(); ++i) by_name.emplace(normalize_label(out[i].name), i);
  for (const NamedProperty& p : regenerated) {
    auto it = by_name.find(normalize_label(p.name));
    if (it != by_name.end()) {
      out[it->second] = p;
    } else {
      by_name.emplace(normalize_label(p.name), out.size());
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace staf
