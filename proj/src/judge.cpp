#include "staf/judge.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "staf/errors.hpp"
#include "staf/text.hpp"

namespace staf {

std::string lint_kind_name(LintKind kind) {
  switch (kind) {
    case LintKind::placeholder: return "placeholder";
    case LintKind::conditional_risk: return "conditional_risk";
    case LintKind::missing_setup: return "missing_setup";
    case LintKind::missing_teardown: return "missing_teardown";
    case LintKind::missing_docs: return "missing_docs";
    case LintKind::missing_resources: return "missing_resources";
  }
  return "placeholder";
}

namespace {

const std::set<std::string>& python_keywords() {
  static const std::set<std::string> kWords = {
      "False",  "None",   "True",    "and",      "as",     "assert", "async", "await",
      "break",  "class",  "continue", "def",     "del",    "elif",   "else",  "except",
      "finally", "for",   "from",    "global",   "if",     "import", "in",    "is",
      "lambda", "nonlocal", "not",   "or",       "pass",   "print",  "raise", "return",
      "try",    "while",  "with",    "yield"};
  return kWords;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string current;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  lines.push_back(current);
  return lines;
}

std::size_t indent_of(const std::string& line) {
  std::size_t n = 0;
  while (n < line.size() && (line[n] == ' ' || line[n] == '\t')) ++n;
  return n;
}

std::size_t count_occurrences(const std::string& line, const std::string& needle) {
  std::size_t count = 0;
  std::size_t pos = 0;
  while ((pos = line.find(needle, pos)) != std::string::npos) {
    ++count;
    pos += needle.size();
  }
  return count;
}

/// Marks which lines sit inside (or open/close) a triple-quoted string, so
/// prose inside docstrings is not mistaken for placeholder text.
std::vector<bool> string_block_lines(const std::vector<std::string>& lines) {
  std::vector<bool> in_string(lines.size(), false);
  std::string open_delim;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (!open_delim.empty()) {
      in_string[i] = true;
      if (count_occurrences(line, open_delim) % 2 == 1) open_delim.clear();
      continue;
    }
    std::size_t dq = count_occurrences(line, "\"\"\"");
    std::size_t sq = count_occurrences(line, "'''");
    if (dq > 0 || sq > 0) {
      in_string[i] = true;
      if (dq % 2 == 1) {
        open_delim = "\"\"\"";
      } else if (sq % 2 == 1) {
        open_delim = "'''";
      }
    }
  }
  return in_string;
}

bool is_prose_line(const std::string& trimmed, bool had_token_finding) {
  if (had_token_finding || trimmed.empty() || trimmed[0] == '#') return false;
  static const std::string kCodeChars = "=(){}[]<>#\"'`";
  for (char c : trimmed) {
    if (kCodeChars.find(c) != std::string::npos) return false;
  }
  std::istringstream words(trimmed);
  std::string word;
  std::vector<std::string> tokens;
  while (words >> word) tokens.push_back(word);
  if (tokens.size() < 3) return false;
  return python_keywords().count(tokens.front()) == 0;
}

void scan_placeholders(const TestCase& tc, std::vector<LintFinding>& findings) {
  static const std::regex kAngleToken("<[A-Z][A-Z0-9_]*>");
  static const char* kLiterals[] = {"TODO", "FIXME", "PLACEHOLDER", "INSERT_"};

  std::vector<std::string> lines = split_lines(tc.test_code);
  std::vector<bool> in_string = string_block_lines(lines);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    bool token_hit = false;
    auto add = [&](const std::string& excerpt) {
      findings.push_back({tc.id, LintKind::placeholder, excerpt, -2.0});
      token_hit = true;
    };

    for (auto it = std::sregex_iterator(line.begin(), line.end(), kAngleToken);
         it != std::sregex_iterator(); ++it) {
      add(it->str());
    }
    for (const char* literal : kLiterals) {
      for (std::size_t n = count_occurrences(line, literal); n > 0; --n) add(literal);
    }
    std::string lowered = to_lower(line);
    for (std::size_t n = count_occurrences(lowered, "your_"); n > 0; --n) add("your_");

    std::string trimmed = trim(line);
    if (trimmed == "...") {
      add("...");
      continue;
    }
    if (!in_string[i] && is_prose_line(trimmed, token_hit)) {
      findings.push_back({tc.id, LintKind::placeholder, trimmed, -2.0});
    }
  }
}

void scan_conditional_risks(const TestCase& tc, std::vector<LintFinding>& findings) {
  std::vector<std::string> lines = split_lines(tc.test_code);
  std::vector<bool> in_string = string_block_lines(lines);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (in_string[i]) continue;
    std::string trimmed = trim(lines[i]);
    bool is_branch = trimmed == "else:" ||
                     (trimmed.rfind("elif ", 0) == 0 && !trimmed.empty() && trimmed.back() == ':');
    if (!is_branch) continue;
    std::size_t branch_indent = indent_of(lines[i]);
    bool has_assert = false;
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      std::string body = trim(lines[j]);
      if (body.empty()) continue;
      if (indent_of(lines[j]) <= branch_indent) break;
      if (body.rfind("assert", 0) == 0) {
        has_assert = true;
        break;
      }
    }
    if (!has_assert) {
      findings.push_back({tc.id, LintKind::conditional_risk, trimmed, -2.0});
    }
  }
}

bool resource_like(const std::string& s) {
  if (s.empty()) return false;
  if (s.find("://") != std::string::npos) return true;
  if (s.find('/') != std::string::npos) return true;
  static const std::regex kFileExt("[A-Za-z0-9_.-]+\\.[A-Za-z][A-Za-z0-9]{0,3}");
  if (std::regex_match(s, kFileExt)) return true;
  static const std::regex kBusInterface("(can|vcan|slcan|eth)[0-9]+", std::regex::icase);
  return std::regex_match(s, kBusInterface);
}

std::vector<std::string> quoted_strings(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c == '"' || c == '\'') {
      std::size_t end = text.find(c, i + 1);
      if (end == std::string::npos) break;
      std::string inner = text.substr(i + 1, end - i - 1);
      if (inner.find('\n') == std::string::npos) out.push_back(inner);
      i = end + 1;
    } else {
      ++i;
    }
  }
  return out;
}

}  // namespace

LintResult static_lint(const TestCase& tc) {
  LintResult result;

  scan_placeholders(tc, result.findings);
  scan_conditional_risks(tc, result.findings);
  double deductions = 0.0;
  for (const LintFinding& f : result.findings) deductions += -f.deduction_or_award;
  result.score.runnability = std::max(0.0, 10.0 - deductions);

  // Setup / teardown: each counts when it has real content.
  bool setup_ok = significant_chars(tc.setup) >= 10;
  bool teardown_ok = significant_chars(tc.teardown) >= 10;
  double st_pts = setup_ok && teardown_ok ? 3.0 : (setup_ok || teardown_ok ? 1.5 : 0.0);
  if (!setup_ok) {
    result.findings.push_back({tc.id, LintKind::missing_setup, tc.setup, -1.5});
  }
  if (!teardown_ok) {
    result.findings.push_back({tc.id, LintKind::missing_teardown, tc.teardown, -1.5});
  }

  // Documentation: proportional credit below 20 significant characters each.
  double desc_pts =
      1.5 * std::min(1.0, static_cast<double>(significant_chars(tc.description)) / 20.0);
  double exp_pts =
      1.5 * std::min(1.0, static_cast<double>(significant_chars(tc.expected_result)) / 20.0);
  if (desc_pts < 1.5) {
    result.findings.push_back({tc.id, LintKind::missing_docs, tc.description, desc_pts - 1.5});
  }
  if (exp_pts < 1.5) {
    result.findings.push_back(
        {tc.id, LintKind::missing_docs, tc.expected_result, exp_pts - 1.5});
  }

  // Resources: every resource-like string referenced by the code should be
  // introduced in setup. No references at all counts as fully covered.
  std::set<std::string> identifiers;
  for (const std::string& s : quoted_strings(tc.test_code)) {
    if (resource_like(s)) identifiers.insert(s);
  }
  double res_pts = 4.0;
  if (!identifiers.empty()) {
    std::size_t covered = 0;
    std::string first_unmatched;
    for (const std::string& id : identifiers) {
      if (tc.setup.find(id) != std::string::npos) {
        ++covered;
      } else if (first_unmatched.empty()) {
        first_unmatched = id;
      }
    }
    res_pts = 4.0 * static_cast<double>(covered) / static_cast<double>(identifiers.size());
    if (covered < identifiers.size()) {
      result.findings.push_back(
          {tc.id, LintKind::missing_resources, first_unmatched, res_pts - 4.0});
    }
  }

  result.score.completeness = st_pts + desc_pts + exp_pts + res_pts;
  return result;
}

SuiteLint lint_suite(const TestSuite& suite) {
  SuiteLint out;
  for (const TestCase& tc : suite.test_cases) out.cases.push_back(static_lint(tc));
  if (!out.cases.empty()) {
    double run_sum = 0.0;
    double comp_sum = 0.0;
    for (const LintResult& r : out.cases) {
      run_sum += r.score.runnability;
      comp_sum += r.score.completeness;
    }
    out.mean_runnability = run_sum / static_cast<double>(out.cases.size());
    out.mean_completeness = comp_sum / static_cast<double>(out.cases.size());
  }
  return out;
}

nlohmann::json to_json(const LintFinding& finding) {
  return nlohmann::json{
      {"case_id", finding.case_id},
      {"kind", lint_kind_name(finding.kind)},
      {"excerpt", finding.excerpt},
      {"deduction_or_award", finding.deduction_or_award},
  };
}

nlohmann::json to_json(const SuiteLint& lint, const TestSuite& suite) {
  nlohmann::json cases = nlohmann::json::array();
  for (std::size_t i = 0; i < lint.cases.size(); ++i) {
    const LintResult& r = lint.cases[i];
    nlohmann::json findings = nlohmann::json::array();
    for (const LintFinding& f : r.findings) findings.push_back(to_json(f));
    nlohmann::json entry{
        {"case_id", i < suite.test_cases.size() ? suite.test_cases[i].id : 0},
        {"name", i < suite.test_cases.size() ? suite.test_cases[i].name : ""},
        {"runnability", r.score.runnability},
        {"completeness", r.score.completeness},
        {"findings", std::move(findings)},
    };
    cases.push_back(std::move(entry));
  }
  return nlohmann::json{
      {"cases", std::move(cases)},
      {"mean_runnability", lint.mean_runnability},
      {"mean_completeness", lint.mean_completeness},
  };
}

double round_half_up_2(double value) {
  return std::floor(value * 100.0 + 0.5) / 100.0;
}

double aggregate_overall(double alignment, double runnability, double completeness) {
  for (double v : {alignment, runnability, completeness}) {
    if (v < 0.0 || v > 10.0) {
      throw InvalidArgument("rubric component out of range [0,10]: " + std::to_string(v));
    }
  }
  return round_half_up_2((alignment + runnability + completeness) / 3.0);
}

nlohmann::json to_json(const EvaluationReport& report) {
  nlohmann::json improvements = nlohmann::json::array();
  for (const Improvement& imp : report.improvements) {
    improvements.push_back(nlohmann::json{
        {"test_case_name", imp.test_case_name},
        {"details", imp.details},
    });
  }
  return nlohmann::json{
      {"alignment", report.alignment},
      {"runnability", report.runnability},
      {"completeness", report.completeness},
      {"missing_threats", report.missing_threats},
      {"improvements", std::move(improvements)},
      {"breakdown", report.breakdown},
  };
}

namespace {

int clamp_score(const nlohmann::json& j, const char* field, std::vector<std::string>* warnings) {
  if (!j.contains(field) || !j.at(field).is_number()) {
    throw OutputParseError(std::string("report missing numeric field \"") + field + "\"");
  }
  double raw = j.at(field).get<double>();
  int score = static_cast<int>(std::llround(raw));
  if (score < 0 || score > 100) {
    int clamped = std::clamp(score, 0, 100);
    if (warnings) {
      warnings->push_back(std::string(field) + " score " + std::to_string(score) +
                          " clamped to " + std::to_string(clamped));
    }
    return clamped;
  }
  return score;
}

}  // namespace

EvaluationReport report_from_json(const nlohmann::json& j, std::vector<std::string>* warnings) {
  if (!j.is_object()) throw OutputParseError("report must be a JSON object");
  EvaluationReport report;
  report.alignment = clamp_score(j, "alignment", warnings);
  report.runnability = clamp_score(j, "runnability", warnings);
  report.completeness = clamp_score(j, "completeness", warnings);

  if (!j.contains("missing_threats") || !j.at("missing_threats").is_array()) {
    throw OutputParseError("report missing \"missing_threats\" array");
  }
  for (const auto& t : j.at("missing_threats")) {
    if (!t.is_string()) throw OutputParseError("missing_threats entries must be strings");
    report.missing_threats.push_back(t.get<std::string>());
  }

  if (j.contains("improvements")) {
    if (!j.at("improvements").is_array()) {
      throw OutputParseError("\"improvements\" must be an array");
    }
    for (const auto& imp : j.at("improvements")) {
      if (!imp.is_object() || !imp.contains("test_case_name") ||
          !imp.at("test_case_name").is_string()) {
        throw OutputParseError("improvement entries need a \"test_case_name\" string");
      }
      Improvement out;
      out.test_case_name = imp.at("test_case_name").get<std::string>();
      if (imp.contains("details")) {
        if (!imp.at("details").is_array()) {
          throw OutputParseError("improvement \"details\" must be an array");
        }
        for (const auto& d : imp.at("details")) {
          if (!d.is_string()) throw OutputParseError("improvement details must be strings");
          out.details.push_back(d.get<std::string>());
        }
      }
      report.improvements.push_back(std::move(out));
    }
  }
  if (j.contains("breakdown") && j.at("breakdown").is_string()) {
    report.breakdown = j.at("breakdown").get<std::string>();
  }
  return report;
}

EvaluationReport parse_evaluation(const std::string& raw, std::vector<std::string>* warnings) {
  std::string text = strip_code_fence(raw);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw OutputParseError(std::string("judge reply is not valid JSON: ") + e.what());
  }
  return report_from_json(j, warnings);
}

std::optional<std::string> evaluation_reply_validator(const std::string& text) {
  try {
    parse_evaluation(text, nullptr);
    return std::nullopt;
  } catch (const OutputParseError& e) {
    return std::string(e.what());
  }
}

namespace {

ChatRequest make_judge_request(const AttackTree& tree, const std::vector<TestCase>& cases,
                               std::size_t chunk_index, std::size_t chunk_count,
                               std::size_t total_cases) {
  std::ostringstream system;
  system << "You are a security test reviewer. Score the test suite against the attack tree in "
            "three categories on a 0-100 integer scale:\n"
            "- alignment: how specifically the cases address the tree's threats, whether "
            "advanced attack aspects are covered, and the variety across the tree.\n"
            "- runnability: whether the test code is complete and executable as written, with "
            "no placeholders and no steps that silently pass.\n"
            "- completeness: setup and teardown procedures, documentation quality, and whether "
            "referenced files, endpoints, and resources are provisioned.\n\n"
            "Also list missing threats (attack-tree aspects no case covers) and concrete "
            "per-case improvement suggestions.\n\n"
            "Reply with a single JSON object, no commentary and no code fences:\n"
            "{\"alignment\": 0, \"runnability\": 0, \"completeness\": 0, "
            "\"missing_threats\": [\"...\"], "
            "\"improvements\": [{\"test_case_name\": \"...\", \"details\": [\"...\"]}], "
            "\"breakdown\": \"...\"}\n"
            "The breakdown field must explain in detail how each score was calculated.";

  std::ostringstream user;
  user << "## Attack tree\n" << serialize(tree);
  user << "\n## Test cases";
  if (chunk_count > 1) {
    user << " (chunk " << (chunk_index + 1) << " of " << chunk_count << ", " << total_cases
         << " cases total)";
  }
  user << "\n";
  nlohmann::json arr = nlohmann::json::array();
  for (const TestCase& tc : cases) arr.push_back(to_json(tc));
  user << arr.dump(2) << "\n";

  ChatRequest req;
  req.tag = "judge";
  req.messages.push_back({Role::system, system.str()});
  req.messages.push_back({Role::user, user.str()});
  return req;
}

}  // namespace

std::vector<ChatRequest> build_judge_prompts(const TestSuite& suite, const AttackTree& tree,
                                             std::size_t budget_chars) {
  if (suite.test_cases.empty()) {
    throw InvalidArgument("cannot judge an empty test suite");
  }
  ChatRequest whole = make_judge_request(tree, suite.test_cases, 0, 1, suite.test_cases.size());
  std::size_t total = 0;
  for (const ChatMessage& m : whole.messages) total += m.content.size();
  if (total <= budget_chars) return {whole};

  constexpr std::size_t kChunkSize = 10;
  std::size_t chunk_count = (suite.test_cases.size() + kChunkSize - 1) / kChunkSize;
  std::vector<ChatRequest> out;
  for (std::size_t c = 0; c < chunk_count; ++c) {
    std::size_t begin = c * kChunkSize;
    std::size_t end = std::min(begin + kChunkSize, suite.test_cases.size());
    std::vector<TestCase> chunk(suite.test_cases.begin() + static_cast<std::ptrdiff_t>(begin),
                                suite.test_cases.begin() + static_cast<std::ptrdiff_t>(end));
    out.push_back(make_judge_request(tree, chunk, c, chunk_count, suite.test_cases.size()));
  }
  return out;
}

EvaluationReport merge_reports(const std::vector<EvaluationReport>& reports) {
  if (reports.empty()) throw InvalidArgument("cannot merge zero reports");
  EvaluationReport merged = reports.front();
  std::set<std::string> seen_threats(merged.missing_threats.begin(),
                                     merged.missing_threats.end());
  for (std::size_t i = 1; i < reports.size(); ++i) {
    const EvaluationReport& r = reports[i];
    merged.alignment = std::min(merged.alignment, r.alignment);
    merged.runnability = std::min(merged.runnability, r.runnability);
    merged.completeness = std::min(merged.completeness, r.completeness);
    for (const std::string& t : r.missing_threats) {
      if (seen_threats.insert(t).second) merged.missing_threats.push_back(t);
    }
    for (const Improvement& imp : r.improvements) {
      auto match = std::find_if(merged.improvements.begin(), merged.improvements.end(),
                                [&](const Improvement& existing) {
                                  return normalize_label(existing.test_case_name) ==
                                         normalize_label(imp.test_case_name);
                                });
      if (match == merged.improvements.end()) {
        merged.improvements.push_back(imp);
      } else {
        for (const std::string& d : imp.details) {
          if (std::find(match->details.begin(), match->details.end(), d) ==
              match->details.end()) {
            match->details.push_back(d);
          }
        }
      }
    }
    if (!r.breakdown.empty()) {
      if (!merged.breakdown.empty()) merged.breakdown += "\n---\n";
      merged.breakdown += r.breakdown;
    }
  }
  return merged;
}

bool meets_threshold(const EvaluationReport& report, int threshold) {
  return report.alignment > threshold && report.runnability > threshold &&
         report.completeness > threshold;
}

RefinementInput to_refinement_input(const EvaluationReport& report, const TestSuite& suite,
                                    std::vector<std::string>* warnings) {
  RefinementInput input;
  std::set<std::string> listed;
  for (const Improvement& imp : report.improvements) {
    std::string needle = normalize_label(imp.test_case_name);
    auto match = std::find_if(suite.test_cases.begin(), suite.test_cases.end(),
                              [&](const TestCase& tc) {
                                return normalize_label(tc.name) == needle;
                              });
    if (match == suite.test_cases.end()) {
      if (warnings) {
        warnings->push_back("improvement references unknown test case \"" + imp.test_case_name +
                            "\"");
      }
      continue;
    }
    if (listed.insert(needle).second) input.test_cases_to_modify.push_back(*match);
    input.improvements_map.emplace_back(imp.test_case_name, imp.details);
  }
  input.missing_vulnerabilities = report.missing_threats;
  return input;
}

}  // namespace staf
