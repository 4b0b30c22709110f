#include "staf/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "staf/errors.hpp"
#include "staf/text.hpp"

namespace staf {

std::string output_mode_name(OutputMode mode) {
  switch (mode) {
    case OutputMode::tests: return "tests";
    case OutputMode::ltl: return "ltl";
    case OutputMode::both: return "both";
  }
  return "tests";
}

OutputMode output_mode_from_name(const std::string& name) {
  if (name == "tests") return OutputMode::tests;
  if (name == "ltl") return OutputMode::ltl;
  if (name == "both") return OutputMode::both;
  throw SchemaViolation("unknown output_mode \"" + name + "\"");
}

void PipelineConfig::validate() const {
  if (k < 1) throw SchemaViolation("k must be >= 1");
  if (min_relevant < 0) throw SchemaViolation("min_relevant must be >= 0");
  if (max_cycles < 0) throw SchemaViolation("max_cycles must be >= 0");
  if (score_threshold < 0 || score_threshold > 100) {
    throw SchemaViolation("score_threshold must lie in [0,100]");
  }
  if (context_budget_chars < 1) throw SchemaViolation("context_budget_chars must be >= 1");
}

nlohmann::json PipelineConfig::to_json() const {
  return nlohmann::json{
      {"k", k},
      {"min_relevant", min_relevant},
      {"max_cycles", max_cycles},
      {"score_threshold", score_threshold},
      {"context_budget_chars", context_budget_chars},
      {"protocol_model_paths", protocol_model_paths},
      {"enable_mealy", enable_mealy},
      {"output_mode", output_mode_name(output_mode)},
  };
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaViolation("config must be a JSON object");
  static const std::set<std::string> kKnown = {
      "k",ableeee "min_relevant", "max_cycles", "score_threshold", "context_budget_chars",
      "protocol_model_paths", "enable_mealy", "output_mode"};
  for (const auto& [key, value] : j.items()) {
    if (kKnown.count(key) == 0) {
      throw SchemaViolation("unknown config key \"" + key + "\"");
    }
  }
  PipelineConfig config;
  config.k = j.value("k", config.k);
  config.min_relevant = j.value("min_relevant", config.min_relevant);
  config.max_cycles = j.value("max_cycles", config.max_cycles);
  config.score_threshold = j.value("score_threshold", config.score_threshold);
  config.context_budget_chars = j.value("context_budget_chars", config.context_budget_chars);
  if (j.contains("protocol_model_paths")) {
    if (!j.at("protocol_model_paths").is_object()) {
      throw SchemaViolation("protocol_model_paths must be an object");
    }
    for (const auto& [proto, path] : j.at("protocol_model_paths").items()) {
      if (!path.is_string()) throw SchemaViolation("protocol model paths must be strings");
      config.protocol_model_paths[proto] = path.get<std::string>();
    }
  }
  config.enable_mealy = j.value("enable_mealy", config.enable_mealy);
  if (j.contains("output_mode")) {
    if (!j.at("output_mode").is_string()) throw SchemaViolation("output_mode must be a string");
    config.output_mode = output_mode_from_name(j.at("output_mode").get<std::string>());
  }
  config.validate();
  return config;
}

std::string stage_name(Stage stage) {
  switch (stage) {
    case Stage::analyzing: return "analyzing";
    case Stage::retrieving: return "retrieving";
    case Stage::grading: return "grading";
    case Stage::web_searching: return "web_searching";
    case Stage::generating: return "generating";
    case Stage::evaluating: return "evaluating";
    case Stage::regenerating: return "regenerating";
    case Stage::done: return "done";
    case Stage::failed: return "failed";
  }
  return "failed";
}

Stage stage_from_name(const std::string& name) {
  for (Stage s : {Stage::analyzing, Stage::retrieving, Stage::grading, Stage::web_searching,
                  Stage::generating, Stage::evaluating, Stage::regenerating, Stage::done,
                  Stage::failed}) {
    if (stage_name(s) == name) return s;
  }
  throw SchemaViolation("unknown stage \"" + name + "\"");
}

bool stage_edge_allowed(Stage from, Stage to) {
  if (to == Stage::failed) return from != Stage::done && from != Stage::failed;
  switch (from) {
    case Stage::analyzing: return to == Stage::retrieving;
    case Stage::retrieving: return to == Stage::grading;
    case Stage::grading: return to == Stage::web_searching || to == Stage::generating;
    case Stage::web_searching: return to == Stage::generating;
    case Stage::generating: return to == Stage::evaluating;
    case Stage::evaluating:
      return to == Stage::regenerating || to == Stage::done || to == Stage::generating;
    case Stage::regenerating: return to == Stage::evaluating;
    case Stage::done:
    case Stage::failed: return false;
  }
  return false;
}

namespace {

std::string now_iso8601() {
  using namespace std::chrono;
  auto now = system_clock::now();
  std::time_t t = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  auto ms = duration_cast<milliseconds>(now.time_since_epoch()) % 1000;
  std::ostringstream out;
  out << buf << "." << std::setw(3) << std::setfill('0') << ms.count() << "Z";
  return out.str();
}

}  // namespace

void RunState::transition(Stage next, const std::string& message) {
  if (!stage_edge_allowed(stage, next)) {
    throw Error("illegal stage transition " + stage_name(stage) + " -> " + stage_name(next));
  }
  stage = next;
  event_log.push_back({now_iso8601(), next, message});
}

void RunState::note(const std::string& message) {
  event_log.push_back({now_iso8601(), stage, message});
}

std::string generate_run_id(const AttackTree& tree) {
  static std::atomic<std::uint64_t> counter{0};
  auto now = std::chrono::steady_clock::now().time_since_epoch().count();
  std::string seed = serialize(tree) + "#" + std::to_string(counter.fetch_add(1)) + "#" +
                     std::to_string(now);
  return "run-" + fnv1a64_hex(seed).substr(0, 12);
}

namespace {

struct RunContext {
  PipelineConfig config;
  PipelineEnv env;
  std::filesystem::path dir;
  RunState state;
  std::map<std::string, std::string> checksums;  // artifact filename -> fnv hex
  std::vector<std::string> warnings;
  std::string failure;

  void save_state() const {
    nlohmann::json j{
        {"run_id", state.run_id},
        {"stage", stage_name(state.stage)},
        {"cycle", state.cycle},
        {"config", config.to_json()},
        {"checksums", checksums},
        {"warnings", warnings},
    };
    if (!failure.empty()) j["failure"] = failure;
    std::ofstream out(dir / "state.json");
    out << j.dump(2) << "\n";
  }

  void log_event(const std::string& message) {
    std::ofstream out(dir / "events.log", std::ios::app);
    out << now_iso8601() << " " << stage_name(state.stage) << " " << message << "\n";
  }

  void enter(Stage next, const std::string& message) {
    state.transition(next, message);
    log_event(message);
    save_state();
  }

  void warn(const std::string& message) {
    warnings.push_back(message);
    state.note(message);
    log_event("warning: " + message);
  }

  void write_artifact(const std::string& name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary);
    out << content;
    if (!out) throw Error("failed to write artifact " + name);
    out.close();
    checksums[name] = fnv1a64_hex(content);
    save_state();
  }

  /// Content of a previously persisted artifact, if its checksum is on
  /// record and still matches. A recorded artifact whose bytes changed is
  /// corruption; a recorded-but-deleted one is recomputed.
  std::optional<std::string> read_artifact(const std::string& name) const {
    auto it = checksums.find(name);
    if (it == checksums.end()) return std::nullopt;
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) return std::nullopt;
    std::stringstream buf;
    buf << in.rdbuf();
    std::string content = buf.str();
    if (fnv1a64_hex(content) != it->second) {
      throw CorruptArtifacts("artifact " + name + " does not match its recorded checksum");
    }
    return content;
  }

  bool has_artifact(const std::string& name) const {
    auto it = checksums.find(name);
    if (it == checksums.end()) return false;
    return std::filesystem::exists(dir / name);
  }
};

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

nlohmann::json parse_artifact_json(const std::string& name, const std::string& content) {
  try {
    return nlohmann::json::parse(content);
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptArtifacts("artifact " + name + " is not valid JSON: " + e.what());
  }
}

std::string suite_file(int cycle) { return "suite.cycle" + std::to_string(cycle) + ".json"; }
std::string report_file(int cycle) { return "report.cycle" + std::to_string(cycle) + ".json"; }
std::string properties_file(int cycle) {
  return "properties.cycle" + std::to_string(cycle) + ".json";
}
std::string property_report_file(int cycle) {
  return "property_report.cycle" + std::to_string(cycle) + ".json";
}

AnalysisResult stage_analysis(RunContext& ctx, const AttackTree& tree) {
  if (auto stored = ctx.read_artifact("analysis.json")) {
    return analysis_from_json(parse_artifact_json("analysis.json", *stored));
  }
  AnalysisResult analysis = analyze_tree(tree, *ctx.env.provider);
  ctx.write_artifact("analysis.json", dump_json(to_json(analysis)));
  return analysis;
}

std::vector<Document> stage_retrieval(RunContext& ctx, const RetrievalQuery& query) {
  if (auto stored = ctx.read_artifact("retrieval.json")) {
    std::vector<Document> docs;
    for (const auto& d : parse_artifact_json("retrieval.json", *stored)) {
      docs.push_back(document_from_json(d));
    }
    return docs;
  }
  std::vector<Document> docs = ctx.env.store->retrieve_top_k(query);
  nlohmann::json arr = nlohmann::json::array();
  for (const Document& d : docs) arr.push_back(to_json(d));
  ctx.write_artifact("retrieval.json", dump_json(arr));
  return docs;
}

std::vector<GradedDocument> stage_grading(RunContext& ctx, const std::vector<Document>& docs,
                                          const AnalysisResult& analysis) {
  if (auto stored = ctx.read_artifact("graded.json")) {
    std::vector<GradedDocument> graded;
    for (const auto& g : parse_artifact_json("graded.json", *stored)) {
      graded.push_back(graded_from_json(g));
    }
    return graded;
  }
  std::vector<GradedDocument> graded = grade_documents(docs, analysis.threats,
                                                       *ctx.env.provider);
  nlohmann::json arr = nlohmann::json::array();
  for (const GradedDocument& g : graded) arr.push_back(to_json(g));
  ctx.write_artifact("graded.json", dump_json(arr));
  return graded;
}

std::vector<Document> stage_web_search(RunContext& ctx, const RetrievalQuery& query,
                                       const AnalysisResult& analysis) {
  if (auto stored = ctx.read_artifact("websearch.json")) {
    std::vector<Document> docs;
    for (const auto& d : parse_artifact_json("websearch.json", *stored)) {
      docs.push_back(document_from_json(d));
    }
    return docs;
  }
  std::vector<std::string> search_warnings;
  std::vector<Document> docs = web_search(query, analysis.protocols, *ctx.env.search,
                                          &search_warnings);
  for (const std::string& w : search_warnings) ctx.warn(w);
  nlohmann::json arr = nlohmann::json::array();
  for (const Document& d : docs) arr.push_back(to_json(d));
  ctx.write_artifact("websearch.json", dump_json(arr));
  return docs;
}

std::optional<std::string> mealy_prompt_text(RunContext& ctx, const AnalysisResult& analysis) {
  if (!ctx.config.enable_mealy) return std::nullopt;
  for (const std::string& proto : analysis.protocols) {
    auto it = ctx.config.protocol_model_paths.find(proto);
    if (it == ctx.config.protocol_model_paths.end()) continue;
    std::ifstream in(it->second);
    if (!in) {
      throw MalformedInput("protocol model file not readable: " + it->second);
    }
    std::stringstream buf;
    buf << in.rdbuf();
    MealyMachine machine = parse_dot(buf.str());
    return render_for_prompt(machine);
  }
  return std::nullopt;
}

EvaluationReport judge_suite(RunContext& ctx, const TestSuite& suite, const AttackTree& tree) {
  std::vector<ChatRequest> prompts = build_judge_prompts(suite, tree);
  std::vector<EvaluationReport> reports;
  for (ChatRequest& req : prompts) {
    StructuredCompletion completion =
        complete_structured(*ctx.env.provider, req, evaluation_reply_validator);
    std::vector<std::string> parse_warnings;
    reports.push_back(parse_evaluation(completion.text, &parse_warnings));
    for (const std::string& w : parse_warnings) ctx.warn(w);
  }
  return merge_reports(reports);
}

/// Shared judge/refine loop driver. Distinct artifact names and provider
/// prompts per loop come in through the hooks.
struct LoopHooks {
  std::function<std::string(int)> artifact_for_cycle;
  std::function<std::string(int)> report_for_cycle;
  std::function<EvaluationReport(int)> judge;
  std::function<bool(const EvaluationReport&, int)> refine;  // false = stop loop
};

std::vector<EvaluationReport> run_refinement_loop(RunContext& ctx, const LoopHooks& hooks) {
  std::vector<EvaluationReport> reports;
  int cycle = 0;
  while (true) {
    ctx.state.cycle = cycle;
    ctx.enter(Stage::evaluating, "judging cycle " + std::to_string(cycle));
    EvaluationReport report;
    if (auto stored = ctx.read_artifact(hooks.report_for_cycle(cycle))) {
      report = report_from_json(parse_artifact_json(hooks.report_for_cycle(cycle), *stored),
                                nullptr);
    } else {
      report = hooks.judge(cycle);
      ctx.write_artifact(hooks.report_for_cycle(cycle), dump_json(to_json(report)));
    }
    reports.push_back(report);

    if (meets_threshold(report, ctx.config.score_threshold)) {
      ctx.state.note("scores above threshold after cycle " + std::to_string(cycle));
      break;
    }
    if (cycle >= ctx.config.max_cycles) {
      ctx.warn("stopping at max cycles (" + std::to_string(ctx.config.max_cycles) +
               ") without meeting the score threshold");
      break;
    }
    ctx.enter(Stage::regenerating, "refining into cycle " + std::to_string(cycle + 1));
    if (!hooks.refine(report, cycle)) break;
    ++cycle;
  }
  return reports;
}

}  // namespace

namespace {

RunResult execute(RunContext& ctx, const AttackTree& tree) {
  RunResult result;
  result.run_id = ctx.state.run_id;
  result.artifacts_dir = ctx.dir;

  if (!ctx.has_artifact("tree.json")) {
    ctx.write_artifact("tree.json", serialize(tree));
  }
  ctx.log_event("run started");
  AnalysisResult analysis = stage_analysis(ctx, tree);

  ctx.enter(Stage::retrieving, "retrieving top-" + std::to_string(ctx.config.k) + " documents");
  RetrievalQuery query;
  query.keywords = analysis.keywords;
  {
    std::string context_text;
    for (const ThreatProfile& t : analysis.threats) {
      if (!context_text.empty()) context_text += "; ";
      context_text += t.title;
    }
    query.threat_context = context_text;
  }
  query.k = ctx.config.k;
  std::vector<Document> docs = stage_retrieval(ctx, query);

  ctx.enter(Stage::grading, "grading " + std::to_string(docs.size()) + " documents");
  std::vector<GradedDocument> graded = stage_grading(ctx, docs, analysis);

  std::vector<Document> web_docs;
  if (needs_web_search(graded, ctx.config.min_relevant)) {
    ctx.enter(Stage::web_searching, "fewer than " + std::to_string(ctx.config.min_relevant) +
                                        " relevant documents; falling back to web search");
    web_docs = stage_web_search(ctx, query, analysis);
  }

  ContextBundle context = assemble_context(
      graded, web_docs, static_cast<std::size_t>(ctx.config.context_budget_chars));
  std::optional<std::string> mealy_text = mealy_prompt_text(ctx, analysis);

  ctx.enter(Stage::generating, "generating");
  if (context.low_context()) {
    ctx.warn("no usable context documents; generation proceeds low-context");
  }

  const bool want_tests = ctx.config.output_mode != OutputMode::ltl;
  const bool want_ltl = ctx.config.output_mode != OutputMode::tests;

  if (want_tests) {
    TestSuite suite;
    if (auto stored = ctx.read_artifact(suite_file(0))) {
      suite = suite_from_json(parse_artifact_json(suite_file(0), *stored));
    } else {
      ChatRequest req = build_generation_prompt(analysis, context, mealy_text);
      StructuredCompletion completion =
          complete_structured(*ctx.env.provider, req, suite_reply_validator);
      ParsedSuite parsed = parse_test_suite(completion.text);
      for (const std::string& w : parsed.warnings) ctx.warn(w);
      suite = std::move(parsed.suite);
      suite.generation_cycle = 0;
      suite.source_tree_name = tree.source_name;
      ctx.write_artifact(suite_file(0), serialize(suite));
    }

    LoopHooks hooks;
    hooks.report_for_cycle = report_file;
    hooks.judge = [&](int) { return judge_suite(ctx, suite, tree); };
    hooks.refine = [&](const EvaluationReport& report, int cycle) {
      if (auto stored = ctx.read_artifact(suite_file(cycle + 1))) {
        suite = suite_from_json(parse_artifact_json(suite_file(cycle + 1), *stored));
        return true;
      }
      std::vector<std::string> map_warnings;
      RefinementInput input = to_refinement_input(report, suite, &map_warnings);
      for (const std::string& w : map_warnings) ctx.warn(w);
      ChatRequest req;
      try {
        req = build_refinement_prompt(input);
      } catch (const EmptyRefinement&) {
        ctx.warn("judge scored below threshold but offered no actionable feedback; stopping");
        return false;
      }
      StructuredCompletion completion =
          complete_structured(*ctx.env.provider, req, suite_reply_validator);
      ParsedSuite regenerated = parse_test_suite(completion.text);
      for (const std::string& w : regenerated.warnings) ctx.warn(w);
      std::vector<std::string> merge_warnings;
      TestSuite merged = merge_refined(suite, regenerated.suite, &merge_warnings);
      for (const std::string& w : merge_warnings) ctx.warn(w);
      merged.source_tree_name = tree.source_name;
      suite = std::move(merged);
      ctx.write_artifact(suite_file(suite.generation_cycle), serialize(suite));
      return true;
    };
    result.reports = run_refinement_loop(ctx, hooks);
    result.final_suite = suite;

    if (auto stored = ctx.read_artifact("lint.json")) {
      result.lint = parse_artifact_json("lint.json", *stored);
    } else {
      result.lint = to_json(lint_suite(suite), suite);
      ctx.write_artifact("lint.json", dump_json(result.lint));
    }
  }

  if (want_ltl) {
    if (want_tests) {
      // Stage graph: the property pass re-enters generation after the test
      // loop's final evaluation.
      ctx.enter(Stage::generating, "generating properties");
    } else {
      ctx.state.note("generating properties");
    }
    std::vector<NamedProperty> props;
    if (auto stored = ctx.read_artifact(properties_file(0))) {
      props = parse_property_list(stored->c_str(), nullptr);
    } else {
      ChatRequest req = build_property_prompt(analysis, context, mealy_text);
      StructuredCompletion completion =
          complete_structured(*ctx.env.provider, req, property_reply_validator);
      std::vector<std::string> parse_warnings;
      props = parse_property_list(completion.text, &parse_warnings);
      for (const std::string& w : parse_warnings) ctx.warn(w);
      ctx.write_artifact(properties_file(0), dump_json(to_json(props)));
    }

    LoopHooks hooks;
    hooks.report_for_cycle = property_report_file;
    hooks.judge = [&](int) {
      std::vector<ChatRequest> prompts = {build_property_judge_prompt(props, tree)};
      StructuredCompletion completion =
          complete_structured(*ctx.env.provider, prompts.front(), evaluation_reply_validator);
      std::vector<std::string> parse_warnings;
      EvaluationReport report = parse_evaluation(completion.text, &parse_warnings);
      for (const std::string& w : parse_warnings) ctx.warn(w);
      return report;
    };
    hooks.refine = [&](const EvaluationReport& report, int cycle) {
      if (auto stored = ctx.read_artifact(properties_file(cycle + 1))) {
        props = parse_property_list(stored->c_str(), nullptr);
        return true;
      }
      ChatRequest req;
      try {
        req = build_property_refinement_prompt(props, report);
      } catch (const EmptyRefinement&) {
        ctx.warn("property judge offered no actionable feedback; stopping");
        return false;
      }
      StructuredCompletion completion =
          complete_structured(*ctx.env.provider, req, property_reply_validator);
      std::vector<std::string> parse_warnings;
      std::vector<NamedProperty> regenerated = parse_property_list(completion.text,
                                                                   &parse_warnings);
      for (const std::string& w : parse_warnings) ctx.warn(w);
      std::vector<std::string> merge_warnings;
      props = merge_properties(props, regenerated, &merge_warnings);
      for (const std::string& w : merge_warnings) ctx.warn(w);
      ctx.write_artifact(properties_file(cycle + 1), dump_json(to_json(props)));
      return true;
    };
    std::vector<EvaluationReport> prop_reports = run_refinement_loop(ctx, hooks);
    if (want_tests) {
      result.property_reports = std::move(prop_reports);
    } else {
      result.reports = std::move(prop_reports);
    }
    result.properties = props;
    if (!ctx.has_artifact("properties.json")) {
      ctx.write_artifact("properties.json", dump_json(to_json(props)));
    }
  }

  ctx.enter(Stage::done, "run complete");
  result.final_stage = Stage::done;
  result.warnings = ctx.warnings;
  return result;
}

RunResult execute_guarded(RunContext& ctx, const AttackTree& tree) {
  try {
    return execute(ctx, tree);
  } catch (const std::exception& e) {
    ctx.failure = e.what();
    if (ctx.state.stage != Stage::failed && ctx.state.stage != Stage::done) {
      ctx.state.transition(Stage::failed, e.what());
      ctx.log_event(std::string("failed: ") + e.what());
    }
    ctx.save_state();
    throw;
  }
}

}  // namespace

RunResult run_pipeline(const AttackTree& tree, const PipelineConfig& config,
                       const PipelineEnv& env, std::string run_id) {
  config.validate();
  if (env.provider == nullptr || env.store == nullptr || env.search == nullptr) {
    throw InvalidArgument("pipeline environment is missing a collaborator");
  }
  if (run_id.empty()) run_id = generate_run_id(tree);

  RunContext ctx;
  ctx.config = config;
  ctx.env = env;
  ctx.dir = env.runs_root / run_id;
  if (std::filesystem::exists(ctx.dir / "state.json")) {
    throw InvalidArgument("run directory already exists for id \"" + run_id +
                          "\"; use resume instead");
  }
  std::filesystem::create_directories(ctx.dir);
  ctx.state.run_id = run_id;
  ctx.save_state();
  return execute_guarded(ctx, tree);
}

nlohmann::json load_run_state(const std::filesystem::path& runs_root,
                              const std::string& run_id) {
  std::filesystem::path path = runs_root / run_id / "state.json";
  std::ifstream in(path);
  if (!in) throw UnknownRun("no persisted run \"" + run_id + "\"");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptArtifacts("state.json for run \"" + run_id + "\" is not valid JSON: " +
                           e.what());
  }
}

RunResult resume(const std::string& run_id, const PipelineEnv& env) {
  nlohmann::json state = load_run_state(env.runs_root, run_id);

  RunContext ctx;
  ctx.env = env;
  ctx.dir = env.runs_root / run_id;
  ctx.state.run_id = run_id;
  if (state.contains("config")) ctx.config = PipelineConfig::from_json(state.at("config"));
  if (state.contains("checksums") && state.at("checksums").is_object()) {
    for (const auto& [name, sum] : state.at("checksums").items()) {
      if (sum.is_string()) ctx.checksums[name] = sum.get<std::string>();
    }
  }
  if (state.contains("warnings") && state.at("warnings").is_array()) {
    for (const auto& w : state.at("warnings")) {
      if (w.is_string()) ctx.warnings.push_back(w.get<std::string>());
    }
  }

  auto stored_tree = ctx.read_artifact("tree.json");
  if (!stored_tree) throw CorruptArtifacts("run \"" + run_id + "\" has no usable tree.json");
  AttackTree tree = parse_attack_tree(*stored_tree);

  Stage persisted = stage_from_name(state.value("stage", std::string("analyzing")));
  if (persisted == Stage::done) {
    // Finished runs replay entirely from artifacts; no provider calls.
    ctx.log_event("returning stored result for finished run");
  } else {
    ctx.log_event("resuming from stage " + stage_name(persisted));
  }
  return execute_guarded(ctx, tree);
}

}  // namespace staf
