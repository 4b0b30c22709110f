#include "staf/attack_tree.hpp"

#include <set>
#include <unordered_set>

#include "staf/text.hpp"

namespace staf {

using nlohmann::json;

std::string node_type_name(NodeType type) {
  switch (type) {
    case NodeType::goal: return "goal";
    case NodeType::vector: return "vector";
    case NodeType::subvector: return "subvector";
    case NodeType::step: return "step";
  }
  return "step";
}

NodeType node_type_from_name(const std::string& name) {
  if (name == "goal") return NodeType::goal;
  if (name == "vector") return NodeType::vector;
  if (name == "subvector") return NodeType::subvector;
  if (name == "step") return NodeType::step;
  throw SchemaViolation("unknown node_type \"" + name + "\"");
}

namespace {

AttackNode parse_node(const json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaViolation("node at " + path + " must be an object");
  AttackNode node;
  for (const char* field : {"id", "name", "node_type"}) {
    if (!j.contains(field)) {
      throw SchemaViolation(std::string("missing field \"") + field + "\" at " + path);
    }
  }
  node.id = j.at("id").get<std::string>();
  node.name = j.at("name").get<std::string>();
  node.description = j.value("description", "");
  try {
    node.node_type = node_type_from_name(j.at("node_type").get<std::string>());
  } catch (const SchemaViolation& e) {
    throw SchemaViolation(std::string(e.what()) + " at node \"" + node.id + "\"");
  }
  if (j.contains("attributes")) {
    for (auto& [k, v] : j.at("attributes").items()) {
      node.attributes[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  if (j.contains("children")) {
    const json& children = j.at("children");
    if (!children.is_array()) {
      throw SchemaViolation("\"children\" of node \"" + node.id + "\" must be an array");
    }
    std::size_t i = 0;
    for (const auto& child : children) {
      node.children.push_back(parse_node(child, path + ".children[" + std::to_string(i) + "]"));
      ++i;
    }
  }
  return node;
}

void validate_node(const AttackNode& node, std::set<std::string>& ids) {
  if (node.id.empty()) throw SchemaViolation("node with empty id (name \"" + node.name + "\")");
  if (!ids.insert(node.id).second) {
    throw SchemaViolation("duplicate id \"" + node.id + "\"");
  }
  if (node.node_type == NodeType::step && !node.children.empty()) {
    throw SchemaViolation("step node \"" + node.id + "\" must not have children");
  }
  for (const auto& child : node.children) validate_node(child, ids);
}

void collect_nodes(const AttackNode& node, std::vector<const AttackNode*>& out) {
  out.push_back(&node);
  for (const auto& child : node.children) collect_nodes(child, out);
}

json node_to_json(const AttackNode& node) {
  json j;
  j["id"] = node.id;
  j["name"] = node.name;
  j["description"] = node.description;
  j["node_type"] = node_type_name(node.node_type);
  j["children"] = json::array();
  for (const auto& child : node.children) j["children"].push_back(node_to_json(child));
  if (!node.attributes.empty()) j["attributes"] = node.attributes;
  return j;
}

void paths_dfs(const AttackNode& node, std::vector<std::string>& prefix,
               std::vector<std::vector<std::string>>& out) {
  prefix.push_back(node.id);
  if (node.children.empty()) {
    out.push_back(prefix);
  } else {
    for (const auto& child : node.children) paths_dfs(child, prefix, out);
  }
  prefix.pop_back();
}

}  // namespace

AttackTree parse_attack_tree(std::string_view raw) {
  json parsed;
  try {
    parsed = json::parse(raw);
  } catch (const json::parse_error& e) {
    throw MalformedInput(std::string("attack tree is not valid JSON: ") + e.what());
  }
  if (!parsed.is_object() || !parsed.contains("root")) {
    throw SchemaViolation("missing field \"root\" at top level");
  }
  AttackTree tree;
  tree.root = parse_node(parsed.at("root"), "root");
  tree.source_name = parsed.value("source_name", "");
  tree.schema_version = parsed.value("schema_version", "1");
  if (tree.schema_version != "1") {
    throw SchemaViolation("unsupported schema_version \"" + tree.schema_version + "\"");
  }
  if (tree.root.node_type != NodeType::goal) {
    throw SchemaViolation("root node \"" + tree.root.id + "\" must have node_type goal");
  }
  std::set<std::string> ids;
  validate_node(tree.root, ids);
  return tree;
}

json to_json(const AttackTree& tree) {
  json j;
  j["schema_version"] = tree.schema_version;
  j["source_name"] = tree.source_name;
  j["root"] = node_to_json(tree.root);
  return j;
}

std::string serialize(const AttackTree& tree) { return to_json(tree).dump(2) + "\n"; }

std::vector<const AttackNode*> all_nodes(const AttackTree& tree) {
  std::vector<const AttackNode*> out;
  collect_nodes(tree.root, out);
  return out;
}

std::vector<const AttackNode*> leaf_nodes(const AttackTree& tree) {
  std::vector<const AttackNode*> out;
  for (const AttackNode* node : all_nodes(tree)) {
    if (node->children.empty()) out.push_back(node);
  }
  return out;
}

std::vector<std::vector<std::string>> enumerate_attack_paths(const AttackTree& tree) {
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> prefix;
  paths_dfs(tree.root, prefix, out);
  return out;
}

const std::vector<std::string>& default_protocol_registry() {
  static const std::vector<std::string> kRegistry = {"UDS",      "CAN",      "ISO-TP", "DoIP",
                                                     "LIN",      "FlexRay",  "Ethernet"};
  return kRegistry;
}

std::vector<std::string> detect_protocols(const AttackTree& tree,
                                          std::span<const std::string> registry) {
  if (registry.empty()) throw InvalidArgument("protocol registry must not be empty");
  std::vector<std::string> found;
  const auto nodes = all_nodes(tree);
  for (const auto& protocol : registry) {
    for (const AttackNode* node : nodes) {
      if (contains_whole_word_ci(node->name, protocol) ||
          contains_whole_word_ci(node->description, protocol)) {
        found.push_back(protocol);
        break;
      }
    }
  }
  return found;
}

std::vector<std::string> detect_protocols(const AttackTree& tree) {
  return detect_protocols(tree, default_protocol_registry());
}

nlohmann::json to_json(const ThreatProfile& threat) {
  return nlohmann::json{
      {"threat_id", threat.threat_id},
      {"title", threat.title},
      {"affected_component", threat.affected_component},
      {"impact", threat.impact},
      {"preconditions", threat.preconditions},
      {"access_level", threat.access_level},
      {"complexity", threat.complexity},
      {"source_node_ids", threat.source_node_ids},
  };
}

namespace {

std::vector<std::string> string_list(const nlohmann::json& j, const char* field) {
  std::vector<std::string> out;
  if (!j.contains(field)) return out;
  if (!j.at(field).is_array()) {
    throw SchemaViolation(std::string("\"") + field + "\" must be an array of strings");
  }
  for (const auto& s : j.at(field)) {
    if (!s.is_string()) {
      throw SchemaViolation(std::string("\"") + field + "\" must be an array of strings");
    }
    out.push_back(s.get<std::string>());
  }
  return out;
}

}  // namespace

ThreatProfile threat_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaViolation("threat must be a JSON object");
  ThreatProfile t;
  t.threat_id = j.value("threat_id", std::string());
  t.title = j.value("title", std::string());
  t.affected_component = j.value("affected_component", std::string());
  t.impact = j.value("impact", std::string());
  t.preconditions = string_list(j, "preconditions");
  t.access_level = j.value("access_level", std::string());
  t.complexity = j.value("complexity", std::string());
  t.source_node_ids = string_list(j, "source_node_ids");
  return t;
}

nlohmann::json to_json(const AnalysisResult& analysis) {
  nlohmann::json threats = nlohmann::json::array();
  for (const ThreatProfile& t : analysis.threats) threats.push_back(to_json(t));
  return nlohmann::json{
      {"threats", std::move(threats)},
      {"keywords", analysis.keywords},
      {"protocols", analysis.protocols},
  };
}

AnalysisResult analysis_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("threats") || !j.at("threats").is_array()) {
    throw SchemaViolation("analysis must be an object with a \"threats\" array");
  }
  AnalysisResult out;
  for (const auto& t : j.at("threats")) out.threats.push_back(threat_from_json(t));
  out.keywords = string_list(j, "keywords");
  out.protocols = string_list(j, "protocols");
  return out;
}

AnalysisResult fallback_analysis(const AttackTree& tree) {
  AnalysisResult result;

  // One threat per leaf; preconditions are the ancestor names on the path.
  const auto paths = enumerate_attack_paths(tree);
  std::map<std::string, const AttackNode*> by_id;
  for (const AttackNode* node : all_nodes(tree)) by_id[node->id] = node;

  int n = 0;
  for (const auto& path : paths) {
    const AttackNode* leaf = by_id.at(path.back());
    ThreatProfile threat;
    threat.threat_id = "T" + std::to_string(++n);
    threat.title = leaf->name;
    if (auto it = leaf->attributes.find("component"); it != leaf->attributes.end()) {
      threat.affected_component = it->second;
    }
    threat.impact = leaf->description.empty() ? leaf->name : leaf->description;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      threat.preconditions.push_back(by_id.at(path[i])->name);
    }
    if (auto it = leaf->attributes.find("access-level"); it != leaf->attributes.end()) {
      threat.access_level = it->second;
    }
    if (auto it = leaf->attributes.find("complexity"); it != leaf->attributes.end()) {
      threat.complexity = it->second;
    }
    threat.source_node_ids.push_back(leaf->id);
    result.threats.push_back(std::move(threat));
  }

  std::unordered_set<std::string> seen;
  for (const AttackNode* node : all_nodes(tree)) {
    for (const auto& text : {node->name, node->description}) {
      for (auto& token : tokenize_keywords(text)) {
        if (seen.insert(token).second) result.keywords.push_back(token);
      }
    }
  }

  result.protocols = detect_protocols(tree);
  return result;
}

namespace {

const char* kAnalysisReplySchema =
    "Reply with a single JSON object, no prose, shaped as:\n"
    "{\n"
    "  \"threats\": [\n"
    "    {\"threat_id\": \"T1\", \"title\": \"...\", \"affected_component\": \"...\",\n"
    "     \"impact\": \"...\", \"preconditions\": [\"...\"], \"access_level\": \"...\",\n"
    "     \"complexity\": \"...\", \"source_node_ids\": [\"...\"]}\n"
    "  ],\n"
    "  \"keywords\": [\"...\"]\n"
    "}\n";

std::optional<std::string> analysis_validator(const std::string& raw) {
  json parsed;
  try {
    parsed = json::parse(strip_code_fence(raw));
  } catch (const json::parse_error& e) {
    return std::string("not valid JSON: ") + e.what();
  }
  if (!parsed.is_object()) return "top level must be a JSON object";
  if (!parsed.contains("threats") || !parsed.at("threats").is_array()) {
    return "missing \"threats\" array";
  }
  if (!parsed.contains("keywords") || !parsed.at("keywords").is_array()) {
    return "missing \"keywords\" array";
  }
  std::size_t i = 0;
  for (const auto& t : parsed.at("threats")) {
    if (!t.is_object() || !t.contains("title")) {
      return "threats[" + std::to_string(i) + "] needs a \"title\"";
    }
    ++i;
  }
  return std::nullopt;
}

}  // namespace

AnalysisResult analyze_tree(const AttackTree& tree, ChatProvider& provider) {
  ChatRequest request;
  request.tag = "analysis";
  request.messages.push_back(
      {Role::system,
       "You are an automotive security analyst. You extract concrete threats from attack "
       "trees: affected components, impact, preconditions, required access level, and "
       "exploit complexity. You also collect retrieval keywords for a security knowledge "
       "base."});
  request.messages.push_back(
      {Role::user, "Analyze this attack tree and extract one threat per distinct attack "
                   "vector or leaf step, plus search keywords.\n\nAttack tree JSON:\n" +
                       serialize(tree) + "\n" + kAnalysisReplySchema});

  std::string reply;
  try {
    reply = complete_structured(provider, request, analysis_validator).text;
  } catch (const ProviderError&) {
    return fallback_analysis(tree);
  } catch (const OutputParseError&) {
    return fallback_analysis(tree);
  }

  const json parsed = json::parse(strip_code_fence(reply));
  std::set<std::string> known_ids;
  for (const AttackNode* node : all_nodes(tree)) known_ids.insert(node->id);

  AnalysisResult result;
  std::set<std::string> used_threat_ids;
  int n = 0;
  for (const auto& t : parsed.at("threats")) {
    ThreatProfile threat;
    ++n;
    threat.threat_id = t.value("threat_id", "");
    if (threat.threat_id.empty() || !used_threat_ids.insert(threat.threat_id).second) {
      threat.threat_id = "T" + std::to_string(n);
      used_threat_ids.insert(threat.threat_id);
    }
    threat.title = t.at("title").get<std::string>();
    threat.affected_component = t.value("affected_component", "");
    threat.impact = t.value("impact", "");
    if (t.contains("preconditions") && t.at("preconditions").is_array()) {
      for (const auto& p : t.at("preconditions")) {
        if (p.is_string()) threat.preconditions.push_back(p.get<std::string>());
      }
    }
    threat.access_level = t.value("access_level", "");
    threat.complexity = t.value("complexity", "");
    if (t.contains("source_node_ids") && t.at("source_node_ids").is_array()) {
      for (const auto& id : t.at("source_node_ids")) {
        // Ids the model invented are dropped so the profile stays tied to the tree.
        if (id.is_string() && known_ids.count(id.get<std::string>())) {
          threat.source_node_ids.push_back(id.get<std::string>());
        }
      }
    }
    result.threats.push_back(std::move(threat));
  }

  std::unordered_set<std::string> seen;
  for (const auto& k : parsed.at("keywords")) {
    if (!k.is_string()) continue;
    std::string lower = to_lower(k.get<std::string>());
    if (!lower.empty() && seen.insert(lower).second) result.keywords.push_back(std::move(lower));
  }
  if (result.keywords.empty()) result.keywords = fallback_analysis(tree).keywords;

  result.protocols = detect_protocols(tree);
  return result;
}

}  // namespace staf
