#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "staf/llm_provider.hpp"

namespace staf {

enum class NodeType { goal, vector, subvector, step };

std::string node_type_name(NodeType type);
NodeType node_type_from_name(const std::string& name);

struct AttackNode {
  std::string id;
  std::string name;
  std::string description;
  NodeType node_type = NodeType::step;
  std::vector<AttackNode> children;
  std::map<std::string, std::string> attributes;
};

/// Validated hierarchical threat model. The root is the attacker goal.
struct AttackTree {
  AttackNode root;
  std::string source_name;
  std::string schema_version = "1";
};

struct ThreatProfile {
  std::string threat_id;
  std::string title;
  std::string affected_component;
  std::string impact;
  std::vector<std::string> preconditions;
  std::string access_level;
  std::string complexity;
  std::vector<std::string> source_node_ids;
};

struct AnalysisResult {
  std::vector<ThreatProfile> threats;
  std::vector<std::string> keywords;   // deduplicated, lowercase
  std::vector<std::string> protocols;  // in registry order
};

nlohmann::json to_json(const ThreatProfile& threat);
ThreatProfile threat_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AnalysisResult& analysis);
AnalysisResult analysis_from_json(const nlohmann::json& j);

/// Parse and validate attack-tree JSON (schema version 1).
/// Throws MalformedInput for non-JSON and SchemaViolation for structural
/// problems; messages name the offending node id or path.
AttackTree parse_attack_tree(std::string_view raw);

nlohmann::json to_json(const AttackTree& tree);
std::string serialize(const AttackTree& tree);

/// Root-to-leaf node-id paths, depth-first in stored child order.
std::vector<std::vector<std::string>> enumerate_attack_paths(const AttackTree& tree);

const std::vector<std::string>& default_protocol_registry();

/// Registry entries appearing as case-insensitive whole-word matches in any
/// node name or description, in registry order, deduplicated.
std::vector<std::string> detect_protocols(const AttackTree& tree,
                                          std::span<const std::string> registry);
std::vector<std::string> detect_protocols(const AttackTree& tree);

/// Provider-free analysis: one ThreatProfile per leaf, keywords tokenized
/// from node names and descriptions.
AnalysisResult fallback_analysis(const AttackTree& tree);

/// LLM-backed analysis with one structured prompt; degrades to
/// fallback_analysis when the provider fails or the reply stays unparseable.
AnalysisResult analyze_tree(const AttackTree& tree, ChatProvider& provider);

/// Collect const pointers to all nodes (pre-order) / all leaves.
std::vector<const AttackNode*> all_nodes(const AttackTree& tree);
std::vector<const AttackNode*> leaf_nodes(const AttackTree& tree);

}  // namespace staf
