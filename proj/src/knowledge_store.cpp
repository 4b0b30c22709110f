#include "staf/knowledge_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "staf/errors.hpp"
#include "staf/text.hpp"

namespace staf {

std::string doc_source_name(DocSource source) {
  return source == DocSource::web ? "web" : "vector_store";
}

DocSource doc_source_from_name(const std::string& name) {
  if (name == "web") return DocSource::web;
  if (name == "vector_store") return DocSource::vector_store;
  throw SchemaViolation("unknown document source \"" + name + "\"");
}

nlohmann::json to_json(const Document& doc) {
  nlohmann::json j{
      {"doc_id", doc.doc_id},       {"title", doc.title},
      {"body", doc.body},           {"description", doc.description},
      {"source", doc_source_name(doc.source)},
  };
  if (doc.origin_uri) j["origin_uri"] = *doc.origin_uri;
  return j;
}

Document document_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaViolation("document must be a JSON object");
  Document doc;
  for (const char* field : {"doc_id", "title", "body", "description", "source"}) {
    if (!j.contains(field) || !j.at(field).is_string()) {
      throw SchemaViolation(std::string("document missing string field \"") + field + "\"");
    }
  }
  doc.doc_id = j.at("doc_id").get<std::string>();
  doc.title = j.at("title").get<std::string>();
  doc.body = j.at("body").get<std::string>();
  doc.description = j.at("description").get<std::string>();
  doc.source = doc_source_from_name(j.at("source").get<std::string>());
  if (j.contains("origin_uri")) doc.origin_uri = j.at("origin_uri").get<std::string>();
  return doc;
}

nlohmann::json to_json(const GradedDocument& graded) {
  return nlohmann::json{
      {"document", to_json(graded.document)},
      {"relevant", graded.relevant},
      {"grade_rationale", graded.grade_rationale},
  };
}

GradedDocument graded_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("document")) {
    throw SchemaViolation("graded document must be an object with a \"document\" field");
  }
  GradedDocument g;
  g.document = document_from_json(j.at("document"));
  g.relevant = j.value("relevant", false);
  g.grade_rationale = j.value("grade_rationale", std::string());
  return g;
}

bool EmbeddingVector::zero() const {
  for (float v : values) {
    if (v != 0.0f) return false;
  }
  return true;
}

double EmbeddingVector::norm() const {
  double sum = 0.0;
  for (float v : values) sum += static_cast<double>(v) * v;
  return std::sqrt(sum);
}

EmbeddingVector embed(std::string_view text, std::size_t dim) {
  if (dim == 0) throw InvalidArgument("embedding dimension must be positive");
  EmbeddingVector vec;
  vec.values.assign(dim, 0.0f);
  for (const std::string& token : tokenize_keywords(text)) {
    vec.values[fnv1a64(token) % dim] += 1.0f;
  }
  double n = vec.norm();
  if (n > 0.0) {
    for (float& v : vec.values) v = static_cast<float>(v / n);
  }
  return vec;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.values.size() != b.values.size()) {
    throw InvalidArgument("cosine: dimension mismatch");
  }
  // Inputs are unit-length or zero, so the dot product is the cosine.
  double dot = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += static_cast<double>(a.values[i]) * b.values[i];
  }
  return dot;
}

KnowledgeStore::KnowledgeStore(EmbedFn embedder) : embedder_(std::move(embedder)) {
  if (!embedder_) embedder_ = [](std::string_view text) { return embed(text); };
}

Document KnowledgeStore::ingest(const std::string& title, const std::string& body,
                                ChatProvider* provider) {
  if (body.empty()) throw InvalidArgument("cannot ingest empty document body");
  std::string doc_id = fnv1a64_hex(title + '\0' + body).substr(0, 12);
  {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(doc_id);
    if (it != entries_.end()) return it->second.doc;
  }

  Document doc;
  doc.doc_id = doc_id;
  doc.title = title;
  doc.body = body;
  doc.source = DocSource::vector_store;

  if (provider != nullptr) {
    ChatRequest req;
    req.tag = "ingest-summary";
    req.messages.push_back(
        {Role::system,
         "You summarize documents for a security retrieval index. Reply with two or three plain "
         "sentences describing what the document covers. No preamble."});
    req.messages.push_back({Role::user, "Title: " + title + "\n\n" + body});
    try {
      doc.description = trim(provider->complete(req).text);
    } catch (const ProviderError&) {
      doc.description.clear();
    }
  }
  if (doc.description.empty()) {
    doc.description = body.substr(0, 400);
  }

  // Embeds the description too, so the generated summary steers retrieval.
  Entry entry{doc, embedder_(doc.title + "\n" + doc.description + "\n" + doc.body)};
  std::unique_lock lock(mutex_);
  entries_.emplace(doc_id, std::move(entry));
  return doc;
}

std::string KnowledgeStore::query_text(const RetrievalQuery& query) {
  std::string text;
  for (const std::string& kw : query.keywords) {
    if (!text.empty()) text += ' ';
    text += kw;
  }
  if (!query.threat_context.empty()) {
    if (!text.empty()) text += '\n';
    text += query.threat_context;
  }
  return text;
}

std::vector<Document> KnowledgeStore::retrieve_top_k(const RetrievalQuery& query) const {
  if (query.k <= 0) throw InvalidArgument("retrieval k must be positive");
  EmbeddingVector qvec = embedder_(query_text(query));
  if (qvec.zero()) return {};

  struct Scored {
    double score;
    const Entry* entry;
  };
  std::vector<Scored> scored;
  std::shared_lock lock(mutex_);
  scored.reserve(entries_.size());
  for (const auto& [id, entry] : entries_) {
    if (entry.embedding.zero()) continue;
    scored.push_back({cosine(qvec, entry.embedding), &entry});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.entry->doc.doc_id < b.entry->doc.doc_id;
  });

  std::vector<Document> out;
  for (const Scored& s : scored) {
    if (out.size() >= static_cast<std::size_t>(query.k)) break;
    out.push_back(s.entry->doc);
  }
  return out;
}

std::size_t KnowledgeStore::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::vector<Document> KnowledgeStore::all() const {
  std::shared_lock lock(mutex_);
  std::vector<Document> out;
  out.reserve(entries_.size());
  for (const auto& [id, entry] : entries_) out.push_back(entry.doc);
  return out;
}

std::optional<Document> KnowledgeStore::find(const std::string& doc_id) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(doc_id);
  if (it == entries_.end()) return std::nullopt;
  return it->second.doc;
}

const EmbeddingVector* KnowledgeStore::embedding_of(const std::string& doc_id) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(doc_id);
  if (it == entries_.end()) return nullptr;
  return &it->second.embedding;
}

namespace {

constexpr char kIndexMagic[8] = {'S', 'T', 'A', 'F', 'I', 'D', 'X', '1'};

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::ifstream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw MalformedInput("index file truncated");
  return static_cast<std::uint32_t>(buf[0]) | (static_cast<std::uint32_t>(buf[1]) << 8) |
         (static_cast<std::uint32_t>(buf[2]) << 16) | (static_cast<std::uint32_t>(buf[3]) << 24);
}

void write_f32(std::ofstream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

float read_f32(std::ifstream& in) {
  std::uint32_t bits = read_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void KnowledgeStore::save(const std::filesystem::path& dir) const {
  std::shared_lock lock(mutex_);
  std::filesystem::create_directories(dir / "docs");
  for (const auto& [id, entry] : entries_) {
    std::ofstream out(dir / "docs" / (id + ".json"));
    out << to_json(entry.doc).dump(2) << "\n";
    if (!out) throw Error("failed to write document " + id);
  }

  std::ofstream index(dir / "index.bin", std::ios::binary);
  index.write(kIndexMagic, sizeof(kIndexMagic));
  write_u32(index, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [id, entry] : entries_) {
    write_u32(index, static_cast<std::uint32_t>(id.size()));
    index.write(id.data(), static_cast<std::streamsize>(id.size()));
    write_u32(index, static_cast<std::uint32_t>(entry.embedding.values.size()));
    for (float v : entry.embedding.values) write_f32(index, v);
  }
  if (!index) throw Error("failed to write index.bin");
}

KnowledgeStore KnowledgeStore::load(const std::filesystem::path& dir, EmbedFn embedder) {
  KnowledgeStore store(std::move(embedder));
  std::filesystem::path docs_dir = dir / "docs";
  if (!std::filesystem::is_directory(docs_dir)) {
    throw MalformedInput("store directory missing docs/: " + dir.string());
  }

  std::map<std::string, EmbeddingVector> index;
  std::filesystem::path index_path = dir / "index.bin";
  if (std::filesystem::exists(index_path)) {
    std::ifstream in(index_path, std::ios::binary);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kIndexMagic, sizeof(magic)) != 0) {
      throw MalformedInput("index.bin has wrong magic");
    }
    std::uint32_t count = read_u32(in);
    for (std::uint32_t i = 0; i < count; ++i) {
      std::uint32_t id_len = read_u32(in);
      std::string id(id_len, '\0');
      in.read(id.data(), id_len);
      if (!in) throw MalformedInput("index file truncated");
      std::uint32_t dim = read_u32(in);
      EmbeddingVector vec;
      vec.values.reserve(dim);
      for (std::uint32_t d = 0; d < dim; ++d) vec.values.push_back(read_f32(in));
      index.emplace(std::move(id), std::move(vec));
    }
  }

  std::vector<std::filesystem::path> files;
  for (const auto& ent : std::filesystem::directory_iterator(docs_dir)) {
    if (ent.path().extension() == ".json") files.push_back(ent.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::ifstream in(file);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw MalformedInput("bad document file " + file.filename().string() + ": " + e.what());
    }
    Document doc = document_from_json(j);
    Entry entry;
    auto it = index.find(doc.doc_id);
    if (it != index.end()) {
      entry.embedding = it->second;
    } else {
      // Missing from the index (older store or partial write): re-embed.
      entry.embedding = store.embedder_(doc.title + "\n" + doc.description + "\n" + doc.body);
    }
    entry.doc = std::move(doc);
    std::unique_lock lock(store.mutex_);
    store.entries_.emplace(entry.doc.doc_id, std::move(entry));
  }
  return store;
}

std::vector<GradedDocument> grade_documents(std::span<const Document> docs,
                                            std::span<const ThreatProfile> threats,
                                            ChatProvider& provider) {
  std::string threat_summary;
  for (const ThreatProfile& t : threats) {
    threat_summary += "- " + t.title;
    if (!t.impact.empty()) threat_summary += ": " + t.impact;
    threat_summary += '\n';
  }

  std::vector<GradedDocument> out;
  out.reserve(docs.size());
  for (const Document& doc : docs) {
    ChatRequest req;
    req.tag = "grading";
    req.messages.push_back(
        {Role::system,
         "You grade whether a retrieved document is relevant to a set of automotive security "
         "threats. Answer \"yes\" or \"no\" on the first line, then one sentence of rationale."});
    req.messages.push_back({Role::user, "Threats under test:\n" + threat_summary +
                                            "\nDocument title: " + doc.title +
                                            "\nDocument description: " + doc.description +
                                            "\n\nIs this document relevant?"});
    GradedDocument graded;
    graded.document = doc;
    try {
      std::string reply = trim(provider.complete(req).text);
      std::string lowered = to_lower(reply.substr(0, 3));
      graded.relevant = lowered.rfind("yes", 0) == 0;
      graded.grade_rationale = reply;
    } catch (const ProviderError&) {
      graded.relevant = false;
      graded.grade_rationale = "provider-error";
    }
    out.push_back(std::move(graded));
  }
  return out;
}

bool needs_web_search(const std::vector<GradedDocument>& graded, int min_relevant) {
  int relevant = 0;
  for (const GradedDocument& g : graded) {
    if (g.relevant) ++relevant;
  }
  return relevant < min_relevant;
}

std::vector<WebHit> StubSearchClient::search(const std::string& query, int max_results) {
  ++call_count_;
  last_query_ = query;
  std::vector<WebHit> out = hits_;
  if (out.size() > static_cast<std::size_t>(std::max(0, max_results))) {
    out.resize(static_cast<std::size_t>(max_results));
  }
  return out;
}

SearchConfig SearchConfig::from_env() {
  SearchConfig config;
  if (const char* url = std::getenv("STAF_SEARCH_URL")) config.base_url = url;
  if (config.base_url.empty()) config.base_url = "https://api.tavily.com";
  if (const char* key = std::getenv("STAF_SEARCH_KEY")) config.api_key = key;
  return config;
}

LiveSearchClient::LiveSearchClient(SearchConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  if (!transport_) transport_ = make_httplib_transport(config_.base_url, 30);
}

std::vector<WebHit> LiveSearchClient::search(const std::string& query, int max_results) {
  nlohmann::json body{
      {"api_key", config_.api_key},
      {"query", query},
      {"max_results", max_results},
  };
  HttpResult res = transport_->post("/search", {}, body.dump());
  if (res.status == 0) {
    throw TransportError("search request failed: " + res.error);
  }
  if (res.status != 200) {
    throw TransportError("search returned HTTP " + std::to_string(res.status));
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(res.body);
  } catch (const nlohmann::json::parse_error&) {
    throw TransportError("search returned unparseable body");
  }
  std::vector<WebHit> hits;
  if (j.contains("results") && j.at("results").is_array()) {
    for (const auto& r : j.at("results")) {
      WebHit hit;
      hit.title = r.value("title", "");
      hit.url = r.value("url", "");
      hit.content = r.value("content", "");
      hits.push_back(std::move(hit));
    }
  }
  return hits;
}

std::vector<Document> web_search(const RetrievalQuery& query,
                                 std::span<const std::string> protocols, SearchClient& client,
                                 std::vector<std::string>* warnings) {
  std::string text = KnowledgeStore::query_text(query);
  for (const std::string& proto : protocols) {
    if (!text.empty()) text += ' ';
    text += proto;
  }
  if (!text.empty()) text += ' ';
  text += "automotive security";

  std::vector<WebHit> hits;
  try {
    hits = client.search(text, query.k);
  } catch (const ProviderError& e) {
    if (warnings) warnings->push_back(std::string("web search unavailable: ") + e.what());
    return {};
  }

  std::vector<Document> out;
  for (const WebHit& hit : hits) {
    if (out.size() >= static_cast<std::size_t>(std::max(0, query.k))) break;
    Document doc;
    doc.doc_id = fnv1a64_hex(hit.url + '\0' + hit.title).substr(0, 12);
    doc.title = hit.title;
    doc.body = hit.content;
    doc.description = hit.content.substr(0, 400);
    doc.source = DocSource::web;
    doc.origin_uri = hit.url;
    out.push_back(std::move(doc));
  }
  return out;
}

std::size_t ContextBundle::total_chars() const {
  std::size_t total = 0;
  for (const ContextEntry& e : entries) total += e.excerpt.size();
  return total;
}

ContextBundle assemble_context(const std::vector<GradedDocument>& graded,
                               const std::vector<Document>& web_docs, std::size_t budget_chars) {
  std::vector<const Document*> picked;
  for (const GradedDocument& g : graded) {
    if (g.relevant) picked.push_back(&g.document);
  }
  for (const Document& d : web_docs) picked.push_back(&d);

  ContextBundle bundle;
  if (picked.empty()) return bundle;

  std::vector<std::string> texts;
  std::size_t total = 0;
  for (const Document* doc : picked) {
    std::string text = doc->title + "\n" + doc->description + "\n" + doc->body;
    total += text.size();
    texts.push_back(std::move(text));
  }

  // Over budget: every document gets the same share rather than dropping the
  // tail outright.
  std::size_t share = budget_chars / picked.size();
  for (std::size_t i = 0; i < picked.size(); ++i) {
    std::string excerpt = texts[i];
    if (total > budget_chars && excerpt.size() > share) {
      excerpt.resize(share);
    }
    ContextEntry entry;
    entry.doc_id = picked[i]->doc_id;
    entry.title = picked[i]->title;
    entry.source = picked[i]->source;
    entry.excerpt = std::move(excerpt);
    bundle.provenance.push_back(entry.doc_id);
    bundle.entries.push_back(std::move(entry));
  }
  return bundle;
}

}  // namespace staf
