#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "staf/attack_tree.hpp"
#include "staf/llm_provider.hpp"

namespace staf {

enum class DocSource { vector_store, web };

std::string doc_source_name(DocSource source);
DocSource doc_source_from_name(const std::string& name);

struct Document {
  std::string doc_id;
  std::string title;
  std::string body;
  std::string description;
  DocSource source = DocSource::vector_store;
  std::optional<std::string> origin_uri;
};

nlohmann::json to_json(const Document& doc);
Document document_from_json(const nlohmann::json& j);

inline constexpr std::size_t kEmbeddingDim = 256;

/// L2-normalized hashed bag-of-words vector. All-stopword text produces the
/// zero vector, which matches nothing.
struct EmbeddingVector {
  std::vector<float> values;

  bool zero() const;
  double norm() const;
};

/// Reference embedder: keyword tokens hashed into `dim` buckets, counts
/// accumulated, L2-normalized. Deterministic and order-invariant.
EmbeddingVector embed(std::string_view text, std::size_t dim = kEmbeddingDim);

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

using EmbedFn = std::function<EmbeddingVector(std::string_view)>;

struct GradedDocument {
  Document document;
  bool relevant = false;
  std::string grade_rationale;
};

nlohmann::json to_json(const GradedDocument& graded);
GradedDocument graded_from_json(const nlohmann::json& j);

struct RetrievalQuery {
  std::vector<std::string> keywords;
  std::string threat_context;
  int k = 10;
};

/// In-memory vector store with exhaustive cosine scan. A live embedding
/// service can replace the reference embedder through the EmbedFn hook.
class KnowledgeStore {
 public:
  explicit KnowledgeStore(EmbedFn embedder = nullptr);

  /// Content-addressed ingestion: doc_id is a hash prefix of title+body, so
  /// re-ingesting identical content is a no-op returning the stored document.
  /// The description comes from the provider (tag "ingest-summary"); provider
  /// failure degrades to the first 400 characters of the body. Pass nullptr
  /// to skip the provider entirely.
  Document ingest(const std::string& title, const std::string& body, ChatProvider* provider);

  /// Top-k by cosine similarity of the query embedding (keywords joined with
  /// the threat context) against stored documents; ties break by ascending
  /// doc_id.
  std::vector<Document> retrieve_top_k(const RetrievalQuery& query) const;

  std::size_t size() const;
  std::vector<Document> all() const;
  std::optional<Document> find(const std::string& doc_id) const;
  const EmbeddingVector* embedding_of(const std::string& doc_id) const;

  /// Persist as a directory: docs/<doc_id>.json plus index.bin (versioned
  /// header, little-endian float32 values).
  void save(const std::filesystem::path& dir) const;
  static KnowledgeStore load(const std::filesystem::path& dir, EmbedFn embedder = nullptr);

  static std::string query_text(const RetrievalQuery& query);

 private:
  struct Entry {
    Document doc;
    EmbeddingVector embedding;
  };

  EmbedFn embedder_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Entry> entries_;  // keyed by doc_id
};

/// One grading prompt per document (tag "grading"); a reply whose trimmed
/// text starts with "yes" (case-insensitive) marks the document relevant.
/// Provider failure grades that document not-relevant with rationale
/// "provider-error". Order and cardinality are preserved.
std::vector<GradedDocument> grade_documents(std::span<const Document> docs,
                                            std::span<const ThreatProfile> threats,
                                            ChatProvider& provider);

/// True iff fewer than min_relevant documents are graded relevant.
bool needs_web_search(const std::vector<GradedDocument>& graded, int min_relevant = 3);

struct WebHit {
  std::string title;
  std::string url;
  std::string content;
};

class SearchClient {
 public:
  virtual ~SearchClient() = default;
  virtual std::vector<WebHit> search(const std::string& query, int max_results) = 0;
};

/// Offline stub returning a fixed hit list; counts calls for tests.
class StubSearchClient : public SearchClient {
 public:
  StubSearchClient() = default;
  explicit StubSearchClient(std::vector<WebHit> hits) : hits_(std::move(hits)) {}

  std::vector<WebHit> search(const std::string& query, int max_results) override;

  int call_count() const { return call_count_; }
  const std::string& last_query() const { return last_query_; }

 private:
  std::vector<WebHit> hits_;
  int call_count_ = 0;
  std::string last_query_;
};

struct SearchConfig {
  std::string base_url;  // e.g. "https://api.tavily.com"
  std::string api_key;

  /// Reads STAF_SEARCH_KEY (and STAF_SEARCH_URL when set).
  static SearchConfig from_env();
};

/// Tavily-style JSON search client. TransportError propagates to the caller
/// (web_search converts it into an empty result plus a warning).
class LiveSearchClient : public SearchClient {
 public:
  explicit LiveSearchClient(SearchConfig config, std::shared_ptr<HttpTransport> transport = nullptr);

  std::vector<WebHit> search(const std::string& query, int max_results) override;

 private:
  SearchConfig config_;
  std::shared_ptr<HttpTransport> transport_;
};

/// Query refinement plus web retrieval: the search text is the query
/// keywords, the detected protocol names, and "automotive security".
/// Returns up to query.k documents with source=web; transport failure yields
/// an empty list and a warning entry instead of an error.
std::vector<Document> web_search(const RetrievalQuery& query,
                                 std::span<const std::string> protocols, SearchClient& client,
                                 std::vector<std::string>* warnings = nullptr);

struct ContextEntry {
  std::string doc_id;
  std::string title;
  DocSource source = DocSource::vector_store;
  std::string excerpt;
};

struct ContextBundle {
  std::vector<ContextEntry> entries;
  std::vector<std::string> provenance;  // doc_ids included, in order

  std::size_t total_chars() const;
  bool low_context() const { return entries.empty(); }
};

/// Relevant vector-store documents first, then web documents. Each entry is
/// title+description+body; when the total exceeds budget_chars every entry is
/// truncated to an equal share.
ContextBundle assemble_context(const std::vector<GradedDocument>& graded,
                               const std::vector<Document>& web_docs,
                               std::size_t budget_chars = 24000);

}  // namespace staf
