#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace staf {

/// Lowercase a copy (ASCII).
std::string to_lower(std::string s);

/// Strip leading and trailing ASCII whitespace.
std::string trim(std::string_view s);

/// True if `lower` is one of the fixed 50 stopwords. Expects lowercase input.
bool is_stopword(std::string_view lower);

/// Keyword tokenization used for fallback analysis and the reference
/// embedder: lowercase alphanumeric runs of length >= 3, stopwords removed.
/// Order of first occurrence is preserved; duplicates are kept.
std::vector<std::string> tokenize_keywords(std::string_view text);

/// As tokenize_keywords but with duplicates removed (first occurrence wins).
std::vector<std::string> unique_keywords(std::string_view text);

/// Case-insensitive whole-word search. Word boundaries are non-alphanumeric
/// characters; `word` itself may contain non-alphanumerics (e.g. "ISO-TP"),
/// which then have to match literally.
bool contains_whole_word_ci(std::string_view text, std::string_view word);

/// Normalization used for duplicate detection and merge-by-name: lowercase,
/// punctuation stripped, whitespace collapsed to single spaces, trimmed.
std::string normalize_label(std::string_view text);

/// FNV-1a 64-bit over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes);

/// fnv1a64 rendered as 16 lowercase hex digits.
std::string fnv1a64_hex(std::string_view bytes);

/// Strip a single surrounding markdown code fence (``` or ```json) if
/// present; otherwise return the trimmed input.
std::string strip_code_fence(std::string_view raw);

/// Count of non-whitespace characters.
std::size_t significant_chars(std::string_view text);

}  // namespace staf
