#include "staf/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_set>

namespace staf {

namespace {

// Fixed 50-entry stopword list. "can" is deliberately not on it: it is also
// a protocol name and a useful retrieval token.
const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> kWords = {
      "a",     "about", "after", "all",   "an",    "and",   "any",   "are",
      "as",    "at",    "be",    "been",  "before", "but",  "by",    "could",
      "do",    "does",  "for",   "from",  "had",   "has",   "have",  "if",
      "in",    "into",  "is",    "it",    "its",   "may",   "might", "not",
      "of",    "on",    "or",    "should", "that", "the",   "their", "then",
      "there", "these", "this",  "to",    "was",   "we",    "were",  "will",
      "with",  "would"};
  return kWords;
}

bool is_alnum(unsigned char c) { return std::isalnum(c) != 0; }

std::string_view trim_view(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(std::string_view s) { return std::string(trim_view(s)); }

bool is_stopword(std::string_view lower) {
  return stopwords().count(std::string(lower)) > 0;
}

std::vector<std::string> tokenize_keywords(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (current.size() >= 3 && !is_stopword(current)) tokens.push_back(current);
    current.clear();
  };
  for (unsigned char c : text) {
    if (is_alnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

std::vector<std::string> unique_keywords(std::string_view text) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (auto& t : tokenize_keywords(text)) {
    if (seen.insert(t).second) out.push_back(std::move(t));
  }
  return out;
}

bool contains_whole_word_ci(std::string_view text, std::string_view word) {
  if (word.empty() || text.size() < word.size()) return false;
  const std::string lower_text = to_lower(std::string(text));
  const std::string lower_word = to_lower(std::string(word));
  std::size_t pos = 0;
  while ((pos = lower_text.find(lower_word, pos)) != std::string::npos) {
    const bool left_ok = pos == 0 || !is_alnum(static_cast<unsigned char>(lower_text[pos - 1]));
    const std::size_t end = pos + lower_word.size();
    const bool right_ok =
        end == lower_text.size() || !is_alnum(static_cast<unsigned char>(lower_text[end]));
    if (left_ok && right_ok) return true;
    ++pos;
  }
  return false;
}

std::string normalize_label(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (is_alnum(c)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_space = true;
    }
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

std::string fnv1a64_hex(std::string_view bytes) {
  static const char* kDigits = "0123456789abcdef";
  std::uint64_t h = fnv1a64(bytes);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[h & 0xF];
    h >>= 4;
  }
  return out;
}

std::string strip_code_fence(std::string_view raw) {
  std::string_view s = trim_view(raw);
  if (s.substr(0, 3) == "```") {
    const std::size_t first_newline = s.find('\n');
    const std::size_t closing = s.rfind("```");
    if (first_newline != std::string_view::npos && closing > first_newline) {
      s = trim_view(s.substr(first_newline + 1, closing - first_newline - 1));
    }
  }
  return std::string(s);
}

std::size_t significant_chars(std::string_view text) {
  std::size_t n = 0;
  for (unsigned char c : text) {
    if (!std::isspace(c)) ++n;
  }
  return n;
}

}  // namespace staf
