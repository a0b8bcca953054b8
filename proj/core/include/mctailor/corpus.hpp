#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mctailor {

using TokenId = std::uint32_t;

inline constexpr TokenId kUnkId = 0;
inline constexpr TokenId kEosId = 1;
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kEosToken = "<eos>";

/// Token inventory with dense ids. Ids 0 and 1 are always <unk> and <eos>.
class Vocab {
 public:
  Vocab();

  /// Adds a surface form if absent; returns its id either way.
  /// The reserved surfaces "<unk>" and "<eos>" map to their fixed ids.
  TokenId add(const std::string& token);

  /// Id of a surface form; unknown surfaces (and a literal "<eos>", which
  /// would otherwise inject a terminator mid-sentence) map to kUnkId.
  TokenId encode(std::string_view token) const;

  const std::string& decode(TokenId id) const;
  bool contains(std::string_view token) const;
  std::uint32_t size() const { return static_cast<std::uint32_t>(tokens_.size()); }

  /// One token per line, line number = id. Lines 0 and 1 are fixed.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> id_of_;
};

/// Encoded token-id sequence; the terminal element is always kEosId and EOS
/// appears nowhere else.
struct Sentence {
  std::vector<TokenId> ids;

  /// Token count excluding the terminal EOS.
  std::size_t length() const { return ids.empty() ? 0 : ids.size() - 1; }
  auto operator<=>(const Sentence&) const = default;
};

struct SentenceHash {
  std::size_t operator()(const Sentence& s) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (TokenId id : s.ids) {
      h ^= id;
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

bool is_valid_sentence(const Sentence& s, std::uint32_t vocab_size,
                       std::size_t max_len);

struct Corpus {
  std::vector<Sentence> sentences;
  std::string source_path;

  std::size_t size() const { return sentences.size(); }
  bool empty() const { return sentences.empty(); }
};

struct LoadOptions {
  std::size_t max_len = 30;   // tokens per sentence, excluding EOS; longer lines truncate
  std::size_t min_count = 1;  // vocabulary threshold when building a vocab
  bool lowercase = false;
};

struct LoadResult {
  Corpus corpus;
  Vocab vocab;
};

/// Reads a UTF-8, one-sentence-per-line, whitespace-tokenized file.
/// With no vocab given, builds one from tokens with count >= min_count
/// (descending count, ties by first appearance). Out-of-vocabulary tokens
/// encode as <unk>.
LoadResult load_corpus(const std::filesystem::path& path,
                       const std::optional<Vocab>& vocab,
                       const LoadOptions& options = {});

void save_corpus(const Corpus& corpus, const Vocab& vocab,
                 const std::filesystem::path& path);

/// Tokens joined by single spaces, EOS dropped; the empty sentence decodes
/// to the empty string.
std::string decode_sentence(const Sentence& s, const Vocab& vocab);

Sentence encode_tokens(std::span<const std::string> tokens, const Vocab& vocab,
                       std::size_t max_len);

std::vector<std::string> tokenize_line(std::string_view line, bool lowercase);

/// Deterministic shuffled partition into (train, eval, test). Fractions must
/// be non-negative and sum to 1; sizes are floor(n * fraction) for eval and
/// test, remainder to train.
std::array<Corpus, 3> split(const Corpus& corpus,
                            const std::array<double, 3>& fractions,
                            std::uint64_t seed);

}  // namespace mctailor
