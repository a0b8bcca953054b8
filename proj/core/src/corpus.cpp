#include "mctailor/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mctailor/errors.hpp"
#include "mctailor/rng.hpp"

namespace mctailor {

Vocab::Vocab() {
  tokens_ = {std::string(kUnkToken), std::string(kEosToken)};
  id_of_[tokens_[0]] = kUnkId;
  id_of_[tokens_[1]] = kEosId;
}

TokenId Vocab::add(const std::string& token) {
  auto it = id_of_.find(token);
  if (it != id_of_.end()) return it->second;
  TokenId id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  id_of_.emplace(token, id);
  return id;
}

TokenId Vocab::encode(std::string_view token) const {
  if (token == kEosToken) return kUnkId;  // literal "<eos>" text is not a terminator
  auto it = id_of_.find(std::string(token));
  return it == id_of_.end() ? kUnkId : it->second;
}

const std::string& Vocab::decode(TokenId id) const {
  if (id >= tokens_.size()) throw DataError("token id out of range: " + std::to_string(id));
  return tokens_[id];
}

bool Vocab::contains(std::string_view token) const {
  return id_of_.find(std::string(token)) != id_of_.end();
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocab file: " + path.string());
  for (const auto& tok : tokens_) out << tok << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read vocab file: " + path.string());
  Vocab v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 0) {
      if (line != kUnkToken) throw DataError("vocab line 0 must be <unk>");
    } else if (lineno == 1) {
      if (line != kEosToken) throw DataError("vocab line 1 must be <eos>");
    } else {
      if (line.empty()) throw DataError("empty vocab entry at line " + std::to_string(lineno));
      if (v.contains(line)) throw DataError("duplicate vocab entry: " + line);
      v.add(line);
    }
    ++lineno;
  }
  if (lineno < 2) throw DataError("vocab file missing reserved <unk>/<eos> lines");
  return v;
}

bool is_valid_sentence(const Sentence& s, std::uint32_t vocab_size,
                       std::size_t max_len) {
  if (s.ids.empty()) return false;
  if (s.ids.back() != kEosId) return false;
  if (s.length() > max_len) return false;
  for (std::size_t i = 0; i < s.ids.size(); ++i) {
    if (s.ids[i] >= vocab_size) return false;
    if (s.ids[i] == kEosId && i + 1 != s.ids.size()) return false;
  }
  return true;
}

std::vector<std::string> tokenize_line(std::string_view line, bool lowercase) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) {
      std::string tok(line.substr(start, i - start));
      if (lowercase) {
        std::transform(tok.begin(), tok.end(), tok.begin(),
                       [](unsigned char c) { return std::tolower(c); });
      }
      tokens.push_back(std::move(tok));
    }
  }
  return tokens;
}

Sentence encode_tokens(std::span<const std::string> tokens, const Vocab& vocab,
                       std::size_t max_len) {
  Sentence s;
  std::size_t n = std::min(tokens.size(), max_len);
  s.ids.reserve(n + 1);
  for (std::size_t i = 0; i < n; ++i) s.ids.push_back(vocab.encode(tokens[i]));
  s.ids.push_back(kEosId);
  return s;
}

namespace {

std::vector<std::vector<std::string>> read_token_lines(
    const std::filesystem::path& path, bool lowercase) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read corpus file: " + path.string());
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(tokenize_line(line, lowercase));
  }
  if (lines.empty()) throw DataError("empty corpus file: " + path.string());
  return lines;
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& lines,
                  std::size_t min_count) {
  // Count surface forms, remembering first-appearance order for tie-breaks.
  std::unordered_map<std::string, std::pair<std::uint64_t, std::size_t>> counts;
  std::size_t next_rank = 0;
  for (const auto& toks : lines) {
    for (const auto& tok : toks) {
      auto [it, inserted] = counts.try_emplace(tok, 0, next_rank);
      if (inserted) ++next_rank;
      ++it->second.first;
    }
  }
  std::vector<std::pair<std::string, std::pair<std::uint64_t, std::size_t>>> order(
      counts.begin(), counts.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second.first != b.second.first) return a.second.first > b.second.first;
    return a.second.second < b.second.second;
  });
  Vocab v;
  for (const auto& [tok, stat] : order) {
    if (stat.first < min_count) continue;
    if (tok == kUnkToken || tok == kEosToken) continue;
    v.add(tok);
  }
  return v;
}

}  // namespace

LoadResult load_corpus(const std::filesystem::path& path,
                       const std::optional<Vocab>& vocab,
                       const LoadOptions& options) {
  if (options.max_len == 0) throw ConfigError("max_len must be positive");
  auto lines = read_token_lines(path, options.lowercase);
  Vocab v = vocab ? *vocab : build_vocab(lines, options.min_count);
  if (v.size() < 2 || v.decode(kUnkId) != kUnkToken || v.decode(kEosId) != kEosToken)
    throw DataError("vocab is missing reserved <unk>/<eos> entries");
  Corpus corpus;
  corpus.source_path = path.string();
  corpus.sentences.reserve(lines.size());
  for (const auto& toks : lines)
    corpus.sentences.push_back(encode_tokens(toks, v, options.max_len));
  return {std::move(corpus), std::move(v)};
}

void save_corpus(const Corpus& corpus, const Vocab& vocab,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file: " + path.string());
  for (const auto& s : corpus.sentences) out << decode_sentence(s, vocab) << '\n';
}

std::string decode_sentence(const Sentence& s, const Vocab& vocab) {
  std::string text;
  for (std::size_t i = 0; i + 1 < s.ids.size(); ++i) {
    if (i > 0) text += ' ';
    text += vocab.decode(s.ids[i]);
  }
  return text;
}

std::array<Corpus, 3> split(const Corpus& corpus,
                            const std::array<double, 3>& fractions,
                            std::uint64_t seed) {
  for (double f : fractions)
    if (f < 0.0) throw ConfigError("split fractions must be non-negative");
  double sum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  std::size_t n = corpus.size();
  if (n < 3) throw DataError("corpus too small to split (need at least 3 sentences)");

  std::vector<std::size_t> index(n);
  std::iota(index.begin(), index.end(), 0);
  Rng rng(seed);
  rng.shuffle(index);

  std::size_t n_eval = static_cast<std::size_t>(std::floor(fractions[1] * n));
  std::size_t n_test = static_cast<std::size_t>(std::floor(fractions[2] * n));
  std::size_t n_train = n - n_eval - n_test;

  std::array<Corpus, 3> out;
  for (auto& c : out) c.source_path = corpus.source_path;
  for (std::size_t i = 0; i < n; ++i) {
    const Sentence& s = corpus.sentences[index[i]];
    if (i < n_train) out[0].sentences.push_back(s);
    else if (i < n_train + n_eval) out[1].sentences.push_back(s);
    else out[2].sentences.push_back(s);
  }
  return out;
}

}  // namespace mctailor
