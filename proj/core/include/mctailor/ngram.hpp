#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "mctailor/corpus.hpp"
#include "mctailor/rng.hpp"

namespace mctailor {

struct LmParams {
  int order = 3;
  double alpha = 0.1;            // add-alpha smoothing constant, > 0
  std::vector<double> lambdas;   // backoff mixture per order; empty = uniform
};

/// Interpolated add-alpha n-gram model.
///
/// P(w | prefix) = sum_k lambda_k * (count_k + alpha) / (total_k + alpha*V),
/// where the order-k component conditions on the last min(k-1, |prefix|)
/// tokens. Contexts are the literal preceding ids (no begin marker), so an
/// unseen context of any order falls back to the uniform add-alpha estimate.
/// Every next-token distribution is strictly positive and sums to one.
///
/// Fine-tuning interpolates probabilities, not counts, so a model is a
/// weighted mixture of count tables; a freshly trained model has one
/// component with weight 1.
class NGramModel {
 public:
  static NGramModel train(const Corpus& corpus, std::uint32_t vocab_size,
                          const LmParams& params);

  /// P_ft = (1-mu) * base + mu * model_trained_on(domain). Requires the
  /// domain corpus to use the same vocabulary; smoothing params come from
  /// the base model. mu=0 and mu=1 reproduce base/domain bitwise.
  static NGramModel finetune(const NGramModel& base, const Corpus& domain,
                             double mu);

  /// Strictly positive distribution over the vocabulary, sums to 1.
  /// The prefix must not contain EOS.
  std::vector<double> next_dist(std::span<const TokenId> prefix) const;

  double token_prob(std::span<const TokenId> prefix, TokenId next) const;

  /// Sum of log P over all positions, including the terminal EOS factor.
  double sentence_logprob(const Sentence& s) const;

  /// Ancestral sampling; EOS is forced (without a model call) once max_len
  /// non-EOS tokens have been drawn.
  Sentence sample_sentence(Rng& rng, std::size_t max_len) const;

  /// Model calls consumed when sampling s under the given cap.
  static std::uint64_t sample_token_steps(const Sentence& s, std::size_t max_len);

  /// exp(-total logprob / total token count), EOS counted.
  double perplexity(const Corpus& corpus) const;

  int order() const { return order_; }
  std::uint32_t vocab_size() const { return vocab_size_; }
  double alpha() const { return alpha_; }
  const std::vector<double>& lambdas() const { return lambdas_; }
  bool same_shape(const NGramModel& other) const {
    return order_ == other.order_ && vocab_size_ == other.vocab_size_;
  }

  void save(const std::filesystem::path& path) const;
  static NGramModel load(const std::filesystem::path& path);

 private:
  struct Row {
    std::uint64_t total = 0;
    std::map<TokenId, std::uint64_t> counts;
  };
  // Keyed by literal context ids (length 0..order-1); std::map keeps the
  // serialization order lexicographic.
  using CountTable = std::map<std::vector<TokenId>, Row>;
  struct Component {
    double weight = 1.0;
    CountTable table;
  };

  NGramModel() = default;
  static CountTable count_table(const Corpus& corpus, int order);
  double component_prob(const Component& c, std::span<const TokenId> prefix,
                        TokenId next) const;

  int order_ = 1;
  std::uint32_t vocab_size_ = 2;
  double alpha_ = 0.1;
  std::vector<double> lambdas_;
  std::vector<Component> components_;
};

/// Grid search for the interpolation weight minimizing eval perplexity.
/// Ties resolve to the smaller mu.
struct MuSelection {
  double mu;
  double eval_ppl;
};
MuSelection select_mu(const NGramModel& base, const Corpus& domain_train,
                      const Corpus& domain_eval,
                      std::span<const double> grid);

}  // namespace mctailor
