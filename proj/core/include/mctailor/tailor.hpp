#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mctailor/corpus.hpp"
#include "mctailor/ngram.hpp"
#include "mctailor/ratio.hpp"

namespace mctailor {

struct LogNormalizer {
  double z = 1.0;
  double z_stderr = 0.0;
  double log_z = 0.0;
  double log_z_stderr = 0.0;  // delta method: z_stderr / z
  std::uint64_t n_draws = 0;
};

/// The sampling target: model probability with over-estimated mass removed,
/// u(x) = P_model(x) * prod_k 1/max(ratio_k(x), 1), 0 < u(x) <= P_model(x).
class TailoredDistribution {
 public:
  TailoredDistribution(NGramModel model, EstimatorStack stack, std::size_t max_len)
      : model_(std::move(model)), stack_(std::move(stack)), max_len_(max_len) {}

  double unnormalized_logprob(const Sentence& s) const;

  /// log P_tailor(s) = model logprob + log a(s) - log Z. Requires an
  /// estimated normalizer.
  double logprob(const Sentence& s) const;

  const NGramModel& model() const { return model_; }
  const EstimatorStack& stack() const { return stack_; }
  std::size_t max_len() const { return max_len_; }
  const std::optional<LogNormalizer>& log_normalizer() const { return log_z_; }
  void set_log_normalizer(const LogNormalizer& ln) { log_z_ = ln; }

 private:
  NGramModel model_;
  EstimatorStack stack_;
  std::size_t max_len_;
  std::optional<LogNormalizer> log_z_;
};

struct SampleStats {
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;
  std::uint64_t token_steps_total = 0;
  std::uint64_t token_steps_wasted = 0;  // steps spent on rejected/killed particles
  double distinct_fraction = 0.0;
  bool budget_exhausted = false;
  std::optional<LogNormalizer> log_z;

  double acceptance_rate() const {
    return proposals == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposals);
  }
};

struct SampleBatch {
  std::vector<Sentence> accepted;
  SampleStats stats;
};

struct SamplerOptions {
  std::uint64_t budget = 10'000'000;  // proposal cap; exceeding returns a partial batch
  int workers = 1;                    // data-parallel particles; output independent of it
  bool ers_final_full_check = true;   // false: rely on prefix survival at the EOS step
};

/// Composite prefix-ratio source for ERS kill tests and the matching
/// full-sentence quantity for its final acceptance check.
class PrefixScorer {
 public:
  virtual ~PrefixScorer() = default;
  virtual double prefix_ratio(std::span<const TokenId> prefix) const = 0;
  virtual double final_ratio(const Sentence& s) const = 0;
};

class StackPrefixScorer final : public PrefixScorer {
 public:
  explicit StackPrefixScorer(const EstimatorStack& stack) : stack_(&stack) {}
  double prefix_ratio(std::span<const TokenId> prefix) const override {
    return stack_->composite_prefix_ratio(prefix);
  }
  double final_ratio(const Sentence& s) const override {
    return stack_->composite_ratio(s);
  }

 private:
  const EstimatorStack* stack_;
};

/// Propose ancestrally from the model, accept with probability
/// a(x) = prod_k 1/max(ratio_k(x), 1). Particle i draws from the stream
/// forked at (seed, i), so results do not depend on the worker count.
SampleBatch rejection_sample(const TailoredDistribution& t, std::size_t n_accept,
                             std::uint64_t seed, const SamplerOptions& options = {});

/// Independent particles; each draws a survival level r at birth and dies as
/// soon as the composite prefix ratio exceeds 1/r; at EOS the full-sentence
/// composite is re-checked against 1/r.
SampleBatch ers_sample(const TailoredDistribution& t, std::size_t n_accept,
                       std::uint64_t seed, const SamplerOptions& options = {});

/// Same, with an externally supplied prefix scorer (e.g. the exact oracle).
SampleBatch ers_sample(const TailoredDistribution& t, const PrefixScorer& scorer,
                       std::size_t n_accept, std::uint64_t seed,
                       const SamplerOptions& options = {});

/// Particles advance one token per step; after every step the still-growing
/// ones are multinomially resampled with weights
/// prefix_ratio(x[1:i-1]) / prefix_ratio(x[1:i]). Finished particles freeze
/// and are excluded; a final importance-weighted resampling returns an
/// equal-weight batch. Serial; known to degenerate (shared ancestors), which
/// distinct_fraction exposes.
SampleBatch smc_sample(const TailoredDistribution& t, std::size_t n_particles,
                       std::uint64_t seed);

/// Z = E_{x~model}[a(x)] by plain Monte Carlo over ancestral draws.
LogNormalizer estimate_log_normalizer(const TailoredDistribution& t,
                                      std::size_t n_is, std::uint64_t seed);

}  // namespace mctailor
