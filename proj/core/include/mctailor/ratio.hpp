#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "mctailor/corpus.hpp"
#include "mctailor/ngram.hpp"
#include "mctailor/rng.hpp"

namespace mctailor {

struct ConvSpec {
  int filters;
  int kernel;  // odd; position padding is (kernel-1)/2 zeros on each side
};

struct EstimatorArch {
  int embed_dim = 16;
  std::vector<ConvSpec> conv = {{10, 5}, {5, 5}};
};

struct TrainConfig {
  double lr = 0.05;          // plain SGD, fixed step
  int batch = 32;            // split evenly between real and negative examples
  int max_epochs = 60;
  int patience = 5;          // epochs without held-out improvement before stopping
  double heldout_frac = 0.1;
  double max_ratio = 20.0;   // inference logit clamp: ratio in [1/max_ratio, max_ratio]
  double init_scale = 0.1;
  std::uint64_t seed = 0;
};

/// Token sequence scorer: embeddings -> stacked 1-d convolutions (tanh) ->
/// max-pool over positions -> affine scalar. The empty sequence scores as the
/// output bias. All parameters live in one flat vector, gradients align with
/// it, and backprop is written out by hand below.
class ScoreNet {
 public:
  ScoreNet(const EstimatorArch& arch, std::uint32_t vocab_size);

  void init(Rng& rng, double scale);

  double score(std::span<const TokenId> ids) const;

  /// Forward plus backward; accumulates d(score)/d(param) * upstream into
  /// grad (same layout as params). Returns the score. Max-pool routes the
  /// gradient to the lowest tied position.
  double score_and_grad(std::span<const TokenId> ids, double upstream,
                        std::vector<double>& grad) const;

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }
  const EstimatorArch& arch() const { return arch_; }
  std::uint32_t vocab_size() const { return vocab_size_; }

 private:
  struct Forward;
  void run_forward(std::span<const TokenId> ids, Forward& f) const;

  EstimatorArch arch_;
  std::uint32_t vocab_size_;
  std::vector<double> params_;
  // offsets into params_: embed, then per conv (W, b), then out_w, out_b
  std::vector<std::size_t> conv_w_off_, conv_b_off_;
  std::size_t out_w_off_ = 0, out_b_off_ = 0;
};

/// Full-sentence ratio estimator: the logistic score d(x) approximates
/// P_model / (P_true + P_model), so ratio(x) = d/(1-d) = exp(logit)
/// estimates P_model / P_true. Logits clamp to [-ln(max_ratio), ln(max_ratio)]
/// at inference only.
class RatioEstimator {
 public:
  RatioEstimator(const EstimatorArch& arch, std::uint32_t vocab_size,
                 double max_ratio);

  double logit(const Sentence& s) const;      // clamped
  double prob_model(const Sentence& s) const; // d(x) in (0,1)
  double ratio(const Sentence& s) const;      // in [1/max_ratio, max_ratio]

  double max_ratio() const { return max_ratio_; }
  ScoreNet& net() { return net_; }
  const ScoreNet& net() const { return net_; }

  void save(const std::filesystem::path& path) const;
  static RatioEstimator load(const std::filesystem::path& path);

 private:
  ScoreNet net_;
  double max_ratio_;
};

/// Prefix-level estimator. prefix_ratio approximates the minimum
/// full-sentence ratio over all completions of the prefix; it is trained
/// through its dual, the running max over prefixes, which is fit to the
/// full-sentence discrimination target.
class PrefixRatioEstimator {
 public:
  PrefixRatioEstimator(const EstimatorArch& arch, std::uint32_t vocab_size,
                       double max_ratio);

  double prefix_ratio(std::span<const TokenId> prefix) const;

  /// max over i = 1..N of prefix_ratio(x[0..i)); the final prefix is the
  /// whole sentence including EOS.
  double max_prefix_ratio(const Sentence& s) const;

  double max_ratio() const { return max_ratio_; }
  ScoreNet& net() { return net_; }
  const ScoreNet& net() const { return net_; }

  void save(const std::filesystem::path& path) const;
  static PrefixRatioEstimator load(const std::filesystem::path& path);

 private:
  ScoreNet net_;
  double max_ratio_;
};

struct TrainReport {
  double heldout_accuracy = 0.0;
  double heldout_ce = 0.0;
  double heldout_mean_log_ratio = 0.0;
  int epochs = 0;
};

/// One balanced minibatch: index lists into the real and negative pools.
struct Batch {
  std::vector<std::size_t> real;
  std::vector<std::size_t> negatives;
};
std::vector<Batch> make_balanced_batches(std::size_t n_real, std::size_t n_neg,
                                         int batch_size, Rng& rng);

RatioEstimator train_ratio_estimator(const Corpus& real,
                                     const std::vector<Sentence>& negatives,
                                     std::uint32_t vocab_size,
                                     const EstimatorArch& arch,
                                     const TrainConfig& config,
                                     TrainReport* report = nullptr);

PrefixRatioEstimator train_dual_estimator(const Corpus& real,
                                          const std::vector<Sentence>& negatives,
                                          std::uint32_t vocab_size,
                                          const EstimatorArch& arch,
                                          const TrainConfig& config,
                                          TrainReport* report = nullptr);

struct StackLayer {
  RatioEstimator full;
  std::optional<PrefixRatioEstimator> prefix;
  double heldout_accuracy = 0.0;
};

/// Boosted stack: layer k is trained against negatives drawn from the
/// distribution tailored by layers 0..k-1.
class EstimatorStack {
 public:
  EstimatorStack() = default;
  explicit EstimatorStack(std::vector<StackLayer> layers)
      : layers_(std::move(layers)) {}

  /// a(x) = prod_k 1/max(ratio_k(x), 1), in (0, 1].
  double acceptance_prob(const Sentence& s) const;

  /// prod_k max(ratio_k(x), 1) = 1 / acceptance_prob(x); the quantity the
  /// samplers compare against 1/r.
  double composite_ratio(const Sentence& s) const;

  /// prod_k ratio_k(x) without the per-layer floor; the quantity the exact
  /// prefix minimum is defined over.
  double composite_plain_ratio(const Sentence& s) const;

  /// prod_k prefix_ratio_k(prefix); requires prefix estimators.
  double composite_prefix_ratio(std::span<const TokenId> prefix) const;

  bool has_prefix_estimators() const;
  std::size_t n_layers() const { return layers_.size(); }
  const std::vector<StackLayer>& layers() const { return layers_; }
  std::vector<StackLayer>& layers() { return layers_; }

  void save(const std::filesystem::path& dir) const;
  static EstimatorStack load(const std::filesystem::path& dir);

 private:
  std::vector<StackLayer> layers_;
};

struct StackBuildConfig {
  int n_layers = 1;
  bool train_duals = true;
  EstimatorArch arch;
  TrainConfig train;
  std::size_t max_len = 30;
  std::uint64_t proposal_budget = 10'000'000;
  double starvation_rate = 1e-4;  // abort below this acceptance rate
  std::uint64_t seed = 0;
};

EstimatorStack build_stack(const NGramModel& model, const Corpus& real,
                           const StackBuildConfig& config);

/// Rejection-sample `count` sentences from the model tailored by `stack`
/// (empty stack = raw model). Used for negative collection; throws
/// StarvationError when the acceptance rate collapses.
std::vector<Sentence> sample_tailored_negatives(const NGramModel& model,
                                                const EstimatorStack& stack,
                                                std::size_t count,
                                                std::size_t max_len, Rng& rng,
                                                std::uint64_t budget,
                                                double starvation_rate);

}  // namespace mctailor
