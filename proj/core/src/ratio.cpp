#include "mctailor/ratio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "mctailor/errors.hpp"
#include "mctailor/serial.hpp"

namespace mctailor {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double clamp_logit(double s, double max_ratio) {
  double bound = std::log(max_ratio);
  return std::clamp(s, -bound, bound);
}

}  // namespace

// ---------------------------------------------------------------------------
// ScoreNet

struct ScoreNet::Forward {
  // acts[0] = embeddings (L x D), acts[c+1] = conv c output after tanh
  std::vector<std::vector<double>> acts;
  std::vector<int> pool_argmax;  // per filter of the last conv; -1 when L == 0
  std::vector<double> pooled;
  double score = 0.0;
};

ScoreNet::ScoreNet(const EstimatorArch& arch, std::uint32_t vocab_size)
    : arch_(arch), vocab_size_(vocab_size) {
  if (arch.embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (arch.conv.empty()) throw ConfigError("at least one conv layer required");
  for (const auto& c : arch.conv) {
    if (c.filters < 1 || c.kernel < 1 || c.kernel % 2 == 0)
      throw ConfigError("conv layers need filters >= 1 and an odd kernel");
  }
  std::size_t off = static_cast<std::size_t>(vocab_size) * arch.embed_dim;
  int in_dim = arch.embed_dim;
  for (const auto& c : arch.conv) {
    conv_w_off_.push_back(off);
    off += static_cast<std::size_t>(c.filters) * c.kernel * in_dim;
    conv_b_off_.push_back(off);
    off += static_cast<std::size_t>(c.filters);
    in_dim = c.filters;
  }
  out_w_off_ = off;
  off += static_cast<std::size_t>(in_dim);
  out_b_off_ = off;
  off += 1;
  params_.assign(off, 0.0);
}

void ScoreNet::init(Rng& rng, double scale) {
  for (double& p : params_) p = (rng.real01() * 2.0 - 1.0) * scale;
}

void ScoreNet::run_forward(std::span<const TokenId> ids, Forward& f) const {
  const std::size_t L = ids.size();
  const int D = arch_.embed_dim;
  f.acts.assign(arch_.conv.size() + 1, {});

  auto& emb = f.acts[0];
  emb.resize(L * D);
  for (std::size_t i = 0; i < L; ++i) {
    const double* row = params_.data() + static_cast<std::size_t>(ids[i]) * D;
    std::copy(row, row + D, emb.begin() + i * D);
  }

  int in_dim = D;
  for (std::size_t c = 0; c < arch_.conv.size(); ++c) {
    const auto& spec = arch_.conv[c];
    const int pad = (spec.kernel - 1) / 2;
    const double* W = params_.data() + conv_w_off_[c];
    const double* b = params_.data() + conv_b_off_[c];
    const auto& in = f.acts[c];
    auto& out = f.acts[c + 1];
    out.assign(L * spec.filters, 0.0);
    for (std::size_t i = 0; i < L; ++i) {
      for (int fl = 0; fl < spec.filters; ++fl) {
        double pre = b[fl];
        for (int j = 0; j < spec.kernel; ++j) {
          std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(i) + j - pad;
          if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(L)) continue;
          const double* wrow = W + (static_cast<std::size_t>(fl) * spec.kernel + j) * in_dim;
          const double* xrow = in.data() + static_cast<std::size_t>(pos) * in_dim;
          for (int d = 0; d < in_dim; ++d) pre += wrow[d] * xrow[d];
        }
        out[i * spec.filters + fl] = std::tanh(pre);
      }
    }
    in_dim = spec.filters;
  }

  const int F = arch_.conv.back().filters;
  f.pooled.assign(F, 0.0);
  f.pool_argmax.assign(F, -1);
  const auto& last = f.acts.back();
  for (int fl = 0; fl < F; ++fl) {
    double best = -std::numeric_limits<double>::infinity();
    int arg = -1;
    for (std::size_t i = 0; i < L; ++i) {
      double v = last[i * F + fl];
      if (v > best) {
        best = v;
        arg = static_cast<int>(i);
      }
    }
    if (arg >= 0) {
      f.pooled[fl] = best;
      f.pool_argmax[fl] = arg;
    }
  }

  const double* out_w = params_.data() + out_w_off_;
  double s = params_[out_b_off_];
  for (int fl = 0; fl < F; ++fl) s += out_w[fl] * f.pooled[fl];
  f.score = s;
}

double ScoreNet::score(std::span<const TokenId> ids) const {
  Forward f;
  run_forward(ids, f);
  return f.score;
}

double ScoreNet::score_and_grad(std::span<const TokenId> ids, double upstream,
                                std::vector<double>& grad) const {
  Forward f;
  run_forward(ids, f);
  const std::size_t L = ids.size();
  const int F = arch_.conv.back().filters;

  grad[out_b_off_] += upstream;
  const double* out_w = params_.data() + out_w_off_;
  for (int fl = 0; fl < F; ++fl) grad[out_w_off_ + fl] += upstream * f.pooled[fl];
  if (L == 0) return f.score;

  // d(loss)/d(activation) for the layer currently being walked backwards
  std::vector<double> dcur(L * F, 0.0);
  for (int fl = 0; fl < F; ++fl) {
    if (f.pool_argmax[fl] >= 0)
      dcur[static_cast<std::size_t>(f.pool_argmax[fl]) * F + fl] += upstream * out_w[fl];
  }

  for (std::size_t c = arch_.conv.size(); c-- > 0;) {
    const auto& spec = arch_.conv[c];
    const int pad = (spec.kernel - 1) / 2;
    const int in_dim = c == 0 ? arch_.embed_dim : arch_.conv[c - 1].filters;
    const double* W = params_.data() + conv_w_off_[c];
    const auto& in = f.acts[c];
    const auto& out = f.acts[c + 1];
    std::vector<double> din(L * in_dim, 0.0);
    for (std::size_t i = 0; i < L; ++i) {
      for (int fl = 0; fl < spec.filters; ++fl) {
        double dout = dcur[i * spec.filters + fl];
        if (dout == 0.0) continue;
        double y = out[i * spec.filters + fl];
        double dpre = dout * (1.0 - y * y);  // tanh'
        grad[conv_b_off_[c] + fl] += dpre;
        for (int j = 0; j < spec.kernel; ++j) {
          std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(i) + j - pad;
          if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(L)) continue;
          std::size_t w_base = conv_w_off_[c] + (static_cast<std::size_t>(fl) * spec.kernel + j) * in_dim;
          const double* xrow = in.data() + static_cast<std::size_t>(pos) * in_dim;
          double* drow = din.data() + static_cast<std::size_t>(pos) * in_dim;
          const double* wrow = W + (static_cast<std::size_t>(fl) * spec.kernel + j) * in_dim;
          for (int d = 0; d < in_dim; ++d) {
            grad[w_base + d] += dpre * xrow[d];
            drow[d] += dpre * wrow[d];
          }
        }
      }
    }
    dcur = std::move(din);
  }

  const int D = arch_.embed_dim;
  for (std::size_t i = 0; i < L; ++i) {
    std::size_t e_base = static_cast<std::size_t>(ids[i]) * D;
    for (int d = 0; d < D; ++d) grad[e_base + d] += dcur[i * D + d];
  }
  return f.score;
}

// ---------------------------------------------------------------------------
// Estimators

RatioEstimator::RatioEstimator(const EstimatorArch& arch, std::uint32_t vocab_size,
                               double max_ratio)
    : net_(arch, vocab_size), max_ratio_(max_ratio) {
  if (max_ratio <= 1.0) throw ConfigError("max_ratio must exceed 1");
}

double RatioEstimator::logit(const Sentence& s) const {
  return clamp_logit(net_.score(s.ids), max_ratio_);
}

double RatioEstimator::prob_model(const Sentence& s) const { return sigmoid(logit(s)); }

double RatioEstimator::ratio(const Sentence& s) const { return std::exp(logit(s)); }

PrefixRatioEstimator::PrefixRatioEstimator(const EstimatorArch& arch,
                                           std::uint32_t vocab_size,
                                           double max_ratio)
    : net_(arch, vocab_size), max_ratio_(max_ratio) {
  if (max_ratio <= 1.0) throw ConfigError("max_ratio must exceed 1");
}

double PrefixRatioEstimator::prefix_ratio(std::span<const TokenId> prefix) const {
  return std::exp(clamp_logit(net_.score(prefix), max_ratio_));
}

double PrefixRatioEstimator::max_prefix_ratio(const Sentence& s) const {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i <= s.ids.size(); ++i)
    best = std::max(best, net_.score({s.ids.data(), i}));
  return std::exp(clamp_logit(best, max_ratio_));
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void save_net(const std::filesystem::path& path, const ScoreNet& net,
              double max_ratio, std::uint8_t kind) {
  BinaryWriter w(path);
  w.magic("MCRE");
  w.u32(1);
  w.u8(kind);
  w.u32(net.vocab_size());
  w.u32(static_cast<std::uint32_t>(net.arch().embed_dim));
  w.u32(static_cast<std::uint32_t>(net.arch().conv.size()));
  for (const auto& c : net.arch().conv) {
    w.u32(static_cast<std::uint32_t>(c.filters));
    w.u32(static_cast<std::uint32_t>(c.kernel));
  }
  w.f64(max_ratio);
  for (double p : net.params()) w.f64(p);
  w.close();
}

struct LoadedNet {
  EstimatorArch arch;
  std::uint32_t vocab_size;
  double max_ratio;
  std::vector<double> params;
};

LoadedNet load_net(const std::filesystem::path& path, std::uint8_t expected_kind) {
  BinaryReader r(path);
  r.expect_magic("MCRE");
  if (r.u32() != 1) throw DataError("unsupported estimator file version");
  if (r.u8() != expected_kind) throw DataError("estimator kind mismatch in " + path.string());
  LoadedNet out;
  out.vocab_size = r.u32();
  out.arch.embed_dim = static_cast<int>(r.u32());
  std::uint32_t n_conv = r.u32();
  for (std::uint32_t i = 0; i < n_conv; ++i) {
    int filters = static_cast<int>(r.u32());
    int kernel = static_cast<int>(r.u32());
    out.arch.conv.push_back({filters, kernel});
  }
  out.max_ratio = r.f64();
  ScoreNet probe(out.arch, out.vocab_size);
  out.params.resize(probe.param_count());
  for (double& p : out.params) p = r.f64();
  return out;
}

}  // namespace

void RatioEstimator::save(const std::filesystem::path& path) const {
  save_net(path, net_, max_ratio_, 0);
}

RatioEstimator RatioEstimator::load(const std::filesystem::path& path) {
  LoadedNet ln = load_net(path, 0);
  RatioEstimator est(ln.arch, ln.vocab_size, ln.max_ratio);
  est.net().params() = std::move(ln.params);
  return est;
}

void PrefixRatioEstimator::save(const std::filesystem::path& path) const {
  save_net(path, net_, max_ratio_, 1);
}

PrefixRatioEstimator PrefixRatioEstimator::load(const std::filesystem::path& path) {
  LoadedNet ln = load_net(path, 1);
  PrefixRatioEstimator est(ln.arch, ln.vocab_size, ln.max_ratio);
  est.net().params() = std::move(ln.params);
  return est;
}

// ---------------------------------------------------------------------------
// Training

std::vector<Batch> make_balanced_batches(std::size_t n_real, std::size_t n_neg,
                                         int batch_size, Rng& rng) {
  if (batch_size < 2) throw ConfigError("batch size must be >= 2");
  std::vector<std::size_t> real(n_real), neg(n_neg);
  for (std::size_t i = 0; i < n_real; ++i) real[i] = i;
  for (std::size_t i = 0; i < n_neg; ++i) neg[i] = i;
  rng.shuffle(real);
  rng.shuffle(neg);
  std::size_t half = static_cast<std::size_t>(batch_size) / 2;
  std::size_t usable = std::min(n_real, n_neg);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < usable; start += half) {
    std::size_t end = std::min(start + half, usable);
    Batch b;
    b.real.assign(real.begin() + start, real.begin() + end);
    b.negatives.assign(neg.begin() + start, neg.begin() + end);
    batches.push_back(std::move(b));
  }
  return batches;
}

namespace {

// Shared SGD loop over {real: label 0, negatives: label 1}. The example
// policy supplies the training logit and its backprop.
struct ExamplePolicy {
  std::function<double(const Sentence&)> logit;
  std::function<void(const Sentence&, double, std::vector<double>&)> backprop;
};

struct Pools {
  std::vector<const Sentence*> train_real, train_neg, held_real, held_neg;
};

Pools split_heldout(const Corpus& real, const std::vector<Sentence>& negatives,
                    double frac, Rng& rng) {
  std::vector<std::size_t> ri(real.size()), ni(negatives.size());
  for (std::size_t i = 0; i < ri.size(); ++i) ri[i] = i;
  for (std::size_t i = 0; i < ni.size(); ++i) ni[i] = i;
  rng.shuffle(ri);
  rng.shuffle(ni);
  std::size_t hr = std::max<std::size_t>(1, static_cast<std::size_t>(frac * real.size()));
  std::size_t hn = std::max<std::size_t>(1, static_cast<std::size_t>(frac * negatives.size()));
  Pools p;
  for (std::size_t i = 0; i < ri.size(); ++i) {
    const Sentence* s = &real.sentences[ri[i]];
    (i < hr ? p.held_real : p.train_real).push_back(s);
  }
  for (std::size_t i = 0; i < ni.size(); ++i) {
    const Sentence* s = &negatives[ni[i]];
    (i < hn ? p.held_neg : p.train_neg).push_back(s);
  }
  return p;
}

void train_net(ScoreNet& net, const Corpus& real,
               const std::vector<Sentence>& negatives,
               const TrainConfig& config, const ExamplePolicy& policy,
               double max_ratio, TrainReport* report) {
  if (real.size() < 100) throw DataError("need at least 100 real sentences");
  if (negatives.empty()) throw DataError("no negative samples given");

  Rng rng(config.seed);
  net.init(rng, config.init_scale);
  Pools pools = split_heldout(real, negatives, config.heldout_frac, rng);

  auto heldout_ce = [&]() {
    double ce = 0.0;
    for (const Sentence* s : pools.held_real) ce += softplus(policy.logit(*s));
    for (const Sentence* s : pools.held_neg) {
      double l = policy.logit(*s);
      ce += softplus(l) - l;
    }
    return ce / static_cast<double>(pools.held_real.size() + pools.held_neg.size());
  };

  std::vector<double> grad(net.param_count(), 0.0);
  std::vector<double> best_params = net.params();
  double best_ce = heldout_ce();
  int best_epoch = 0;
  int epoch = 0;
  for (; epoch < config.max_epochs; ++epoch) {
    auto batches = make_balanced_batches(pools.train_real.size(),
                                         pools.train_neg.size(), config.batch, rng);
    for (const Batch& b : batches) {
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      double inv = 1.0 / static_cast<double>(b.real.size() + b.negatives.size());
      for (std::size_t idx : b.real) {
        const Sentence& s = *pools.train_real[idx];
        double l = policy.logit(s);
        batch_loss += softplus(l);
        policy.backprop(s, sigmoid(l) * inv, grad);  // d - y, y = 0
      }
      for (std::size_t idx : b.negatives) {
        const Sentence& s = *pools.train_neg[idx];
        double l = policy.logit(s);
        batch_loss += softplus(l) - l;
        policy.backprop(s, (sigmoid(l) - 1.0) * inv, grad);  // y = 1
      }
      if (!std::isfinite(batch_loss))
        throw TrainingError("non-finite training loss; the fixed step may be diverging, lower lr");
      auto& params = net.params();
      for (std::size_t i = 0; i < params.size(); ++i)
        params[i] -= config.lr * grad[i];
    }
    double ce = heldout_ce();
    if (ce < best_ce) {
      best_ce = ce;
      best_params = net.params();
      best_epoch = epoch;
    } else if (epoch - best_epoch >= config.patience) {
      break;
    }
  }
  net.params() = best_params;

  if (report) {
    report->epochs = epoch;
    report->heldout_ce = best_ce;
    std::size_t correct = 0, total = 0;
    double mean_log_ratio = 0.0;
    for (const Sentence* s : pools.held_real) {
      double l = policy.logit(*s);
      correct += l <= 0.0;
      mean_log_ratio += clamp_logit(l, max_ratio);
      ++total;
    }
    for (const Sentence* s : pools.held_neg) {
      double l = policy.logit(*s);
      correct += l > 0.0;
      mean_log_ratio += clamp_logit(l, max_ratio);
      ++total;
    }
    report->heldout_accuracy = static_cast<double>(correct) / static_cast<double>(total);
    report->heldout_mean_log_ratio = mean_log_ratio / static_cast<double>(total);
  }
}

}  // namespace

RatioEstimator train_ratio_estimator(const Corpus& real,
                                     const std::vector<Sentence>& negatives,
                                     std::uint32_t vocab_size,
                                     const EstimatorArch& arch,
                                     const TrainConfig& config,
                                     TrainReport* report) {
  RatioEstimator est(arch, vocab_size, config.max_ratio);
  ExamplePolicy policy{
      [&est](const Sentence& s) { return est.net().score(s.ids); },
      [&est](const Sentence& s, double up, std::vector<double>& g) {
        est.net().score_and_grad(s.ids, up, g);
      }};
  train_net(est.net(), real, negatives, config, policy, config.max_ratio, report);
  return est;
}

PrefixRatioEstimator train_dual_estimator(const Corpus& real,
                                          const std::vector<Sentence>& negatives,
                                          std::uint32_t vocab_size,
                                          const EstimatorArch& arch,
                                          const TrainConfig& config,
                                          TrainReport* report) {
  PrefixRatioEstimator est(arch, vocab_size, config.max_ratio);
  // The dual logit is the max over prefix scores; the subgradient flows to
  // the earliest arg-max prefix only.
  auto argmax_prefix = [&est](const Sentence& s) {
    std::size_t best_i = 1;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i <= s.ids.size(); ++i) {
      double v = est.net().score({s.ids.data(), i});
      if (v > best) {
        best = v;
        best_i = i;
      }
    }
    return std::pair<std::size_t, double>(best_i, best);
  };
  ExamplePolicy policy{
      [argmax_prefix](const Sentence& s) { return argmax_prefix(s).second; },
      [&est, argmax_prefix](const Sentence& s, double up, std::vector<double>& g) {
        std::size_t i = argmax_prefix(s).first;
        est.net().score_and_grad({s.ids.data(), i}, up, g);
      }};
  train_net(est.net(), real, negatives, config, policy, config.max_ratio, report);
  return est;
}

// ---------------------------------------------------------------------------
// Stack

double EstimatorStack::acceptance_prob(const Sentence& s) const {
  double a = 1.0;
  for (const auto& layer : layers_) a /= std::max(layer.full.ratio(s), 1.0);
  return a;
}

double EstimatorStack::composite_ratio(const Sentence& s) const {
  double g = 1.0;
  for (const auto& layer : layers_) g *= std::max(layer.full.ratio(s), 1.0);
  return g;
}

double EstimatorStack::composite_plain_ratio(const Sentence& s) const {
  double g = 1.0;
  for (const auto& layer : layers_) g *= layer.full.ratio(s);
  return g;
}

double EstimatorStack::composite_prefix_ratio(std::span<const TokenId> prefix) const {
  double g = 1.0;
  for (const auto& layer : layers_) {
    if (!layer.prefix) throw DataError("stack has no prefix estimators");
    g *= layer.prefix->prefix_ratio(prefix);
  }
  return g;
}

bool EstimatorStack::has_prefix_estimators() const {
  if (layers_.empty()) return false;
  for (const auto& layer : layers_)
    if (!layer.prefix) return false;
  return true;
}

void EstimatorStack::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "stack.txt", std::ios::binary);
  if (!manifest) throw DataError("cannot write stack manifest");
  manifest << "mctailor-stack 1\n";
  manifest << "layers " << layers_.size() << "\n";
  manifest << "duals " << (has_prefix_estimators() ? 1 : 0) << "\n";
  char buf[64];
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", layers_[k].heldout_accuracy);
    manifest << "accuracy " << k << " " << buf << "\n";
    layers_[k].full.save(dir / ("layer" + std::to_string(k) + ".full.mcre"));
    if (layers_[k].prefix)
      layers_[k].prefix->save(dir / ("layer" + std::to_string(k) + ".prefix.mcre"));
  }
}

EstimatorStack EstimatorStack::load(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "stack.txt", std::ios::binary);
  if (!manifest) throw DataError("cannot read stack manifest in " + dir.string());
  std::string word;
  int version = 0;
  manifest >> word >> version;
  if (word != "mctailor-stack" || version != 1)
    throw DataError("unrecognized stack manifest");
  std::size_t n_layers = 0;
  int duals = 0;
  manifest >> word >> n_layers >> word >> duals;
  std::vector<double> accuracies(n_layers, 0.0);
  std::size_t idx;
  double acc;
  while (manifest >> word >> idx >> acc)
    if (word == "accuracy" && idx < n_layers) accuracies[idx] = acc;

  std::vector<StackLayer> layers;
  for (std::size_t k = 0; k < n_layers; ++k) {
    RatioEstimator full =
        RatioEstimator::load(dir / ("layer" + std::to_string(k) + ".full.mcre"));
    std::optional<PrefixRatioEstimator> prefix;
    if (duals)
      prefix = PrefixRatioEstimator::load(dir / ("layer" + std::to_string(k) + ".prefix.mcre"));
    layers.push_back({std::move(full), std::move(prefix), accuracies[k]});
  }
  return EstimatorStack(std::move(layers));
}

std::vector<Sentence> sample_tailored_negatives(const NGramModel& model,
                                                const EstimatorStack& stack,
                                                std::size_t count,
                                                std::size_t max_len, Rng& rng,
                                                std::uint64_t budget,
                                                double starvation_rate) {
  std::vector<Sentence> out;
  out.reserve(count);
  std::uint64_t proposals = 0;
  while (out.size() < count) {
    if (proposals >= budget)
      throw StarvationError("proposal budget exhausted while collecting negatives",
                            static_cast<double>(out.size()) / static_cast<double>(proposals));
    Rng stream = rng.fork(proposals);
    Sentence s = model.sample_sentence(stream, max_len);
    double r = stream.positive01();
    ++proposals;
    if (r <= stack.acceptance_prob(s)) out.push_back(std::move(s));
    if (proposals >= 20000 && proposals % 1000 == 0) {
      double rate = static_cast<double>(out.size()) / static_cast<double>(proposals);
      if (rate < starvation_rate)
        throw StarvationError("sampler starvation while collecting negatives "
                              "(acceptance rate " + std::to_string(rate) + ")",
                              rate);
    }
  }
  return out;
}

EstimatorStack build_stack(const NGramModel& model, const Corpus& real,
                           const StackBuildConfig& config) {
  if (config.n_layers < 1) throw ConfigError("n_layers must be >= 1");
  EstimatorStack stack;
  Rng rng(config.seed);
  for (int k = 0; k < config.n_layers; ++k) {
    Rng negative_rng = rng.fork(0x6e656700ULL + static_cast<std::uint64_t>(k));
    std::vector<Sentence> negatives = sample_tailored_negatives(
        model, stack, real.size(), config.max_len, negative_rng,
        config.proposal_budget, config.starvation_rate);

    TrainConfig layer_config = config.train;
    layer_config.seed = splitmix64(config.seed ^ (0xF0ULL + static_cast<std::uint64_t>(k) * 2));
    TrainReport report;
    RatioEstimator full = train_ratio_estimator(real, negatives, model.vocab_size(),
                                                config.arch, layer_config, &report);
    std::optional<PrefixRatioEstimator> prefix;
    if (config.train_duals) {
      TrainConfig dual_config = config.train;
      dual_config.seed = splitmix64(config.seed ^ (0xD1ULL + static_cast<std::uint64_t>(k) * 2 + 1));
      prefix = train_dual_estimator(real, negatives, model.vocab_size(),
                                    config.arch, dual_config, nullptr);
    }
    stack.layers().push_back({std::move(full), std::move(prefix), report.heldout_accuracy});
  }
  return stack;
}

}  // namespace mctailor
