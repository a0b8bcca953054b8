#include "mctailor/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mctailor/errors.hpp"
#include "mctailor/serial.hpp"

namespace mctailor {

namespace {

std::vector<double> normalized_lambdas(const LmParams& params) {
  std::vector<double> lambdas = params.lambdas;
  if (lambdas.empty())
    lambdas.assign(static_cast<std::size_t>(params.order), 1.0 / params.order);
  if (lambdas.size() != static_cast<std::size_t>(params.order))
    throw ConfigError("lambda count must equal the model order");
  double sum = 0.0;
  for (double l : lambdas) {
    if (l < 0.0) throw ConfigError("lambdas must be non-negative");
    sum += l;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("lambdas must sum to 1");
  return lambdas;
}

}  // namespace

NGramModel::CountTable NGramModel::count_table(const Corpus& corpus, int order) {
  CountTable table;
  std::vector<TokenId> ctx;
  for (const Sentence& s : corpus.sentences) {
    const auto& ids = s.ids;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::size_t max_ctx = std::min<std::size_t>(i, static_cast<std::size_t>(order - 1));
      for (std::size_t len = 0; len <= max_ctx; ++len) {
        ctx.assign(ids.begin() + (i - len), ids.begin() + i);
        Row& row = table[ctx];
        ++row.total;
        ++row.counts[ids[i]];
      }
    }
  }
  return table;
}

NGramModel NGramModel::train(const Corpus& corpus, std::uint32_t vocab_size,
                             const LmParams& params) {
  if (corpus.empty()) throw DataError("cannot train on an empty corpus");
  if (params.order < 1) throw ConfigError("order must be >= 1");
  if (params.alpha <= 0.0) throw ConfigError("alpha must be > 0");
  if (vocab_size < 2) throw ConfigError("vocab must contain <unk> and <eos>");

  NGramModel m;
  m.order_ = params.order;
  m.vocab_size_ = vocab_size;
  m.alpha_ = params.alpha;
  m.lambdas_ = normalized_lambdas(params);
  m.components_.push_back({1.0, count_table(corpus, params.order)});
  return m;
}

NGramModel NGramModel::finetune(const NGramModel& base, const Corpus& domain,
                                double mu) {
  if (mu < 0.0 || mu > 1.0) throw ConfigError("mu must lie in [0, 1]");
  LmParams params{base.order_, base.alpha_, base.lambdas_};
  NGramModel domain_model = train(domain, base.vocab_size_, params);

  NGramModel m;
  m.order_ = base.order_;
  m.vocab_size_ = base.vocab_size_;
  m.alpha_ = base.alpha_;
  m.lambdas_ = base.lambdas_;
  for (const Component& c : base.components_)
    m.components_.push_back({(1.0 - mu) * c.weight, c.table});
  m.components_.push_back({mu, std::move(domain_model.components_[0].table)});
  return m;
}

double NGramModel::component_prob(const Component& c,
                                  std::span<const TokenId> prefix,
                                  TokenId next) const {
  double p = 0.0;
  std::vector<TokenId> ctx;
  for (int k = 1; k <= order_; ++k) {
    std::size_t len = std::min<std::size_t>(prefix.size(), static_cast<std::size_t>(k - 1));
    ctx.assign(prefix.end() - len, prefix.end());
    auto it = c.table.find(ctx);
    std::uint64_t cnt = 0, total = 0;
    if (it != c.table.end()) {
      total = it->second.total;
      auto jt = it->second.counts.find(next);
      if (jt != it->second.counts.end()) cnt = jt->second;
    }
    p += lambdas_[static_cast<std::size_t>(k - 1)] * (cnt + alpha_) /
         (total + alpha_ * vocab_size_);
  }
  return p;
}

double NGramModel::token_prob(std::span<const TokenId> prefix, TokenId next) const {
  double p = 0.0;
  for (const Component& c : components_)
    p += c.weight * component_prob(c, prefix, next);
  return p;
}

std::vector<double> NGramModel::next_dist(std::span<const TokenId> prefix) const {
  std::vector<double> dist(vocab_size_, 0.0);
  for (TokenId w = 0; w < vocab_size_; ++w) dist[w] = token_prob(prefix, w);
  return dist;
}

double NGramModel::sentence_logprob(const Sentence& s) const {
  double lp = 0.0;
  for (std::size_t i = 0; i < s.ids.size(); ++i)
    lp += std::log(token_prob({s.ids.data(), i}, s.ids[i]));
  return lp;
}

Sentence NGramModel::sample_sentence(Rng& rng, std::size_t max_len) const {
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  Sentence s;
  while (s.ids.size() < max_len) {
    std::vector<double> dist = next_dist(s.ids);
    double u = rng.real01();
    double cum = 0.0;
    TokenId tok = vocab_size_ - 1;
    for (TokenId w = 0; w < vocab_size_; ++w) {
      cum += dist[w];
      if (u < cum) {
        tok = w;
        break;
      }
    }
    s.ids.push_back(tok);
    if (tok == kEosId) return s;
  }
  s.ids.push_back(kEosId);  // forced at the cap, no model call
  return s;
}

std::uint64_t NGramModel::sample_token_steps(const Sentence& s, std::size_t max_len) {
  std::size_t body = s.length();
  return body >= max_len ? max_len : body + 1;
}

double NGramModel::perplexity(const Corpus& corpus) const {
  if (corpus.empty()) throw DataError("perplexity of an empty corpus");
  double total_lp = 0.0;
  std::uint64_t total_tokens = 0;
  for (const Sentence& s : corpus.sentences) {
    total_lp += sentence_logprob(s);
    total_tokens += s.ids.size();
  }
  return std::exp(-total_lp / static_cast<double>(total_tokens));
}

void NGramModel::save(const std::filesystem::path& path) const {
  BinaryWriter w(path);
  w.magic("MCTL");
  w.u32(1);  // version
  w.u32(static_cast<std::uint32_t>(order_));
  w.u32(vocab_size_);
  w.f64(alpha_);
  w.u32(static_cast<std::uint32_t>(lambdas_.size()));
  for (double l : lambdas_) w.f64(l);
  w.u32(static_cast<std::uint32_t>(components_.size()));
  for (const Component& c : components_) {
    w.f64(c.weight);
    w.u64(c.table.size());
    for (const auto& [ctx, row] : c.table) {
      w.u32(static_cast<std::uint32_t>(ctx.size()));
      for (TokenId id : ctx) w.u32(id);
      w.u32(static_cast<std::uint32_t>(row.counts.size()));
      for (const auto& [tok, cnt] : row.counts) {
        w.u32(tok);
        w.u64(cnt);
      }
    }
  }
  w.close();
}

NGramModel NGramModel::load(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic("MCTL");
  std::uint32_t version = r.u32();
  if (version != 1) throw DataError("unsupported model file version");
  NGramModel m;
  m.order_ = static_cast<int>(r.u32());
  m.vocab_size_ = r.u32();
  m.alpha_ = r.f64();
  std::uint32_t n_lambda = r.u32();
  m.lambdas_.resize(n_lambda);
  for (auto& l : m.lambdas_) l = r.f64();
  if (m.order_ < 1 || n_lambda != static_cast<std::uint32_t>(m.order_))
    throw DataError("corrupt model header");
  std::uint32_t n_components = r.u32();
  m.components_.resize(n_components);
  for (auto& c : m.components_) {
    c.weight = r.f64();
    std::uint64_t n_rows = r.u64();
    for (std::uint64_t i = 0; i < n_rows; ++i) {
      std::uint32_t ctx_len = r.u32();
      std::vector<TokenId> ctx(ctx_len);
      for (auto& id : ctx) id = r.u32();
      Row row;
      std::uint32_t n_entries = r.u32();
      for (std::uint32_t j = 0; j < n_entries; ++j) {
        TokenId tok = r.u32();
        std::uint64_t cnt = r.u64();
        row.counts[tok] = cnt;
        row.total += cnt;
      }
      c.table.emplace(std::move(ctx), std::move(row));
    }
  }
  return m;
}

MuSelection select_mu(const NGramModel& base, const Corpus& domain_train,
                      const Corpus& domain_eval, std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("mu grid is empty");
  MuSelection best{grid[0], std::numeric_limits<double>::infinity()};
  for (double mu : grid) {
    double ppl = NGramModel::finetune(base, domain_train, mu).perplexity(domain_eval);
    if (ppl < best.eval_ppl) best = {mu, ppl};
  }
  return best;
}

}  // namespace mctailor
