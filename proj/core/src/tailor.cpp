#include "mctailor/tailor.hpp"

#include <cassert>
#include <cmath>
#include <thread>
#include <unordered_set>

#include "mctailor/errors.hpp"

namespace mctailor {

double TailoredDistribution::unnormalized_logprob(const Sentence& s) const {
  return model_.sentence_logprob(s) + std::log(stack_.acceptance_prob(s));
}

double TailoredDistribution::logprob(const Sentence& s) const {
  if (!log_z_) throw DataError("normalizer not estimated; call estimate_log_normalizer first");
  return unnormalized_logprob(s) - log_z_->log_z;
}

namespace {

struct ParticleOutcome {
  bool accepted = false;
  Sentence sentence;
  std::uint64_t steps = 0;
};

void finalize_stats(SampleBatch& batch, std::size_t n_requested) {
  auto& st = batch.stats;
  st.budget_exhausted = st.accepted < n_requested;
  if (!batch.accepted.empty()) {
    std::unordered_set<Sentence, SentenceHash> unique(batch.accepted.begin(),
                                                      batch.accepted.end());
    st.distinct_fraction =
        static_cast<double>(unique.size()) / static_cast<double>(batch.accepted.size());
  }
}

// Drives independent particles indexed 0,1,2,...; consumes indices in order
// until n_accept acceptances or the budget runs out. Each particle is a pure
// function of its index, so the parallel path only precomputes outcomes and
// the sequential scan below decides what was actually consumed.
template <typename Eval>
SampleBatch run_indexed_particles(std::size_t n_accept, const SamplerOptions& options,
                                  const Eval& eval) {
  SampleBatch batch;
  auto& st = batch.stats;
  auto consume = [&](ParticleOutcome&& o) {
    ++st.proposals;
    st.token_steps_total += o.steps;
    if (o.accepted) {
      ++st.accepted;
      batch.accepted.push_back(std::move(o.sentence));
    } else {
      st.token_steps_wasted += o.steps;
    }
  };

  if (options.workers <= 1) {
    for (std::uint64_t index = 0; st.accepted < n_accept && index < options.budget; ++index)
      consume(eval(index));
  } else {
    const std::uint64_t stripe = 2048;
    const auto n_workers = static_cast<std::uint64_t>(options.workers);
    std::vector<ParticleOutcome> results(stripe * n_workers);
    std::uint64_t base = 0;
    while (st.accepted < n_accept && base < options.budget) {
      std::uint64_t chunk = std::min<std::uint64_t>(stripe * n_workers, options.budget - base);
      std::uint64_t per = (chunk + n_workers - 1) / n_workers;
      std::vector<std::thread> pool;
      for (std::uint64_t w = 0; w < n_workers; ++w) {
        std::uint64_t lo = w * per, hi = std::min(chunk, lo + per);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi]() {
          for (std::uint64_t i = lo; i < hi; ++i) results[i] = eval(base + i);
        });
      }
      for (auto& th : pool) th.join();
      for (std::uint64_t i = 0; i < chunk && st.accepted < n_accept; ++i)
        consume(std::move(results[i]));
      base += chunk;
    }
  }
  finalize_stats(batch, n_accept);
  return batch;
}

}  // namespace

SampleBatch rejection_sample(const TailoredDistribution& t, std::size_t n_accept,
                             std::uint64_t seed, const SamplerOptions& options) {
  if (n_accept < 1) throw ConfigError("n_accept must be >= 1");
  Rng base(seed);
  const NGramModel& model = t.model();
  const EstimatorStack& stack = t.stack();
  const std::size_t max_len = t.max_len();

  auto eval = [&](std::uint64_t index) {
    Rng stream = base.fork(index);
    ParticleOutcome o;
    o.sentence = model.sample_sentence(stream, max_len);
    o.steps = NGramModel::sample_token_steps(o.sentence, max_len);
    double r = stream.positive01();
    o.accepted = r <= stack.acceptance_prob(o.sentence);
    return o;
  };
  return run_indexed_particles(n_accept, options, eval);
}

namespace {

SampleBatch ers_sample_impl(const TailoredDistribution& t, const PrefixScorer& scorer,
                            std::size_t n_accept, std::uint64_t seed,
                            const SamplerOptions& options) {
  if (n_accept < 1) throw ConfigError("n_accept must be >= 1");
  Rng base(seed);
  const NGramModel& model = t.model();
  const std::size_t max_len = t.max_len();

  auto eval = [&](std::uint64_t index) {
    Rng stream = base.fork(index);
    ParticleOutcome o;
    const double r = stream.positive01();
    const double inv_r = 1.0 / r;
    std::vector<TokenId> prefix;
    auto finish = [&](Sentence&& s) {
      double g = options.ers_final_full_check ? scorer.final_ratio(s)
                                              : scorer.prefix_ratio(s.ids);
      o.accepted = g <= inv_r;
      o.sentence = std::move(s);
    };
    while (true) {
      if (prefix.size() == max_len) {
        Sentence s{std::move(prefix)};
        s.ids.push_back(kEosId);  // forced, no model call
        finish(std::move(s));
        return o;
      }
      std::vector<double> dist = model.next_dist(prefix);
      double u = stream.real01();
      double cum = 0.0;
      TokenId tok = static_cast<TokenId>(dist.size() - 1);
      for (TokenId w = 0; w < dist.size(); ++w) {
        cum += dist[w];
        if (u < cum) {
          tok = w;
          break;
        }
      }
      ++o.steps;
      if (tok == kEosId) {
        Sentence s{std::move(prefix)};
        s.ids.push_back(kEosId);
        finish(std::move(s));
        return o;
      }
      prefix.push_back(tok);
      if (scorer.prefix_ratio(prefix) > inv_r) return o;  // killed early
    }
  };
  return run_indexed_particles(n_accept, options, eval);
}

}  // namespace

SampleBatch ers_sample(const TailoredDistribution& t, std::size_t n_accept,
                       std::uint64_t seed, const SamplerOptions& options) {
  if (!t.stack().has_prefix_estimators())
    throw DataError("ers requires prefix (dual) estimators in the stack");
  StackPrefixScorer scorer(t.stack());
  return ers_sample_impl(t, scorer, n_accept, seed, options);
}

SampleBatch ers_sample(const TailoredDistribution& t, const PrefixScorer& scorer,
                       std::size_t n_accept, std::uint64_t seed,
                       const SamplerOptions& options) {
  return ers_sample_impl(t, scorer, n_accept, seed, options);
}

SampleBatch smc_sample(const TailoredDistribution& t, std::size_t n_particles,
                       std::uint64_t seed) {
  if (n_particles < 2) throw ConfigError("smc needs at least 2 particles");
  if (!t.stack().has_prefix_estimators())
    throw DataError("smc requires prefix (dual) estimators in the stack");
  const NGramModel& model = t.model();
  const EstimatorStack& stack = t.stack();
  const std::size_t max_len = t.max_len();
  Rng rng(seed);

  struct Particle {
    std::vector<TokenId> prefix;
    double prev_ratio;
    std::uint64_t own_steps = 0;  // model calls since this lineage last branched
  };
  struct Frozen {
    Sentence sentence;
    double weight;
    std::uint64_t own_steps;
  };

  SampleBatch batch;
  auto& st = batch.stats;
  st.proposals = n_particles;

  const double empty_ratio = stack.composite_prefix_ratio({});
  std::vector<Particle> alive(n_particles, Particle{{}, empty_ratio, 0});
  std::vector<Frozen> frozen;
  frozen.reserve(n_particles);

  std::vector<double> weights;
  std::vector<Particle> survivors;
  while (!alive.empty()) {
    weights.clear();
    survivors.clear();
    for (Particle& p : alive) {
      if (p.prefix.size() == max_len) {
        Sentence s{std::move(p.prefix)};
        s.ids.push_back(kEosId);
        double g = stack.composite_prefix_ratio(s.ids);
        frozen.push_back({std::move(s), p.prev_ratio / g, p.own_steps});
        continue;
      }
      std::vector<double> dist = model.next_dist(p.prefix);
      double u = rng.real01();
      double cum = 0.0;
      TokenId tok = static_cast<TokenId>(dist.size() - 1);
      for (TokenId w = 0; w < dist.size(); ++w) {
        cum += dist[w];
        if (u < cum) {
          tok = w;
          break;
        }
      }
      ++st.token_steps_total;
      ++p.own_steps;
      if (tok == kEosId) {
        Sentence s{std::move(p.prefix)};
        s.ids.push_back(kEosId);
        double g = stack.composite_prefix_ratio(s.ids);
        frozen.push_back({std::move(s), p.prev_ratio / g, p.own_steps});
        continue;
      }
      p.prefix.push_back(tok);
      double g = stack.composite_prefix_ratio(p.prefix);
      weights.push_back(p.prev_ratio / g);
      p.prev_ratio = g;
      survivors.push_back(std::move(p));
    }

    // Multinomial resampling over the still-growing particles. Weights are
    // strictly positive under the ratio clamp.
    if (!survivors.empty()) {
      for (double w : weights) assert(w > 0.0);
      std::vector<std::size_t> offspring(survivors.size(), 0);
      std::vector<Particle> next;
      next.reserve(survivors.size());
      for (std::size_t i = 0; i < survivors.size(); ++i) {
        std::size_t a = rng.categorical(weights);
        ++offspring[a];
        next.push_back(survivors[a]);
        if (offspring[a] > 1) next.back().own_steps = 0;  // copies retrace paid work
      }
      for (std::size_t i = 0; i < survivors.size(); ++i)
        if (offspring[i] == 0) st.token_steps_wasted += survivors[i].own_steps;
      alive = std::move(next);
    } else {
      alive.clear();
    }
  }

  // Final importance-weighted resampling to an equal-weight batch.
  weights.clear();
  for (const Frozen& f : frozen) weights.push_back(f.weight);
  std::vector<std::size_t> chosen(frozen.size(), 0);
  for (std::size_t i = 0; i < frozen.size(); ++i) {
    std::size_t a = rng.categorical(weights);
    ++chosen[a];
    batch.accepted.push_back(frozen[a].sentence);
  }
  for (std::size_t i = 0; i < frozen.size(); ++i)
    if (chosen[i] == 0) st.token_steps_wasted += frozen[i].own_steps;
  st.accepted = batch.accepted.size();
  finalize_stats(batch, n_particles);
  return batch;
}

LogNormalizer estimate_log_normalizer(const TailoredDistribution& t,
                                      std::size_t n_is, std::uint64_t seed) {
  if (n_is < 1000) throw ConfigError("normalizer estimation needs n_is >= 1000");
  Rng base(seed);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n_is; ++i) {
    Rng stream = base.fork(i);
    Sentence s = t.model().sample_sentence(stream, t.max_len());
    double a = t.stack().acceptance_prob(s);
    sum += a;
    sum_sq += a * a;
  }
  double n = static_cast<double>(n_is);
  LogNormalizer ln;
  ln.n_draws = n_is;
  ln.z = sum / n;
  double var = std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0));
  ln.z_stderr = std::sqrt(var / n);
  ln.log_z = std::log(ln.z);
  ln.log_z_stderr = ln.z_stderr / ln.z;
  return ln;
}

}  // namespace mctailor
