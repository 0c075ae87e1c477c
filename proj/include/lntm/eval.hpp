#pragma once

// Evaluation suite: held-out perplexity, retrieval precision at a fraction or
// top-k cutoff, NPMI topic coherence, forgetting evaluation of past tasks
// under future parameters, and the zero-shot / data-augmentation baselines.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "lntm/corpus.hpp"
#include "lntm/lifelong.hpp"
#include "lntm/model.hpp"

namespace lntm {

// Held-out perplexity exp( mean over documents of NLL(v)/|v| ). Out-of-range
// word indices are dropped; documents left empty are skipped and counted.
inline double perplexity(const std::vector<Document>& test_docs,
                         const ModelParams& params,
                         const EmbTfContext* ctx = nullptr,
                         std::size_t* skipped = nullptr) {
  if (test_docs.empty()) throw std::invalid_argument("empty test set");
  if (!params.all_finite())
    throw std::invalid_argument("model parameters contain non-finite values");
  return held_out_ppl(test_docs, params, ctx, skipped);
}

// --- retrieval ------------------------------------------------------------------

struct RetrievalDepth {
  enum class Kind { kFraction, kTopK } kind = Kind::kFraction;
  double fraction = 0.02;
  std::size_t top_k = 10;

  static RetrievalDepth Fraction(double f) {
    RetrievalDepth d;
    d.kind = Kind::kFraction;
    d.fraction = f;
    return d;
  }
  static RetrievalDepth TopK(std::size_t k) {
    RetrievalDepth d;
    d.kind = Kind::kTopK;
    d.top_k = k;
    return d;
  }

  // fraction mode retrieves ceil(R * n), at least one document
  std::size_t count(std::size_t n_train) const {
    std::size_t n;
    if (kind == Kind::kFraction)
      n = static_cast<std::size_t>(
          std::ceil(fraction * static_cast<double>(n_train)));
    else
      n = top_k;
    return std::min(std::max<std::size_t>(n, 1), n_train);
  }
};

struct IRResult {
  RetrievalDepth depth;
  double mean_precision = 0.0;
  std::vector<double> per_query;
};

struct RepresentedDoc {
  std::string id;
  std::string label;
  std::vector<double> vec;
};

// Core ranking: cosine similarity, ties broken by ascending document id; a
// zero-norm vector on either side yields similarity -inf (never NaN).
inline IRResult ir_precision_from_vectors(
    const std::vector<RepresentedDoc>& train,
    const std::vector<RepresentedDoc>& queries, RetrievalDepth depth) {
  if (train.empty() || queries.empty())
    throw std::invalid_argument("retrieval needs non-empty train and query sets");
  const std::size_t n = train.size();
  const std::size_t retrieve = depth.count(n);

  std::vector<double> train_norm(n);
  for (std::size_t i = 0; i < n; ++i)
    train_norm[i] = std::sqrt(
        dot(train[i].vec.data(), train[i].vec.data(), train[i].vec.size()));

  IRResult res;
  res.depth = depth;
  res.per_query.reserve(queries.size());
  std::vector<std::size_t> order(n);
  std::vector<double> sim(n);
  for (const auto& q : queries) {
    double qn = std::sqrt(dot(q.vec.data(), q.vec.data(), q.vec.size()));
    for (std::size_t i = 0; i < n; ++i) {
      double denom = qn * train_norm[i];
      sim[i] = denom > 0.0
                   ? dot(q.vec.data(), train[i].vec.data(), q.vec.size()) /
                         denom
                   : -std::numeric_limits<double>::infinity();
    }
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::partial_sort(order.begin(), order.begin() + retrieve, order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (sim[a] != sim[b]) return sim[a] > sim[b];
                        return train[a].id < train[b].id;
                      });
    std::size_t hits = 0;
    for (std::size_t r = 0; r < retrieve; ++r)
      if (train[order[r]].label == q.label) ++hits;
    res.per_query.push_back(static_cast<double>(hits) /
                            static_cast<double>(retrieve));
  }
  res.mean_precision =
      std::accumulate(res.per_query.begin(), res.per_query.end(), 0.0) /
      static_cast<double>(res.per_query.size());
  return res;
}

inline std::vector<RepresentedDoc> represent_docs(
    const std::vector<Document>& docs, const ModelParams& params,
    ReprMode mode, const EmbTfContext* ctx = nullptr) {
  std::vector<RepresentedDoc> out;
  out.reserve(docs.size());
  for (const auto& d : docs)
    out.push_back({d.id, d.label, doc_representation(d, params, mode, ctx)});
  return out;
}

// Each test document queries the training set; precision is the fraction of
// retrieved documents sharing the query's label, averaged over queries.
inline IRResult ir_precision(const std::vector<Document>& train_docs,
                             const std::vector<Document>& test_docs,
                             const ModelParams& params, RetrievalDepth depth,
                             ReprMode mode = ReprMode::kAllWords,
                             const EmbTfContext* ctx = nullptr) {
  return ir_precision_from_vectors(represent_docs(train_docs, params, mode, ctx),
                                   represent_docs(test_docs, params, mode, ctx),
                                   depth);
}

// --- topic coherence -------------------------------------------------------------

struct CoherenceResult {
  std::vector<double> per_topic;
  double mean_coh = 0.0;
};

// NPMI coherence over all unordered pairs of each topic's words, with
// probabilities estimated from boolean sliding windows of width `window` over
// the reference training documents. Both the joint and the marginal product
// are smoothed by eps so absent tokens never produce NaN (an absent pair
// scores log(eps/eps) = 0).
inline CoherenceResult coherence(
    const std::vector<std::vector<std::pair<std::string, double>>>& topics,
    const Collection& reference, std::size_t window = 10,
    double eps = 1e-12) {
  if (reference.train.empty())
    throw std::invalid_argument("coherence needs a non-empty reference train split");

  // dense ids for the tokens under evaluation
  std::unordered_map<std::string, std::size_t> involved;
  for (const auto& topic : topics)
    for (const auto& [tok, w] : topic)
      involved.emplace(tok, involved.size());
  const std::size_t m = involved.size();

  // map reference vocabulary indices to involved ids
  std::vector<std::int32_t> inv_of(reference.vocab.size(), -1);
  for (std::size_t v = 0; v < reference.vocab.size(); ++v) {
    auto it = involved.find(reference.vocab.token(v));
    if (it != involved.end()) inv_of[v] = static_cast<std::int32_t>(it->second);
  }

  std::vector<double> marg(m, 0.0);
  Matrix joint(m, m);  // upper triangle used
  double n_windows = 0.0;
  std::vector<std::size_t> present;
  std::vector<char> seen(m, 0);
  for (const auto& doc : reference.train) {
    const auto& w = doc.words;
    std::size_t n_win = w.size() > window ? w.size() - window + 1 : 1;
    for (std::size_t s = 0; s < n_win; ++s) {
      std::size_t end = std::min(s + window, w.size());
      present.clear();
      for (std::size_t i = s; i < end; ++i) {
        std::int32_t inv = inv_of[static_cast<std::size_t>(w[i])];
        if (inv >= 0 && !seen[static_cast<std::size_t>(inv)]) {
          seen[static_cast<std::size_t>(inv)] = 1;
          present.push_back(static_cast<std::size_t>(inv));
        }
      }
      for (std::size_t a = 0; a < present.size(); ++a) {
        marg[present[a]] += 1.0;
        for (std::size_t b = a + 1; b < present.size(); ++b) {
          std::size_t lo = std::min(present[a], present[b]);
          std::size_t hi = std::max(present[a], present[b]);
          joint(lo, hi) += 1.0;
        }
      }
      for (std::size_t p : present) seen[p] = 0;
      n_windows += 1.0;
    }
  }

  CoherenceResult res;
  for (const auto& topic : topics) {
    // canonical pair order (sorted token strings) makes the score exactly
    // invariant to reordering the same word set
    std::vector<std::string> members;
    members.reserve(topic.size());
    for (const auto& [tok, w] : topic) members.push_back(tok);
    std::sort(members.begin(), members.end());
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < members.size(); ++a) {
      std::size_t ia = involved.at(members[a]);
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        std::size_t ib = involved.at(members[b]);
        double pa = marg[ia] / n_windows;
        double pb = marg[ib] / n_windows;
        double pab = joint(std::min(ia, ib), std::max(ia, ib)) / n_windows;
        double npmi = std::log((pab + eps) / (pa * pb + eps)) /
                      (-std::log(pab + eps));
        sum += npmi;
        ++pairs;
      }
    }
    res.per_topic.push_back(pairs ? sum / static_cast<double>(pairs) : 0.0);
  }
  res.mean_coh =
      std::accumulate(res.per_topic.begin(), res.per_topic.end(), 0.0) /
      static_cast<double>(res.per_topic.size());
  return res;
}

// --- forgetting -------------------------------------------------------------------

enum class ForgettingMetric { kPpl, kIrPrecision };

// Evaluates a past task under future parameters: on a copy of the past
// parameters, the columns of W, rows of U and entries of b belonging to
// shared-vocabulary words are overwritten by the future model's, then the
// chosen metric runs on the past task's own splits. Stored pool entries are
// never modified. With no shared vocabulary the past parameters are used
// unmodified (with a warning).
inline double forgetting_eval(const PoolEntry& past,
                              const Collection& past_coll,
                              const ModelParams& params_future,
                              const Vocabulary& future_vocab,
                              ForgettingMetric metric,
                              RetrievalDepth depth = RetrievalDepth::Fraction(0.02),
                              ReprMode mode = ReprMode::kAllWords) {
  if (past.params.hidden() != params_future.hidden())
    throw std::invalid_argument(
        "hidden size mismatch between past and future models");
  if (params_future.vocab_size() != future_vocab.size())
    throw std::invalid_argument("future vocabulary does not match model");
  if (!(past.vocab == past_coll.vocab))
    throw std::invalid_argument("pool entry and collection vocabularies differ");

  ModelParams hybrid = past.params;
  VocabAlignment align = align_vocabs(past.vocab, future_vocab);
  if (align.pairs.empty()) {
    std::fprintf(stderr,
                 "warning: no shared vocabulary between %s and the future "
                 "task; forgetting metric uses unmodified past parameters\n",
                 past.task_id.c_str());
  }
  const std::size_t h = hybrid.hidden();
  for (const auto& [pi, fi] : align.pairs) {
    std::size_t p = static_cast<std::size_t>(pi);
    std::size_t f = static_cast<std::size_t>(fi);
    for (std::size_t j = 0; j < h; ++j) hybrid.W(j, p) = params_future.W(j, f);
    for (std::size_t j = 0; j < h; ++j) hybrid.U(p, j) = params_future.U(f, j);
    hybrid.b[p] = params_future.b[f];
  }

  if (metric == ForgettingMetric::kPpl)
    return perplexity(past_coll.test, hybrid);
  return ir_precision(past_coll.train, past_coll.test, hybrid, depth, mode)
      .mean_precision;
}

// --- zero-shot and data-augmentation baselines --------------------------------------

struct ZeroShotResult {
  double ppl = std::numeric_limits<double>::quiet_NaN();
  IRResult ir;
  std::size_t skipped_test_docs = 0;
};

// Scores a future collection with a past model and no training: documents are
// re-encoded into the past model's vocabulary (OOV dropped, emptied documents
// skipped).
inline ZeroShotResult zero_shot_eval(const Collection& future_coll,
                                     const ModelParams& params_past,
                                     const Vocabulary& vocab_past,
                                     RetrievalDepth depth = RetrievalDepth::Fraction(0.02),
                                     ReprMode mode = ReprMode::kAllWords) {
  if (params_past.vocab_size() != vocab_past.size())
    throw std::invalid_argument("past vocabulary does not match model");
  auto re_split = [&](const std::vector<Document>& docs) {
    std::vector<Document> out;
    for (const auto& d : docs) {
      Document r = reencode(d, future_coll.vocab, vocab_past);
      if (!r.words.empty()) out.push_back(std::move(r));
    }
    return out;
  };
  std::vector<Document> test = re_split(future_coll.test);
  std::vector<Document> train = re_split(future_coll.train);
  if (test.empty() || train.empty())
    throw std::runtime_error(
        "zero-shot evaluation impossible: no documents survive re-encoding");
  ZeroShotResult res;
  res.skipped_test_docs = future_coll.test.size() - test.size();
  res.ppl = perplexity(test, params_past);
  res.ir = ir_precision(train, test, params_past, depth, mode);
  return res;
}

struct DataAugmentResult {
  ModelParams params;
  Collection union_coll;  // all collections re-encoded into the union vocabulary
  TrainResult train;
};

// Data-augmentation baseline: one plain model trained on the union of all
// collections. The union vocabulary appends unseen tokens in first-seen order
// over the given collection order, so a single collection reproduces its own
// vocabulary (and training) exactly.
inline DataAugmentResult data_augment_train(
    std::span<const Collection* const> colls, std::size_t hidden,
    Activation activation, const TrainHyper& hyper) {
  if (colls.empty()) throw std::invalid_argument("no collections given");
  std::vector<std::string> tokens;
  {
    std::unordered_map<std::string, int> seen;
    for (const Collection* c : colls)
      for (const auto& t : c->vocab.tokens())
        if (seen.emplace(t, 1).second) tokens.push_back(t);
  }
  Collection u;
  u.name = "union";
  u.vocab = Vocabulary(std::move(tokens));
  for (const Collection* c : colls) {
    for (const auto& d : c->train) u.train.push_back(reencode(d, c->vocab, u.vocab));
    for (const auto& d : c->val) u.val.push_back(reencode(d, c->vocab, u.vocab));
    for (const auto& d : c->test) u.test.push_back(reencode(d, c->vocab, u.vocab));
    u.labels.insert(c->labels.begin(), c->labels.end());
  }
  DataAugmentResult res;
  ModelParams init =
      ModelParams::init(hidden, u.vocab.size(), activation, hyper.seed);
  res.train = train_task(u, std::move(init), hyper);
  res.params = res.train.params;
  res.union_coll = std::move(u);
  return res;
}

}  // namespace lntm
