#pragma once

// Autoregressive neural topic model core. A document v = (v_1..v_D) is scored
// as a product of per-word conditionals
//
//   h_i = g(c + sum_{q<i} W[:,v_q])            g in {sigmoid, tanh}
//   p(v_i = w | v_<i) = softmax(b + U h_i)_w
//
// with W (H x K) shared across positions. Row j of W scores vocabulary words
// for latent topic j; column v of W is the latent embedding word v adds to the
// hidden pre-activation. Training is per-document SGD on the negative
// log-likelihood, with optional hooks used by the lifelong layer (see
// lifelong.hpp). All arithmetic is 64-bit; every seeded path is
// bit-reproducible.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lntm/corpus.hpp"
#include "lntm/matrix.hpp"
#include "lntm/rng.hpp"

namespace lntm {

enum class Activation : std::uint8_t { kSigmoid = 0, kTanh = 1 };

inline const char* activation_name(Activation a) {
  return a == Activation::kSigmoid ? "sigmoid" : "tanh";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "sigmoid") return Activation::kSigmoid;
  if (s == "tanh") return Activation::kTanh;
  throw std::invalid_argument("unknown activation: " + s);
}

inline double activate(Activation a, double x) {
  return a == Activation::kSigmoid ? 1.0 / (1.0 + std::exp(-x))
                                   : std::tanh(x);
}

// Derivative expressed through the activation value h.
inline double activate_deriv_from_value(Activation a, double h) {
  return a == Activation::kSigmoid ? h * (1.0 - h) : 1.0 - h * h;
}

// The full parameter set of one model.
struct ModelParams {
  Matrix W;               // H x K encoder; rows = topics, columns = words
  Matrix U;               // K x H decoder
  std::vector<double> b;  // K visible bias
  std::vector<double> c;  // H hidden bias
  Activation activation = Activation::kSigmoid;

  std::size_t hidden() const { return W.rows; }
  std::size_t vocab_size() const { return W.cols; }

  bool all_finite() const {
    return W.all_finite() && U.all_finite() && lntm::all_finite(b) &&
           lntm::all_finite(c);
  }

  // Seeded fan-based init: W, U ~ uniform(-s, s) with s = sqrt(6/(H+K));
  // biases zero. W is filled before U, row-major.
  static ModelParams init(std::size_t hidden, std::size_t vocab,
                          Activation act, std::uint64_t seed) {
    ModelParams p;
    p.W = Matrix(hidden, vocab);
    p.U = Matrix(vocab, hidden);
    p.b.assign(vocab, 0.0);
    p.c.assign(hidden, 0.0);
    p.activation = act;
    double s = std::sqrt(6.0 / static_cast<double>(hidden + vocab));
    Rng rng(seed);
    for (double& x : p.W.data) x = rng.uniform(-s, s);
    for (double& x : p.U.data) x = rng.uniform(-s, s);
    return p;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Additive per-word pre-activation shift built from accumulated word
// embeddings of past tasks (see lifelong.hpp). Row v of `shift` is
// sum_t lambda_t E^t[:,v]; words unseen in a past task contribute zero there.
struct EmbTfContext {
  Matrix shift;  // K x H
  std::vector<std::pair<std::string, double>> sources;  // (task_id, lambda)

  const double* shift_for(std::int32_t word) const {
    return shift.row(static_cast<std::size_t>(word));
  }
  bool consistent_with(const ModelParams& p) const {
    return shift.rows == p.vocab_size() && shift.cols == p.hidden();
  }
};

struct ForwardTrace {
  Matrix hiddens;                // D x H
  Matrix preacts;                // D x H
  std::vector<double> logprobs;  // D, log p(v_i | v_<i)
};

struct ParamGrads {
  Matrix W;  // H x K
  Matrix U;  // K x H
  std::vector<double> b;
  std::vector<double> c;

  void resize_like(const ModelParams& p) {
    if (!W.same_shape(p.W)) W = Matrix(p.W.rows, p.W.cols);
    if (!U.same_shape(p.U)) U = Matrix(p.U.rows, p.U.cols);
    b.assign(p.b.size(), 0.0);
    c.assign(p.c.size(), 0.0);
  }
  void set_zero() {
    W.set_zero();
    U.set_zero();
    std::fill(b.begin(), b.end(), 0.0);
    std::fill(c.begin(), c.end(), 0.0);
  }
};

struct TrainHyper {
  double learning_rate = 0.001;
  std::size_t max_epochs = 100;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  std::size_t early_stop_patience = 10;
};

namespace detail {

// Reusable per-document buffers; training reuses one across all documents.
struct Workspace {
  Matrix hiddens, preacts, probs;  // D x H, D x H, D x K
  std::vector<double> logprobs;    // D
  std::vector<double> logits;      // K
  std::vector<double> dh, da, acc; // H

  void reserve(std::size_t d, std::size_t h, std::size_t k) {
    if (hiddens.rows < d || hiddens.cols != h) {
      hiddens = Matrix(d, h);
      preacts = Matrix(d, h);
    }
    if (probs.rows < d || probs.cols != k) probs = Matrix(d, k);
    if (logprobs.size() < d) logprobs.resize(d);
    logits.resize(k);
    dh.resize(h);
    da.resize(h);
    acc.resize(h);
  }
};

// Softmax of b + U h over the vocabulary; fills probs and returns log Z - 0
// shifted pieces needed for log p(target): returns (max, logZ).
inline std::pair<double, double> conditional_into(const ModelParams& p,
                                                  const double* h,
                                                  double* logits,
                                                  double* probs) {
  const std::size_t k = p.vocab_size(), hh = p.hidden();
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t w = 0; w < k; ++w) {
    logits[w] = p.b[w] + dot(p.U.row(w), h, hh);
    m = std::max(m, logits[w]);
  }
  double z = 0.0;
  for (std::size_t w = 0; w < k; ++w) {
    probs[w] = std::exp(logits[w] - m);
    z += probs[w];
  }
  double inv = 1.0 / z;
  for (std::size_t w = 0; w < k; ++w) probs[w] *= inv;
  return {m, std::log(z)};
}

// Full forward pass via the incremental pre-activation recurrence
// a <- a + W[:,v_i] (+ embedding shift). Assumes validated inputs.
inline double forward_into(const Document& doc, const ModelParams& p,
                           const EmbTfContext* ctx, Workspace& ws) {
  const std::size_t d = doc.words.size(), h = p.hidden();
  ws.reserve(d, h, p.vocab_size());
  std::vector<double> a(p.c);
  double nll = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double* hi = ws.hiddens.row(i);
    double* ai = ws.preacts.row(i);
    for (std::size_t j = 0; j < h; ++j) {
      ai[j] = a[j];
      hi[j] = activate(p.activation, a[j]);
    }
    auto [m, logz] =
        conditional_into(p, hi, ws.logits.data(), ws.probs.row(i));
    std::size_t w = static_cast<std::size_t>(doc.words[i]);
    ws.logprobs[i] = ws.logits[w] - m - logz;
    nll -= ws.logprobs[i];
    // pre-activation for the next position
    const double* col = &p.W.data[w];
    for (std::size_t j = 0; j < h; ++j) a[j] += col[j * p.W.cols];
    if (ctx) axpy(1.0, ctx->shift_for(doc.words[i]), a.data(), h);
  }
  return nll;
}

// Analytic gradient of the document NLL; accumulates into g scaled by
// `weight`. Returns the (unweighted) NLL.
inline double nll_gradients_into(const Document& doc, const ModelParams& p,
                                 const EmbTfContext* ctx, Workspace& ws,
                                 ParamGrads& g, double weight) {
  double nll = forward_into(doc, p, ctx, ws);
  const std::size_t d = doc.words.size(), h = p.hidden(),
                    k = p.vocab_size();
  std::fill(ws.acc.begin(), ws.acc.end(), 0.0);
  for (std::size_t i = d; i-- > 0;) {
    const double* hi = ws.hiddens.row(i);
    double* pi = ws.probs.row(i);
    std::size_t tgt = static_cast<std::size_t>(doc.words[i]);
    // delta = p - onehot(target), folded into b/U/dh in one sweep
    std::fill(ws.dh.begin(), ws.dh.end(), 0.0);
    for (std::size_t w = 0; w < k; ++w) {
      double delta = pi[w] - (w == tgt ? 1.0 : 0.0);
      g.b[w] += weight * delta;
      double wd = weight * delta;
      double* gu = g.U.row(w);
      const double* uw = p.U.row(w);
      for (std::size_t j = 0; j < h; ++j) {
        gu[j] += wd * hi[j];
        ws.dh[j] += delta * uw[j];
      }
    }
    for (std::size_t j = 0; j < h; ++j)
      ws.acc[j] += ws.dh[j] * activate_deriv_from_value(p.activation, hi[j]);
    if (i > 0) {
      // words before position i receive the suffix sum of hidden deltas
      std::size_t prev = static_cast<std::size_t>(doc.words[i - 1]);
      double* colw = &g.W.data[prev];
      for (std::size_t j = 0; j < h; ++j)
        colw[j * g.W.cols] += weight * ws.acc[j];
    }
  }
  for (std::size_t j = 0; j < h; ++j) g.c[j] += weight * ws.acc[j];
  return nll;
}

inline void validate_doc(const Document& doc, const ModelParams& p) {
  if (doc.words.empty())
    throw std::invalid_argument("empty document: " + doc.id);
  for (std::int32_t w : doc.words)
    if (w < 0 || static_cast<std::size_t>(w) >= p.vocab_size())
      throw std::invalid_argument("word index out of range in document " +
                                  doc.id);
}

inline void validate_inputs(const Document& doc, const ModelParams& p,
                            const EmbTfContext* ctx) {
  if (!p.all_finite())
    throw std::invalid_argument("model parameters contain non-finite values");
  if (ctx && !ctx->consistent_with(p))
    throw std::invalid_argument(
        "embedding-transfer context shape does not match model");
  validate_doc(doc, p);
}

}  // namespace detail

inline ForwardTrace forward(const Document& doc, const ModelParams& params,
                            const EmbTfContext* ctx = nullptr) {
  detail::validate_inputs(doc, params, ctx);
  detail::Workspace ws;
  detail::forward_into(doc, params, ctx, ws);
  const std::size_t d = doc.words.size(), h = params.hidden();
  ForwardTrace t;
  t.hiddens = Matrix(d, h);
  t.preacts = Matrix(d, h);
  t.logprobs.assign(ws.logprobs.begin(), ws.logprobs.begin() + d);
  for (std::size_t i = 0; i < d; ++i) {
    std::memcpy(t.hiddens.row(i), ws.hiddens.row(i), h * sizeof(double));
    std::memcpy(t.preacts.row(i), ws.preacts.row(i), h * sizeof(double));
  }
  return t;
}

// The conditional distribution p(. | hidden state h); exposed for tests and
// diagnostics.
inline std::vector<double> conditional_distribution(const ModelParams& params,
                                                    const double* h) {
  std::vector<double> logits(params.vocab_size()), probs(params.vocab_size());
  detail::conditional_into(params, h, logits.data(), probs.data());
  return probs;
}

inline double compute_nll(const Document& doc, const ModelParams& params,
                          const EmbTfContext* ctx = nullptr) {
  detail::validate_inputs(doc, params, ctx);
  detail::Workspace ws;
  return detail::forward_into(doc, params, ctx, ws);
}

inline std::pair<double, ParamGrads> gradients(
    const Document& doc, const ModelParams& params,
    const EmbTfContext* ctx = nullptr) {
  detail::validate_inputs(doc, params, ctx);
  detail::Workspace ws;
  ParamGrads g;
  g.resize_like(params);
  double nll = detail::nll_gradients_into(doc, params, ctx, ws, g, 1.0);
  return {nll, std::move(g)};
}

// Held-out perplexity: exp of the mean (over documents) per-word NLL.
// Word indices outside the model's vocabulary are dropped; documents that
// become empty are skipped and counted in *skipped.
inline double held_out_ppl(const std::vector<Document>& docs,
                           const ModelParams& params,
                           const EmbTfContext* ctx = nullptr,
                           std::size_t* skipped = nullptr) {
  detail::Workspace ws;
  double sum = 0.0;
  std::size_t used = 0, skip = 0;
  Document clipped;
  for (const auto& doc : docs) {
    const Document* use = &doc;
    bool oov = false;
    for (std::int32_t w : doc.words)
      if (w < 0 || static_cast<std::size_t>(w) >= params.vocab_size()) {
        oov = true;
        break;
      }
    if (oov) {
      clipped.words.clear();
      for (std::int32_t w : doc.words)
        if (w >= 0 && static_cast<std::size_t>(w) < params.vocab_size())
          clipped.words.push_back(w);
      use = &clipped;
    }
    if (use->words.empty()) {
      ++skip;
      continue;
    }
    double nll = detail::forward_into(*use, params, ctx, ws);
    sum += nll / static_cast<double>(use->words.size());
    ++used;
  }
  if (skipped) *skipped = skip;
  if (used == 0)
    throw std::runtime_error("no scorable documents for perplexity");
  return std::exp(sum / static_cast<double>(used));
}

// --- training ----------------------------------------------------------------

// A past-task document co-trained alongside the current collection; weight is
// the per-source augmentation strength.
struct AugmentedDoc {
  const Document* doc = nullptr;
  double weight = 1.0;
};

// Extension point for regularizers evaluated once per current-task document
// step (see lifelong.hpp). add_grads both accumulates dReg/dW,dU into the
// step's gradients and stashes gradients for the hook's own parameters, which
// `update` then applies.
class RegularizerHook {
 public:
  virtual ~RegularizerHook() = default;
  virtual void add_grads(const ModelParams& params, ParamGrads& grads) = 0;
  virtual void update(double lr) = 0;
  virtual void on_best() {}  // called when a new best-val snapshot is taken
};

struct History {
  std::vector<double> train_loss;  // mean per-document NLL, per epoch
  std::vector<double> val_ppl;     // per epoch; empty if no validation split

  friend bool operator==(const History&, const History&) = default;
};

struct TrainResult {
  ModelParams params;  // snapshot with the best validation perplexity
  double best_val_ppl = std::numeric_limits<double>::quiet_NaN();
  std::size_t best_epoch = 0;  // 1-based; 0 if no validation split
  History history;
  std::vector<double> epoch_seconds;  // wall clock, excluded from determinism
};

namespace detail {

// Shared SGD loop. Plain training passes empty `augmented` and null hook;
// the lifelong path reuses the exact same code so that a run with every
// transfer strength at zero is bit-identical to plain training.
inline TrainResult train_loop(const std::vector<Document>& train_docs,
                              const std::vector<Document>& val_docs,
                              ModelParams params, const TrainHyper& hyper,
                              const EmbTfContext* ctx,
                              std::span<const AugmentedDoc> augmented,
                              RegularizerHook* reg) {
  if (train_docs.empty())
    throw std::invalid_argument("no training documents");
  if (hyper.max_epochs < 1)
    throw std::invalid_argument("max_epochs must be >= 1");
  for (const auto& d : train_docs) validate_doc(d, params);
  for (const auto& a : augmented) validate_doc(*a.doc, params);
  if (!params.all_finite())
    throw std::invalid_argument("model parameters contain non-finite values");

  const std::size_t n_future = train_docs.size();
  const std::size_t n_total = n_future + augmented.size();
  const std::size_t batch = std::max<std::size_t>(hyper.batch_size, 1);

  Workspace ws;
  ParamGrads grads;
  grads.resize_like(params);

  TrainResult res;
  res.best_val_ppl = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  bool have_val = !val_docs.empty();

  std::vector<std::size_t> order(n_total);
  for (std::size_t epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < n_total; ++i) order[i] = i;
    Rng rng(mix64(hyper.seed, epoch));
    rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t pos = 0; pos < n_total; pos += batch) {
      std::size_t end = std::min(pos + batch, n_total);
      grads.set_zero();
      bool reg_pending = false;
      for (std::size_t s = pos; s < end; ++s) {
        std::size_t idx = order[s];
        const Document* doc;
        double weight;
        bool is_future = idx < n_future;
        if (is_future) {
          doc = &train_docs[idx];
          weight = 1.0;
        } else {
          doc = augmented[idx - n_future].doc;
          weight = augmented[idx - n_future].weight;
        }
        double loss = nll_gradients_into(*doc, params, ctx, ws, grads, weight);
        if (!std::isfinite(loss))
          throw std::runtime_error("training diverged at epoch " +
                                   std::to_string(epoch) + ", doc " + doc->id);
        if (is_future) {
          epoch_loss += loss;
          if (reg) {
            reg->add_grads(params, grads);
            reg_pending = true;
          }
        }
      }
      double lr = hyper.learning_rate;
      axpy(-lr, grads.W.data.data(), params.W.data.data(), grads.W.data.size());
      axpy(-lr, grads.U.data.data(), params.U.data.data(), grads.U.data.size());
      axpy(-lr, grads.b.data(), params.b.data(), grads.b.size());
      axpy(-lr, grads.c.data(), params.c.data(), grads.c.size());
      if (reg_pending) reg->update(lr);
    }
    res.history.train_loss.push_back(epoch_loss /
                                     static_cast<double>(n_future));

    if (!params.all_finite())
      throw std::runtime_error("training diverged at epoch " +
                               std::to_string(epoch));

    if (have_val) {
      double ppl = held_out_ppl(val_docs, params, ctx);
      res.history.val_ppl.push_back(ppl);
      if (ppl < res.best_val_ppl) {
        res.best_val_ppl = ppl;
        res.best_epoch = epoch;
        res.params = params;
        if (reg) reg->on_best();
        since_best = 0;
      } else if (++since_best >= hyper.early_stop_patience &&
                 hyper.early_stop_patience > 0) {
        res.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          t0)
                .count());
        break;
      }
    }
    res.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count());
  }
  if (!have_val || res.best_epoch == 0) {
    res.params = std::move(params);
    if (reg) reg->on_best();
    if (!have_val)
      res.best_val_ppl = std::numeric_limits<double>::quiet_NaN();
  }
  return res;
}

}  // namespace detail

// Plain training over one collection; returns the best-validation snapshot.
inline TrainResult train_task(const Collection& coll, ModelParams params,
                              const TrainHyper& hyper,
                              const EmbTfContext* ctx = nullptr) {
  if (coll.vocab.size() != params.vocab_size())
    throw std::invalid_argument(
        "collection vocabulary size does not match model");
  if (ctx && !ctx->consistent_with(params))
    throw std::invalid_argument(
        "embedding-transfer context shape does not match model");
  return detail::train_loop(coll.train, coll.val, std::move(params), hyper,
                            ctx, {}, nullptr);
}

// --- representations and topics -----------------------------------------------

enum class ReprMode {
  kAllWords,   // g(c + sum over all doc words), canonical index order
  kExclusive,  // the last autoregressive hidden state (excludes the last word)
};

inline std::vector<double> doc_representation(
    const Document& doc, const ModelParams& params,
    ReprMode mode = ReprMode::kAllWords, const EmbTfContext* ctx = nullptr) {
  detail::validate_inputs(doc, params, ctx);
  const std::size_t h = params.hidden();
  std::vector<double> a(params.c);
  std::vector<std::int32_t> words(doc.words);
  if (mode == ReprMode::kAllWords) {
    // canonical summation order makes the result permutation-invariant
    std::sort(words.begin(), words.end());
  } else {
    words.pop_back();
  }
  for (std::int32_t w : words) {
    const double* col = &params.W.data[static_cast<std::size_t>(w)];
    for (std::size_t j = 0; j < h; ++j) a[j] += col[j * params.W.cols];
    if (ctx) axpy(1.0, ctx->shift_for(w), a.data(), h);
  }
  for (std::size_t j = 0; j < h; ++j) a[j] = activate(params.activation, a[j]);
  return a;
}

// Top-n vocabulary words per topic row of W, ties broken by ascending index.
inline std::vector<std::vector<std::pair<std::string, double>>> extract_topics(
    const ModelParams& params, const Vocabulary& vocab, std::size_t top_n) {
  if (vocab.size() != params.vocab_size())
    throw std::invalid_argument("vocabulary does not match model");
  if (top_n > vocab.size())
    throw std::invalid_argument("top_n exceeds vocabulary size");
  std::vector<std::vector<std::pair<std::string, double>>> topics;
  topics.reserve(params.hidden());
  std::vector<std::size_t> idx(vocab.size());
  for (std::size_t j = 0; j < params.hidden(); ++j) {
    const double* row = params.W.row(j);
    for (std::size_t w = 0; w < vocab.size(); ++w) idx[w] = w;
    std::partial_sort(idx.begin(), idx.begin() + top_n, idx.end(),
                      [row](std::size_t a, std::size_t b) {
                        if (row[a] != row[b]) return row[a] > row[b];
                        return a < b;
                      });
    std::vector<std::pair<std::string, double>> topic;
    topic.reserve(top_n);
    for (std::size_t r = 0; r < top_n; ++r)
      topic.emplace_back(vocab.token(idx[r]), row[idx[r]]);
    topics.push_back(std::move(topic));
  }
  return topics;
}

// --- checkpoint format ---------------------------------------------------------
// Byte layout (little-endian throughout, see docs/formats.md):
//   magic "LNTM1" | u8 activation | u32 H | u32 K | u32 name_len | name bytes
//   | f64 W (H*K row-major) | f64 U (K*H row-major) | f64 b (K) | f64 c (H)

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 4);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& out, const double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(p[i]);
    unsigned char buf[8];
    for (int k = 0; k < 8; ++k)
      buf[k] = static_cast<unsigned char>(bits >> (8 * k));
    out.write(reinterpret_cast<const char*>(buf), 8);
  }
}

inline void get_f64(std::istream& in, double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k)
      bits |= static_cast<std::uint64_t>(buf[k]) << (8 * k);
    p[i] = std::bit_cast<double>(bits);
  }
}

}  // namespace detail

struct Checkpoint {
  ModelParams params;
  std::string task_name;
};

inline void save_checkpoint(const ModelParams& params,
                            const std::string& task_name,
                            const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write("LNTM1", 5);
  char act = static_cast<char>(params.activation);
  out.write(&act, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(params.hidden()));
  detail::put_u32(out, static_cast<std::uint32_t>(params.vocab_size()));
  detail::put_u32(out, static_cast<std::uint32_t>(task_name.size()));
  out.write(task_name.data(),
            static_cast<std::streamsize>(task_name.size()));
  detail::put_f64(out, params.W.data.data(), params.W.data.size());
  detail::put_f64(out, params.U.data.data(), params.U.data.size());
  detail::put_f64(out, params.b.data(), params.b.size());
  detail::put_f64(out, params.c.data(), params.c.size());
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, "LNTM1", 5) != 0)
    throw ParseError(path + ": not an LNTM1 checkpoint (version mismatch?)");
  char act;
  in.read(&act, 1);
  if (act != 0 && act != 1)
    throw ParseError(path + ": unknown activation code");
  std::uint32_t h = detail::get_u32(in);
  std::uint32_t k = detail::get_u32(in);
  std::uint32_t name_len = detail::get_u32(in);
  if (!in) throw ParseError(path + ": truncated header");
  if (h == 0 || k == 0 || name_len > (1u << 20) ||
      static_cast<std::uint64_t>(h) * k > (1ull << 31))
    throw ParseError(path + ": implausible header (corrupt checkpoint?)");
  Checkpoint ck;
  ck.task_name.resize(name_len);
  in.read(ck.task_name.data(), name_len);
  ck.params.activation = static_cast<Activation>(act);
  ck.params.W = Matrix(h, k);
  ck.params.U = Matrix(k, h);
  ck.params.b.resize(k);
  ck.params.c.resize(h);
  detail::get_f64(in, ck.params.W.data.data(), ck.params.W.data.size());
  detail::get_f64(in, ck.params.U.data.data(), ck.params.U.data.size());
  detail::get_f64(in, ck.params.b.data(), ck.params.b.size());
  detail::get_f64(in, ck.params.c.data(), ck.params.c.size());
  if (!in) throw ParseError(path + ": truncated checkpoint");
  return ck;
}

}  // namespace lntm
