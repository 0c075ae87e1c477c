#pragma once

// Lifelong layer on top of the base model: frozen per-task knowledge pools,
// the topic regularizer, word-embedding transfer, selective data augmentation,
// and the combined training entry point.
//
// Knowledge accumulated after task t is the full frozen parameter set Θ^t plus
// its vocabulary. Rows of W^t are the task's topic embeddings (the topic
// pool); columns of W^t keyed by token string are its word embeddings (the
// word pool); U^t feeds the decoder-proximity term.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lntm/corpus.hpp"
#include "lntm/matrix.hpp"
#include "lntm/model.hpp"

namespace lntm {

// One accumulated past task; frozen once stored.
struct PoolEntry {
  std::string task_id;
  ModelParams params;  // Θ^t
  Vocabulary vocab;

  const Matrix& topics() const { return params.W; }   // Z^t, H_t x K_t
  const Matrix& decoder() const { return params.U; }  // U^t, K_t x H_t

  // Word-pool lookup: latent embedding of `token` at task t (column of W^t),
  // or nullopt if the token was not in this task's vocabulary.
  std::optional<std::vector<double>> word_embedding(
      const std::string& token) const {
    auto idx = vocab.index_of(token);
    if (!idx) return std::nullopt;
    std::vector<double> col(params.hidden());
    for (std::size_t j = 0; j < col.size(); ++j)
      col[j] = params.W(j, static_cast<std::size_t>(*idx));
    return col;
  }
};

class KnowledgeBase {
 public:
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const PoolEntry& entry(std::size_t i) const { return entries_.at(i); }
  const std::vector<PoolEntry>& entries() const { return entries_; }

  const PoolEntry* find(const std::string& task_id) const {
    for (const auto& e : entries_)
      if (e.task_id == task_id) return &e;
    return nullptr;
  }

  // Accumulate one task's knowledge; entries are append-only.
  void accumulate(const ModelParams& params, const Vocabulary& vocab,
                  const std::string& task_id) {
    if (!params.all_finite())
      throw std::invalid_argument("refusing to accumulate non-finite params");
    if (params.vocab_size() != vocab.size())
      throw std::invalid_argument("vocabulary size does not match params");
    if (find(task_id))
      throw std::invalid_argument("duplicate task id in knowledge base: " +
                                  task_id);
    entries_.push_back(PoolEntry{task_id, params, vocab});
  }

 private:
  std::vector<PoolEntry> entries_;
};

// Content fingerprint of a pool entry (FNV-1a over parameter bit patterns and
// vocabulary); used to verify that evaluation never mutates stored knowledge.
inline std::uint64_t entry_fingerprint(const PoolEntry& e) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix_bytes = [&h](const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  mix_bytes(e.task_id.data(), e.task_id.size());
  mix_bytes(e.params.W.data.data(), e.params.W.data.size() * sizeof(double));
  mix_bytes(e.params.U.data.data(), e.params.U.data.size() * sizeof(double));
  mix_bytes(e.params.b.data(), e.params.b.size() * sizeof(double));
  mix_bytes(e.params.c.data(), e.params.c.size() * sizeof(double));
  for (const auto& t : e.vocab.tokens()) mix_bytes(t.data(), t.size());
  return h;
}

// --- word-embedding transfer -------------------------------------------------

struct EmbTfLambda {
  std::string task_id;
  double lambda = 0.0;
};

// Builds the additive pre-activation shift sum_t lambda_t E^t[:,v] for every
// current-vocabulary word v. Sources with lambda == 0 are skipped outright so
// a zero-strength run stays bit-identical to a plain one. Words absent from a
// past task contribute exactly zero for that task.
inline EmbTfContext build_embtf_context(const Vocabulary& current_vocab,
                                        const KnowledgeBase& kb,
                                        std::span<const EmbTfLambda> lambdas,
                                        std::size_t hidden) {
  EmbTfContext ctx;
  ctx.shift = Matrix(current_vocab.size(), hidden);
  for (const auto& l : lambdas) {
    if (l.lambda < 0.0)
      throw std::invalid_argument("negative embedding-transfer strength for " +
                                  l.task_id);
    if (l.lambda == 0.0) continue;
    const PoolEntry* e = kb.find(l.task_id);
    if (!e)
      throw std::invalid_argument("unknown past task in word pool: " +
                                  l.task_id);
    if (e->params.hidden() != hidden)
      throw std::invalid_argument(
          "hidden size mismatch between current model and past task " +
          l.task_id + " (streams must share a fixed hidden size)");
    const Matrix& wpast = e->params.W;
    for (std::size_t v = 0; v < current_vocab.size(); ++v) {
      auto p = e->vocab.index_of(current_vocab.token(v));
      if (!p) continue;
      double* out = ctx.shift.row(v);
      const double* col = &wpast.data[static_cast<std::size_t>(*p)];
      for (std::size_t j = 0; j < hidden; ++j)
        out[j] += l.lambda * col[j * wpast.cols];
    }
    ctx.sources.emplace_back(l.task_id, l.lambda);
  }
  return ctx;
}

// --- topic regularization ------------------------------------------------------

// Per-past-task alignment state for the topic regularizer.
struct TrTaskAlign {
  std::string task_id;
  double lambda = 0.0;
  Matrix A;  // H x H topic alignment, starts at identity
  // Vocabulary map P (K_t x K). Frozen default: the binary selection matrix,
  // kept implicit through cur_col. When learnable, the dense matrix is used.
  Matrix P;                          // dense only when learn_p
  std::vector<std::int32_t> cur_col; // task-t column -> current column or -1
  std::size_t shared = 0;            // number of aligned token pairs
};

struct TrState {
  bool learn_p = false;
  std::vector<TrTaskAlign> tasks;
};

inline Matrix identity_matrix(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

inline TrState build_tr_state(const Vocabulary& current_vocab,
                              const KnowledgeBase& kb,
                              std::span<const EmbTfLambda> lambdas,
                              std::size_t hidden, bool learn_p) {
  TrState st;
  st.learn_p = learn_p;
  for (const auto& l : lambdas) {
    if (l.lambda < 0.0)
      throw std::invalid_argument("negative topic-regularization strength");
    if (l.lambda == 0.0) continue;
    const PoolEntry* e = kb.find(l.task_id);
    if (!e)
      throw std::invalid_argument("unknown past task in topic pool: " +
                                  l.task_id);
    if (e->params.hidden() != hidden)
      throw std::invalid_argument(
          "hidden size mismatch between current model and past task " +
          l.task_id);
    TrTaskAlign a;
    a.task_id = l.task_id;
    a.lambda = l.lambda;
    a.A = identity_matrix(hidden);
    a.cur_col.assign(e->vocab.size(), -1);
    for (const auto& [src, dst] : align_vocabs(e->vocab, current_vocab).pairs) {
      a.cur_col[static_cast<std::size_t>(src)] = dst;
      ++a.shared;
    }
    if (learn_p) {
      a.P = Matrix(e->vocab.size(), current_vocab.size());
      for (std::size_t j = 0; j < a.cur_col.size(); ++j)
        if (a.cur_col[j] >= 0)
          a.P(j, static_cast<std::size_t>(a.cur_col[j])) = 1.0;
    }
    st.tasks.push_back(std::move(a));
  }
  return st;
}

struct TrGrads {
  double value = 0.0;
  Matrix dW;                // H x K
  Matrix dU;                // K x H
  std::vector<Matrix> dA;   // per task, H x H
  std::vector<Matrix> dP;   // per task, K_t x K; empty unless learn_p
};

// Topic regularizer
//   sum_t lambda_t ( || Z^t - A^t Zcur ||_F^2  +  || U^t - P^t U ||_F^2 )
// where Zcur is the current W restricted to columns whose tokens exist in task
// t, in task-t column order; columns of Z^t without a current counterpart are
// masked out of the first term on both sides. Returns the scalar and exact
// gradients for W, U and each A^t (and P^t when learnable).
inline TrGrads delta_tr(const ModelParams& params, const KnowledgeBase& kb,
                        const TrState& state) {
  const std::size_t h = params.hidden(), k = params.vocab_size();
  TrGrads g;
  g.dW = Matrix(h, k);
  g.dU = Matrix(k, h);
  std::vector<double> x(h), r(h), atr(h);
  for (const auto& t : state.tasks) {
    const PoolEntry* e = kb.find(t.task_id);
    if (!e)
      throw std::invalid_argument("topic pool misses task " + t.task_id);
    const Matrix& z = e->topics();
    const Matrix& upast = e->decoder();
    const std::size_t kt = e->vocab.size();
    if (z.rows != h || t.A.rows != h || t.A.cols != h ||
        t.cur_col.size() != kt || upast.rows != kt || upast.cols != h)
      throw std::invalid_argument("alignment shape mismatch for task " +
                                  t.task_id);
    if (state.learn_p && (t.P.rows != kt || t.P.cols != k))
      throw std::invalid_argument("P shape mismatch for task " + t.task_id);

    Matrix& da = g.dA.emplace_back(h, h);
    const double lam = t.lambda;

    // topic imitation over shared columns
    for (std::size_t j = 0; j < kt; ++j) {
      if (t.cur_col[j] < 0) continue;
      std::size_t cc = static_cast<std::size_t>(t.cur_col[j]);
      for (std::size_t i = 0; i < h; ++i) x[i] = params.W(i, cc);
      for (std::size_t i = 0; i < h; ++i)
        r[i] = z(i, j) - dot(t.A.row(i), x.data(), h);
      for (std::size_t i = 0; i < h; ++i) g.value += lam * r[i] * r[i];
      for (std::size_t i = 0; i < h; ++i)
        axpy(-2.0 * lam * r[i], x.data(), da.row(i), h);
      std::fill(atr.begin(), atr.end(), 0.0);
      for (std::size_t i = 0; i < h; ++i)
        axpy(r[i], t.A.row(i), atr.data(), h);  // A^T r
      for (std::size_t i = 0; i < h; ++i)
        g.dW(i, cc) += -2.0 * lam * atr[i];
    }

    // decoder proximity
    if (!state.learn_p) {
      // P frozen at the selection matrix: row j of P U is U[cur_col[j],:]
      for (std::size_t j = 0; j < kt; ++j) {
        const double* uj = upast.row(j);
        if (t.cur_col[j] >= 0) {
          std::size_t cc = static_cast<std::size_t>(t.cur_col[j]);
          const double* ucur = params.U.row(cc);
          double* gu = g.dU.row(cc);
          for (std::size_t i = 0; i < h; ++i) {
            double s = uj[i] - ucur[i];
            g.value += lam * s * s;
            gu[i] += -2.0 * lam * s;
          }
        } else {
          for (std::size_t i = 0; i < h; ++i) g.value += lam * uj[i] * uj[i];
        }
      }
      g.dP.emplace_back();  // placeholder, stays empty
    } else {
      Matrix& dp = g.dP.emplace_back(kt, k);
      std::vector<double> s(h);
      for (std::size_t j = 0; j < kt; ++j) {
        const double* pj = t.P.row(j);
        for (std::size_t i = 0; i < h; ++i) s[i] = upast(j, i);
        for (std::size_t w = 0; w < k; ++w)
          if (pj[w] != 0.0) axpy(-pj[w], params.U.row(w), s.data(), h);
        for (std::size_t i = 0; i < h; ++i) g.value += lam * s[i] * s[i];
        // dU -= 2 lam P^T S  (row w gets -2 lam P[j,w] * s)
        for (std::size_t w = 0; w < k; ++w)
          if (pj[w] != 0.0) axpy(-2.0 * lam * pj[w], s.data(), g.dU.row(w), h);
        // dP[j,w] = -2 lam s . U[w,:]
        double* dpj = dp.row(j);
        for (std::size_t w = 0; w < k; ++w)
          dpj[w] = -2.0 * lam * dot(s.data(), params.U.row(w), h);
      }
    }
  }
  return g;
}

// --- selective data augmentation ------------------------------------------------

struct SalSource {
  const Collection* coll = nullptr;
  double lambda = 0.0;
};

struct AugmentedItem {
  Document doc;  // re-encoded into the future vocabulary
  std::string source_task;
  double lambda = 0.0;
};

struct AugmentedSet {
  std::vector<AugmentedItem> items;
};

// Document distillation: keep a past training document iff its per-word
// perplexity under the future model is at most the future test perplexity
// (inclusive). Scoring runs with transfer options off. Documents are
// re-encoded into the future vocabulary, dropping out-of-vocabulary tokens;
// documents that become empty are excluded.
inline AugmentedSet distill_documents(const ModelParams& params_future,
                                      const Vocabulary& future_vocab,
                                      double ppl_future,
                                      std::span<const SalSource> sources) {
  if (params_future.vocab_size() != future_vocab.size())
    throw std::invalid_argument("future vocabulary does not match model");
  AugmentedSet out;
  detail::Workspace ws;
  for (const auto& src : sources) {
    if (src.lambda < 0.0)
      throw std::invalid_argument("negative augmentation strength");
    for (const Document& past_doc : src.coll->train) {
      Document re = reencode(past_doc, src.coll->vocab, future_vocab);
      if (re.words.empty()) continue;
      double nll = detail::forward_into(re, params_future, nullptr, ws);
      double pw_ppl = std::exp(nll / static_cast<double>(re.words.size()));
      if (pw_ppl <= ppl_future)
        out.items.push_back(
            AugmentedItem{std::move(re), src.coll->name, src.lambda});
    }
  }
  return out;
}

// Co-training loss of the augmented set: sum_t lambda_t * NLL(doc_t).
inline double delta_sal(const AugmentedSet& aug, const ModelParams& params,
                        const EmbTfContext* ctx = nullptr) {
  double total = 0.0;
  for (const auto& item : aug.items) {
    if (item.lambda == 0.0) continue;
    total += item.lambda * compute_nll(item.doc, params, ctx);
  }
  return total;
}

// --- combined lifelong training ---------------------------------------------------

struct TaskLambdas {
  std::string task_id;
  double tr = 0.0;
  double embtf = 0.0;
  double sal = 0.0;
};

struct LifelongConfig {
  TrainHyper hyper;
  std::size_t hidden = 50;
  Activation activation = Activation::kSigmoid;
  bool enable_tr = false;
  bool enable_embtf = false;
  bool enable_sal = false;
  bool learn_p = false;  // dense learnable vocabulary maps P^t
  std::vector<TaskLambdas> lambdas;  // per past task; absent task = all zero
};

struct LifelongResult {
  ModelParams params;
  TrState alignment;  // best-snapshot A^t/P^t (empty when TR off)
  History history;
  double best_val_ppl = std::numeric_limits<double>::quiet_NaN();
  std::size_t best_epoch = 0;
  std::vector<double> epoch_seconds;
  // diagnostics
  double pretrain_test_ppl = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<std::string, std::size_t>> distilled_counts;
  std::size_t augmented_used = 0;
};

namespace detail {

// Applies the topic regularizer once per current-task document step, scaled
// by 1/|train| so the per-epoch total matches the collection-level objective.
class TrHook : public RegularizerHook {
 public:
  TrHook(const KnowledgeBase& kb, TrState state, double scale)
      : kb_(kb), state_(std::move(state)), scale_(scale) {
    snapshot_ = state_;
  }

  void add_grads(const ModelParams& params, ParamGrads& grads) override {
    TrGrads g = delta_tr(params, kb_, state_);
    axpy(scale_, g.dW.data.data(), grads.W.data.data(), g.dW.data.size());
    axpy(scale_, g.dU.data.data(), grads.U.data.data(), g.dU.data.size());
    if (pending_da_.empty()) {
      pending_da_ = std::move(g.dA);
      pending_dp_ = std::move(g.dP);
    } else {
      for (std::size_t t = 0; t < pending_da_.size(); ++t) {
        axpy(1.0, g.dA[t].data.data(), pending_da_[t].data.data(),
             g.dA[t].data.size());
        if (state_.learn_p)
          axpy(1.0, g.dP[t].data.data(), pending_dp_[t].data.data(),
               g.dP[t].data.size());
      }
    }
  }

  void update(double lr) override {
    for (std::size_t t = 0; t < state_.tasks.size(); ++t) {
      axpy(-lr * scale_, pending_da_[t].data.data(),
           state_.tasks[t].A.data.data(), pending_da_[t].data.size());
      if (state_.learn_p)
        axpy(-lr * scale_, pending_dp_[t].data.data(),
             state_.tasks[t].P.data.data(), pending_dp_[t].data.size());
    }
    pending_da_.clear();
    pending_dp_.clear();
  }

  void on_best() override { snapshot_ = state_; }

  const TrState& snapshot() const { return snapshot_; }

 private:
  const KnowledgeBase& kb_;
  TrState state_;
  TrState snapshot_;
  std::vector<Matrix> pending_da_, pending_dp_;
  double scale_;
};

}  // namespace detail

// The full lifelong step for one future collection. With every transfer
// strength at zero this reduces exactly (bit-for-bit) to plain train_task on
// a fresh seeded init. `past_colls` supplies past documents for distillation
// and may be empty when SAL is off.
inline LifelongResult lifelong_train(
    const Collection& coll, const KnowledgeBase& kb,
    const LifelongConfig& cfg,
    std::span<const Collection* const> past_colls = {}) {
  auto lambda_of = [&](const std::string& id) {
    for (const auto& l : cfg.lambdas)
      if (l.task_id == id) return l;
    return TaskLambdas{id, 0.0, 0.0, 0.0};
  };

  std::vector<EmbTfLambda> emb, tr;
  std::vector<std::pair<const PoolEntry*, double>> sal;
  for (const auto& e : kb.entries()) {
    TaskLambdas l = lambda_of(e.task_id);
    if (cfg.enable_embtf && l.embtf > 0.0)
      emb.push_back({e.task_id, l.embtf});
    if (cfg.enable_tr && l.tr > 0.0) tr.push_back({e.task_id, l.tr});
    if (cfg.enable_sal && l.sal > 0.0) sal.emplace_back(&e, l.sal);
  }

  ModelParams params = ModelParams::init(cfg.hidden, coll.vocab.size(),
                                         cfg.activation, cfg.hyper.seed);

  LifelongResult res;

  EmbTfContext ctx;
  const EmbTfContext* ctx_ptr = nullptr;
  if (!emb.empty()) {
    ctx = build_embtf_context(coll.vocab, kb, emb, cfg.hidden);
    ctx_ptr = &ctx;
  }

  AugmentedSet aug;
  std::vector<AugmentedDoc> aug_docs;
  if (!sal.empty()) {
    // Plain pre-training pass to obtain the distillation threshold.
    TrainResult pre = train_task(coll, params, cfg.hyper);
    res.pretrain_test_ppl = held_out_ppl(coll.test, pre.params);
    std::vector<SalSource> sources;
    for (const auto& [entry, lambda] : sal) {
      const Collection* past = nullptr;
      for (const Collection* pc : past_colls)
        if (pc && pc->name == entry->task_id) past = pc;
      if (!past)
        throw std::invalid_argument(
            "selective augmentation needs the documents of past task " +
            entry->task_id);
      sources.push_back({past, lambda});
    }
    aug = distill_documents(pre.params, coll.vocab, res.pretrain_test_ppl,
                            sources);
    for (const auto& src : sources) {
      std::size_t n = 0;
      for (const auto& item : aug.items)
        if (item.source_task == src.coll->name) ++n;
      res.distilled_counts.emplace_back(src.coll->name, n);
    }
    aug_docs.reserve(aug.items.size());
    for (const auto& item : aug.items)
      aug_docs.push_back(AugmentedDoc{&item.doc, item.lambda});
    res.augmented_used = aug_docs.size();
  }

  std::optional<detail::TrHook> hook;
  if (!tr.empty()) {
    TrState st = build_tr_state(coll.vocab, kb, tr, cfg.hidden, cfg.learn_p);
    hook.emplace(kb, std::move(st),
                 1.0 / static_cast<double>(coll.train.size()));
  }

  TrainResult tr_res = detail::train_loop(
      coll.train, coll.val, std::move(params), cfg.hyper, ctx_ptr,
      std::span<const AugmentedDoc>(aug_docs), hook ? &*hook : nullptr);

  res.params = std::move(tr_res.params);
  res.history = std::move(tr_res.history);
  res.best_val_ppl = tr_res.best_val_ppl;
  res.best_epoch = tr_res.best_epoch;
  res.epoch_seconds = std::move(tr_res.epoch_seconds);
  if (hook) res.alignment = hook->snapshot();
  return res;
}

// --- knowledge-base persistence ----------------------------------------------------
// Layout: <dir>/manifest.tsv plus entryNNNN.ckpt / entryNNNN.vocab per task.
// The manifest starts with the magic line LNTMKB1, then the entry count, then
// one tab-separated line per entry: task_id, H, K, file base.

inline void save_kb(const KnowledgeBase& kb, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ostringstream manifest;
  manifest << "LNTMKB1\n" << kb.size() << '\n';
  for (std::size_t i = 0; i < kb.size(); ++i) {
    const PoolEntry& e = kb.entry(i);
    char base[32];
    std::snprintf(base, sizeof(base), "entry%04zu", i);
    save_checkpoint(e.params, e.task_id,
                    (fs::path(dir) / (std::string(base) + ".ckpt")).string());
    save_vocab(e.vocab,
               (fs::path(dir) / (std::string(base) + ".vocab")).string());
    manifest << e.task_id << '\t' << e.params.hidden() << '\t'
             << e.params.vocab_size() << '\t' << base << '\n';
  }
  std::ofstream out(fs::path(dir) / "manifest.tsv", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest in " + dir);
  out << manifest.str();
  if (!out) throw std::runtime_error("write failed: manifest in " + dir);
}

inline KnowledgeBase load_kb(const std::string& dir) {
  namespace fs = std::filesystem;
  fs::path mpath = fs::path(dir) / "manifest.tsv";
  std::ifstream in(mpath, std::ios::binary);
  if (!in) throw ParseError("cannot open " + mpath.string());
  std::string line;
  if (!std::getline(in, line) || line != "LNTMKB1")
    throw ParseError(mpath.string() +
                     ": not a knowledge base (version mismatch?)");
  if (!std::getline(in, line))
    throw ParseError(mpath.string() + ": truncated manifest");
  std::size_t n = 0;
  try {
    n = std::stoul(line);
  } catch (...) {
    throw ParseError(mpath.string() + ": bad entry count");
  }
  KnowledgeBase kb;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line))
      throw ParseError(mpath.string() + ": truncated manifest");
    std::istringstream ls(line);
    std::string task_id, hs, ks, base;
    if (!std::getline(ls, task_id, '\t') || !std::getline(ls, hs, '\t') ||
        !std::getline(ls, ks, '\t') || !std::getline(ls, base))
      throw ParseError(mpath.string() + ": malformed manifest line " +
                       std::to_string(i + 3));
    Checkpoint ck =
        load_checkpoint((fs::path(dir) / (base + ".ckpt")).string());
    Vocabulary vocab = load_vocab((fs::path(dir) / (base + ".vocab")).string());
    if (ck.task_name != task_id)
      throw ParseError(mpath.string() + ": checkpoint/manifest task mismatch");
    if (ck.params.hidden() != std::stoul(hs) ||
        ck.params.vocab_size() != std::stoul(ks) ||
        vocab.size() != ck.params.vocab_size())
      throw ParseError(mpath.string() + ": dimension mismatch for " + task_id);
    kb.accumulate(ck.params, vocab, task_id);
  }
  return kb;
}

}  // namespace lntm
