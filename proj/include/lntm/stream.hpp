#pragma once

// Stream orchestration: config files describing an ordered task stream with
// per-task transfer strengths, the resumable runner (train, accumulate,
// evaluate, report), and the transfer-vs-forgetting ablation.
//
// Run directory layout:
//   <out>/.lock                       held while a run is in progress
//   <out>/kb/                         knowledge base after the last done task
//   <out>/tasks/<name>/model.ckpt     trained checkpoint
//   <out>/tasks/<name>/vocab.vocab    its vocabulary
//   <out>/tasks/<name>/collection.coll ingested collection
//   <out>/tasks/<name>/metrics.json   per-task metrics (completion marker)
//   <out>/metrics.tsv, <out>/summary.json   regenerated after every task

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lntm/corpus.hpp"
#include "lntm/corpus_jsonl.hpp"
#include "lntm/eval.hpp"
#include "lntm/lifelong.hpp"
#include "lntm/model.hpp"

namespace lntm {

struct TaskConfig {
  std::string name;
  std::string corpus_path;
  PreprocessOptions pre;  // used when corpus_path is a .jsonl file
  std::optional<double> learning_rate;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> patience;
  std::optional<std::size_t> batch_size;
  double lambda_tr = 0.0;     // scalar defaults against every past task
  double lambda_embtf = 0.0;
  double lambda_sal = 0.0;
  std::map<std::string, double> lambda_tr_by;  // per-past overrides
  std::map<std::string, double> lambda_embtf_by;
  std::map<std::string, double> lambda_sal_by;

  double tr_for(const std::string& past) const {
    auto it = lambda_tr_by.find(past);
    return it == lambda_tr_by.end() ? lambda_tr : it->second;
  }
  double embtf_for(const std::string& past) const {
    auto it = lambda_embtf_by.find(past);
    return it == lambda_embtf_by.end() ? lambda_embtf : it->second;
  }
  double sal_for(const std::string& past) const {
    auto it = lambda_sal_by.find(past);
    return it == lambda_sal_by.end() ? lambda_sal : it->second;
  }
};

struct StreamConfig {
  std::string name = "stream";
  std::uint64_t seed = 0;
  std::string out_dir;
  bool use_tr = false, use_embtf = false, use_sal = false;
  bool learn_p = false;
  std::size_t hidden = 50;
  Activation activation = Activation::kSigmoid;
  TrainHyper hyper;  // stream-wide defaults; seed is derived per task
  double ir_fraction = 0.02;
  std::size_t coherence_top = 10;
  std::size_t coherence_window = 10;
  bool baseline_zero_shot = false;
  bool baseline_data_augment = false;
  std::vector<TaskConfig> tasks;

  TrainHyper hyper_for(std::size_t task_index) const {
    const TaskConfig& t = tasks.at(task_index);
    TrainHyper h = hyper;
    if (t.learning_rate) h.learning_rate = *t.learning_rate;
    if (t.epochs) h.max_epochs = *t.epochs;
    if (t.patience) h.early_stop_patience = *t.patience;
    if (t.batch_size) h.batch_size = *t.batch_size;
    h.seed = mix64(seed, task_index + 1);
    return h;
  }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ParseError(where + ": expected a boolean, got '" + v + "'");
}

inline double parse_double(const std::string& v, const std::string& where) {
  try {
    std::size_t pos;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw ParseError(where + ": expected a number, got '" + v + "'");
  }
}

inline std::size_t parse_size(const std::string& v, const std::string& where) {
  double d = parse_double(v, where);
  if (d < 0 || d != static_cast<double>(static_cast<std::size_t>(d)))
    throw ParseError(where + ": expected a non-negative integer");
  return static_cast<std::size_t>(d);
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline bool valid_task_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-')
      return false;
  return true;
}

}  // namespace detail

// Key/value stream configuration with [task <name>] sections; see
// docs/formats.md for the full key list.
inline StreamConfig load_stream_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  StreamConfig cfg;
  TaskConfig* task = nullptr;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string where = path + ":" + std::to_string(lineno);
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.rfind("[task ", 0) != 0)
        throw ParseError(where + ": expected [task <name>]");
      std::string name = detail::trim(line.substr(6, line.size() - 7));
      if (!detail::valid_task_name(name))
        throw ParseError(where + ": task names must match [A-Za-z0-9_-]+");
      for (const auto& t : cfg.tasks)
        if (t.name == name)
          throw ParseError(where + ": duplicate task name " + name);
      cfg.tasks.push_back(TaskConfig{});
      task = &cfg.tasks.back();
      task->name = name;
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(where + ": expected key = value");
    std::string key = detail::trim(line.substr(0, eq));
    std::string val = detail::trim(line.substr(eq + 1));
    auto lambda_key = [&](const std::string& prefix,
                          double& scalar,
                          std::map<std::string, double>& by) {
      double d = detail::parse_double(val, where);
      if (d < 0) throw ParseError(where + ": strengths must be >= 0");
      if (key == prefix)
        scalar = d;
      else
        by[key.substr(prefix.size() + 1)] = d;
    };
    if (!task) {
      if (key == "name") cfg.name = val;
      else if (key == "seed") cfg.seed = detail::parse_size(val, where);
      else if (key == "out") cfg.out_dir = val;
      else if (key == "hidden") cfg.hidden = detail::parse_size(val, where);
      else if (key == "activation") cfg.activation = parse_activation(val);
      else if (key == "learning_rate")
        cfg.hyper.learning_rate = detail::parse_double(val, where);
      else if (key == "epochs")
        cfg.hyper.max_epochs = detail::parse_size(val, where);
      else if (key == "patience")
        cfg.hyper.early_stop_patience = detail::parse_size(val, where);
      else if (key == "batch_size")
        cfg.hyper.batch_size = detail::parse_size(val, where);
      else if (key == "ir_fraction")
        cfg.ir_fraction = detail::parse_double(val, where);
      else if (key == "coherence_top")
        cfg.coherence_top = detail::parse_size(val, where);
      else if (key == "coherence_window")
        cfg.coherence_window = detail::parse_size(val, where);
      else if (key == "tr.learn_p")
        cfg.learn_p = detail::parse_bool(val, where);
      else if (key == "approaches") {
        std::istringstream ss(val);
        std::string item;
        while (std::getline(ss, item, ',')) {
          item = detail::trim(item);
          if (item == "tr") cfg.use_tr = true;
          else if (item == "embtf") cfg.use_embtf = true;
          else if (item == "sal") cfg.use_sal = true;
          else if (!item.empty())
            throw ParseError(where + ": unknown approach '" + item +
                             "' (expected tr, embtf, sal)");
        }
      } else if (key == "baselines") {
        std::istringstream ss(val);
        std::string item;
        while (std::getline(ss, item, ',')) {
          item = detail::trim(item);
          if (item == "zero-shot") cfg.baseline_zero_shot = true;
          else if (item == "data-augment") cfg.baseline_data_augment = true;
          else if (!item.empty())
            throw ParseError(where + ": unknown baseline '" + item + "'");
        }
      } else {
        throw ParseError(where + ": unknown stream key '" + key + "'");
      }
    } else {
      if (key == "corpus") task->corpus_path = val;
      else if (key == "max_vocab")
        task->pre.max_vocab = detail::parse_size(val, where);
      else if (key == "min_token_len")
        task->pre.min_token_len = detail::parse_size(val, where);
      else if (key == "min_doc_len")
        task->pre.min_doc_len = detail::parse_size(val, where);
      else if (key == "lowercase")
        task->pre.lowercase = detail::parse_bool(val, where);
      else if (key == "learning_rate")
        task->learning_rate = detail::parse_double(val, where);
      else if (key == "epochs") task->epochs = detail::parse_size(val, where);
      else if (key == "patience")
        task->patience = detail::parse_size(val, where);
      else if (key == "batch_size")
        task->batch_size = detail::parse_size(val, where);
      else if (key == "lambda_tr" || key.rfind("lambda_tr.", 0) == 0)
        lambda_key("lambda_tr", task->lambda_tr, task->lambda_tr_by);
      else if (key == "lambda_embtf" || key.rfind("lambda_embtf.", 0) == 0)
        lambda_key("lambda_embtf", task->lambda_embtf, task->lambda_embtf_by);
      else if (key == "lambda_sal" || key.rfind("lambda_sal.", 0) == 0)
        lambda_key("lambda_sal", task->lambda_sal, task->lambda_sal_by);
      else
        throw ParseError(where + ": unknown task key '" + key + "'");
    }
  }
  if (cfg.tasks.empty()) throw ParseError(path + ": no [task ...] sections");
  // corpus paths resolve relative to the config file's directory
  std::filesystem::path base = std::filesystem::path(path).parent_path();
  for (auto& t : cfg.tasks) {
    if (t.corpus_path.empty())
      throw ParseError(path + ": task " + t.name + " has no corpus");
    std::filesystem::path p(t.corpus_path);
    if (p.is_relative()) t.corpus_path = (base / p).string();
    if (!std::filesystem::exists(t.corpus_path))
      throw ParseError(path + ": corpus not found for task " + t.name + ": " +
                       t.corpus_path);
  }
  return cfg;
}

// --- reports -----------------------------------------------------------------

struct MetricRow {
  std::string future_task;  // the task whose training produced the numbers
  std::string eval_task;    // the task being measured
  std::string setting;      // current | forgetting | zero-shot | data-augment
  std::string metric;       // ppl | p_at_r | coh | r_time_sec
  std::string detail;       // e.g. fraction=0.02
  double value = 0.0;
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline nlohmann::json rows_to_json(const std::vector<MetricRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows)
    arr.push_back({{"future_task", r.future_task},
                   {"eval_task", r.eval_task},
                   {"setting", r.setting},
                   {"metric", r.metric},
                   {"detail", r.detail},
                   {"value", r.value}});
  return arr;
}

inline std::vector<MetricRow> rows_from_json(const nlohmann::json& arr) {
  std::vector<MetricRow> rows;
  for (const auto& j : arr)
    rows.push_back({j.at("future_task").get<std::string>(),
                    j.at("eval_task").get<std::string>(),
                    j.at("setting").get<std::string>(),
                    j.at("metric").get<std::string>(),
                    j.at("detail").get<std::string>(),
                    j.at("value").get<double>()});
  return rows;
}

inline void write_text_atomic(const std::filesystem::path& path,
                              const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// One stream run at a time per output directory.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir)
      : path_(dir / ".lock") {
    std::filesystem::create_directories(dir);
    if (std::filesystem::exists(path_))
      throw std::runtime_error(
          "output directory is locked by another run: " + path_.string() +
          " (remove the file if that run is dead)");
    std::ofstream out(path_);
    out << "locked\n";
  }
  ~RunLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace detail

// Loads a task corpus: pre-ingested collection files verbatim, JSONL corpora
// through the deterministic preprocessing pipeline.
inline Collection load_task_corpus(const TaskConfig& task,
                                   std::uint64_t ingest_seed) {
  if (task.corpus_path.size() > 6 &&
      task.corpus_path.substr(task.corpus_path.size() - 6) == ".jsonl") {
    PreprocessOptions pre = task.pre;
    pre.seed = ingest_seed;
    return build_collection(read_jsonl(task.corpus_path), pre, task.name);
  }
  Collection c = load_collection(task.corpus_path);
  c.name = task.name;
  return c;
}

struct StreamRunSummary {
  std::vector<std::string> completed_tasks;
  std::vector<MetricRow> rows;
};

namespace detail {

inline void regenerate_reports(const StreamConfig& cfg,
                               const std::vector<std::string>& done) {
  namespace fs = std::filesystem;
  std::vector<MetricRow> all;
  for (const auto& name : done) {
    std::ifstream in(fs::path(cfg.out_dir) / "tasks" / name / "metrics.json");
    nlohmann::json j = nlohmann::json::parse(in);
    for (auto& r : rows_from_json(j.at("rows"))) all.push_back(r);
  }
  std::ostringstream tsv;
  tsv << "stream\tfuture_task\teval_task\tsetting\tmetric\tdetail\tvalue\n";
  for (const auto& r : all)
    tsv << cfg.name << '\t' << r.future_task << '\t' << r.eval_task << '\t'
        << r.setting << '\t' << r.metric << '\t' << r.detail << '\t'
        << fmt_double(r.value) << '\n';
  write_text_atomic(fs::path(cfg.out_dir) / "metrics.tsv", tsv.str());

  nlohmann::json summary = {{"stream", cfg.name},
                            {"seed", cfg.seed},
                            {"completed_tasks", done},
                            {"rows", rows_to_json(all)}};
  write_text_atomic(fs::path(cfg.out_dir) / "summary.json",
                    summary.dump(2) + "\n");
}

}  // namespace detail

// Runs the stream end to end: for every task in order, (optionally) pre-train
// and distill, train with the enabled transfer approaches against all prior
// tasks, accumulate knowledge, then evaluate the current task and re-evaluate
// every prior task for forgetting. Completed tasks (metrics.json present) are
// skipped on resume, and resumed runs produce bit-identical downstream output.
// `stop_after` > 0 stops once that many tasks are complete (testing/ops aid).
inline StreamRunSummary run_stream(const StreamConfig& cfg,
                                   std::size_t stop_after = 0,
                                   std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  if (cfg.out_dir.empty())
    throw std::invalid_argument("stream config needs an output directory");
  detail::RunLock lock(cfg.out_dir);
  fs::create_directories(fs::path(cfg.out_dir) / "tasks");

  auto say = [&](const std::string& s) {
    if (log) (*log) << s << "\n";
  };

  // deterministic ingest of every task up front (past docs feed distillation)
  std::vector<Collection> colls;
  colls.reserve(cfg.tasks.size());
  for (std::size_t i = 0; i < cfg.tasks.size(); ++i)
    colls.push_back(
        load_task_corpus(cfg.tasks[i], mix64(cfg.seed, 1000 + i)));

  // resume: count consecutive completed tasks from the front
  std::size_t done = 0;
  while (done < cfg.tasks.size() &&
         fs::exists(fs::path(cfg.out_dir) / "tasks" / cfg.tasks[done].name /
                    "metrics.json"))
    ++done;

  KnowledgeBase kb;
  if (done > 0) {
    KnowledgeBase loaded = load_kb((fs::path(cfg.out_dir) / "kb").string());
    if (loaded.size() < done)
      throw std::runtime_error(
          "run directory inconsistent: fewer knowledge entries than "
          "completed tasks");
    for (std::size_t i = 0; i < done; ++i) {
      if (loaded.entry(i).task_id != cfg.tasks[i].name)
        throw std::runtime_error(
            "run directory inconsistent: knowledge order differs from config");
      kb.accumulate(loaded.entry(i).params, loaded.entry(i).vocab,
                    loaded.entry(i).task_id);
    }
    say("resuming after " + std::to_string(done) + " completed task(s)");
  }

  StreamRunSummary summary;
  for (std::size_t i = 0; i < done; ++i)
    summary.completed_tasks.push_back(cfg.tasks[i].name);

  for (std::size_t i = done; i < cfg.tasks.size(); ++i) {
    if (stop_after > 0 && summary.completed_tasks.size() >= stop_after) break;
    const TaskConfig& tcfg = cfg.tasks[i];
    const Collection& coll = colls[i];
    say("task " + std::to_string(i + 1) + "/" +
        std::to_string(cfg.tasks.size()) + ": " + tcfg.name + " (K=" +
        std::to_string(coll.vocab.size()) + ", train=" +
        std::to_string(coll.train.size()) + ")");

    LifelongConfig ll;
    ll.hyper = cfg.hyper_for(i);
    ll.hidden = cfg.hidden;
    ll.activation = cfg.activation;
    ll.enable_tr = cfg.use_tr;
    ll.enable_embtf = cfg.use_embtf;
    ll.enable_sal = cfg.use_sal;
    ll.learn_p = cfg.learn_p;
    for (std::size_t p = 0; p < i; ++p)
      ll.lambdas.push_back({cfg.tasks[p].name, tcfg.tr_for(cfg.tasks[p].name),
                            tcfg.embtf_for(cfg.tasks[p].name),
                            tcfg.sal_for(cfg.tasks[p].name)});
    std::vector<const Collection*> pasts;
    for (std::size_t p = 0; p < i; ++p) pasts.push_back(&colls[p]);

    LifelongResult res = lifelong_train(coll, kb, ll, pasts);

    // the evaluation context mirrors the training-time embedding injection
    EmbTfContext eval_ctx;
    const EmbTfContext* ctx = nullptr;
    if (cfg.use_embtf) {
      std::vector<EmbTfLambda> lam;
      for (const auto& l : ll.lambdas)
        if (l.embtf > 0.0) lam.push_back({l.task_id, l.embtf});
      if (!lam.empty()) {
        eval_ctx = build_embtf_context(coll.vocab, kb, lam, cfg.hidden);
        ctx = &eval_ctx;
      }
    }

    fs::path tdir = fs::path(cfg.out_dir) / "tasks" / tcfg.name;
    fs::create_directories(tdir);
    save_checkpoint(res.params, tcfg.name, (tdir / "model.ckpt").string());
    save_vocab(coll.vocab, (tdir / "vocab.vocab").string());
    save_collection(coll, (tdir / "collection.coll").string());

    kb.accumulate(res.params, coll.vocab, tcfg.name);
    fs::path kb_tmp = fs::path(cfg.out_dir) / "kb.tmp";
    fs::remove_all(kb_tmp);
    save_kb(kb, kb_tmp.string());
    fs::remove_all(fs::path(cfg.out_dir) / "kb");
    fs::rename(kb_tmp, fs::path(cfg.out_dir) / "kb");

    std::vector<MetricRow> rows;
    RetrievalDepth depth = RetrievalDepth::Fraction(cfg.ir_fraction);
    std::string frac_detail = "fraction=" + detail::fmt_double(cfg.ir_fraction);

    rows.push_back({tcfg.name, tcfg.name, "current", "ppl", "",
                    perplexity(coll.test, res.params, ctx)});
    rows.push_back({tcfg.name, tcfg.name, "current", "p_at_r", frac_detail,
                    ir_precision(coll.train, coll.test, res.params, depth,
                                 ReprMode::kAllWords, ctx)
                        .mean_precision});
    for (std::size_t k : {std::size_t{5}, std::size_t{10}})
      rows.push_back({tcfg.name, tcfg.name, "current", "p_at_k",
                      "k=" + std::to_string(k),
                      ir_precision(coll.train, coll.test, res.params,
                                   RetrievalDepth::TopK(k),
                                   ReprMode::kAllWords, ctx)
                          .mean_precision});
    {
      std::size_t top = std::min(cfg.coherence_top, coll.vocab.size());
      auto topics = extract_topics(res.params, coll.vocab, top);
      rows.push_back({tcfg.name, tcfg.name, "current", "coh", "",
                      coherence(topics, coll, cfg.coherence_window).mean_coh});
    }
    if (!res.epoch_seconds.empty()) {
      double mean = 0;
      for (double s : res.epoch_seconds) mean += s;
      rows.push_back({tcfg.name, tcfg.name, "current", "r_time_sec", "",
                      mean / static_cast<double>(res.epoch_seconds.size())});
    }
    for (const auto& [src, n] : res.distilled_counts)
      rows.push_back({tcfg.name, src, "distilled", "doc_count", "",
                      static_cast<double>(n)});

    // forgetting on every prior task (footnote-style parameter overwrite)
    for (std::size_t p = 0; p < i; ++p) {
      const PoolEntry& past = kb.entry(p);
      rows.push_back({tcfg.name, past.task_id, "forgetting", "ppl", "",
                      forgetting_eval(past, colls[p], res.params, coll.vocab,
                                      ForgettingMetric::kPpl)});
      rows.push_back(
          {tcfg.name, past.task_id, "forgetting", "p_at_r", frac_detail,
           forgetting_eval(past, colls[p], res.params, coll.vocab,
                           ForgettingMetric::kIrPrecision, depth)});
    }

    if (cfg.baseline_zero_shot && i > 0) {
      const PoolEntry& prev = kb.entry(i - 1);
      ZeroShotResult z = zero_shot_eval(coll, prev.params, prev.vocab, depth);
      rows.push_back({tcfg.name, tcfg.name, "zero-shot", "ppl", "", z.ppl});
      rows.push_back({tcfg.name, tcfg.name, "zero-shot", "p_at_r", frac_detail,
                      z.ir.mean_precision});
    }
    if (cfg.baseline_data_augment && i > 0) {
      std::vector<const Collection*> all;
      for (std::size_t p = 0; p <= i; ++p) all.push_back(&colls[p]);
      TrainHyper ah = cfg.hyper_for(i);
      DataAugmentResult da =
          data_augment_train(all, cfg.hidden, cfg.activation, ah);
      std::vector<Document> test;
      for (const auto& d : coll.test)
        test.push_back(reencode(d, coll.vocab, da.union_coll.vocab));
      std::vector<Document> train;
      for (const auto& d : coll.train)
        train.push_back(reencode(d, coll.vocab, da.union_coll.vocab));
      rows.push_back({tcfg.name, tcfg.name, "data-augment", "ppl", "",
                      perplexity(test, da.params)});
      rows.push_back({tcfg.name, tcfg.name, "data-augment", "p_at_r",
                      frac_detail,
                      ir_precision(train, test, da.params, depth)
                          .mean_precision});
    }

    nlohmann::json meta = {
        {"task", tcfg.name},
        {"corpus", tcfg.corpus_path},
        {"seed", cfg.hyper_for(i).seed},
        {"best_epoch", res.best_epoch},
        {"best_val_ppl", res.best_val_ppl},
        {"train_loss", res.history.train_loss},
        {"val_ppl", res.history.val_ppl},
        {"augmented_used", res.augmented_used},
        {"rows", detail::rows_to_json(rows)}};
    if (std::isfinite(res.pretrain_test_ppl))
      meta["pretrain_test_ppl"] = res.pretrain_test_ppl;
    detail::write_text_atomic(tdir / "metrics.json", meta.dump(2) + "\n");

    summary.completed_tasks.push_back(tcfg.name);
    detail::regenerate_reports(cfg, summary.completed_tasks);
    for (const auto& r : rows) summary.rows.push_back(r);
    say("  done: " + std::to_string(rows.size()) + " metric rows");
  }

  // collect rows of already-complete tasks so callers see the whole grid
  {
    std::vector<MetricRow> all;
    for (const auto& name : summary.completed_tasks) {
      std::ifstream in(fs::path(cfg.out_dir) / "tasks" / name /
                       "metrics.json");
      nlohmann::json j = nlohmann::json::parse(in);
      for (auto& r : detail::rows_from_json(j.at("rows"))) all.push_back(r);
    }
    summary.rows = std::move(all);
  }
  return summary;
}

// --- lambda_tr ablation ---------------------------------------------------------

struct AblateRow {
  std::string past_task;
  std::string future_task;
  double lambda_tr = 0.0;
  double future_ppl = 0.0;
  double future_p_at_r = 0.0;
  double forget_ppl = 0.0;
  double forget_p_at_r = 0.0;
};

// Pairwise transfer-vs-forgetting sweep: for every adjacent (past, future)
// pair in the stream, train the past plainly, then train the future with only
// the topic regularizer at each grid strength, reporting future metrics and
// forgetting metrics on the past.
inline std::vector<AblateRow> run_ablate_tr(const StreamConfig& cfg,
                                            std::vector<double> grid,
                                            std::ostream* log = nullptr) {
  if (cfg.tasks.size() < 2)
    throw std::invalid_argument("the ablation needs at least two tasks");
  if (grid.empty()) grid = {0.001, 0.01, 0.1};
  std::vector<AblateRow> rows;
  RetrievalDepth depth = RetrievalDepth::Fraction(cfg.ir_fraction);
  for (std::size_t i = 0; i + 1 < cfg.tasks.size(); ++i) {
    Collection past = load_task_corpus(cfg.tasks[i], mix64(cfg.seed, 1000 + i));
    Collection fut =
        load_task_corpus(cfg.tasks[i + 1], mix64(cfg.seed, 1001 + i));
    if (log)
      (*log) << "ablating pair " << past.name << " -> " << fut.name << "\n";
    TrainHyper ph = cfg.hyper_for(i);
    ModelParams p0 = ModelParams::init(cfg.hidden, past.vocab.size(),
                                       cfg.activation, ph.seed);
    TrainResult past_train = train_task(past, p0, ph);
    KnowledgeBase kb;
    kb.accumulate(past_train.params, past.vocab, past.name);

    for (double lam : grid) {
      LifelongConfig ll;
      ll.hyper = cfg.hyper_for(i + 1);
      ll.hidden = cfg.hidden;
      ll.activation = cfg.activation;
      ll.enable_tr = true;
      ll.learn_p = cfg.learn_p;
      ll.lambdas = {{past.name, lam, 0.0, 0.0}};
      LifelongResult res = lifelong_train(fut, kb, ll);
      AblateRow row;
      row.past_task = past.name;
      row.future_task = fut.name;
      row.lambda_tr = lam;
      row.future_ppl = perplexity(fut.test, res.params);
      row.future_p_at_r =
          ir_precision(fut.train, fut.test, res.params, depth).mean_precision;
      row.forget_ppl = forgetting_eval(kb.entry(0), past, res.params,
                                       fut.vocab, ForgettingMetric::kPpl);
      row.forget_p_at_r =
          forgetting_eval(kb.entry(0), past, res.params, fut.vocab,
                          ForgettingMetric::kIrPrecision, depth);
      rows.push_back(row);
      if (log)
        (*log) << "  lambda_tr=" << lam << " future ppl=" << row.future_ppl
               << " forget p@r=" << row.forget_p_at_r << "\n";
    }
  }
  return rows;
}

inline void write_ablate_tsv(const std::vector<AblateRow>& rows,
                             const std::string& path) {
  std::ostringstream tsv;
  tsv << "past_task\tfuture_task\tlambda_tr\tfuture_ppl\tfuture_p_at_r\t"
         "forget_ppl\tforget_p_at_r\n";
  for (const auto& r : rows)
    tsv << r.past_task << '\t' << r.future_task << '\t'
        << detail::fmt_double(r.lambda_tr) << '\t'
        << detail::fmt_double(r.future_ppl) << '\t'
        << detail::fmt_double(r.future_p_at_r) << '\t'
        << detail::fmt_double(r.forget_ppl) << '\t'
        << detail::fmt_double(r.forget_p_at_r) << '\n';
  detail::write_text_atomic(path, tsv.str());
}

}  // namespace lntm
