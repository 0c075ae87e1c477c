// Command-line driver: ingestion, training, stream runs, evaluation,
// distillation inspection, topic dumps and the lambda_tr ablation.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or input-parse error.
// LNTM_LOG_LEVEL=0 silences progress output (stderr).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lntm/corpus.hpp"
#include "lntm/corpus_jsonl.hpp"
#include "lntm/eval.hpp"
#include "lntm/lifelong.hpp"
#include "lntm/model.hpp"
#include "lntm/presets.hpp"
#include "lntm/stream.hpp"

namespace {

using namespace lntm;

bool verbose() {
  const char* lvl = std::getenv("LNTM_LOG_LEVEL");
  return !(lvl && std::string(lvl) == "0");
}

std::string fmt(double v) { return detail::fmt_double(v); }

Collection load_any_collection(const std::string& path) {
  if (path.size() > 6 && path.substr(path.size() - 6) == ".jsonl")
    return build_collection(read_jsonl(path), PreprocessOptions{},
                            std::filesystem::path(path).stem().string());
  return load_collection(path);
}

void print_stats(const Collection& c, std::size_t dropped) {
  double mean_len = 0;
  std::size_t n = 0;
  for (const auto* split : {&c.train, &c.val, &c.test})
    for (const auto& d : *split) {
      mean_len += static_cast<double>(d.words.size());
      ++n;
    }
  if (n) mean_len /= static_cast<double>(n);
  std::printf("name\ttrain\tval\ttest\tK\tL\tC\tdropped\n");
  std::printf("%s\t%zu\t%zu\t%zu\t%zu\t%.1f\t%zu\t%zu\n", c.name.c_str(),
              c.train.size(), c.val.size(), c.test.size(), c.vocab.size(),
              mean_len, c.labels.size(), dropped);
}

// --embtf task=strength,... against a saved knowledge base
EmbTfContext build_cli_ctx(const std::string& kb_dir, const std::string& spec,
                           const Vocabulary& vocab, std::size_t hidden) {
  KnowledgeBase kb = load_kb(kb_dir);
  std::vector<EmbTfLambda> lambdas;
  std::istringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t eq = item.find('=');
    if (eq == std::string::npos)
      throw ParseError("--embtf expects task=strength[,task=strength...]");
    lambdas.push_back(
        {item.substr(0, eq), std::stod(item.substr(eq + 1))});
  }
  return build_embtf_context(vocab, kb, lambdas, hidden);
}

int cmd_ingest(const std::string& in, const std::string& out,
               std::string name, const PreprocessOptions& pre) {
  if (name.empty()) name = std::filesystem::path(in).stem().string();
  BuildStats stats;
  Collection c = build_collection(read_jsonl(in), pre, name, &stats);
  save_collection(c, out);
  print_stats(c, stats.dropped_docs);
  return 0;
}

int cmd_train(const std::string& data, const std::string& out,
              std::size_t hidden, const std::string& activation,
              const TrainHyper& hyper, std::string task_name) {
  Collection c = load_any_collection(data);
  if (task_name.empty()) task_name = c.name;
  ModelParams p0 = ModelParams::init(hidden, c.vocab.size(),
                                     parse_activation(activation), hyper.seed);
  TrainResult r = train_task(c, std::move(p0), hyper);
  save_checkpoint(r.params, task_name, out);
  for (std::size_t e = 0; e < r.history.train_loss.size(); ++e) {
    std::printf("epoch %zu\ttrain_loss %s", e + 1,
                fmt(r.history.train_loss[e]).c_str());
    if (e < r.history.val_ppl.size())
      std::printf("\tval_ppl %s", fmt(r.history.val_ppl[e]).c_str());
    std::printf("\n");
  }
  std::printf("best_epoch %zu\tbest_val_ppl %s\n", r.best_epoch,
              fmt(r.best_val_ppl).c_str());
  return 0;
}

int cmd_eval(const std::string& model, const std::string& data,
             const std::string& metric, double fraction,
             std::optional<std::size_t> top_k, std::size_t top,
             const std::string& model_vocab, const std::string& kb_dir,
             const std::string& embtf_spec, const std::string& repr) {
  Checkpoint ck = load_checkpoint(model);
  Collection c = load_any_collection(data);

  // evaluating under a foreign model: re-encode into the model's vocabulary
  Vocabulary vocab = c.vocab;
  if (!model_vocab.empty()) {
    Vocabulary mv = load_vocab(model_vocab);
    if (!(mv == c.vocab)) {
      auto re_split = [&](std::vector<Document>& docs) {
        std::vector<Document> out;
        for (const auto& d : docs) {
          Document r = reencode(d, c.vocab, mv);
          if (!r.words.empty()) out.push_back(std::move(r));
        }
        docs = std::move(out);
      };
      re_split(c.train);
      re_split(c.val);
      re_split(c.test);
      vocab = mv;
    }
  }
  if (vocab.size() != ck.params.vocab_size())
    throw std::runtime_error(
        "collection vocabulary does not match the checkpoint (use "
        "--model-vocab to re-encode)");

  EmbTfContext ctx;
  const EmbTfContext* ctx_ptr = nullptr;
  if (!embtf_spec.empty()) {
    if (kb_dir.empty())
      throw ParseError("--embtf needs --kb <dir>");
    ctx = build_cli_ctx(kb_dir, embtf_spec, vocab, ck.params.hidden());
    if (!ctx.sources.empty()) ctx_ptr = &ctx;
  }

  ReprMode mode = repr == "exclusive" ? ReprMode::kExclusive
                                      : ReprMode::kAllWords;
  if (metric == "ppl") {
    std::printf("ppl\t%s\n", fmt(perplexity(c.test, ck.params, ctx_ptr)).c_str());
  } else if (metric == "ir") {
    RetrievalDepth depth = top_k ? RetrievalDepth::TopK(*top_k)
                                 : RetrievalDepth::Fraction(fraction);
    IRResult r =
        ir_precision(c.train, c.test, ck.params, depth, mode, ctx_ptr);
    if (top_k)
      std::printf("p_at_%zu\t%s\n", *top_k, fmt(r.mean_precision).c_str());
    else
      std::printf("p_at_r\tfraction=%s\t%s\n", fmt(fraction).c_str(),
                  fmt(r.mean_precision).c_str());
  } else if (metric == "coh") {
    std::size_t n = std::min(top, vocab.size());
    auto topics = extract_topics(ck.params, vocab, n);
    CoherenceResult r = coherence(topics, c);
    std::printf("coh\t%s\n", fmt(r.mean_coh).c_str());
    for (std::size_t t = 0; t < r.per_topic.size(); ++t)
      std::printf("topic %zu\t%s\n", t, fmt(r.per_topic[t]).c_str());
  } else {
    throw ParseError("unknown metric '" + metric + "' (ppl|ir|coh)");
  }
  return 0;
}

int cmd_distill(const std::string& model, const std::string& future,
                const std::vector<std::string>& past_paths, double lambda,
                const std::string& out) {
  Checkpoint ck = load_checkpoint(model);
  Collection fut = load_any_collection(future);
  if (fut.vocab.size() != ck.params.vocab_size())
    throw std::runtime_error("future collection does not match the checkpoint");
  double ppl_future = perplexity(fut.test, ck.params);
  std::vector<Collection> pasts;
  for (const auto& p : past_paths) pasts.push_back(load_any_collection(p));
  std::vector<SalSource> sources;
  for (const auto& p : pasts) sources.push_back({&p, lambda});
  AugmentedSet aug =
      distill_documents(ck.params, fut.vocab, ppl_future, sources);
  std::printf("threshold_ppl\t%s\n", fmt(ppl_future).c_str());
  for (const auto& p : pasts) {
    std::size_t n = 0;
    for (const auto& item : aug.items)
      if (item.source_task == p.name) ++n;
    std::printf("selected\t%s\t%zu\tof\t%zu\n", p.name.c_str(), n,
                p.train.size());
  }
  if (!out.empty()) {
    std::ostringstream tsv;
    tsv << "source_task\tdoc_id\tlambda\n";
    for (const auto& item : aug.items)
      tsv << item.source_task << '\t' << item.doc.id << '\t'
          << fmt(item.lambda) << '\n';
    detail::write_text_atomic(out, tsv.str());
  }
  return 0;
}

int cmd_topics(const std::string& model, const std::string& data,
               std::size_t top) {
  Checkpoint ck = load_checkpoint(model);
  Collection c = load_any_collection(data);
  if (c.vocab.size() != ck.params.vocab_size())
    throw std::runtime_error("collection vocabulary does not match the model");
  auto topics = extract_topics(ck.params, c.vocab, std::min(top, c.vocab.size()));
  for (std::size_t t = 0; t < topics.size(); ++t) {
    std::printf("T%zu:", t + 1);
    for (const auto& [tok, w] : topics[t]) std::printf(" %s", tok.c_str());
    std::printf("\n");
  }
  return 0;
}

int cmd_run_stream(const std::string& config, const std::string& out,
                   std::optional<std::uint64_t> seed, std::size_t stop_after) {
  StreamConfig cfg = load_stream_config(config);
  if (!out.empty()) cfg.out_dir = out;
  if (seed) cfg.seed = *seed;
  if (cfg.out_dir.empty())
    throw ParseError("the config sets no output directory; pass --out");
  StreamRunSummary s =
      run_stream(cfg, stop_after, verbose() ? &std::cerr : nullptr);
  std::printf("completed_tasks\t%zu\n", s.completed_tasks.size());
  std::printf("reports\t%s\n",
              (std::filesystem::path(cfg.out_dir) / "metrics.tsv").string().c_str());
  return 0;
}

int cmd_ablate(const std::string& config, const std::string& out,
               const std::string& grid_spec,
               std::optional<std::uint64_t> seed) {
  StreamConfig cfg = load_stream_config(config);
  if (seed) cfg.seed = *seed;
  std::vector<double> grid;
  if (!grid_spec.empty()) {
    std::istringstream ss(grid_spec);
    std::string item;
    while (std::getline(ss, item, ',')) grid.push_back(std::stod(item));
  } else {
    grid.assign(presets::kTrGrid.begin(), presets::kTrGrid.end());
    std::sort(grid.begin(), grid.end());
  }
  auto rows = run_ablate_tr(cfg, grid, verbose() ? &std::cerr : nullptr);
  write_ablate_tsv(rows, out);
  std::printf("rows\t%zu\nreport\t%s\n", rows.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lifelong neural topic modeling"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "build a collection from JSONL");
  std::string in_path, out_path, name;
  PreprocessOptions pre;
  bool keep_case = false;
  std::uint64_t seed = 0;
  ingest->add_option("--in", in_path, "JSONL corpus")->required();
  ingest->add_option("--out", out_path, "collection file to write")->required();
  ingest->add_option("--name", name, "collection name");
  ingest->add_option("--max-vocab", pre.max_vocab, "frequency cutoff (0 = all)");
  ingest->add_option("--min-token-len", pre.min_token_len, "minimum token length");
  ingest->add_option("--min-doc-len", pre.min_doc_len, "minimum document length");
  ingest->add_flag("--keep-case", keep_case, "disable lowercasing");
  ingest->add_option("--seed", seed, "seed for ratio-based splits");

  // train
  auto* train = app.add_subcommand("train", "train one model on one collection");
  std::string data, model_out, activation = "sigmoid", task_name;
  std::size_t hidden = 50;
  TrainHyper hyper;
  hyper.learning_rate = presets::kLearningRate;
  hyper.max_epochs = presets::kMaxEpochs;
  train->add_option("--data", data, "collection (or JSONL)")->required();
  train->add_option("--out", model_out, "checkpoint to write")->required();
  train->add_option("--hidden", hidden, "topic count H");
  train->add_option("--activation", activation, "sigmoid|tanh");
  train->add_option("--lr", hyper.learning_rate, "learning rate");
  train->add_option("--epochs", hyper.max_epochs, "epoch budget");
  train->add_option("--patience", hyper.early_stop_patience, "early-stop patience");
  train->add_option("--batch", hyper.batch_size, "batch size");
  train->add_option("--seed", hyper.seed, "seed");
  train->add_option("--name", task_name, "task name stored in the checkpoint");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string model, metric = "ppl", model_vocab, kb_dir, embtf_spec,
              repr = "all_words";
  double fraction = presets::kRetrievalFraction;
  std::optional<std::size_t> top_k;
  std::size_t top = 10;
  eval->add_option("--model", model, "checkpoint")->required();
  eval->add_option("--data", data, "collection to evaluate")->required();
  eval->add_option("--metric", metric, "ppl|ir|coh")->required();
  eval->add_option("--fraction", fraction, "retrieval fraction R");
  eval->add_option("--top-k", top_k, "retrieve top-k instead of a fraction");
  eval->add_option("--top", top, "words per topic for coherence");
  eval->add_option("--model-vocab", model_vocab,
                   "model vocabulary (re-encode foreign collections)");
  eval->add_option("--kb", kb_dir, "knowledge base for --embtf");
  eval->add_option("--embtf", embtf_spec,
                   "embedding transfer sources, task=strength[,...]");
  eval->add_option("--repr", repr, "all_words|exclusive");

  // distill
  auto* distill = app.add_subcommand("distill", "inspect document distillation");
  std::string future;
  std::vector<std::string> past_paths;
  double sal_lambda = 1.0;
  std::string distill_out;
  distill->add_option("--model", model, "future-task checkpoint")->required();
  distill->add_option("--future", future, "future collection")->required();
  distill->add_option("--past", past_paths, "past collection (repeatable)")
      ->required();
  distill->add_option("--lambda", sal_lambda, "strength attached to selections");
  distill->add_option("--out", distill_out, "write selected doc ids as TSV");

  // topics
  auto* topics = app.add_subcommand("topics", "print top words per topic");
  topics->add_option("--model", model, "checkpoint")->required();
  topics->add_option("--data", data, "collection providing the vocabulary")
      ->required();
  topics->add_option("--top", top, "words per topic");

  // run-stream
  auto* rs = app.add_subcommand("run-stream", "run a lifelong stream");
  std::string config;
  std::optional<std::uint64_t> seed_override;
  std::size_t stop_after = 0;
  rs->add_option("--config", config, "stream config file")->required();
  rs->add_option("--out", out_path, "output directory (overrides config)");
  rs->add_option("--seed", seed_override, "seed (overrides config)");
  rs->add_option("--stop-after", stop_after,
                 "stop once this many tasks are complete");

  // ablate-tr
  auto* ab = app.add_subcommand("ablate-tr",
                                "pairwise transfer-vs-forgetting sweep");
  std::string grid_spec;
  ab->add_option("--config", config, "stream config file")->required();
  ab->add_option("--out", out_path, "TSV report to write")->required();
  ab->add_option("--grid", grid_spec, "comma-separated strengths");
  ab->add_option("--seed", seed_override, "seed (overrides config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*ingest) {
      pre.lowercase = !keep_case;
      pre.seed = seed;
      return cmd_ingest(in_path, out_path, name, pre);
    }
    if (*train)
      return cmd_train(data, model_out, hidden, activation, hyper, task_name);
    if (*eval)
      return cmd_eval(model, data, metric, fraction, top_k, top, model_vocab,
                      kb_dir, embtf_spec, repr);
    if (*distill)
      return cmd_distill(model, future, past_paths, sal_lambda, distill_out);
    if (*topics) return cmd_topics(model, data, top);
    if (*rs) return cmd_run_stream(config, out_path, seed_override, stop_after);
    if (*ab) return cmd_ablate(config, out_path, grid_spec, seed_override);
  } catch (const lntm::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
