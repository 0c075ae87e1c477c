#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lntm/corpus.hpp"
#include "lntm/model.hpp"
#include "lntm/synth.hpp"

// Exercises the installed binary end to end: flag handling, output files and
// the documented exit-code mapping (0 ok, 1 runtime failure, 2 usage/parse).

using namespace lntm;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  static fs::path d = [] {
    fs::path p = fs::temp_directory_path() / "lntm_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

struct CmdResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CmdResult run_cli(const std::string& args) {
  static int serial = 0;
  fs::path out = work_dir() / ("stdout" + std::to_string(serial));
  fs::path err = work_dir() / ("stderr" + std::to_string(serial));
  ++serial;
  std::string cmd = std::string(LNTM_CLI_PATH) + " " + args + " >" +
                    out.string() + " 2>" + err.string();
  int rc = std::system(cmd.c_str());
  CmdResult r;
  r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path fixture_jsonl() {
  static fs::path p = [] {
    fs::path path = work_dir() / "ten_docs.jsonl";
    std::ofstream out(path);
    const char* labels[] = {"news", "sport"};
    for (int i = 0; i < 10; ++i)
      out << "{\"id\":\"d" << i << "\",\"label\":\"" << labels[i % 2]
          << "\",\"text\":\"alpha beta gamma delta word" << i % 3
          << " filler common tokens here\",\"split\":\""
          << (i < 6 ? "train" : (i < 8 ? "val" : "test")) << "\"}\n";
    return path;
  }();
  return p;
}

}  // namespace

TEST_CASE("no subcommand is a usage error") {
  CHECK(run_cli("").exit_code == 2);
  CHECK(run_cli("frobnicate").exit_code == 2);
}

TEST_CASE("help exits zero") {
  CmdResult r = run_cli("--help");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("run-stream") != std::string::npos);
}

TEST_CASE("ingest writes a collection and prints the stats table") {
  fs::path coll = work_dir() / "ten.coll";
  CmdResult r = run_cli("ingest --in " + fixture_jsonl().string() + " --out " +
                        coll.string() + " --name ten");
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(coll));
  CHECK(r.out.find("train\tval\ttest\tK") != std::string::npos);
  CHECK(r.out.find("ten\t6\t2\t2\t") != std::string::npos);
  Collection c = load_collection(coll.string());
  CHECK(c.train.size() == 6);
}

TEST_CASE("malformed JSONL reports the line and exits 2") {
  fs::path bad = work_dir() / "bad.jsonl";
  {
    std::ofstream out(bad);
    for (int i = 1; i <= 6; ++i)
      out << "{\"id\":\"d" << i
          << "\",\"label\":\"l\",\"text\":\"alpha beta\"}\n";
    out << "{broken json\n";
  }
  CmdResult r = run_cli("ingest --in " + bad.string() + " --out " +
                        (work_dir() / "bad.coll").string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("line 7") != std::string::npos);
}

TEST_CASE("ingesting a bundled fixture reproduces the golden statistics") {
  fs::path corpus = fs::path(LNTM_FIXTURE_DIR) / "partial" / "task_c.jsonl";
  REQUIRE(fs::exists(corpus));
  CmdResult r = run_cli("ingest --in " + corpus.string() + " --out " +
                        (work_dir() / "task_c.coll").string() +
                        " --min-token-len 1 --name task_c");
  CHECK(r.exit_code == 0);
  // frozen from the committed generator output
  CHECK(r.out.find("task_c\t40\t12\t60\t54\t") != std::string::npos);
}

TEST_CASE("train then topics and eval round trip") {
  fs::path coll = work_dir() / "trained.coll";
  {
    synth::SynthTask t;
    t.name = "alpha";
    t.concepts = {0, 1};
    t.train_per_class = 20;
    t.val_per_class = 3;
    t.test_per_class = 6;
    t.noise = 0.2;
    auto raw = synth::generate_task(t, 8, 99);
    PreprocessOptions pre;
    pre.min_token_len = 1;
    save_collection(build_collection(raw, pre, "alpha"), coll.string());
  }
  fs::path ckpt = work_dir() / "alpha.ckpt";
  CmdResult tr = run_cli("train --data " + coll.string() + " --out " +
                         ckpt.string() +
                         " --hidden 4 --lr 0.05 --epochs 8 --seed 5");
  CHECK(tr.exit_code == 0);
  CHECK(tr.out.find("best_val_ppl") != std::string::npos);
  CHECK(fs::exists(ckpt));

  SUBCASE("topics prints the requested number of words per topic") {
    CmdResult tp = run_cli("topics --model " + ckpt.string() + " --data " +
                           coll.string() + " --top 5");
    CHECK(tp.exit_code == 0);
    std::istringstream lines(tp.out);
    std::string line;
    int n_topics = 0;
    while (std::getline(lines, line)) {
      if (line.rfind("T", 0) != 0) continue;
      ++n_topics;
      int words = 0;
      std::istringstream ws(line.substr(line.find(':') + 1));
      std::string w;
      while (ws >> w) ++words;
      CHECK(words == 5);
    }
    CHECK(n_topics == 4);
  }

  SUBCASE("eval ppl/ir/coh run against the checkpoint") {
    CmdResult ev = run_cli("eval --model " + ckpt.string() + " --data " +
                           coll.string() + " --metric ppl");
    CHECK(ev.exit_code == 0);
    CHECK(ev.out.find("ppl\t") != std::string::npos);
    CmdResult ir = run_cli("eval --model " + ckpt.string() + " --data " +
                           coll.string() + " --metric ir --top-k 3");
    CHECK(ir.exit_code == 0);
    CHECK(ir.out.find("p_at_3\t") != std::string::npos);
    CmdResult coh = run_cli("eval --model " + ckpt.string() + " --data " +
                            coll.string() + " --metric coh --top 5");
    CHECK(coh.exit_code == 0);
    CHECK(coh.out.find("coh\t") != std::string::npos);
  }

  SUBCASE("zero-shot style eval re-encodes through --model-vocab") {
    Collection alpha = load_collection(coll.string());
    fs::path vocab = work_dir() / "alpha.vocab";
    save_vocab(alpha.vocab, vocab.string());
    // foreign collection: shares some tokens with alpha, adds its own
    Collection foreign;
    foreign.name = "foreign";
    foreign.vocab = Vocabulary({"brandnew", alpha.vocab.token(0),
                                alpha.vocab.token(1), alpha.vocab.token(2)});
    foreign.train = {{"f1", "x", {1, 2, 0}}, {"f2", "y", {3, 3}}};
    foreign.test = {{"f3", "x", {1, 3}}};
    foreign.labels = {"x", "y"};
    fs::path fpath = work_dir() / "foreign.coll";
    save_collection(foreign, fpath.string());
    CmdResult ev = run_cli("eval --model " + ckpt.string() + " --data " +
                           fpath.string() + " --metric ppl --model-vocab " +
                           vocab.string());
    CHECK(ev.exit_code == 0);
    CHECK(ev.out.find("ppl\t") != std::string::npos);
  }

  SUBCASE("mismatched collection is a runtime failure, exit 1") {
    fs::path other = work_dir() / "other.coll";
    Collection oc;
    oc.name = "other";
    oc.vocab = Vocabulary({"junk", "words"});
    oc.train = {{"x", "l", {0, 1}}};
    oc.test = {{"y", "l", {1}}};
    oc.labels = {"l"};
    save_collection(oc, other.string());
    CmdResult ev = run_cli("eval --model " + ckpt.string() + " --data " +
                           other.string() + " --metric ppl");
    CHECK(ev.exit_code == 1);
    CHECK(ev.err.find("does not match") != std::string::npos);
  }

  SUBCASE("distill prints threshold and per-source counts") {
    CmdResult d = run_cli("distill --model " + ckpt.string() + " --future " +
                          coll.string() + " --past " + coll.string() +
                          " --lambda 0.5 --out " +
                          (work_dir() / "aug.tsv").string());
    CHECK(d.exit_code == 0);
    CHECK(d.out.find("threshold_ppl\t") != std::string::npos);
    CHECK(d.out.find("selected\talpha\t") != std::string::npos);
    CHECK(fs::exists(work_dir() / "aug.tsv"));
  }
}

TEST_CASE("eval on the uniform-model fixture prints K") {
  // zero parameters: every conditional is uniform, perplexity equals K
  Vocabulary v({"one", "two", "three", "four"});
  ModelParams p;
  p.W = Matrix(2, 4);
  p.U = Matrix(4, 2);
  p.b.assign(4, 0.0);
  p.c.assign(2, 0.0);
  fs::path ckpt = work_dir() / "uniform.ckpt";
  save_checkpoint(p, "uniform", ckpt.string());
  fs::path coll = work_dir() / "uniform.coll";
  Collection c;
  c.name = "uniform";
  c.vocab = v;
  c.train = {{"t", "l", {0, 1}}};
  c.test = {{"e", "l", {2, 3, 1}}};
  c.labels = {"l"};
  save_collection(c, coll.string());
  CmdResult r = run_cli("eval --model " + ckpt.string() + " --data " +
                        coll.string() + " --metric ppl");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("ppl\t4\n") != std::string::npos);
}

TEST_CASE("run-stream and ablate-tr drive the bundled fixture") {
  fs::path conf = fs::path(LNTM_FIXTURE_DIR) / "partial" / "stream.conf";
  REQUIRE(fs::exists(conf));
  fs::path out = work_dir() / "stream_run";

  CmdResult r1 = run_cli("run-stream --config " + conf.string() + " --out " +
                         out.string() + " --stop-after 1");
  CHECK(r1.exit_code == 0);
  CHECK(r1.out.find("completed_tasks\t1") != std::string::npos);

  // resume to completion
  CmdResult r2 = run_cli("run-stream --config " + conf.string() + " --out " +
                         out.string());
  CHECK(r2.exit_code == 0);
  CHECK(r2.out.find("completed_tasks\t3") != std::string::npos);
  CHECK(fs::exists(out / "metrics.tsv"));
  CHECK(fs::exists(out / "summary.json"));
  std::string tsv = slurp(out / "metrics.tsv");
  CHECK(tsv.find("forgetting") != std::string::npos);

  CmdResult ab = run_cli("ablate-tr --config " + conf.string() + " --out " +
                         (work_dir() / "ablate.tsv").string() +
                         " --grid 0.01,0.1");
  CHECK(ab.exit_code == 0);
  std::string abl = slurp(work_dir() / "ablate.tsv");
  CHECK(abl.find("task_a\ttask_b") != std::string::npos);
  CHECK(abl.find("task_b\ttask_c") != std::string::npos);

  SUBCASE("eval on persisted artifacts reproduces reported rows exactly") {
    // task_c trained with embedding transfer from both past tasks; rebuild
    // the same context from the saved knowledge base
    CmdResult ev = run_cli(
        "eval --metric ppl --model " + (out / "tasks/task_c/model.ckpt").string() +
        " --data " + (out / "tasks/task_c/collection.coll").string() +
        " --kb " + (out / "kb").string() + " --embtf task_a=0.5,task_b=0.5");
    CHECK(ev.exit_code == 0);
    // the reported value, printed with the same shortest-exact formatting
    std::string reported;
    std::istringstream lines(tsv);
    std::string line;
    while (std::getline(lines, line))
      if (line.find("task_c\ttask_c\tcurrent\tppl") != std::string::npos)
        reported = line.substr(line.rfind('\t') + 1);
    REQUIRE(!reported.empty());
    CHECK(ev.out.find("ppl\t" + reported + "\n") != std::string::npos);
  }
}

TEST_CASE("missing files map to exit 2") {
  CHECK(run_cli("eval --model nope.ckpt --data nada.coll --metric ppl")
            .exit_code == 2);
  CHECK(run_cli("run-stream --config nowhere.conf").exit_code == 2);
}
