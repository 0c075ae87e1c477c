#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lntm/model.hpp"
#include "support.hpp"

using namespace lntm;
namespace fs = std::filesystem;

namespace {

ModelParams zero_params(std::size_t h, std::size_t k,
                        Activation act = Activation::kSigmoid) {
  ModelParams p;
  p.W = Matrix(h, k);
  p.U = Matrix(k, h);
  p.b.assign(k, 0.0);
  p.c.assign(h, 0.0);
  p.activation = act;
  return p;
}

// All documents of a given length over vocabulary {0..k-1}.
void enumerate_docs(std::size_t k, std::size_t d,
                    const std::function<void(const Document&)>& fn) {
  Document doc;
  doc.id = "enum";
  doc.label = "l";
  doc.words.assign(d, 0);
  while (true) {
    fn(doc);
    std::size_t i = 0;
    for (; i < d; ++i) {
      if (static_cast<std::size_t>(++doc.words[i]) < k) break;
      doc.words[i] = 0;
    }
    if (i == d) break;
  }
}

}  // namespace

TEST_CASE("zero parameters give uniform conditionals") {
  for (auto act : {Activation::kSigmoid, Activation::kTanh}) {
    ModelParams p = zero_params(2, 5, act);
    Document doc = testsup::random_doc(5, 4, 11);
    ForwardTrace t = forward(doc, p);
    for (double lp : t.logprobs)
      CHECK(lp == doctest::Approx(-std::log(5.0)).epsilon(1e-12));
  }
}

TEST_CASE("uniform-model NLL is D * ln K") {
  ModelParams p = zero_params(3, 4);
  Document doc{"d", "l", {1, 3, 0}};
  CHECK(std::fabs(compute_nll(doc, p) - 3.0 * std::log(4.0)) < 1e-10);
  CHECK(compute_nll(doc, p) == doctest::Approx(4.158883).epsilon(1e-6));
}

TEST_CASE("NLL matches the brute-force oracle") {
  // tiny fixed instance quoted at 1e-10, plus random sweeps
  ModelParams p = testsup::random_params(2, 3, Activation::kSigmoid, 21);
  Document doc{"d", "l", {2, 0}};
  CHECK(std::fabs(compute_nll(doc, p) - testsup::oracle_nll(doc, p)) < 1e-10);

  for (std::uint64_t s = 0; s < 12; ++s) {
    auto act = s % 2 ? Activation::kTanh : Activation::kSigmoid;
    ModelParams q = testsup::random_params(1 + s % 4, 2 + s % 6, act, 100 + s);
    Document d = testsup::random_doc(q.vocab_size(), 1 + s % 5, 200 + s);
    CHECK(std::fabs(compute_nll(d, q) - testsup::oracle_nll(d, q)) < 1e-9);
  }
}

TEST_CASE("every conditional is a proper distribution") {
  std::vector<ModelParams> fixtures;
  fixtures.push_back(zero_params(2, 6));
  fixtures.push_back(testsup::random_params(3, 7, Activation::kSigmoid, 5));
  fixtures.push_back(testsup::random_params(4, 5, Activation::kTanh, 6, 2.0));
  for (const auto& p : fixtures) {
    Document doc = testsup::random_doc(p.vocab_size(), 5, 77);
    ForwardTrace t = forward(doc, p);
    for (std::size_t i = 0; i < doc.words.size(); ++i) {
      auto probs = conditional_distribution(p, t.hiddens.row(i));
      double sum = 0.0;
      for (double x : probs) sum += x;
      CHECK(std::fabs(sum - 1.0) < 1e-6);
      CHECK(t.logprobs[i] <= 0.0);
    }
  }
}

TEST_CASE("joint distribution sums to one over all documents") {
  // brute-force autoregressive normalization, K <= 4, D <= 3
  for (auto act : {Activation::kSigmoid, Activation::kTanh}) {
    ModelParams p = testsup::random_params(2, 3, act, 31);
    for (std::size_t d = 1; d <= 3; ++d) {
      long double total = 0.0L;
      enumerate_docs(3, d, [&](const Document& doc) {
        total += std::exp(-static_cast<long double>(compute_nll(doc, p)));
      });
      CHECK(std::fabs(static_cast<double>(total) - 1.0) < 1e-8);
    }
  }
  ModelParams p4 = testsup::random_params(3, 4, Activation::kSigmoid, 32);
  long double total = 0.0L;
  enumerate_docs(4, 3, [&](const Document& doc) {
    total += std::exp(-static_cast<long double>(compute_nll(doc, p4)));
  });
  CHECK(std::fabs(static_cast<double>(total) - 1.0) < 1e-8);
}

TEST_CASE("single-word document uses the empty-context hidden state") {
  ModelParams p = testsup::random_params(3, 4, Activation::kSigmoid, 41);
  Document doc{"d", "l", {2}};
  ForwardTrace t = forward(doc, p);
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(t.hiddens(0, j) == activate(p.activation, p.c[j]));
  // log softmax(b + U g(c))[v1]
  std::vector<double> h(3);
  for (std::size_t j = 0; j < 3; ++j) h[j] = activate(p.activation, p.c[j]);
  auto probs = conditional_distribution(p, h.data());
  CHECK(t.logprobs[0] == doctest::Approx(std::log(probs[2])).epsilon(1e-12));
}

TEST_CASE("incremental pre-activation equals the direct sum") {
  ModelParams p = testsup::random_params(4, 9, Activation::kTanh, 51);
  Document doc = testsup::random_doc(9, 7, 52);
  ForwardTrace t = forward(doc, p);
  for (std::size_t i = 0; i < doc.words.size(); ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double direct = p.c[j];
      for (std::size_t q = 0; q < i; ++q)
        direct += p.W(j, static_cast<std::size_t>(doc.words[q]));
      CHECK(std::fabs(t.preacts(i, j) - direct) < 1e-10);
    }
  }
}

TEST_CASE("forward input validation") {
  ModelParams p = testsup::random_params(2, 3, Activation::kSigmoid, 61);
  CHECK_THROWS(forward(Document{"d", "l", {}}, p));
  CHECK_THROWS(forward(Document{"d", "l", {3}}, p));
  ModelParams bad = p;
  bad.W(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(forward(Document{"d", "l", {0}}, bad));
}

TEST_CASE("gradient of b at zero parameters is prob minus count") {
  ModelParams p = zero_params(2, 4);
  Document doc{"d", "l", {1, 1, 3}};
  auto [loss, g] = gradients(doc, p);
  for (std::size_t w = 0; w < 4; ++w) {
    double expected = 0.0;
    for (std::int32_t v : doc.words)
      expected += 1.0 / 4.0 - (static_cast<std::size_t>(v) == w ? 1.0 : 0.0);
    CHECK(g.b[w] == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(loss == doctest::Approx(3 * std::log(4.0)));
}

TEST_CASE("analytic gradients match central finite differences") {
  int instances = 0;
  for (std::uint64_t s = 0; s < 24; ++s) {
    auto act = s % 2 ? Activation::kTanh : Activation::kSigmoid;
    std::size_t h = 1 + s % 4, k = 2 + s % 7, d = 1 + s % 6;
    ModelParams p = testsup::random_params(h, k, act, 300 + s);
    Document doc = testsup::random_doc(k, d, 400 + s);
    auto [loss, g] = gradients(doc, p);
    (void)loss;
    double worst = testsup::fd_worst_error(
        [&] { return compute_nll(doc, p); }, testsup::param_slots(p),
        testsup::flat_grads(g));
    CHECK(worst < 1e-4);
    ++instances;
  }
  CHECK(instances >= 20);
}

TEST_CASE("gradients with an embedding shift match finite differences") {
  ModelParams p = testsup::random_params(3, 6, Activation::kSigmoid, 71);
  EmbTfContext ctx;
  ctx.shift = Matrix(6, 3);
  Rng rng(72);
  for (double& x : ctx.shift.data) x = rng.uniform(-0.4, 0.4);
  ctx.sources.emplace_back("past", 1.0);
  Document doc = testsup::random_doc(6, 5, 73);
  auto [loss, g] = gradients(doc, p, &ctx);
  (void)loss;
  double worst = testsup::fd_worst_error(
      [&] { return compute_nll(doc, p, &ctx); }, testsup::param_slots(p),
      testsup::flat_grads(g));
  CHECK(worst < 1e-4);
}

TEST_CASE("one-word document touches only the first position's deltas") {
  ModelParams p = testsup::random_params(3, 5, Activation::kSigmoid, 81);
  Document doc{"d", "l", {4}};
  auto [loss, g] = gradients(doc, p);
  (void)loss;
  // no preceding words: W receives no gradient at all
  for (double x : g.W.data) CHECK(x == 0.0);
  // c receives exactly the single position's backpropagated delta
  double worst = testsup::fd_worst_error(
      [&] { return compute_nll(doc, p); }, testsup::param_slots(p),
      testsup::flat_grads(g));
  CHECK(worst < 1e-4);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  Collection c = testsup::clustered_collection("t", 2, 3, 4, 5, 91);
  ModelParams p =
      ModelParams::init(2, c.vocab.size(), Activation::kSigmoid, 92);
  TrainHyper h;
  h.learning_rate = 0.0;
  h.max_epochs = 3;
  TrainResult r = train_task(c, p, h);
  CHECK(r.params == p);
}

TEST_CASE("one epoch over one document is a single SGD step") {
  Collection c;
  c.name = "one";
  c.vocab = Vocabulary({"aa", "bb", "cc"});
  c.train = {{"d1", "l", {0, 2, 1}}};
  c.labels = {"l"};
  ModelParams p = ModelParams::init(2, 3, Activation::kTanh, 7);
  TrainHyper h;
  h.learning_rate = 0.05;
  h.max_epochs = 1;
  TrainResult r = train_task(c, p, h);

  auto [loss, g] = gradients(c.train[0], p);
  (void)loss;
  ModelParams expect = p;
  axpy(-h.learning_rate, g.W.data.data(), expect.W.data.data(),
       g.W.data.size());
  axpy(-h.learning_rate, g.U.data.data(), expect.U.data.data(),
       g.U.data.size());
  axpy(-h.learning_rate, g.b.data(), expect.b.data(), g.b.size());
  axpy(-h.learning_rate, g.c.data(), expect.c.data(), g.c.size());
  CHECK(r.params == expect);
}

TEST_CASE("training is deterministic given the seed") {
  Collection c = testsup::clustered_collection("t", 2, 4, 6, 6, 101);
  TrainHyper h;
  h.learning_rate = 0.02;
  h.max_epochs = 6;
  h.seed = 13;
  ModelParams p0 =
      ModelParams::init(3, c.vocab.size(), Activation::kSigmoid, h.seed);
  TrainResult a = train_task(c, p0, h);
  TrainResult b = train_task(c, p0, h);
  CHECK(a.history == b.history);
  CHECK(a.params == b.params);
  CHECK(a.best_epoch == b.best_epoch);
}

TEST_CASE("batched updates accumulate gradients before stepping") {
  Collection c;
  c.name = "two";
  c.vocab = Vocabulary({"aa", "bb", "cc"});
  c.train = {{"d1", "l", {0, 1}}, {"d2", "l", {2, 2}}};
  c.labels = {"l"};
  TrainHyper h;
  h.learning_rate = 0.03;
  h.max_epochs = 1;
  h.batch_size = 2;
  h.seed = 5;
  ModelParams p = ModelParams::init(2, 3, Activation::kSigmoid, 6);
  TrainResult r = train_task(c, p, h);

  // replicate: one step with the summed gradients of both docs (any order)
  auto [l1, g1] = gradients(c.train[0], p);
  auto [l2, g2] = gradients(c.train[1], p);
  (void)l1;
  (void)l2;
  ModelParams expect = p;
  for (std::size_t i = 0; i < g1.W.data.size(); ++i)
    expect.W.data[i] -= h.learning_rate * (g1.W.data[i] + g2.W.data[i]);
  for (std::size_t i = 0; i < g1.U.data.size(); ++i)
    expect.U.data[i] -= h.learning_rate * (g1.U.data[i] + g2.U.data[i]);
  for (std::size_t i = 0; i < g1.b.size(); ++i)
    expect.b[i] -= h.learning_rate * (g1.b[i] + g2.b[i]);
  for (std::size_t i = 0; i < g1.c.size(); ++i)
    expect.c[i] -= h.learning_rate * (g1.c[i] + g2.c[i]);
  for (std::size_t i = 0; i < expect.W.data.size(); ++i)
    CHECK(r.params.W.data[i] == doctest::Approx(expect.W.data[i]).epsilon(1e-12));
}

TEST_CASE("divergence aborts with epoch and document in the message") {
  Collection c;
  c.name = "boom";
  c.vocab = Vocabulary({"aa", "bb"});
  c.train = {{"doc_boom", "l", {0, 1, 0, 1, 0, 1}}};
  c.labels = {"l"};
  TrainHyper h;
  h.learning_rate = 0.01;
  h.max_epochs = 5;
  // finite but extreme decoder: the first logit sum overflows to inf, so the
  // first computed loss is non-finite
  ModelParams p = ModelParams::init(3, 2, Activation::kSigmoid, 3);
  for (double& x : p.U.data) x = 1.3e308;
  try {
    train_task(c, p, h);
    FAIL("expected divergence");
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    CHECK(msg.find("diverged") != std::string::npos);
    CHECK(msg.find("epoch 1") != std::string::npos);
    CHECK(msg.find("doc_boom") != std::string::npos);
  }
}

TEST_CASE("early stopping keeps the best validation snapshot") {
  Collection c = testsup::clustered_collection("t", 2, 4, 8, 6, 111, 2, 2);
  TrainHyper h;
  h.learning_rate = 0.3;  // aggressive on purpose; val ppl will wobble
  h.max_epochs = 40;
  h.early_stop_patience = 4;
  h.seed = 9;
  ModelParams p0 =
      ModelParams::init(4, c.vocab.size(), Activation::kSigmoid, h.seed);
  TrainResult r = train_task(c, p0, h);
  REQUIRE(!r.history.val_ppl.empty());
  double best = *std::min_element(r.history.val_ppl.begin(),
                                  r.history.val_ppl.end());
  CHECK(r.best_val_ppl == best);
  CHECK(held_out_ppl(c.val, r.params) == doctest::Approx(best).epsilon(1e-12));
  // stopped within patience of the best epoch, or exhausted the budget
  CHECK(r.history.val_ppl.size() <=
        std::min<std::size_t>(h.max_epochs,
                              r.best_epoch + h.early_stop_patience));
}

TEST_CASE("doc representations") {
  SUBCASE("zero parameters, sigmoid: all 0.5") {
    ModelParams p = zero_params(4, 3);
    auto v = doc_representation(Document{"d", "l", {0, 2}}, p);
    for (double x : v) CHECK(x == 0.5);
  }
  SUBCASE("all-words mode is permutation invariant bit for bit") {
    ModelParams p = testsup::random_params(3, 8, Activation::kTanh, 121);
    Document a{"d", "l", {7, 0, 3, 3, 5}};
    Document b{"d", "l", {3, 5, 7, 3, 0}};
    CHECK(doc_representation(a, p) == doc_representation(b, p));
  }
  SUBCASE("exclusive mode on a one-word doc is g(c)") {
    ModelParams p = testsup::random_params(3, 4, Activation::kSigmoid, 122);
    auto v = doc_representation(Document{"d", "l", {1}}, p,
                                ReprMode::kExclusive);
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(v[j] == activate(p.activation, p.c[j]));
  }
  SUBCASE("exclusive mode matches the last forward hidden state") {
    ModelParams p = testsup::random_params(3, 6, Activation::kSigmoid, 123);
    Document d = testsup::random_doc(6, 5, 124);
    auto v = doc_representation(d, p, ReprMode::kExclusive);
    ForwardTrace t = forward(d, p);
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(v[j] == doctest::Approx(t.hiddens(4, j)).epsilon(1e-12));
  }
}

TEST_CASE("topic extraction") {
  Vocabulary v({"t0", "t1", "t2", "t3", "t4", "t5"});
  ModelParams p = zero_params(2, 6);
  SUBCASE("top entry wins") {
    p.W(0, 5) = 10.0;
    auto topics = extract_topics(p, v, 1);
    CHECK(topics[0][0].first == "t5");
  }
  SUBCASE("ties break by ascending index") {
    auto topics = extract_topics(p, v, 3);
    CHECK(topics[1][0].first == "t0");
    CHECK(topics[1][1].first == "t1");
    CHECK(topics[1][2].first == "t2");
  }
  SUBCASE("top_n beyond K rejected") {
    CHECK_THROWS(extract_topics(p, v, 7));
  }
}

TEST_CASE("trained topics separate a two-cluster corpus") {
  // two disjoint word clusters; after training, each cluster's words should
  // dominate separate topics
  Collection c = testsup::clustered_collection("t", 2, 4, 30, 8, 131, 2, 2,
                                               /*noise=*/0.0);
  TrainHyper h;
  h.learning_rate = 0.1;
  h.max_epochs = 25;
  h.seed = 17;
  ModelParams p0 =
      ModelParams::init(2, c.vocab.size(), Activation::kSigmoid, h.seed);
  TrainResult r = train_task(c, p0, h);
  auto topics = extract_topics(r.params, c.vocab, 4);
  auto cluster_of = [](const std::string& tok) { return tok[1]; };
  std::vector<int> majority;
  for (const auto& topic : topics) {
    int c0 = 0;
    for (const auto& [tok, w] : topic)
      if (cluster_of(tok) == '0') ++c0;
    majority.push_back(c0 >= 3 ? 0 : (4 - c0 >= 3 ? 1 : -1));
  }
  REQUIRE(majority.size() == 2);
  CHECK(majority[0] != -1);
  CHECK(majority[1] != -1);
  CHECK(majority[0] != majority[1]);
}

TEST_CASE("checkpoint round trip is bit exact") {
  ModelParams p = testsup::random_params(3, 5, Activation::kTanh, 141);
  fs::path dir = fs::temp_directory_path() / "lntm_model_test";
  fs::create_directories(dir);
  fs::path f = dir / "m.ckpt";
  save_checkpoint(p, "task one", f.string());
  Checkpoint ck = load_checkpoint(f.string());
  CHECK(ck.task_name == "task one");
  CHECK(ck.params == p);

  SUBCASE("bad magic") {
    fs::path g = dir / "bad.ckpt";
    std::ofstream(g.string()) << "NOPE!";
    CHECK_THROWS_AS(load_checkpoint(g.string()), ParseError);
  }
  SUBCASE("truncated") {
    std::ifstream in(f.string(), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    fs::path g = dir / "trunc.ckpt";
    std::ofstream(g.string(), std::ios::binary)
        << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(g.string()), ParseError);
  }
}

TEST_CASE("held-out perplexity handles out-of-range indices") {
  ModelParams p = zero_params(2, 4);
  std::vector<Document> docs = {{"a", "l", {0, 1}}, {"b", "l", {7, 9}}};
  std::size_t skipped = 0;
  double ppl = held_out_ppl(docs, p, nullptr, &skipped);
  CHECK(skipped == 1);
  CHECK(std::fabs(ppl - 4.0) < 1e-9);
  std::vector<Document> none = {{"a", "l", {9}}};
  CHECK_THROWS(held_out_ppl(none, p));
}

TEST_CASE("zero-strength transfer context leaves the NLL untouched") {
  ModelParams p = testsup::random_params(3, 5, Activation::kSigmoid, 151);
  Document d = testsup::random_doc(5, 4, 152);
  EmbTfContext ctx;
  ctx.shift = Matrix(5, 3);  // all zeros, no sources
  CHECK(compute_nll(d, p, &ctx) == compute_nll(d, p));
}
