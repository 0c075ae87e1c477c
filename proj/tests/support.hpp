#pragma once

// Shared helpers for the test suites: random fixtures and the independent
// oracles (brute-force likelihood, central finite differences) that frozen
// expected values are checked against. Oracles deliberately avoid the library
// code paths they verify.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lntm/corpus.hpp"
#include "lntm/model.hpp"
#include "lntm/rng.hpp"

namespace testsup {

inline lntm::ModelParams random_params(std::size_t h, std::size_t k,
                                       lntm::Activation act,
                                       std::uint64_t seed,
                                       double scale = 0.5) {
  lntm::ModelParams p;
  p.W = lntm::Matrix(h, k);
  p.U = lntm::Matrix(k, h);
  p.b.resize(k);
  p.c.resize(h);
  p.activation = act;
  lntm::Rng rng(seed);
  for (double& x : p.W.data) x = rng.uniform(-scale, scale);
  for (double& x : p.U.data) x = rng.uniform(-scale, scale);
  for (double& x : p.b) x = rng.uniform(-scale, scale);
  for (double& x : p.c) x = rng.uniform(-scale, scale);
  return p;
}

inline lntm::Document random_doc(std::size_t k, std::size_t d,
                                 std::uint64_t seed,
                                 const std::string& id = "doc") {
  lntm::Rng rng(seed);
  lntm::Document doc;
  doc.id = id;
  doc.label = "l";
  for (std::size_t i = 0; i < d; ++i)
    doc.words.push_back(static_cast<std::int32_t>(rng.below(k)));
  return doc;
}

// Independent likelihood oracle: recomputes every hidden state from scratch
// (no incremental pre-activation), uses a plain exp/sum softmax and long
// double accumulation. Supports the additive embedding shift.
inline double oracle_nll(const lntm::Document& doc, const lntm::ModelParams& p,
                         const lntm::EmbTfContext* ctx = nullptr) {
  const std::size_t d = doc.words.size(), h = p.hidden(), k = p.vocab_size();
  long double nll = 0.0L;
  for (std::size_t i = 0; i < d; ++i) {
    std::vector<long double> a(h);
    for (std::size_t j = 0; j < h; ++j) a[j] = p.c[j];
    for (std::size_t q = 0; q < i; ++q) {
      std::size_t w = static_cast<std::size_t>(doc.words[q]);
      for (std::size_t j = 0; j < h; ++j) a[j] += p.W(j, w);
      if (ctx) {
        const double* s = ctx->shift_for(doc.words[q]);
        for (std::size_t j = 0; j < h; ++j) a[j] += s[j];
      }
    }
    std::vector<long double> hid(h);
    for (std::size_t j = 0; j < h; ++j)
      hid[j] = p.activation == lntm::Activation::kSigmoid
                   ? 1.0L / (1.0L + std::exp(-a[j]))
                   : std::tanh(a[j]);
    std::vector<long double> expo(k);
    long double z = 0.0L;
    for (std::size_t w = 0; w < k; ++w) {
      long double logit = p.b[w];
      for (std::size_t j = 0; j < h; ++j) logit += p.U(w, j) * hid[j];
      expo[w] = std::exp(logit);
      z += expo[w];
    }
    nll -= std::log(expo[static_cast<std::size_t>(doc.words[i])] / z);
  }
  return static_cast<double>(nll);
}

// Central finite differences over a flat list of parameter slots.
// Returns the worst relative error between analytic and numeric, where the
// relative error uses max(1, |a|, |n|) as denominator.
inline double fd_worst_error(const std::function<double()>& loss,
                             const std::vector<double*>& slots,
                             const std::vector<double>& analytic,
                             double eps = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    double saved = *slots[i];
    *slots[i] = saved + eps;
    long double up = loss();
    *slots[i] = saved - eps;
    long double dn = loss();
    *slots[i] = saved;
    double numeric = static_cast<double>((up - dn) / (2.0L * eps));
    double denom = std::max({1.0, std::fabs(analytic[i]), std::fabs(numeric)});
    worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
  }
  return worst;
}

inline std::vector<double*> param_slots(lntm::ModelParams& p) {
  std::vector<double*> slots;
  for (double& x : p.W.data) slots.push_back(&x);
  for (double& x : p.U.data) slots.push_back(&x);
  for (double& x : p.b) slots.push_back(&x);
  for (double& x : p.c) slots.push_back(&x);
  return slots;
}

inline std::vector<double> flat_grads(const lntm::ParamGrads& g) {
  std::vector<double> flat;
  flat.insert(flat.end(), g.W.data.begin(), g.W.data.end());
  flat.insert(flat.end(), g.U.data.begin(), g.U.data.end());
  flat.insert(flat.end(), g.b.begin(), g.b.end());
  flat.insert(flat.end(), g.c.begin(), g.c.end());
  return flat;
}

// Small labeled collection sampled from per-label word ranges; every label
// uses a disjoint span of the vocabulary plus shared noise words.
inline lntm::Collection clustered_collection(
    const std::string& name, std::size_t n_labels, std::size_t words_per_label,
    std::size_t docs_per_label, std::size_t doc_len, std::uint64_t seed,
    std::size_t val_per_label = 1, std::size_t test_per_label = 2,
    double noise = 0.1) {
  std::vector<std::string> tokens;
  for (std::size_t l = 0; l < n_labels; ++l)
    for (std::size_t w = 0; w < words_per_label; ++w)
      tokens.push_back("l" + std::to_string(l) + "w" + std::to_string(w));
  lntm::Collection c;
  c.name = name;
  c.vocab = lntm::Vocabulary(tokens);
  lntm::Rng rng(seed);
  std::size_t k = tokens.size();
  auto gen_doc = [&](std::size_t label, const std::string& id) {
    lntm::Document d;
    d.id = id;
    d.label = "c" + std::to_string(label);
    for (std::size_t i = 0; i < doc_len; ++i) {
      if (rng.uniform01() < noise)
        d.words.push_back(static_cast<std::int32_t>(rng.below(k)));
      else
        d.words.push_back(static_cast<std::int32_t>(
            label * words_per_label + rng.below(words_per_label)));
    }
    return d;
  };
  std::size_t serial = 0;
  for (std::size_t l = 0; l < n_labels; ++l) {
    c.labels.insert("c" + std::to_string(l));
    for (std::size_t i = 0; i < docs_per_label; ++i)
      c.train.push_back(gen_doc(l, name + "_tr" + std::to_string(serial++)));
    for (std::size_t i = 0; i < val_per_label; ++i)
      c.val.push_back(gen_doc(l, name + "_va" + std::to_string(serial++)));
    for (std::size_t i = 0; i < test_per_label; ++i)
      c.test.push_back(gen_doc(l, name + "_te" + std::to_string(serial++)));
  }
  return c;
}

}  // namespace testsup
