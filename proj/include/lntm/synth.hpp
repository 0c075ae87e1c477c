#pragma once

// Synthetic labeled corpora with controlled cross-task vocabulary overlap.
// Each class draws its documents from one concept group of words; concept
// groups shared between tasks carry the transferable structure, per-task
// private words plus a noise floor keep the vocabularies only partially
// aligned. Used by the bundled benchmark streams and the test suites.

#include <cstdint>
#include <string>
#include <vector>

#include "lntm/corpus.hpp"
#include "lntm/rng.hpp"

namespace lntm::synth {

struct SynthTask {
  std::string name;
  std::vector<std::size_t> concepts;  // concept groups = the task's classes
  std::size_t train_per_class = 40;
  std::size_t val_per_class = 5;
  std::size_t test_per_class = 10;
  std::size_t doc_len_lo = 8;
  std::size_t doc_len_hi = 14;
  std::size_t private_words = 10;  // background words unique to this task
  double noise = 0.15;             // chance a token is drawn task-wide
};

inline std::string concept_word(std::size_t group, std::size_t w) {
  return "c" + std::to_string(group) + "w" + std::to_string(w);
}

// Raw labeled documents for one task; split tags are assigned explicitly so
// collections are reproducible regardless of downstream seeding.
inline std::vector<RawDoc> generate_task(const SynthTask& task,
                                         std::size_t words_per_concept,
                                         std::uint64_t seed) {
  Rng rng(seed);
  std::string prefix;  // keep private words single tokens under tokenization
  for (char ch : task.name)
    if (std::isalnum(static_cast<unsigned char>(ch))) prefix += ch;
  std::vector<std::string> task_words;
  for (std::size_t c : task.concepts)
    for (std::size_t w = 0; w < words_per_concept; ++w)
      task_words.push_back(concept_word(c, w));
  for (std::size_t w = 0; w < task.private_words; ++w)
    task_words.push_back(prefix + "bg" + std::to_string(w));

  std::vector<RawDoc> docs;
  auto emit = [&](std::size_t class_idx, const char* split, std::size_t n,
                  std::size_t& serial) {
    std::size_t group = task.concepts[class_idx];
    for (std::size_t i = 0; i < n; ++i, ++serial) {
      std::size_t len =
          task.doc_len_lo + rng.below(task.doc_len_hi - task.doc_len_lo + 1);
      std::string text;
      for (std::size_t t = 0; t < len; ++t) {
        if (!text.empty()) text += ' ';
        if (rng.uniform01() < task.noise)
          text += task_words[rng.below(task_words.size())];
        else
          text += concept_word(group, rng.below(words_per_concept));
      }
      RawDoc d;
      d.id = task.name + "_" + std::to_string(serial);
      d.label = "class" + std::to_string(group);
      d.text = text;
      d.split = split;
      docs.push_back(std::move(d));
    }
  };
  std::size_t serial = 0;
  for (std::size_t c = 0; c < task.concepts.size(); ++c) {
    emit(c, "train", task.train_per_class, serial);
    emit(c, "val", task.val_per_class, serial);
    emit(c, "test", task.test_per_class, serial);
  }
  return docs;
}

inline void write_jsonl(const std::vector<RawDoc>& docs,
                        const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  auto escape = [](const std::string& s) {
    std::string o;
    for (char c : s) {
      if (c == '"' || c == '\\') o += '\\';
      o += c;
    }
    return o;
  };
  for (const auto& d : docs) {
    out << "{\"id\":\"" << escape(d.id) << "\",\"label\":\"" << escape(d.label)
        << "\",\"text\":\"" << escape(d.text) << "\"";
    if (!d.split.empty()) out << ",\"split\":\"" << escape(d.split) << "\"";
    out << "}\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

// The three bundled streams: identical / partial / disjoint vocabulary
// overlap between the two large past tasks and a sparse final task.
inline std::vector<SynthTask> bundled_stream(const std::string& overlap) {
  SynthTask a, b, c;
  a.name = "task_a";
  b.name = "task_b";
  c.name = "task_c";
  a.train_per_class = 70;
  b.train_per_class = 70;
  a.test_per_class = 15;
  b.test_per_class = 15;
  a.noise = 0.35;
  b.noise = 0.35;
  // the future task is sparse: few, short, noisy documents
  c.train_per_class = 10;
  c.val_per_class = 3;
  c.test_per_class = 15;
  c.doc_len_lo = 4;
  c.doc_len_hi = 7;
  c.private_words = 6;
  c.noise = 0.35;
  if (overlap == "identical") {
    a.concepts = {0, 1, 2, 3};
    b.concepts = {0, 1, 2, 3};
    c.concepts = {0, 1, 2, 3};
    a.private_words = b.private_words = c.private_words = 0;
  } else if (overlap == "partial") {
    a.concepts = {0, 1, 2};
    b.concepts = {1, 2, 3};
    c.concepts = {0, 1, 2, 3};
  } else if (overlap == "disjoint") {
    a.concepts = {4, 5};
    b.concepts = {6, 7};
    c.concepts = {0, 1, 2, 3};
  } else {
    throw std::invalid_argument("unknown overlap mode: " + overlap);
  }
  return {a, b, c};
}

}  // namespace lntm::synth
