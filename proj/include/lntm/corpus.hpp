#pragma once

// Corpus handling: tokenization, vocabulary construction, index-encoded
// document collections, the on-disk text formats, and cross-vocabulary
// alignment. See docs/formats.md for the exact file grammars.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lntm/rng.hpp"

namespace lntm {

// Input-file problems (malformed records, bad counts, out-of-range indices).
// The CLI maps these to exit code 2, everything else to 1.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense bijective token <-> index map; indices are 0..size()-1.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens)
      : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      auto [it, fresh] = index_.emplace(tokens_[i], static_cast<int>(i));
      if (!fresh)
        throw std::invalid_argument("duplicate token in vocabulary: " +
                                    tokens_[i]);
    }
  }

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t i) const { return tokens_.at(i); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::optional<int> index_of(const std::string& tok) const {
    auto it = index_.find(tok);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct Document {
  std::string id;
  std::string label;
  std::vector<std::int32_t> words;  // indices into the owning vocabulary

  friend bool operator==(const Document&, const Document&) = default;
};

struct Collection {
  std::string name;
  Vocabulary vocab;
  std::vector<Document> train;
  std::vector<Document> val;
  std::vector<Document> test;
  std::set<std::string> labels;

  friend bool operator==(const Collection&, const Collection&) = default;
};

struct RawDoc {
  std::string id;
  std::string label;
  std::string text;
  std::string split;  // "", "train", "val" or "test"
};

struct PreprocessOptions {
  bool lowercase = true;
  std::size_t min_token_len = 2;
  std::size_t max_vocab = 0;  // 0 = unlimited
  std::size_t min_doc_len = 1;
  double train_ratio = 0.8;
  double val_ratio = 0.1;  // remainder goes to test
  std::uint64_t seed = 0;
};

struct BuildStats {
  std::size_t input_docs = 0;
  std::size_t dropped_docs = 0;
};

// (source_index, target_index) pairs for token strings present in both
// vocabularies, ascending in source index.
struct VocabAlignment {
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
};

inline VocabAlignment align_vocabs(const Vocabulary& source,
                                   const Vocabulary& target) {
  VocabAlignment a;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (auto t = target.index_of(source.token(i)))
      a.pairs.emplace_back(static_cast<std::int32_t>(i), *t);
  }
  return a;
}

// Lowercase, split on non-alphanumeric, drop pure digits and short tokens.
inline std::vector<std::string> tokenize(const std::string& text,
                                         const PreprocessOptions& opts) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= opts.min_token_len &&
        !std::all_of(cur.begin(), cur.end(),
                     [](unsigned char c) { return std::isdigit(c); }))
      out.push_back(cur);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c))
      cur.push_back(opts.lowercase ? static_cast<char>(std::tolower(c)) : c);
    else
      flush();
  }
  flush();
  return out;
}

inline Collection build_collection(const std::vector<RawDoc>& raw_docs,
                                   const PreprocessOptions& opts,
                                   std::string name = "",
                                   BuildStats* stats = nullptr) {
  if (raw_docs.empty()) throw std::invalid_argument("empty corpus");
  if (opts.train_ratio < 0 || opts.val_ratio < 0 ||
      opts.train_ratio + opts.val_ratio > 1.0)
    throw std::invalid_argument("split ratios must be >= 0 and sum to <= 1");
  {
    std::unordered_set<std::string> ids;
    for (const auto& d : raw_docs)
      if (!ids.insert(d.id).second)
        throw std::invalid_argument("duplicate document id: " + d.id);
  }

  std::vector<std::vector<std::string>> tokenized(raw_docs.size());
  std::unordered_map<std::string, std::size_t> freq;
  for (std::size_t i = 0; i < raw_docs.size(); ++i) {
    tokenized[i] = tokenize(raw_docs[i].text, opts);
    for (const auto& t : tokenized[i]) ++freq[t];
  }

  // Top-K by (frequency desc, token asc); deterministic.
  std::vector<std::pair<std::string, std::size_t>> by_freq(freq.begin(),
                                                           freq.end());
  std::sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (opts.max_vocab > 0 && by_freq.size() > opts.max_vocab)
    by_freq.resize(opts.max_vocab);
  std::vector<std::string> tokens;
  tokens.reserve(by_freq.size());
  for (auto& [tok, n] : by_freq) tokens.push_back(tok);
  Vocabulary vocab(std::move(tokens));

  std::size_t min_len = std::max<std::size_t>(opts.min_doc_len, 1);
  std::vector<Document> docs;
  std::vector<std::string> splits;  // per surviving doc, "" if untagged
  for (std::size_t i = 0; i < raw_docs.size(); ++i) {
    Document d;
    d.id = raw_docs[i].id;
    d.label = raw_docs[i].label;
    for (const auto& t : tokenized[i])
      if (auto idx = vocab.index_of(t)) d.words.push_back(*idx);
    if (d.words.size() < min_len) continue;
    const std::string& s = raw_docs[i].split;
    if (!s.empty() && s != "train" && s != "val" && s != "test")
      throw std::invalid_argument("unknown split tag '" + s + "' on doc " +
                                  d.id);
    splits.push_back(s);
    docs.push_back(std::move(d));
  }
  if (stats) {
    stats->input_docs = raw_docs.size();
    stats->dropped_docs = raw_docs.size() - docs.size();
  }
  if (docs.empty()) throw std::invalid_argument("empty collection");

  // Untagged docs get a seeded 80/10/10 assignment.
  std::vector<std::size_t> untagged;
  for (std::size_t i = 0; i < docs.size(); ++i)
    if (splits[i].empty()) untagged.push_back(i);
  if (!untagged.empty()) {
    Rng rng(mix64(opts.seed, 0x5711ULL));  // split-assignment stream
    std::vector<std::size_t> order = untagged;
    rng.shuffle(order);
    std::size_t n = order.size();
    auto rounded = [n](double ratio) {
      return static_cast<std::size_t>(
          std::llround(ratio * static_cast<double>(n)));
    };
    std::size_t n_val = rounded(opts.val_ratio);
    std::size_t n_test = rounded(1.0 - opts.train_ratio - opts.val_ratio);
    if (n_val + n_test >= n && n > 0) n_test = n - n_val > 0 ? n - n_val - 1 : 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k < n_val)
        splits[order[k]] = "val";
      else if (k < n_val + n_test)
        splits[order[k]] = "test";
      else
        splits[order[k]] = "train";
    }
  }

  Collection c;
  c.name = std::move(name);
  c.vocab = std::move(vocab);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    c.labels.insert(docs[i].label);
    if (splits[i] == "train")
      c.train.push_back(std::move(docs[i]));
    else if (splits[i] == "val")
      c.val.push_back(std::move(docs[i]));
    else
      c.test.push_back(std::move(docs[i]));
  }
  return c;
}

// JSONL ingestion lives in corpus_jsonl.hpp so that translation units which
// never touch raw text do not pull in nlohmann/json.

// --- collection text format ------------------------------------------------
//   line 1:            <K> <name>
//   lines 2..K+1:      one token per line
//   then three blocks: "train <n>" / "val <n>" / "test <n>", each followed by
//                      n lines of  id<TAB>label<TAB>space-separated indices
inline void save_collection(const Collection& c, const std::string& path) {
  for (const auto* split : {&c.train, &c.val, &c.test})
    for (const auto& d : *split)
      if (d.id.find_first_of("\t\n") != std::string::npos ||
          d.label.find_first_of("\t\n") != std::string::npos)
        throw std::invalid_argument("doc id/label contains tab or newline: " +
                                    d.id);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << c.vocab.size() << ' ' << c.name << '\n';
  for (const auto& t : c.vocab.tokens()) out << t << '\n';
  auto dump = [&](const char* tag, const std::vector<Document>& docs) {
    out << tag << ' ' << docs.size() << '\n';
    for (const auto& d : docs) {
      out << d.id << '\t' << d.label << '\t';
      for (std::size_t i = 0; i < d.words.size(); ++i) {
        if (i) out << ' ';
        out << d.words[i];
      }
      out << '\n';
    }
  };
  dump("train", c.train);
  dump("val", c.val);
  dump("test", c.test);
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Collection load_collection(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line))
      throw ParseError(path + ": unexpected end of file (expected " +
                       std::string(what) + ") at line " +
                       std::to_string(lineno + 1));
    ++lineno;
  };

  if (!std::getline(in, line) || line.empty())
    throw ParseError(path + ": empty collection");
  ++lineno;
  std::size_t k = 0;
  std::string name;
  {
    std::istringstream hs(line);
    if (!(hs >> k) || k > (1u << 27))
      throw ParseError(path + ": bad header at line 1");
    std::getline(hs, name);
    if (!name.empty() && name.front() == ' ') name.erase(0, 1);
  }

  Collection c;
  c.name = name;
  std::vector<std::string> tokens;
  tokens.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    next_line("token");
    tokens.push_back(line);
  }
  try {
    c.vocab = Vocabulary(std::move(tokens));
  } catch (const std::invalid_argument& e) {
    throw ParseError(path + ": " + e.what());
  }

  auto read_block = [&](const char* tag, std::vector<Document>& out_docs) {
    next_line("split header");
    std::istringstream hs(line);
    std::string got;
    std::size_t n = 0;
    if (!(hs >> got >> n) || got != tag)
      throw ParseError(path + ": expected '" + std::string(tag) +
                       " <count>' at line " + std::to_string(lineno));
    for (std::size_t i = 0; i < n; ++i) {
      next_line("document");
      std::size_t t1 = line.find('\t');
      std::size_t t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
      if (t2 == std::string::npos)
        throw ParseError(path + ": malformed document record at line " +
                         std::to_string(lineno));
      Document d;
      d.id = line.substr(0, t1);
      d.label = line.substr(t1 + 1, t2 - t1 - 1);
      if (d.id.empty() || d.label.empty())
        throw ParseError(path + ": missing id or label at line " +
                         std::to_string(lineno));
      std::istringstream ws(line.substr(t2 + 1));
      long w;
      while (ws >> w) {
        if (w < 0 || static_cast<std::size_t>(w) >= k)
          throw ParseError(path + ": word index out of range at line " +
                           std::to_string(lineno));
        d.words.push_back(static_cast<std::int32_t>(w));
      }
      if (!ws.eof())
        throw ParseError(path + ": malformed word index at line " +
                         std::to_string(lineno));
      if (d.words.empty())
        throw ParseError(path + ": empty document at line " +
                         std::to_string(lineno));
      c.labels.insert(d.label);
      out_docs.push_back(std::move(d));
    }
  };
  read_block("train", c.train);
  read_block("val", c.val);
  read_block("test", c.test);
  return c;
}

// --- vocabulary file: first line K, then one token per line ----------------
inline void save_vocab(const Vocabulary& v, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << v.size() << '\n';
  for (const auto& t : v.tokens()) out << t << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Vocabulary load_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty vocab file");
  std::size_t k = 0;
  try {
    k = std::stoul(line);
  } catch (...) {
    throw ParseError(path + ": bad vocab header");
  }
  if (k > (1u << 27)) throw ParseError(path + ": bad vocab header");
  std::vector<std::string> tokens;
  tokens.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (!std::getline(in, line))
      throw ParseError(path + ": truncated vocab file");
    tokens.push_back(line);
  }
  try {
    return Vocabulary(std::move(tokens));
  } catch (const std::invalid_argument& e) {
    throw ParseError(path + ": " + e.what());
  }
}

// Re-encode a document from one vocabulary into another; out-of-vocabulary
// tokens are dropped. Returns a document that may be empty.
inline Document reencode(const Document& d, const Vocabulary& from,
                         const Vocabulary& to) {
  Document out;
  out.id = d.id;
  out.label = d.label;
  for (std::int32_t w : d.words)
    if (auto idx = to.index_of(from.token(static_cast<std::size_t>(w))))
      out.words.push_back(*idx);
  return out;
}

}  // namespace lntm
