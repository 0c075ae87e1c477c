#pragma once

// Raw corpus ingestion: JSON-lines, one object per line with string fields
// `id`, `label`, `text` and an optional `split` of train|val|test.

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lntm/corpus.hpp"

namespace lntm {

inline std::vector<RawDoc> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::vector<RawDoc> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": bad JSON at line " + std::to_string(lineno) +
                       ": " + e.what());
    }
    RawDoc d;
    try {
      d.id = j.at("id").get<std::string>();
      d.label = j.at("label").get<std::string>();
      d.text = j.at("text").get<std::string>();
      if (j.contains("split")) d.split = j.at("split").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError(path + ": record missing id/label/text at line " +
                       std::to_string(lineno));
    }
    docs.push_back(std::move(d));
  }
  if (docs.empty()) throw ParseError(path + ": empty corpus");
  return docs;
}

}  // namespace lntm
