#include "icp/corpus.h"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "icp/error.h"
#include "icp/text.h"

namespace icp {

using nlohmann::json;

std::string to_string(LangPair lp) {
  switch (lp) {
    case LangPair::EnEs: return "en-es";
    case LangPair::EnFr: return "en-fr";
    case LangPair::EnDe: return "en-de";
    case LangPair::EnJa: return "en-ja";
  }
  return "en-es";
}

LangPair parse_lang_pair(std::string_view s) {
  if (s == "en-es") return LangPair::EnEs;
  if (s == "en-fr") return LangPair::EnFr;
  if (s == "en-de") return LangPair::EnDe;
  if (s == "en-ja") return LangPair::EnJa;
  throw UnsupportedLanguage("unsupported language pair '" + std::string(s) + "'");
}

std::string target_lang(LangPair lp) { return to_string(lp).substr(3); }

LangPair lang_pair_for_target(std::string_view lang) {
  return parse_lang_pair("en-" + std::string(lang));
}

CorpusFormat parse_corpus_format(std::string_view s) {
  if (s == "tsv" || s == "tsv-aligned") return CorpusFormat::TsvAligned;
  if (s == "jsonl" || s == "jsonl-documents") return CorpusFormat::JsonlDocuments;
  throw ConfigError("unknown corpus format '" + std::string(s) + "'");
}

namespace {

std::vector<ParallelDocument> parse_tsv(std::string_view content, LangPair lp) {
  std::vector<ParallelDocument> docs;
  ParallelDocument current;
  auto flush = [&] {
    if (current.pairs.empty()) return;
    current.doc_id = "doc-" + std::to_string(docs.size());
    current.lang_pair = lp;
    docs.push_back(std::move(current));
    current = ParallelDocument{};
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto nl = content.find('\n', pos);
    std::string_view line = content.substr(
        pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? content.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      throw FormatError(line_no, "CRLF line endings are not supported");
    if (line.empty()) {
      flush();
      continue;
    }
    auto cols = split(line, '\t');
    if (cols.size() != 2)
      throw FormatError(line_no, "expected 2 tab-separated columns, found " +
                                     std::to_string(cols.size()));
    if (trim(cols[0]).empty()) throw FormatError(line_no, "empty source text");
    SentencePair p;
    p.index = current.pairs.size();
    p.source = nfc(cols[0]);
    p.target = nfc(cols[1]);
    p.lang_pair = lp;
    current.pairs.push_back(std::move(p));
  }
  flush();
  return docs;
}

std::vector<ParallelDocument> parse_jsonl(std::string_view content) {
  std::vector<ParallelDocument> docs;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto nl = content.find('\n', pos);
    std::string_view line = content.substr(
        pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? content.size() : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(line_no, std::string("invalid JSON: ") + e.what());
    }
    ParallelDocument doc;
    try {
      doc.doc_id = j.at("doc_id").get<std::string>();
      doc.lang_pair = parse_lang_pair(j.at("lang_pair").get<std::string>());
      for (const auto& jp : j.at("pairs")) {
        SentencePair p;
        p.index = doc.pairs.size();
        p.source = nfc(jp.at("source").get<std::string>());
        p.target = nfc(jp.at("target").get<std::string>());
        p.lang_pair = doc.lang_pair;
        if (trim(p.source).empty())
          throw FormatError(line_no, "empty source text in pair " +
                                         std::to_string(p.index));
        doc.pairs.push_back(std::move(p));
      }
    } catch (const json::exception& e) {
      throw FormatError(line_no, std::string("bad document: ") + e.what());
    } catch (const UnsupportedLanguage& e) {
      throw FormatError(line_no, e.what());
    }
    if (doc.pairs.empty()) throw FormatError(line_no, "document has no pairs");
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace

std::vector<ParallelDocument> parse_parallel_corpus(std::string_view content,
                                                    CorpusFormat format,
                                                    LangPair tsv_lang_pair) {
  auto docs = format == CorpusFormat::TsvAligned ? parse_tsv(content, tsv_lang_pair)
                                                 : parse_jsonl(content);
  if (docs.empty()) throw EmptyCorpus("corpus contains no sentence pairs");
  return docs;
}

std::vector<ParallelDocument> load_parallel_corpus(
    const std::filesystem::path& path, CorpusFormat format, LangPair tsv_lang_pair) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read corpus " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_parallel_corpus(ss.str(), format, tsv_lang_pair);
}

std::string serialize_corpus(const std::vector<ParallelDocument>& docs,
                             CorpusFormat format) {
  std::string out;
  if (format == CorpusFormat::TsvAligned) {
    for (std::size_t d = 0; d < docs.size(); ++d) {
      if (d) out += '\n';
      for (const auto& p : docs[d].pairs) out += p.source + '\t' + p.target + '\n';
    }
    return out;
  }
  for (const auto& doc : docs) {
    json j;
    j["doc_id"] = doc.doc_id;
    j["lang_pair"] = to_string(doc.lang_pair);
    j["pairs"] = json::array();
    for (const auto& p : doc.pairs)
      j["pairs"].push_back({{"source", p.source}, {"target", p.target}});
    out += j.dump() + '\n';
  }
  return out;
}

std::size_t word_count(std::string_view text) {
  return split_whitespace(trim(text)).size();
}

std::string ContextWindow::render() const { return join(sentences, " - "); }

ContextWindow extract_context(const ParallelDocument& doc, std::size_t anchor,
                              ContextDirection direction, const ContextOptions& opts) {
  if (anchor >= doc.pairs.size())
    throw AnchorOutOfRange("anchor " + std::to_string(anchor) + " outside document of " +
                           std::to_string(doc.pairs.size()) + " sentences");
  if (opts.min_sents == 0 || opts.min_sents > opts.max_sents)
    throw ConfigError("context bounds require 1 <= min_sents <= max_sents");

  std::vector<std::size_t> taken;
  std::size_t words = 0;
  for (std::size_t step = 1; taken.size() < opts.max_sents; ++step) {
    std::size_t idx;
    if (direction == ContextDirection::Preceding) {
      if (step > anchor) break;
      idx = anchor - step;
    } else {
      idx = anchor + step;
      if (idx >= doc.pairs.size()) break;
    }
    taken.push_back(idx);
    words += word_count(doc.pairs[idx].source);
    if (taken.size() >= opts.min_sents && words >= opts.threshold) break;
  }
  if (taken.empty()) throw NoContext("no sentence on the requested side of the anchor");

  ContextWindow w;
  w.direction = direction;
  if (direction == ContextDirection::Preceding) {
    for (auto it = taken.rbegin(); it != taken.rend(); ++it)
      w.sentences.push_back(doc.pairs[*it].source);
    w.first_index = taken.back();
    w.last_index = taken.front();
  } else {
    for (auto idx : taken) w.sentences.push_back(doc.pairs[idx].source);
    w.first_index = taken.front();
    w.last_index = taken.back();
  }
  return w;
}

}  // namespace icp
