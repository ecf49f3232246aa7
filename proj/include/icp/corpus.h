#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace icp {

enum class LangPair { EnEs, EnFr, EnDe, EnJa };

std::string to_string(LangPair lp);          // "en-es"
LangPair parse_lang_pair(std::string_view s);  // throws UnsupportedLanguage
std::string target_lang(LangPair lp);        // "es"
LangPair lang_pair_for_target(std::string_view lang);

struct SentencePair {
  std::size_t index = 0;
  std::string source;
  std::string target;
  LangPair lang_pair = LangPair::EnEs;
};

struct ParallelDocument {
  std::string doc_id;
  LangPair lang_pair = LangPair::EnEs;
  std::vector<SentencePair> pairs;
};

enum class CorpusFormat { TsvAligned, JsonlDocuments };

CorpusFormat parse_corpus_format(std::string_view s);

// Reads a pre-aligned corpus. TSV files carry no language tag, so
// `tsv_lang_pair` applies to every document; JSONL documents carry their own.
// Text is NFC-normalized on the way in.
std::vector<ParallelDocument> load_parallel_corpus(
    const std::filesystem::path& path, CorpusFormat format,
    LangPair tsv_lang_pair = LangPair::EnEs);

std::vector<ParallelDocument> parse_parallel_corpus(
    std::string_view content, CorpusFormat format,
    LangPair tsv_lang_pair = LangPair::EnEs);

std::string serialize_corpus(const std::vector<ParallelDocument>& docs,
                             CorpusFormat format);

std::size_t word_count(std::string_view text);

enum class ContextDirection { Preceding, Succeeding };

struct ContextWindow {
  std::vector<std::string> sentences;
  ContextDirection direction = ContextDirection::Preceding;
  std::size_t first_index = 0;
  std::size_t last_index = 0;

  // Sentences joined with " - ".
  std::string render() const;
};

struct ContextOptions {
  std::size_t min_sents = 3;
  std::size_t max_sents = 5;
  std::size_t threshold = 20;
};

// Grows the window outward from `anchor` one sentence at a time. Once it holds
// min_sents sentences it stops as soon as their cumulative word count reaches
// the threshold; otherwise it keeps growing up to max_sents. The document
// boundary may cut it short. Throws NoContext if there is no sentence at all
// on the requested side.
ContextWindow extract_context(const ParallelDocument& doc, std::size_t anchor,
                              ContextDirection direction,
                              const ContextOptions& opts = {});

}  // namespace icp
