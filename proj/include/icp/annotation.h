#pragma once

#include <optional>
#include <unordered_map>
#include <string>
#include <string_view>
#include <vector>

namespace icp {

enum class Gender { Feminine, Masculine, Undetermined };

std::string to_string(Gender g);  // "feminine", "masculine", "undetermined"
std::optional<Gender> parse_gender(std::string_view s);

struct AnnotatedToken {
  std::string text;
  std::string lemma;
  std::string pos;  // coarse UD tag: VERB, AUX, PRON, DET, NOUN, ...
  bool expletive = false;
  std::optional<Gender> gender;  // morphological gender when the tagger provides it
};

/// Token-level annotation of one sentence. Token order and count follow
/// icp::word_tokens() on the annotated sentence.
struct SyntacticAnnotation {
  std::string provider;
  std::vector<AnnotatedToken> tokens;
};

// Throws MissingAnnotation when `ann` does not cover `sentence` token for token.
void check_annotation(std::string_view sentence, const SyntacticAnnotation& ann);

class AnnotationProvider {
 public:
  virtual ~AnnotationProvider() = default;
  virtual std::string id() const = 0;
  virtual std::optional<SyntacticAnnotation> annotate(std::string_view sentence,
                                                      std::string_view lang) const = 0;
};

// Parser-free fallback. Marks "it" expletive for weather predicates
// ("it is raining", "it snows"), raising verbs followed by that/like/as/to
// ("it seems that"), and extraposition ("it is important to ...").
// Tags nothing else: pos stays empty so downstream rules use their
// no-parser paths.
class PatternAnnotator : public AnnotationProvider {
 public:
  std::string id() const override { return "pattern"; }
  std::optional<SyntacticAnnotation> annotate(std::string_view sentence,
                                              std::string_view lang) const override;
};

// Reads annotations produced by an external tagger: JSONL with one object per
// sentence {"text": ..., "provider": ..., "tokens": [{"text","lemma","pos",
// "expletive","gender"}]}. Lookup is by exact NFC sentence text.
class FileAnnotationProvider : public AnnotationProvider {
 public:
  explicit FileAnnotationProvider(const std::string& path);
  std::string id() const override { return id_; }
  std::optional<SyntacticAnnotation> annotate(std::string_view sentence,
                                              std::string_view lang) const override;

 private:
  std::string id_;
  std::unordered_map<std::string, SyntacticAnnotation> entries_;
};

}  // namespace icp
