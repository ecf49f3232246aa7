#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace icp {

enum class Stage { Ask, Translate, UserAnswer, BaselineContext, BaselineNoExtras, GenderClassify };

// "ask", "translate", "user", "baseline_context", "baseline_noextras", "gender"
std::string to_string(Stage s);
std::optional<Stage> parse_stage(std::string_view s);

struct ExemplarLine {
  char slot = 'S';
  std::string text;
};
using ExemplarBlock = std::vector<ExemplarLine>;

/// A few-shot prompt: instruction line, exemplar blocks, then the live item.
///
/// Rendered layout, with N = header_gap and M = gap:
///   instruction, N blank lines, exemplars separated by M blank lines,
///   M blank lines, live slot lines, cue.
struct PromptTemplate {
  std::string id;
  Stage stage = Stage::Ask;
  std::string target_lang;  // "*" matches every language
  std::string instruction;
  std::vector<ExemplarBlock> exemplars;
  std::string slot_layout;  // live item slots in order, last one is the cue slot
  std::string cue;          // "Q:", "A: ", ...
  std::size_t header_gap = 1;
  std::size_t gap = 2;
  std::string strip_slots;  // live values trimmed before insertion
  std::string lower_slots;  // live values lowercased before insertion

  bool matches_lang(std::string_view lang) const;
};

// Line-oriented format:
//   # comment
//   ID: es-generalist-ask
//   STAGE: ask
//   LANG: es
//   SHOTS: 8
//   HEADER_GAP: 2
//   GAP: 2
//   LIVE: S Q
//   CUE: "Q:"          (a value starting with '"' is a JSON string)
//   STRIP: S C         (optional)
//   LOWER: F           (optional)
//   INSTRUCTION: [web] ...
//   EXEMPLAR
//   S: about
//   Q: Is "about" ...
// Blank lines between blocks are ignored. Throws TemplateParseError(file, reason).
PromptTemplate parse_template(std::string_view text, const std::string& file = "<memory>");

class TemplateRegistry {
 public:
  void add(PromptTemplate t);      // DuplicateId
  void replace(PromptTemplate t);  // adds or overwrites
  bool has(std::string_view id) const;
  const PromptTemplate& get(std::string_view id) const;  // UnknownTemplate
  std::vector<std::string> ids() const;
  std::size_t size() const { return templates_.size(); }

 private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

// Every *.tpl file in `dir`, in name order.
TemplateRegistry load_templates(const std::filesystem::path& dir);
// Templates compiled into the library from data/templates.
const TemplateRegistry& builtin_templates();
// Builtins, with same-id files from `dir` taking precedence.
TemplateRegistry builtin_with_overrides(const std::filesystem::path& dir);

using SlotValues = std::map<char, std::string>;

// Stage-agnostic renderer. Every live slot except the cue slot needs a
// non-blank value (EmptySlot).
std::string render(const PromptTemplate& t, const SlotValues& values);

std::string render_ask(const PromptTemplate& t, std::string_view source);
std::string render_translate(const PromptTemplate& t, std::string_view source,
                             std::string_view question, std::string_view answer);
std::string render_user(const PromptTemplate& t, std::string_view source,
                        std::string_view question, std::string_view context);
// With a context the template must be BaselineContext, without one BaselineNoExtras.
std::string render_baseline(const PromptTemplate& t, std::string_view source,
                            const std::optional<std::string>& context);
std::string render_gender(const PromptTemplate& t, std::string_view en_text,
                          std::string_view target_text);

struct PromptStructure {
  std::string instruction;
  std::size_t exemplar_count = 0;
  std::string live_slots;  // slot letters of the final block
};

// Recovers the block structure of a rendered prompt, assuming single-line slot values.
PromptStructure analyze_prompt(std::string_view prompt);

}  // namespace icp
