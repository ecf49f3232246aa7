#include "icp/prompt.h"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "icp/error.h"
#include "icp/lexicon.h"
#include "icp/resources.h"
#include "icp/text.h"

namespace icp {

namespace {

constexpr std::string_view kSlots = "SCQUTAEF";

struct StageShape {
  std::string_view required;  // live slots that must appear, cue excluded
  std::string_view allowed;   // live slots the render call can supply
  char cue_slot;
};

StageShape shape(Stage s) {
  switch (s) {
    case Stage::Ask: return {"S", "S", 'Q'};
    case Stage::Translate: return {"SQU", "SQU", 'A'};
    case Stage::UserAnswer: return {"CQ", "SCQ", 'A'};
    case Stage::BaselineContext: return {"CT", "CT", 'A'};
    case Stage::BaselineNoExtras: return {"T", "T", 'A'};
    case Stage::GenderClassify: return {"F", "TF", 'A'};
  }
  return {"", "", 'A'};
}

std::size_t parse_count(const std::string& v, const std::string& file, const std::string& key) {
  std::size_t used = 0;
  unsigned long n = 0;
  try {
    n = std::stoul(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size() || v[0] == '-')
    throw TemplateParseError(file, key + " must be a non-negative integer, got '" + v + "'");
  return n;
}

std::string slot_list(const std::string& v, const std::string& file, const std::string& key) {
  std::string out;
  for (const auto& tok : split_whitespace(v)) {
    if (tok.size() != 1 || kSlots.find(tok[0]) == std::string_view::npos)
      throw TemplateParseError(file, key + ": unknown slot '" + tok + "'");
    out += tok[0];
  }
  return out;
}

void validate(const PromptTemplate& t, std::optional<std::size_t> shots, const std::string& file) {
  if (t.id.empty()) throw TemplateParseError(file, "missing ID");
  if (t.target_lang.empty()) throw TemplateParseError(file, "missing LANG");
  if (t.instruction.empty()) throw TemplateParseError(file, "missing INSTRUCTION");
  if (t.slot_layout.empty()) throw TemplateParseError(file, "missing LIVE slot layout");
  if (!shots) throw TemplateParseError(file, "missing SHOTS");
  if (*shots != t.exemplars.size())
    throw TemplateParseError(file, "SHOTS is " + std::to_string(*shots) + " but " +
                                       std::to_string(t.exemplars.size()) + " exemplars follow");
  StageShape sh = shape(t.stage);
  char last = t.slot_layout.back();
  if (t.cue.empty()) throw TemplateParseError(file, "missing generation cue");
  std::string want = std::string(1, sh.cue_slot) + ":";
  if (last != sh.cue_slot || (t.cue != want && t.cue != want + " "))
    throw TemplateParseError(file, "missing generation cue: " + to_string(t.stage) +
                                       " templates end with \"" + want + "\"");
  std::string body = t.slot_layout.substr(0, t.slot_layout.size() - 1);
  for (char c : sh.required)
    if (body.find(c) == std::string::npos)
      throw TemplateParseError(file, std::string("live item lacks slot ") + c);
  std::set<char> seen;
  for (char c : body) {
    if (sh.allowed.find(c) == std::string_view::npos)
      throw TemplateParseError(file, std::string("slot ") + c + " cannot be filled in stage " +
                                         to_string(t.stage));
    if (!seen.insert(c).second)
      throw TemplateParseError(file, std::string("slot ") + c + " repeats in the live item");
  }
  for (char c : t.strip_slots + t.lower_slots)
    if (body.find(c) == std::string::npos)
      throw TemplateParseError(file, std::string("STRIP/LOWER names slot ") + c +
                                         " outside the live item");
  for (std::size_t i = 0; i < t.exemplars.size(); ++i) {
    if (t.exemplars[i].empty())
      throw TemplateParseError(file, "exemplar " + std::to_string(i + 1) + " is empty");
    if (t.stage == Stage::BaselineNoExtras)
      for (const auto& l : t.exemplars[i])
        if (l.slot == 'C') throw TemplateParseError(file, "no-extras exemplars cannot carry C lines");
  }
}

}  // namespace

std::string to_string(Stage s) {
  switch (s) {
    case Stage::Ask: return "ask";
    case Stage::Translate: return "translate";
    case Stage::UserAnswer: return "user";
    case Stage::BaselineContext: return "baseline_context";
    case Stage::BaselineNoExtras: return "baseline_noextras";
    case Stage::GenderClassify: return "gender";
  }
  return "";
}

std::optional<Stage> parse_stage(std::string_view s) {
  for (Stage st : {Stage::Ask, Stage::Translate, Stage::UserAnswer, Stage::BaselineContext,
                   Stage::BaselineNoExtras, Stage::GenderClassify})
    if (to_string(st) == s) return st;
  return std::nullopt;
}

bool PromptTemplate::matches_lang(std::string_view lang) const {
  return target_lang == "*" || target_lang == lang;
}

PromptTemplate parse_template(std::string_view text, const std::string& file) {
  if (text.find('\r') != std::string_view::npos)
    throw TemplateParseError(file, "CRLF line endings are not supported; convert the file to LF");
  PromptTemplate t;
  std::optional<std::size_t> shots;
  std::set<std::string> keys;
  bool in_exemplar = false;
  std::size_t line_no = 0;
  for (const auto& line : split(text, '\n')) {
    ++line_no;
    auto where = [&](const std::string& reason) {
      return TemplateParseError(file, "line " + std::to_string(line_no) + ": " + reason);
    };
    if (line.empty() || line[0] == '#') continue;
    if (line == "EXEMPLAR") {
      t.exemplars.emplace_back();
      in_exemplar = true;
      continue;
    }
    if (in_exemplar) {
      if (line.size() < 2 || line[1] != ':' || kSlots.find(line[0]) == std::string_view::npos)
        throw where("expected a slot line such as \"S: ...\"");
      std::string value = line.substr(2);
      if (!value.empty()) {
        if (value[0] != ' ') throw where("slot marker must be followed by a space");
        value.erase(0, 1);
      }
      t.exemplars.back().push_back({line[0], value});
      continue;
    }
    auto colon = line.find(':');
    if (colon == std::string::npos) throw where("expected KEY: value");
    std::string key = line.substr(0, colon);
    std::string value = trim(std::string_view(line).substr(colon + 1));
    if (!keys.insert(key).second) throw where("repeated key " + key);
    if (!value.empty() && value[0] == '"') {
      try {
        value = nlohmann::json::parse(value).get<std::string>();
      } catch (const nlohmann::json::exception&) {
        throw where("bad quoted value for " + key);
      }
    }
    if (key == "ID") {
      t.id = value;
    } else if (key == "STAGE") {
      auto st = parse_stage(value);
      if (!st) throw where("unknown stage '" + value + "'");
      t.stage = *st;
    } else if (key == "LANG") {
      t.target_lang = value;
    } else if (key == "SHOTS") {
      shots = parse_count(value, file, key);
    } else if (key == "HEADER_GAP") {
      t.header_gap = parse_count(value, file, key);
    } else if (key == "GAP") {
      t.gap = parse_count(value, file, key);
    } else if (key == "LIVE") {
      t.slot_layout = slot_list(value, file, key);
    } else if (key == "CUE") {
      t.cue = value;  // quote it to keep a trailing space
    } else if (key == "STRIP") {
      t.strip_slots = slot_list(value, file, key);
    } else if (key == "LOWER") {
      t.lower_slots = slot_list(value, file, key);
    } else if (key == "INSTRUCTION") {
      t.instruction = value;
    } else {
      throw where("unknown key " + key);
    }
  }
  validate(t, shots, file);
  return t;
}

void TemplateRegistry::add(PromptTemplate t) {
  if (templates_.count(t.id)) throw DuplicateId("template id '" + t.id + "' defined twice");
  std::string id = t.id;
  templates_.emplace(std::move(id), std::move(t));
}

void TemplateRegistry::replace(PromptTemplate t) {
  std::string id = t.id;
  templates_[id] = std::move(t);
}

bool TemplateRegistry::has(std::string_view id) const {
  return templates_.find(id) != templates_.end();
}

const PromptTemplate& TemplateRegistry::get(std::string_view id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw UnknownTemplate("no template '" + std::string(id) + "'");
  return it->second;
}

std::vector<std::string> TemplateRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, t] : templates_) out.push_back(id);
  return out;
}

namespace {

std::vector<std::filesystem::path> template_files(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec))
    throw IoError("template directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".tpl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

TemplateRegistry load_templates(const std::filesystem::path& dir) {
  TemplateRegistry reg;
  for (const auto& f : template_files(dir)) reg.add(parse_template(read_text_file(f), f.string()));
  return reg;
}

const TemplateRegistry& builtin_templates() {
  static const TemplateRegistry reg = [] {
    TemplateRegistry r;
    for (auto name : resource_names())
      if (starts_with(name, "templates/") && ends_with(name, ".tpl"))
        r.add(parse_template(resource(name), std::string(name)));
    return r;
  }();
  return reg;
}

TemplateRegistry builtin_with_overrides(const std::filesystem::path& dir) {
  TemplateRegistry reg = builtin_templates();
  TemplateRegistry local = load_templates(dir);
  for (const auto& id : local.ids()) reg.replace(local.get(id));
  return reg;
}

std::string render(const PromptTemplate& t, const SlotValues& values) {
  std::string out = t.instruction;
  out.append(1 + t.header_gap, '\n');
  const std::string sep(1 + t.gap, '\n');
  for (const auto& block : t.exemplars) {
    for (std::size_t i = 0; i < block.size(); ++i) {
      if (i) out += '\n';
      out += block[i].slot;
      out += ": ";
      out += block[i].text;
    }
    out += sep;
  }
  for (std::size_t i = 0; i + 1 < t.slot_layout.size(); ++i) {
    char slot = t.slot_layout[i];
    auto it = values.find(slot);
    if (it == values.end() || trim(it->second).empty())
      throw EmptySlot(std::string("slot ") + slot + " of template '" + t.id + "' is empty");
    std::string v = it->second;
    if (t.strip_slots.find(slot) != std::string::npos) v = trim(v);
    if (t.lower_slots.find(slot) != std::string::npos) v = to_lower(v);
    out += slot;
    out += ": ";
    out += v;
    out += '\n';
  }
  out += t.cue;
  return out;
}

namespace {

void expect_stage(const PromptTemplate& t, Stage s) {
  if (t.stage != s)
    throw StageMismatch("template '" + t.id + "' is a " + to_string(t.stage) + " template, not " +
                        to_string(s));
}

}  // namespace

std::string render_ask(const PromptTemplate& t, std::string_view source) {
  expect_stage(t, Stage::Ask);
  return render(t, {{'S', std::string(source)}});
}

std::string render_translate(const PromptTemplate& t, std::string_view source,
                             std::string_view question, std::string_view answer) {
  expect_stage(t, Stage::Translate);
  return render(t, {{'S', std::string(source)},
                    {'Q', std::string(question)},
                    {'U', std::string(answer)}});
}

std::string render_user(const PromptTemplate& t, std::string_view source,
                        std::string_view question, std::string_view context) {
  expect_stage(t, Stage::UserAnswer);
  return render(t, {{'S', std::string(source)},
                    {'C', std::string(context)},
                    {'Q', std::string(question)}});
}

std::string render_baseline(const PromptTemplate& t, std::string_view source,
                            const std::optional<std::string>& context) {
  if (context) {
    expect_stage(t, Stage::BaselineContext);
    return render(t, {{'T', std::string(source)}, {'C', *context}});
  }
  expect_stage(t, Stage::BaselineNoExtras);
  return render(t, {{'T', std::string(source)}});
}

std::string render_gender(const PromptTemplate& t, std::string_view en_text,
                          std::string_view target_text) {
  expect_stage(t, Stage::GenderClassify);
  return render(t, {{'T', std::string(en_text)}, {'F', std::string(target_text)}});
}

PromptStructure analyze_prompt(std::string_view prompt) {
  PromptStructure ps;
  auto lines = split(prompt, '\n');
  if (lines.empty()) return ps;
  ps.instruction = lines[0];
  std::vector<std::string> blocks;  // slot letters per block
  bool fresh = true;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& l = lines[i];
    if (l.empty()) {
      fresh = true;
      continue;
    }
    if (fresh) blocks.emplace_back();
    fresh = false;
    if (l.size() >= 2 && l[1] == ':') blocks.back() += l[0];
  }
  if (blocks.empty()) return ps;
  ps.exemplar_count = blocks.size() - 1;
  ps.live_slots = blocks.back();
  return ps;
}

}  // namespace icp
