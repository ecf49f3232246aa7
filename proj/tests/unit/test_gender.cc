#include <gtest/gtest.h>

#include <random>

#include <nlohmann/json.hpp>

#include "fixture_util.h"
#include "icp/error.h"
#include "icp/gender.h"

namespace icp {
namespace {

TEST(Gender, ExemplarsAndExtras) {
  auto rows = nlohmann::json::parse(testing::read_fixture("gender_cases.json"));
  for (const auto& r : rows) {
    std::string text = r["text"];
    SCOPED_TRACE(text);
    EXPECT_EQ(to_string(gender_classify_rule(text, r["lang"].get<std::string>())),
              r["label"].get<std::string>());
  }
}

TEST(Gender, RuleClassifierLanguages) {
  EXPECT_THROW(gender_classify_rule("Er ist da.", "de"), UnsupportedLanguage);
  EXPECT_EQ(classify_gender("Er ist da.", default_gender_lexicons().get("de")),
            Gender::Masculine);
}

TEST(Gender, JapaneseLongestMatchFirst) {
  const auto& ja = default_gender_lexicons().get("ja");
  EXPECT_EQ(classify_gender("彼女は来た", ja), Gender::Feminine);
  EXPECT_EQ(classify_gender("彼は来た", ja), Gender::Masculine);
  EXPECT_EQ(classify_gender("彼と彼女", ja), Gender::Undetermined);
}

TEST(Gender, EvidenceNeedsVerb) {
  const auto& es = default_gender_lexicons().get("es");
  auto ev = gender_evidence("Me la sé de memoria de tanto leerla.", es);
  EXPECT_TRUE(ev.has_verb);
  EXPECT_EQ(ev.label(), Gender::Feminine);
}

TEST(Mask, Examples) {
  EXPECT_EQ(mask_gendered_pronouns("Blair should be wrapping up her breakfast"),
            "Blair should be wrapping up [pr] breakfast");
  EXPECT_EQ(mask_gendered_pronouns("The theme is hers."), "The theme is [pr].");
  EXPECT_EQ(mask_gendered_pronouns("HE said Himself"), "[pr] said [pr]");
  EXPECT_EQ(mask_gendered_pronouns("there, the hem"), "there, the hem");
}

TEST(Mask, EnglishEvidence) {
  EXPECT_EQ(english_pronoun_evidence("I have her doorman").label(), Gender::Feminine);
  EXPECT_EQ(english_pronoun_evidence("his and her").label(), Gender::Undetermined);
  EXPECT_EQ(english_pronoun_evidence("nobody").label(), Gender::Undetermined);
}

std::string random_text(std::mt19937& rng) {
  static const std::vector<std::string> pieces = {
      "he", "she", "him", "her", "his", "hers", "himself", "herself", "He", "SHE",
      "the", "hero", "sheet", "[pr]", "pr", " ", "  ", ",", ".", "'", "-", "é", "x",
      "hers'", "Her", "\t", "ß", "漢字", "h", "e"};
  std::string s;
  for (std::size_t i = 0, n = rng() % 20; i < n; ++i) s += pieces[rng() % pieces.size()];
  return s;
}

// Idempotence, the "[pr]" count invariant and byte-identical unmatched spans
// on 10,000 fuzzed strings.
TEST(Mask, FuzzInvariants) {
  std::mt19937 rng(20240607);
  for (int i = 0; i < 10000; ++i) {
    std::string s = random_text(rng);
    std::string once = mask_gendered_pronouns(s);
    ASSERT_EQ(mask_gendered_pronouns(once), once) << s;
    std::size_t before = 0, pos = 0;
    while ((pos = s.find("[pr]", pos)) != std::string::npos) ++before, pos += 4;
    std::size_t after = 0;
    pos = 0;
    while ((pos = once.find("[pr]", pos)) != std::string::npos) ++after, pos += 4;
    ASSERT_EQ(after - before, count_gendered_pronouns(s)) << s;
    // The pieces of the output between placeholders occur in order in the input.
    std::size_t in_pos = 0, out_pos = 0;
    while (out_pos <= once.size()) {
      std::size_t next = once.find("[pr]", out_pos);
      std::string piece = once.substr(out_pos, next == std::string::npos ? std::string::npos
                                                                         : next - out_pos);
      std::size_t found = s.find(piece, in_pos);
      ASSERT_NE(found, std::string::npos) << s;
      in_pos = found + piece.size();
      if (next == std::string::npos) break;
      out_pos = next + 4;
    }
  }
}

}  // namespace
}  // namespace icp
