#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "focus/corpus.hpp"

using namespace focus;

TEST(Tokenize, GreedyLongestMatch) {
  Vocabulary v({"⸱a", "⸱ab", "b"});
  std::istringstream in("a ab\n");
  auto c = tokenize_text(in, v);
  ASSERT_EQ(c.sequences.size(), 1u);
  EXPECT_EQ(c.sequences[0], (std::vector<TokenId>{0, 1}));
  EXPECT_EQ(c.token_counts, (std::vector<std::uint64_t>{1, 1, 0}));
  EXPECT_EQ(c.dropped_chars, 0u);
}

TEST(Tokenize, SplitsWordsAcrossPieces) {
  Vocabulary v({"⸱ab", "c", "⸱", "d"});
  std::istringstream in("abcd d\n");
  auto c = tokenize_text(in, v);
  EXPECT_EQ(c.sequences[0], (std::vector<TokenId>{0, 1, 3, 2, 3}));
}

TEST(Tokenize, UncoverableCharactersAreDroppedAndCounted) {
  Vocabulary v({"⸱a"});
  std::istringstream in("aé a\nzz\n");
  auto c = tokenize_text(in, v);
  ASSERT_EQ(c.sequences.size(), 1u);
  EXPECT_EQ(c.sequences[0], (std::vector<TokenId>{0, 0}));
  EXPECT_EQ(c.dropped_chars, 3u);  // é, z, z
  EXPECT_EQ(c.dropped_lines, 1u);
  EXPECT_FALSE(c.warnings.empty());
}

TEST(Tokenize, VocabularyWithoutSpaceMarkers) {
  Vocabulary v({"ab", "c"});
  std::istringstream in("abc c\n");
  auto c = tokenize_text(in, v);
  EXPECT_EQ(c.sequences[0], (std::vector<TokenId>{0, 1, 1}));
  EXPECT_EQ(c.dropped_chars, 0u);
}

TEST(Tokenize, EmptyInputWarns) {
  Vocabulary v({"a"});
  std::istringstream in("");
  auto c = tokenize_text(in, v);
  EXPECT_TRUE(c.empty());
  ASSERT_EQ(c.warnings.size(), 1u);
}

TEST(Tokenize, PretokenizedIds) {
  Vocabulary v({"a", "b", "c"});
  TokenizerSpec spec{TokenizerSpec::Kind::kPretokenizedIds, true};
  std::istringstream in("0 2 1\n\n2\n");
  auto c = tokenize_text(in, v, spec);
  ASSERT_EQ(c.sequences.size(), 2u);
  EXPECT_EQ(c.sequences[0], (std::vector<TokenId>{0, 2, 1}));
  EXPECT_EQ(c.token_counts, (std::vector<std::uint64_t>{1, 1, 2}));

  std::istringstream bad("0 3\n");
  EXPECT_THROW(tokenize_text(bad, v, spec), InputError);
  std::istringstream neg("-1\n");
  EXPECT_THROW(tokenize_text(neg, v, spec), InputError);
}

TEST(Tokenize, MissingFile) {
  Vocabulary v({"a"});
  EXPECT_THROW(tokenize_corpus("/nonexistent/corpus.txt", v), InputError);
}
