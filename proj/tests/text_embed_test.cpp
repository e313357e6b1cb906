#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "fedsurg/errors.hpp"
#include "fedsurg/rng.hpp"
#include "fedsurg/tdf.hpp"
#include "fedsurg/text_embed.hpp"

using namespace fedsurg;
using namespace fedsurg::text;

namespace {

std::uint64_t reference_fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "fedsurg_text_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Fnv1a, MatchesReferenceImplementation) {
  EXPECT_EQ(reference_fnv1a("abc"), 0xe71fa2190541574bULL);
  EXPECT_EQ(fnv1a64("abc"), 0xe71fa2190541574bULL);
  EXPECT_EQ(embed_prompt("abc").seed, 0xe71fa2190541574bULL);
  for (const char* s : {"", "a", "Dataset: EndoVis2017, Task: Instrument Segmentation"}) {
    EXPECT_EQ(fnv1a64(s), reference_fnv1a(s));
  }
}

TEST(EmbedPrompt, UnitNormAndDeterministic) {
  const std::string p = site_prompt("EndoVis2017", "Instrument Segmentation", {"Shaft", "Wrist", "Clasper"});
  EXPECT_EQ(p, "Dataset: EndoVis2017, Task: Instrument Segmentation, Label: Shaft, Wrist, Clasper");
  TextIndicator a = embed_prompt(p), b = embed_prompt(p);
  EXPECT_EQ(a.vector, b.vector);
  EXPECT_EQ(a.dim(), kDefaultDim);
  EXPECT_NEAR(l2_norm(a.vector), 1.0, 1e-12);
  EXPECT_NE(embed_prompt("other prompt").vector, a.vector);
  EXPECT_THROW(embed_prompt(""), InputError);
}

TEST(MakeIndicator, OneHotBasisVector) {
  TextIndicator ind = make_indicator(IndicatorKind::one_hot, 2, "", 3, 4, 0);
  EXPECT_EQ(ind.vector, Tensor::vector({0, 0, 1, 0}));
  EXPECT_THROW(make_indicator(IndicatorKind::one_hot, 4, "", 5, 4, 0), InputError);
}

TEST(MakeIndicator, RandomDeterministicAndIndependentOfPrompt) {
  TextIndicator a = make_indicator(IndicatorKind::random, 0, "x", 2, 64, 99);
  TextIndicator b = make_indicator(IndicatorKind::random, 1, "y", 2, 64, 99);
  EXPECT_EQ(a.vector, b.vector);
  EXPECT_NEAR(l2_norm(a.vector), 1.0, 1e-12);
}

TEST(MakeIndicator, DistinctSeedsAreNearlyOrthogonal) {
  int close = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    Tensor u = make_indicator(IndicatorKind::random, 0, "", 1, 64, 2 * i + 1).vector;
    Tensor v = make_indicator(IndicatorKind::random, 0, "", 1, 64, 2 * i + 2).vector;
    if (std::abs(dot(u, v)) >= 0.9) ++close;
  }
  EXPECT_EQ(close, 0);
}

TEST(LoadEmbedding, RoundTripNormalises) {
  auto path = temp_file("emb.tdf");
  tdf::write(path, Tensor::vector({3.0, 0.0, 4.0}));
  TextIndicator ind = load_embedding_file(path);
  EXPECT_NEAR(ind.vector[0], 0.6, 1e-15);
  EXPECT_NEAR(ind.vector[2], 0.8, 1e-15);
  EXPECT_EQ(ind.source, path.string());
}

TEST(LoadEmbedding, RejectsWrongRankAndZeroVector) {
  auto rank2 = temp_file("rank2.tdf");
  tdf::write(rank2, Tensor(Shape{2, 2}, 1.0));
  EXPECT_THROW(load_embedding_file(rank2), FormatError);
  auto zero = temp_file("zero.tdf");
  tdf::write(zero, Tensor(Shape{5}));
  EXPECT_THROW(load_embedding_file(zero), InputError);
}
