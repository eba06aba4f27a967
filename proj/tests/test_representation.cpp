#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace mmxc;

namespace {

const EncoderDims kDims{6, 5, 8, 4};

Matrix pool_oracle(const std::vector<double>& v, std::size_t d_out) {
  Matrix out(1, d_out);
  for (std::size_t i = 0; i < d_out; ++i) {
    const std::size_t lo = i * v.size() / d_out, hi = (i + 1) * v.size() / d_out;
    double m = v[lo];
    for (std::size_t j = lo; j < hi; ++j) m = std::max(m, v[j]);
    out[i] = m;
  }
  return out;
}

}  // namespace

TEST(Encoder, InitializationShapesAndDeterminism) {
  EncoderParams a = init_encoder(kDims, 5), b = init_encoder(kDims, 5), c = init_encoder(kDims, 6);
  EXPECT_EQ(a.token_table.rows(), kDims.vocab_size + 1);
  EXPECT_EQ(a.token_table.cols(), kDims.native_dim);
  EXPECT_EQ(a.visual_w.rows(), kDims.visual_width);
  EXPECT_EQ(a.token_table, b.token_table);
  EXPECT_FALSE(a.token_table == c.token_table);
  EXPECT_THROW(init_encoder(EncoderDims{6, 5, 4, 8}, 1), DimensionError);
}

TEST(Encoder, SingleTokenIsPooledRow) {
  EncoderParams p = init_encoder(kDims, 1);
  auto row = p.token_table.row(3);
  Matrix got = encode_descriptor(Descriptor::text({3}), view(p));
  EXPECT_EQ(got, pool_oracle({row.begin(), row.end()}, kDims.dim));
}

TEST(Encoder, TwoTokensPoolTheMean) {
  EncoderParams p = init_encoder(kDims, 1);
  std::vector<double> mean(kDims.native_dim);
  for (std::size_t c = 0; c < mean.size(); ++c) mean[c] = (p.token_table(1, c) + p.token_table(4, c)) / 2.0;
  Matrix got = encode_descriptor(Descriptor::text({1, 4}), view(p));
  Matrix want = pool_oracle(mean, kDims.dim);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-15);
}

TEST(Encoder, OutOfVocabularyTokensShareOneRow) {
  EncoderParams p = init_encoder(kDims, 1);
  EXPECT_EQ(encode_descriptor(Descriptor::text({100}), view(p)), encode_descriptor(Descriptor::text({6}), view(p)));
  auto oov = p.token_table.row(p.oov_row());
  EXPECT_EQ(encode_descriptor(Descriptor::text({999}), view(p)), pool_oracle({oov.begin(), oov.end()}, kDims.dim));
}

TEST(Encoder, VisualIsAffineThenPool) {
  std::mt19937_64 rng(8);
  EncoderParams p = init_encoder(kDims, 1);
  p.visual_b = test::random_matrix(1, kDims.native_dim, rng);
  auto f = test::random_features(kDims.visual_width, rng);
  std::vector<double> native(kDims.native_dim);
  for (std::size_t c = 0; c < native.size(); ++c) {
    double s = p.visual_b[c];
    for (std::size_t r = 0; r < f.size(); ++r) s += f[r] * p.visual_w(r, c);
    native[c] = s;
  }
  Matrix got = encode_descriptor(Descriptor::visual(f), view(p));
  Matrix want = pool_oracle(native, kDims.dim);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Encoder, RejectsInvalidDescriptors) {
  EncoderParams p = init_encoder(kDims, 1);
  EXPECT_THROW(encode_descriptor(Descriptor::text({}), view(p)), InvalidEntityError);
  EXPECT_THROW(encode_descriptor(Descriptor::visual({1.0, 2.0}), view(p)), DimensionError);
  EXPECT_THROW(embed_bag(Entity{"empty", {}}, view(p), view(init_identity(kDims.dim))), InvalidEntityError);
}

TEST(Embedding, BagHasOneRowPerDescriptorAndVectorIsUnit) {
  std::mt19937_64 rng(9);
  EncoderParams p = init_encoder(kDims, 2);
  AttentionParams sa = init_identity(kDims.dim);
  for (int trial = 0; trial < 10; ++trial) {
    Entity e = test::random_entity("e", kDims, rng);
    Matrix bag = embed_bag(e, view(p), view(sa));
    EXPECT_EQ(bag.rows(), e.descriptors.size());
    EXPECT_EQ(bag.cols(), kDims.dim);
    EXPECT_NEAR(norm2(embed_vector(bag).values()), 1.0, 1e-12);
  }
}

TEST(Embedding, SingleDescriptorWithIdentitySelfAttentionIsNormalizedPreEmbedding) {
  EncoderParams p = init_encoder(kDims, 2);
  Entity e{"e", {Descriptor::text({2, 5})}};
  Matrix pre = encode_descriptor(e.descriptors[0], view(p));
  Matrix x = embed_vector(embed_bag(e, view(p), view(init_identity(kDims.dim))));
  EXPECT_EQ(x, l2_normalize(pre));
}

TEST(Embedding, BypassingSelfAttentionStacksPreEmbeddings) {
  std::mt19937_64 rng(1);
  EncoderParams p = init_encoder(kDims, 2);
  Entity e{"e", {Descriptor::text({2}), Descriptor::visual(test::random_features(kDims.visual_width, rng))}};
  AttentionParams sa{test::random_matrix(4, 4, rng), test::random_matrix(4, 4, rng), test::random_matrix(4, 4, rng),
                     test::random_matrix(4, 4, rng)};
  Matrix bag = embed_bag(e, view(p), view(sa), false);
  EXPECT_EQ(select_row(bag, 0), encode_descriptor(e.descriptors[0], view(p)));
  EXPECT_EQ(select_row(bag, 1), encode_descriptor(e.descriptors[1], view(p)));
}

TEST(Embedding, VarPathMatchesMatrixPath) {
  std::mt19937_64 rng(12);
  EncoderParams p = init_encoder(kDims, 3);
  AttentionParams sa = init_identity(kDims.dim);
  Entity e = test::random_entity("e", kDims, rng);
  Tape t;
  Var bag = embed_bag<Var>(e, lift(t, p), lift(t, sa));
  EXPECT_EQ(bag.value(), embed_bag(e, view(p), view(sa)));
}
