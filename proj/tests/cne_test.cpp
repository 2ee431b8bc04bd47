#include "newsrec/cne.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "testutil.hpp"

using namespace newsrec;

namespace {

TokenBatch make_batch(const std::vector<std::vector<int32_t>>& seqs, size_t len) {
  TokenBatch b;
  b.count = seqs.size();
  b.len = len;
  for (const auto& seq : seqs) {
    for (size_t t = 0; t < len; ++t) {
      int32_t id = t < seq.size() ? seq[t] : kPadToken;
      b.tokens.push_back(id);
      b.mask.push_back(id != kPadToken);
    }
  }
  return b;
}

CneSideParams zero_side(const CneConfig& cfg) {
  const size_t e = cfg.embed_dim, h = cfg.hidden, sd = cfg.state_dim(), da = cfg.attn_dim;
  CneSideParams s;
  s.fw = {Tensor({e, 4 * h}), Tensor({h, 4 * h}), Tensor({size_t(1), 4 * h})};
  s.bw = {Tensor({e, 4 * h}), Tensor({h, 4 * h}), Tensor({size_t(1), 4 * h})};
  s.gate_state_w = Tensor({sd, sd});
  s.gate_memory_w = Tensor({sd, sd});
  s.gate_b = Tensor({size_t(1), sd});
  s.attn_w = Tensor({sd, da});
  s.attn_b = Tensor({size_t(1), da});
  s.attn_v = Tensor({da, 1});
  s.cross_q = Tensor({sd, da});
  s.cross_k = Tensor({sd, da});
  return s;
}

struct CneFixture {
  CneConfig cfg;
  ParamStore store;
  CneParams params;
  Tensor embeddings;

  explicit CneFixture(uint64_t seed = 1, size_t vocab = 12) {
    cfg.embed_dim = 10;
    cfg.hidden = 6;
    cfg.attn_dim = 5;
    cfg.dropout = 0;
    Rng rng(seed);
    params = init_cne_params(store, cfg, rng);
    embeddings = testutil::random_tensor({vocab, cfg.embed_dim}, rng);
    for (size_t j = 0; j < cfg.embed_dim; ++j)
      embeddings.at(size_t(kPadToken), j) = real(0);
  }
};

}  // namespace

TEST(Bilstm, ZeroInputsZeroParamsGiveZeroStates) {
  CneConfig cfg;
  cfg.embed_dim = 4;
  cfg.hidden = 3;
  cfg.attn_dim = 2;
  CneSideParams side = zero_side(cfg);
  Tensor embeddings({5, 4});  // all-zero rows
  TokenBatch toks = make_batch({{1, 2, 3}}, 5);
  SideEncoding enc = bilstm_encode(nullptr, side, embeddings, toks);
  for (const Tensor& h : enc.states)
    for (real v : h.data()) EXPECT_EQ(v, 0.0f);
  for (real v : enc.memory.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Bilstm, SingleTokenMemoryComesFromPositionOne) {
  // with identical forward/backward weights, both cell states are the same
  // single-step computation
  CneFixture fx;
  CneSideParams side = fx.params.title;
  side.bw = side.fw;
  TokenBatch toks = make_batch({{3}}, 4);
  SideEncoding enc = bilstm_encode(nullptr, side, fx.embeddings, toks);
  const size_t h = fx.cfg.hidden;
  for (size_t j = 0; j < h; ++j)
    EXPECT_EQ(enc.memory.at(0, j), enc.memory.at(0, h + j));
  // pad positions carry zero states
  for (size_t t = 1; t < 4; ++t)
    for (real v : enc.states[t].data()) EXPECT_EQ(v, 0.0f);
}

TEST(Bilstm, PadEmbeddingPerturbationNeverReachesMemory) {
  CneFixture fx;
  TokenBatch toks = make_batch({{2, 3, 4}, {5, 6, 7, 8, 9}}, 6);
  SideEncoding before = bilstm_encode(nullptr, fx.params.title, fx.embeddings, toks);
  Tensor poisoned = fx.embeddings.clone();
  for (size_t j = 0; j < fx.cfg.embed_dim; ++j)
    poisoned.at(size_t(kPadToken), j) = real(99.0);
  SideEncoding after = bilstm_encode(nullptr, fx.params.title, poisoned, toks);
  EXPECT_EQ(before.memory.data(), after.memory.data());
  for (size_t t = 0; t < toks.len; ++t)
    EXPECT_EQ(before.states[t].data(), after.states[t].data());
}

TEST(CrossSelect, ZeroPreActivationHalvesStates) {
  CneConfig cfg;
  cfg.embed_dim = 4;
  cfg.hidden = 3;
  cfg.attn_dim = 2;
  CneSideParams side = zero_side(cfg);
  Rng rng(2);
  std::vector<Tensor> states = {testutil::random_tensor({2, 6}, rng),
                                testutil::random_tensor({2, 6}, rng)};
  Tensor memory = testutil::random_tensor({2, 6}, rng);
  std::vector<Tensor> gated = cross_select(nullptr, side, states, memory);
  for (size_t t = 0; t < states.size(); ++t)
    for (size_t i = 0; i < states[t].size(); ++i)
      EXPECT_FLOAT_EQ(gated[t].at(i), states[t].at(i) * 0.5f);
}

TEST(CrossSelect, GateShrinksEveryCoordinate) {
  CneFixture fx(5);
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor> states = {testutil::random_tensor({3, 12}, rng, -2, 2)};
    Tensor memory = testutil::random_tensor({3, 12}, rng, -2, 2);
    std::vector<Tensor> gated = cross_select(nullptr, fx.params.title, states, memory);
    for (size_t i = 0; i < states[0].size(); ++i)
      EXPECT_LE(std::fabs(gated[0].at(i)), std::fabs(states[0].at(i)));
  }
}

TEST(SelfAttend, SingletonSoftmax) {
  CneFixture fx;
  TokenBatch toks = make_batch({{3}}, 3);
  SideEncoding enc = bilstm_encode(nullptr, fx.params.title, fx.embeddings, toks);
  auto [pooled, alpha] = self_attend(nullptr, fx.params.title, enc.states, toks);
  EXPECT_FLOAT_EQ(alpha.at(0, 0), 1.0f);
  EXPECT_EQ(alpha.at(0, 1), 0.0f);
  EXPECT_EQ(pooled.data(), enc.states[0].data());
}

TEST(SelfAttend, IdenticalStatesUniform) {
  CneFixture fx;
  Rng rng(4);
  Tensor state = testutil::random_tensor({1, 12}, rng);
  std::vector<Tensor> states = {state, state, state};
  TokenBatch toks = make_batch({{2, 2, 2}}, 3);
  auto [pooled, alpha] = self_attend(nullptr, fx.params.title, states, toks);
  for (size_t t = 0; t < 3; ++t) EXPECT_NEAR(alpha.at(0, t), 1.0f / 3.0f, 1e-6);
}

TEST(SelfAttend, PooledLiesInConvexHull) {
  CneFixture fx(7);
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    TokenBatch toks = make_batch({{2, 3, 4, 5}}, 4);
    SideEncoding enc = bilstm_encode(nullptr, fx.params.title, fx.embeddings, toks);
    auto [pooled, alpha] = self_attend(nullptr, fx.params.title, enc.states, toks);
    for (size_t j = 0; j < 12; ++j) {
      real lo = enc.states[0].at(0, j), hi = lo;
      for (size_t t = 1; t < 4; ++t) {
        lo = std::min(lo, enc.states[t].at(0, j));
        hi = std::max(hi, enc.states[t].at(0, j));
      }
      EXPECT_GE(pooled.at(0, j), lo - 1e-5f);
      EXPECT_LE(pooled.at(0, j), hi + 1e-5f);
    }
  }
}

TEST(CrossAttend, SingleKeyTakesItsValue) {
  CneFixture fx;
  TokenBatch toks = make_batch({{4}}, 2);
  SideEncoding enc = bilstm_encode(nullptr, fx.params.title, fx.embeddings, toks);
  Rng rng(6);
  Tensor query = testutil::random_tensor({1, 12}, rng);
  auto [pooled, alpha] = cross_attend(nullptr, fx.params.title, query, enc.states, toks);
  EXPECT_FLOAT_EQ(alpha.at(0, 0), 1.0f);
  EXPECT_EQ(pooled.data(), enc.states[0].data());
}

TEST(CrossAttend, ZeroProjectionsGiveUniformWeights) {
  CneFixture fx;
  CneSideParams side = fx.params.title;
  side.cross_q = Tensor({12, 5});
  side.cross_k = Tensor({12, 5});
  TokenBatch toks = make_batch({{2, 3, 4}}, 5);
  SideEncoding enc = bilstm_encode(nullptr, side, fx.embeddings, toks);
  Rng rng(6);
  Tensor query = testutil::random_tensor({1, 12}, rng);
  auto [pooled, alpha] = cross_attend(nullptr, side, query, enc.states, toks);
  for (size_t t = 0; t < 3; ++t) EXPECT_NEAR(alpha.at(0, t), 1.0f / 3.0f, 1e-6);
  for (size_t t = 3; t < 5; ++t) EXPECT_EQ(alpha.at(0, t), 0.0f);
}

TEST(CrossAttend, MatchesScalarReference) {
  // independent recomputation of the scaled dot-product attention on a
  // random 4-key instance
  CneFixture fx(11);
  Rng rng(12);
  std::vector<Tensor> keys;
  for (int t = 0; t < 4; ++t) keys.push_back(testutil::random_tensor({1, 12}, rng));
  Tensor query = testutil::random_tensor({1, 12}, rng);
  TokenBatch toks = make_batch({{2, 3, 4, 5}}, 4);
  auto [pooled, alpha] = cross_attend(nullptr, fx.params.title, query, keys, toks);

  const size_t da = fx.cfg.attn_dim, sd = 12;
  auto project = [&](const Tensor& vec, const Tensor& w) {
    std::vector<double> out(da, 0.0);
    for (size_t j = 0; j < da; ++j)
      for (size_t i = 0; i < sd; ++i)
        out[j] += static_cast<double>(vec.at(0, i)) * static_cast<double>(w.at(i, j));
    return out;
  };
  std::vector<double> q = project(query, fx.params.title.cross_q);
  std::vector<double> logits(4);
  for (int t = 0; t < 4; ++t) {
    std::vector<double> k = project(keys[t], fx.params.title.cross_k);
    double dot = 0;
    for (size_t j = 0; j < da; ++j) dot += q[j] * k[j];
    logits[t] = dot / std::sqrt(static_cast<double>(da));
  }
  double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    denom += l;
  }
  for (int t = 0; t < 4; ++t)
    EXPECT_NEAR(alpha.at(0, size_t(t)), logits[t] / denom, 1e-5);
  for (size_t j = 0; j < sd; ++j) {
    double want = 0;
    for (int t = 0; t < 4; ++t)
      want += logits[t] / denom * static_cast<double>(keys[t].at(0, j));
    EXPECT_NEAR(pooled.at(0, j), want, 1e-5);
  }
}

TEST(EncodeNews, OutputDimIsFourHidden) {
  CneFixture fx;
  TokenBatch title = make_batch({{2, 3}, {4}}, 4);
  TokenBatch content = make_batch({{5, 6, 7}, {8, 9}}, 6);
  NewsEncoding enc = encode_news(nullptr, fx.params, fx.cfg, fx.embeddings, title, content);
  EXPECT_EQ(enc.vecs.rows(), 2u);
  EXPECT_EQ(enc.vecs.cols(), fx.cfg.news_dim());
}

TEST(EncodeNews, WithoutCrossAttentionEqualsSelfOnlyPipeline) {
  CneFixture fx(3);
  TokenBatch title = make_batch({{2, 3, 4}}, 4);
  TokenBatch content = make_batch({{5, 6}}, 5);
  CneConfig cfg = fx.cfg;
  cfg.cross_attention = false;
  NewsEncoding flagged =
      encode_news(nullptr, fx.params, cfg, fx.embeddings, title, content);

  SideEncoding t_enc = bilstm_encode(nullptr, fx.params.title, fx.embeddings, title);
  SideEncoding c_enc = bilstm_encode(nullptr, fx.params.content, fx.embeddings, content);
  auto t_states = cross_select(nullptr, fx.params.title, t_enc.states, c_enc.memory);
  auto c_states = cross_select(nullptr, fx.params.content, c_enc.states, t_enc.memory);
  auto [t_self, t_attn] = self_attend(nullptr, fx.params.title, t_states, title);
  auto [c_self, c_attn] = self_attend(nullptr, fx.params.content, c_states, content);
  Tensor manual = concat(nullptr, {t_self, c_self}, 1);
  EXPECT_EQ(flagged.vecs.data(), manual.data());
}

TEST(EncodeNews, WithoutCrossSelectUsesRawStates) {
  CneFixture fx(3);
  TokenBatch title = make_batch({{2, 3, 4}}, 4);
  TokenBatch content = make_batch({{5, 6}}, 5);
  CneConfig cfg = fx.cfg;
  cfg.cross_select = false;
  NewsEncoding flagged =
      encode_news(nullptr, fx.params, cfg, fx.embeddings, title, content);

  SideEncoding t_enc = bilstm_encode(nullptr, fx.params.title, fx.embeddings, title);
  SideEncoding c_enc = bilstm_encode(nullptr, fx.params.content, fx.embeddings, content);
  auto [t_self, t_a] = self_attend(nullptr, fx.params.title, t_enc.states, title);
  auto [c_self, c_a] = self_attend(nullptr, fx.params.content, c_enc.states, content);
  auto [t_cross, tc_a] =
      cross_attend(nullptr, fx.params.title, c_self, t_enc.states, title);
  auto [c_cross, cc_a] =
      cross_attend(nullptr, fx.params.content, t_self, c_enc.states, content);
  Tensor manual = concat(
      nullptr, {add(nullptr, t_self, t_cross), add(nullptr, c_self, c_cross)}, 1);
  EXPECT_EQ(flagged.vecs.data(), manual.data());
}

TEST(EncodeNews, TitleContentSymmetry) {
  // swapping the two sides' inputs and parameter sets swaps the two halves
  CneFixture fx(17);
  TokenBatch a = make_batch({{2, 3, 4}}, 4);
  TokenBatch b = make_batch({{5, 6, 7, 8}, {9}}, 5);
  TokenBatch a2 = make_batch({{2, 3, 4}, {10, 11}}, 4);
  // use equal batch sizes on both sides
  TokenBatch title = a2, content = b;
  NewsEncoding fwd = encode_news(nullptr, fx.params, fx.cfg, fx.embeddings, title, content);
  CneParams swapped;
  swapped.title = fx.params.content;
  swapped.content = fx.params.title;
  NewsEncoding rev = encode_news(nullptr, swapped, fx.cfg, fx.embeddings, content, title);
  const size_t sd = fx.cfg.state_dim();
  for (size_t r = 0; r < 2; ++r)
    for (size_t j = 0; j < sd; ++j) {
      EXPECT_EQ(fwd.vecs.at(r, j), rev.vecs.at(r, sd + j));
      EXPECT_EQ(fwd.vecs.at(r, sd + j), rev.vecs.at(r, j));
    }
}

TEST(EncodeNews, PadTokenIdsNeverMatter) {
  CneFixture fx(19);
  TokenBatch title = make_batch({{2, 3}}, 5);
  TokenBatch content = make_batch({{4, 5, 6}}, 6);
  NewsEncoding base = encode_news(nullptr, fx.params, fx.cfg, fx.embeddings, title, content);
  // rewrite token ids under the mask; masked inputs must stay invisible
  Rng rng(7);
  TokenBatch title2 = title, content2 = content;
  for (size_t i = 0; i < title2.tokens.size(); ++i)
    if (!title2.mask[i]) title2.tokens[i] = static_cast<int32_t>(2 + rng.index(9));
  for (size_t i = 0; i < content2.tokens.size(); ++i)
    if (!content2.mask[i]) content2.tokens[i] = static_cast<int32_t>(2 + rng.index(9));
  NewsEncoding changed =
      encode_news(nullptr, fx.params, fx.cfg, fx.embeddings, title2, content2);
  EXPECT_EQ(base.vecs.data(), changed.vecs.data());
}

TEST(EncodeNews, AttentionDistributionsNormalized) {
  CneFixture fx(23);
  Rng rng(24);
  for (int trial = 0; trial < 30; ++trial) {
    size_t title_real = 1 + rng.index(4);
    size_t content_real = 1 + rng.index(5);
    std::vector<int32_t> t_ids, c_ids;
    for (size_t i = 0; i < title_real; ++i)
      t_ids.push_back(static_cast<int32_t>(2 + rng.index(9)));
    for (size_t i = 0; i < content_real; ++i)
      c_ids.push_back(static_cast<int32_t>(2 + rng.index(9)));
    TokenBatch title = make_batch({t_ids}, 5);
    TokenBatch content = make_batch({c_ids}, 6);
    NewsEncoding enc = encode_news(nullptr, fx.params, fx.cfg, fx.embeddings, title,
                                   content, false, nullptr, true);
    auto check = [](const Tensor& alpha, const TokenBatch& toks) {
      double sum = 0;
      for (size_t t = 0; t < toks.len; ++t) {
        if (!toks.real(0, t)) {
          EXPECT_EQ(alpha.at(0, t), 0.0f);
        } else {
          EXPECT_GE(alpha.at(0, t), 0.0f);
          EXPECT_LE(alpha.at(0, t), 1.0f);
        }
        sum += alpha.at(0, t);
      }
      EXPECT_NEAR(sum, 1.0, 1e-5);
    };
    check(enc.title_self_attn, title);
    check(enc.title_cross_attn, title);
    check(enc.content_self_attn, content);
    check(enc.content_cross_attn, content);
  }
}
