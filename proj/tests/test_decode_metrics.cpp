#include <algorithm>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "seqtx/decode.hpp"
#include "seqtx/metrics.hpp"

using namespace seqtx;

namespace {

// Every sequence over {3, 4, 5} of length 0..max_len.
std::vector<TokenSequence> all_sequences(std::size_t max_len) {
  std::vector<TokenSequence> out{{}};
  std::size_t begin = 0;
  for (std::size_t len = 1; len <= max_len; ++len) {
    const std::size_t end = out.size();
    for (std::size_t i = begin; i < end; ++i)
      for (TokenId t : {3, 4, 5}) {
        TokenSequence s = out[i];
        s.push_back(t);
        out.push_back(std::move(s));
      }
    begin = end;
  }
  return out;
}

std::vector<int> as_ints(const TokenSequence& s) { return {s.begin(), s.end()}; }

void check_consistent(const TokenSequence& ref, const TokenSequence& hyp, const AlignmentReport& r) {
  CHECK(r.n_hit + r.n_sub + r.n_del == ref.size());
  CHECK(r.n_hit + r.n_sub + r.n_ins == hyp.size());
  CHECK(r.n_tail_del + r.n_internal_del == r.n_del);
  CHECK(r.alignment.size() == r.n_hit + r.n_sub + r.n_del + r.n_ins);
  std::ptrdiff_t ri = 0, hj = 0;
  for (const auto& p : r.alignment) {
    if (p.op != EditOp::kIns) CHECK(p.ref_pos == ri++);
    if (p.op != EditOp::kDel) CHECK(p.hyp_pos == hj++);
    if (p.op == EditOp::kHit) CHECK(ref[p.ref_pos] == hyp[p.hyp_pos]);
    if (p.op == EditOp::kSub) CHECK(ref[p.ref_pos] != hyp[p.hyp_pos]);
  }
}

}  // namespace

TEST_SUITE("decode_metrics") {

TEST_CASE("alignment cost equals exhaustive edit distance on all short pairs") {
  // Lengths up to 6 would be 1093^2 recursive evaluations; 4 covers every
  // tie pattern and keeps the suite fast. The acceptance run goes to 6.
  const auto seqs = all_sequences(4);
  for (const auto& a : seqs)
    for (const auto& b : seqs) {
      const AlignmentReport r = align(a, b);
      REQUIRE(r.errors() == oracle::edit_distance(as_ints(a), 0, as_ints(b), 0));
      check_consistent(a, b, r);
    }
}

TEST_CASE("kitten to sitting") {
  // k i t t e n -> s i t t i n g: two substitutions and one insertion.
  const TokenSequence kitten{3, 4, 5, 5, 6, 7}, sitting{8, 4, 5, 5, 4, 7, 9};
  const AlignmentReport r = align(kitten, sitting);
  CHECK(r.errors() == 3);
  CHECK(r.n_sub == 2);
  CHECK(r.n_ins == 1);
  CHECK(r.cer == doctest::Approx(0.5));
}

TEST_CASE("tail versus internal deletions") {
  const TokenSequence ref{3, 4, 5, 6, 7};
  AlignmentReport r = align(ref, {3, 4});
  CHECK(r.n_tail_del == 3);
  CHECK(r.n_internal_del == 0);
  r = align(ref, {3, 6, 7});
  CHECK(r.n_internal_del == 2);
  CHECK(r.n_tail_del == 0);
  r = align(ref, {3, 6});
  CHECK(r.n_internal_del == 2);
  CHECK(r.n_tail_del == 1);
  // A truncated hypothesis whose last token recurs later in the reference
  // still reads as a tail deletion.
  r = align({3, 4, 5, 4, 6, 4, 7}, {3, 4});
  CHECK(r.n_tail_del == 5);
  CHECK(r.n_internal_del == 0);
}

TEST_CASE("empty hypothesis and empty reference") {
  const AlignmentReport r = align({3, 4, 5, 6}, {});
  CHECK(r.cer == 1.0);
  CHECK(r.n_tail_del + r.n_internal_del == 4);
  CHECK(align({}, {}).cer == 0.0);
  CHECK(align({}, {3, 4}).errors() == 2);
}

TEST_CASE("self-loop detection") {
  auto spans = detect_self_loop({3, 4, 4, 4, 4, 5}, 3);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].start == 1);
  CHECK(spans[0].ngram == 1);
  CHECK(spans[0].repeats == 4);

  spans = detect_self_loop({7, 3, 4, 3, 4, 3, 4, 8}, 3);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].start == 1);
  CHECK(spans[0].ngram == 2);
  CHECK(spans[0].repeats == 3);

  spans = detect_self_loop({3, 3, 3, 4}, 3);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].start == 0);
  CHECK(spans[0].ngram == 1);
  CHECK(spans[0].repeats == 3);

  CHECK(detect_self_loop({3, 4, 3, 4, 5}, 3).empty());
  CHECK(detect_self_loop({3, 4, 5, 6}, 2).empty());

  // (3 3) repeated is dominated by the unigram run it sits in.
  spans = detect_self_loop({3, 3, 3, 3, 3, 3}, 3);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].ngram == 1);
  CHECK(spans[0].length() == 6);
}

TEST_CASE("greedy decoding equals beam width 1") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TransformerModel m(fixture::micro_config(), seed);
    Rng rng(seed);
    const Tensor enc = m.encode(oracle::random_tensor({1, 5, 4}, rng, 1.0, false), {5});
    const DecodeResult g = greedy_decode(m, enc, 5, 8);
    const auto beam = beam_decode(m, enc, 5, BeamConfig{1, 8, false});
    REQUIRE(beam.size() == 1);
    CHECK(beam[0].tokens == g.tokens);
    CHECK(beam[0].finished == !g.truncated);
  }
}

TEST_CASE("max_len cuts decoding and flags truncation") {
  TransformerModel m(fixture::micro_config(), 6);
  const Tensor enc = m.encode(Tensor(Shape{1, 3, 4}, 0.5f), {3});
  // The last norm emits a row of ones and the EOS column sums to -d_m, so
  // the first step cannot finish.
  for (auto& [name, t] : m.named_parameters()) {
    if (name == "dec.0.norm3.gain") std::fill(t.data().begin(), t.data().end(), 0.0f);
    if (name == "dec.0.norm3.bias") std::fill(t.data().begin(), t.data().end(), 1.0f);
    if (name == "out_proj")
      for (std::size_t r = 0; r < t.dim(0); ++r) t.at({r, std::size_t(kEos)}) = -1.0f;
  }
  const DecodeResult g = greedy_decode(m, enc, 3, 1);
  REQUIRE(g.tokens.size() == 1);
  CHECK(g.truncated);
  CHECK_THROWS_AS(greedy_decode(m, enc, 3, 0), ConfigError);
  CHECK_THROWS_AS(beam_decode(m, enc, 3, BeamConfig{0, 4, false}), ConfigError);
}

TEST_CASE("wide beam equals brute-force enumeration on a two-symbol model") {
  ModelConfig c = fixture::micro_config();
  c.vocab_size = 5;  // emittable: EOS, 3, 4
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    TransformerModel m(c, seed);
    Rng rng(seed + 100);
    const Tensor enc = m.encode(oracle::random_tensor({1, 4, 4}, rng, 1.0, false), {4});
    struct Scored {
      TokenSequence tokens;
      bool finished;
      double score;
    };
    std::vector<Scored> all;
    for (const auto& s : all_sequences(3)) {
      bool ok = true;
      for (TokenId t : s) ok = ok && t != 5;
      if (!ok) continue;
      if (s.size() < 3) all.push_back({s, true, oracle::sequence_log_prob(m, enc, 4, s, true)});
      if (s.size() == 3) all.push_back({s, false, oracle::sequence_log_prob(m, enc, 4, s, false)});
    }
    REQUIRE(all.size() == 15);
    std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
    const auto beam = beam_decode(m, enc, 4, BeamConfig{15, 3, false});
    REQUIRE(beam.size() == 15);
    for (std::size_t i = 0; i < 15; ++i) {
      CHECK(beam[i].tokens == all[i].tokens);
      CHECK(beam[i].finished == all[i].finished);
      CHECK(beam[i].score == doctest::Approx(all[i].score).epsilon(1e-5));
    }
  }
}

TEST_CASE("beam results are ranked and an exhaustive beam is never beaten") {
  ModelConfig c = fixture::micro_config();
  c.vocab_size = 5;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    TransformerModel m(c, seed);
    Rng rng(seed);
    const Tensor enc = m.encode(oracle::random_tensor({1, 3, 4}, rng, 1.0, false), {3});
    for (std::size_t w = 1; w <= 6; ++w) {
      const auto beam = beam_decode(m, enc, 3, BeamConfig{w, 4, false});
      CHECK(beam.size() <= w);
      for (std::size_t i = 1; i < beam.size(); ++i) CHECK(beam[i - 1].score >= beam[i].score);
    }
    // Exhaustive width: the top result is the global optimum, at least as
    // good as any narrower search.
    const double best = beam_decode(m, enc, 3, BeamConfig{64, 4, false}).front().score;
    for (std::size_t w = 1; w <= 6; ++w)
      CHECK(best >= beam_decode(m, enc, 3, BeamConfig{w, 4, false}).front().score - 1e-6);
  }
}

}  // TEST_SUITE
