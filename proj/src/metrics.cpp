#include "seqtx/metrics.hpp"

#include <algorithm>

namespace seqtx {

AlignmentReport align(const TokenSequence& ref, const TokenSequence& hyp) {
  const std::size_t R = ref.size(), H = hyp.size();
  // S(i, j): distance between the suffixes ref[i..] and hyp[j..]. Tracing it
  // from the front with the hit > sub > del > ins preference places matches
  // as early as possible among equal-cost alignments.
  std::vector<std::size_t> dist((R + 1) * (H + 1));
  auto S = [&](std::size_t i, std::size_t j) -> std::size_t& { return dist[i * (H + 1) + j]; };
  for (std::size_t i = 0; i <= R; ++i) S(i, H) = R - i;
  for (std::size_t j = 0; j <= H; ++j) S(R, j) = H - j;
  for (std::size_t i = R; i-- > 0;)
    for (std::size_t j = H; j-- > 0;)
      S(i, j) = std::min({S(i + 1, j + 1) + (ref[i] == hyp[j] ? 0 : 1), S(i + 1, j) + 1,
                          S(i, j + 1) + 1});

  AlignmentReport rep;
  rep.ref_len = R;
  rep.hyp_len = H;
  std::size_t i = 0, j = 0;
  while (i < R || j < H) {
    const std::size_t here = S(i, j);
    const auto ri = static_cast<std::ptrdiff_t>(i);
    const auto hj = static_cast<std::ptrdiff_t>(j);
    if (i < R && j < H && ref[i] == hyp[j] && here == S(i + 1, j + 1)) {
      rep.alignment.push_back({EditOp::kHit, ri, hj});
      ++i, ++j;
    } else if (i < R && j < H && here == S(i + 1, j + 1) + 1) {
      rep.alignment.push_back({EditOp::kSub, ri, hj});
      ++i, ++j;
    } else if (i < R && here == S(i + 1, j) + 1) {
      rep.alignment.push_back({EditOp::kDel, ri, -1});
      ++i;
    } else {
      rep.alignment.push_back({EditOp::kIns, -1, hj});
      ++j;
    }
  }

  std::ptrdiff_t last_matched_ref = -1;  // last hit/sub reference position
  for (const auto& a : rep.alignment) {
    switch (a.op) {
      case EditOp::kHit: ++rep.n_hit; last_matched_ref = a.ref_pos; break;
      case EditOp::kSub: ++rep.n_sub; last_matched_ref = a.ref_pos; break;
      case EditOp::kDel: ++rep.n_del; break;
      case EditOp::kIns: ++rep.n_ins; break;
    }
  }
  for (const auto& a : rep.alignment)
    if (a.op == EditOp::kDel) (a.ref_pos > last_matched_ref ? rep.n_tail_del : rep.n_internal_del)++;

  const auto errors = static_cast<double>(rep.errors());
  rep.cer = R > 0 ? errors / static_cast<double>(R) : errors;
  return rep;
}

std::vector<RepeatedSpan> detect_self_loop(const TokenSequence& hyp, std::size_t min_repeat) {
  if (min_repeat < 2) throw Error("min_repeat must be at least 2");
  const std::size_t n = hyp.size();
  std::vector<RepeatedSpan> found;
  for (std::size_t len = 1; len * min_repeat <= n; ++len) {
    for (std::size_t s = 0; s + len * min_repeat <= n; ++s) {
      // Only the leftmost start of a run.
      if (s >= len && std::equal(hyp.begin() + static_cast<std::ptrdiff_t>(s - len),
                                 hyp.begin() + static_cast<std::ptrdiff_t>(s),
                                 hyp.begin() + static_cast<std::ptrdiff_t>(s)))
        continue;
      std::size_t reps = 1;
      while (s + (reps + 1) * len <= n &&
             std::equal(hyp.begin() + static_cast<std::ptrdiff_t>(s),
                        hyp.begin() + static_cast<std::ptrdiff_t>(s + len),
                        hyp.begin() + static_cast<std::ptrdiff_t>(s + reps * len)))
        ++reps;
      if (reps >= min_repeat) found.push_back({s, len, reps});
    }
  }
  auto covers = [](const RepeatedSpan& outer, const RepeatedSpan& inner) {
    return outer.start <= inner.start && inner.start + inner.length() <= outer.start + outer.length();
  };
  std::vector<RepeatedSpan> out;
  for (std::size_t a = 0; a < found.size(); ++a) {
    bool dominated = false;
    for (std::size_t b = 0; b < found.size() && !dominated; ++b) {
      if (a == b || !covers(found[b], found[a])) continue;
      const bool same_span = found[b].start == found[a].start && found[b].length() == found[a].length();
      dominated = !same_span || found[b].ngram < found[a].ngram;
    }
    if (!dominated) out.push_back(found[a]);
  }
  std::sort(out.begin(), out.end(), [](const RepeatedSpan& x, const RepeatedSpan& y) {
    return x.start != y.start ? x.start < y.start : x.ngram < y.ngram;
  });
  return out;
}

}  // namespace seqtx
