#pragma once

#include <cstddef>
#include <vector>

#include "seqtx/common.hpp"

namespace seqtx {

enum class EditOp { kHit, kSub, kDel, kIns };

struct AlignedPair {
  EditOp op;
  // Reference / hypothesis positions; -1 where the op consumes none.
  std::ptrdiff_t ref_pos;
  std::ptrdiff_t hyp_pos;
};

struct AlignmentReport {
  double cer = 0.0;
  std::size_t ref_len = 0;
  std::size_t hyp_len = 0;
  std::size_t n_sub = 0;
  std::size_t n_del = 0;
  std::size_t n_ins = 0;
  std::size_t n_hit = 0;
  std::size_t n_tail_del = 0;
  std::size_t n_internal_del = 0;
  std::vector<AlignedPair> alignment;

  std::size_t errors() const { return n_sub + n_del + n_ins; }
};

// Unit-cost Levenshtein alignment. The backtrace prefers hit, then
// substitution, deletion, insertion. Deletions after the last hit or
// substitution run to the reference end and count as tail deletions; all
// others are internal. CER is errors / ref_len (0 for an empty reference
// with an empty hypothesis, errors otherwise).
AlignmentReport align(const TokenSequence& ref, const TokenSequence& hyp);

struct RepeatedSpan {
  std::size_t start = 0;
  std::size_t ngram = 0;    // n-gram length
  std::size_t repeats = 0;  // consecutive occurrences
  std::size_t length() const { return ngram * repeats; }
};

// Maximal spans where one n-gram occurs at least min_repeat times back to
// back. Spans covered by a longer span, or by the same span with a shorter
// period, are dropped.
std::vector<RepeatedSpan> detect_self_loop(const TokenSequence& hyp, std::size_t min_repeat);

}  // namespace seqtx
