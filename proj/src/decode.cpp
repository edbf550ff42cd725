#include "seqtx/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace seqtx {

void BeamConfig::validate() const {
  if (width == 0) throw ConfigError("beam width must be at least 1");
  if (max_len == 0) throw ConfigError("beam max_len must be at least 1");
}

std::vector<double> log_softmax_row(std::span<const float> logits) {
  const float mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (float v : logits) denom += std::exp(static_cast<double>(v - mx));
  const double log_z = std::log(denom) + mx;
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_z;
  return out;
}

namespace {

bool emittable(std::size_t token) { return token != static_cast<std::size_t>(kPad) && token != static_cast<std::size_t>(kSos); }

// enc_out [1, n, d] repeated to [copies, n, d].
Tensor repeat_batch(const Tensor& enc_out, std::size_t copies) {
  if (copies == 1) return enc_out;
  const std::size_t block = enc_out.size();
  std::vector<float> v(block * copies);
  for (std::size_t c = 0; c < copies; ++c)
    std::copy(enc_out.data().begin(), enc_out.data().end(), v.begin() + c * block);
  return Tensor(Shape{copies, enc_out.dim(1), enc_out.dim(2)}, std::move(v));
}

void check_single(const Tensor& enc_out, std::size_t enc_length) {
  if (enc_out.rank() != 3 || enc_out.dim(0) != 1)
    throw ShapeError("decoding expects encoder output [1, n, d_m], got " +
                     shape_str(enc_out.shape()));
  if (enc_length == 0 || enc_length > enc_out.dim(1)) throw Error("invalid encoder length");
}

}  // namespace

std::vector<DecodeResult> greedy_decode_batch(const TransformerModel& model, const Tensor& enc_out,
                                              const std::vector<std::size_t>& enc_lengths,
                                              std::size_t max_len) {
  if (max_len == 0) throw ConfigError("max_len must be at least 1");
  Graph::Pause no_record;
  const std::size_t b = enc_out.dim(0);
  std::vector<DecodeResult> results(b);
  std::vector<bool> done(b, false);
  std::vector<TokenSequence> rows(b, TokenSequence{kSos});
  std::size_t open = b;
  for (std::size_t step = 0; step < max_len && open > 0; ++step) {
    const Tensor logits = model.decode_step_parallel(enc_out, enc_lengths, TokenBatch::from_rows(rows));
    const std::size_t u = logits.dim(1), V = logits.dim(2);
    for (std::size_t i = 0; i < b; ++i) {
      if (done[i]) {
        rows[i].push_back(kPad);
        continue;
      }
      const float* row = logits.data().data() + (i * u + u - 1) * V;
      std::size_t best = kEos;
      for (std::size_t c = 0; c < V; ++c)
        if (emittable(c) && row[c] > row[best]) best = c;
      if (best == static_cast<std::size_t>(kEos)) {
        done[i] = true;
        --open;
        rows[i].push_back(kPad);
      } else {
        results[i].tokens.push_back(static_cast<TokenId>(best));
        rows[i].push_back(static_cast<TokenId>(best));
      }
    }
  }
  for (std::size_t i = 0; i < b; ++i) results[i].truncated = !done[i];
  return results;
}

DecodeResult greedy_decode(const TransformerModel& model, const Tensor& enc_out,
                           std::size_t enc_length, std::size_t max_len) {
  check_single(enc_out, enc_length);
  return greedy_decode_batch(model, enc_out, {enc_length}, max_len).front();
}

std::vector<Hypothesis> beam_decode(const TransformerModel& model, const Tensor& enc_out,
                                    std::size_t enc_length, const BeamConfig& cfg) {
  cfg.validate();
  check_single(enc_out, enc_length);
  Graph::Pause no_record;

  struct Candidate {
    std::size_t parent;
    TokenId token;
    double score;
  };
  auto rank_score = [&](const Hypothesis& h) {
    if (!cfg.length_norm) return h.score;
    const double len = static_cast<double>(h.tokens.size() + (h.finished ? 1 : 0));
    return h.score / std::max(1.0, len);
  };

  std::vector<Hypothesis> alive{Hypothesis{}};
  std::vector<Hypothesis> completed;
  for (std::size_t step = 0; step < cfg.max_len && !alive.empty(); ++step) {
    std::vector<TokenSequence> rows;
    rows.reserve(alive.size());
    for (const auto& h : alive) {
      TokenSequence row{kSos};
      row.insert(row.end(), h.tokens.begin(), h.tokens.end());
      rows.push_back(std::move(row));
    }
    const Tensor logits = model.decode_step_parallel(repeat_batch(enc_out, alive.size()),
                                                     std::vector<std::size_t>(alive.size(), enc_length),
                                                     TokenBatch::from_rows(rows));
    const std::size_t u = logits.dim(1), V = logits.dim(2);
    std::vector<Candidate> cands;
    cands.reserve(alive.size() * V);
    for (std::size_t a = 0; a < alive.size(); ++a) {
      const auto logp = log_softmax_row(
          std::span<const float>(logits.data().data() + (a * u + u - 1) * V, V));
      for (std::size_t c = 0; c < V; ++c)
        if (emittable(c))
          cands.push_back({a, static_cast<TokenId>(c), alive[a].score + logp[c]});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& x, const Candidate& y) { return x.score > y.score; });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < cands.size() && i < cfg.width; ++i) {
      Hypothesis h{alive[cands[i].parent].tokens, cands[i].score, false};
      if (cands[i].token == kEos) {
        h.finished = true;
        completed.push_back(std::move(h));
      } else {
        h.tokens.push_back(cands[i].token);
        next.push_back(std::move(h));
      }
    }
    alive = std::move(next);

    // Raw log-probabilities only fall, so open beams cannot overtake a full
    // pool of finished ones.
    if (!cfg.length_norm && completed.size() >= cfg.width && !alive.empty()) {
      std::vector<double> scores;
      for (const auto& h : completed) scores.push_back(h.score);
      std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(cfg.width - 1),
                       scores.end(), std::greater<>());
      const double kth = scores[cfg.width - 1];
      double best_alive = -std::numeric_limits<double>::infinity();
      for (const auto& h : alive) best_alive = std::max(best_alive, h.score);
      if (best_alive <= kth) alive.clear();
    }
  }
  for (auto& h : alive) completed.push_back(std::move(h));
  for (auto& h : completed) h.score = rank_score(h);
  std::stable_sort(completed.begin(), completed.end(),
                   [](const Hypothesis& x, const Hypothesis& y) { return x.score > y.score; });
  if (completed.size() > cfg.width) completed.resize(cfg.width);
  return completed;
}

}  // namespace seqtx
