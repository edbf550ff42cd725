#include "seqtx/evaluate.hpp"

#include <cstdio>

namespace seqtx {

double BucketMetrics::cer() const {
  const double errors = static_cast<double>(n_sub + n_del + n_ins);
  if (ref_len == 0) return errors;
  return errors / static_cast<double>(ref_len);
}

void BucketMetrics::add(const UtteranceResult& r) {
  ++n_utts;
  ref_len += r.report.ref_len;
  n_sub += r.report.n_sub;
  n_del += r.report.n_del;
  n_ins += r.report.n_ins;
  n_hit += r.report.n_hit;
  n_tail_del += r.report.n_tail_del;
  n_internal_del += r.report.n_internal_del;
  n_self_loops += r.self_loops;
  n_truncated += r.truncated ? 1 : 0;
}

const BucketMetrics& EvalReport::bucket(const std::string& name) const {
  for (const auto& b : buckets)
    if (b.name == name) return b;
  throw Error("no bucket named '" + name + "' in report");
}

std::string EvalReport::to_text() const {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %6s %7s %8s %6s %6s %6s %6s %6s %6s\n", "bucket", "utts",
                "tokens", "CER%", "sub", "del", "ins", "TD", "ID", "loops");
  out += line;
  auto row = [&](const BucketMetrics& b) {
    std::snprintf(line, sizeof line, "%-10s %6zu %7zu %8.2f %6zu %6zu %6zu %6zu %6zu %6zu\n",
                  b.name.c_str(), b.n_utts, b.ref_len, 100.0 * b.cer(), b.n_sub, b.n_del, b.n_ins,
                  b.n_tail_del, b.n_internal_del, b.n_self_loops);
    out += line;
  };
  for (const auto& b : buckets) row(b);
  row(corpus);
  return out;
}

namespace {

Json bucket_json(const BucketMetrics& b) {
  return Json{{"name", b.name},         {"utterances", b.n_utts},
              {"ref_len", b.ref_len},   {"cer", b.cer()},
              {"sub", b.n_sub},         {"del", b.n_del},
              {"ins", b.n_ins},         {"hit", b.n_hit},
              {"tail_del", b.n_tail_del}, {"internal_del", b.n_internal_del},
              {"self_loops", b.n_self_loops}, {"truncated", b.n_truncated}};
}

}  // namespace

Json EvalReport::to_json() const {
  Json utts = Json::array();
  for (const auto& u : utterances)
    utts.push_back(Json{{"id", u.id},
                        {"bucket", u.bucket},
                        {"cer", u.report.cer},
                        {"ref_len", u.report.ref_len},
                        {"sub", u.report.n_sub},
                        {"del", u.report.n_del},
                        {"ins", u.report.n_ins},
                        {"tail_del", u.report.n_tail_del},
                        {"internal_del", u.report.n_internal_del},
                        {"self_loops", u.self_loops},
                        {"truncated", u.truncated},
                        {"hypothesis", u.hypothesis}});
  Json bs = Json::array();
  for (const auto& b : buckets) bs.push_back(bucket_json(b));
  return Json{{"corpus", bucket_json(corpus)}, {"buckets", bs}, {"utterances", utts}};
}

EvalReport evaluate(const Dataset& data, const Recognizer& recognize_fn) {
  EvalReport rep;
  rep.corpus.name = "corpus";
  for (const auto& name : data.bucket_names()) rep.buckets.push_back(BucketMetrics{name});
  for (const auto& utt : data.utterances) {
    UtteranceResult r;
    r.id = utt.id;
    r.bucket = utt.bucket;
    r.hypothesis = recognize_fn(utt, r.truncated);
    r.report = align(utt.reference, r.hypothesis);
    const auto hyp_loops = detect_self_loop(r.hypothesis, kSelfLoopMinRepeat).size();
    const auto ref_loops = detect_self_loop(utt.reference, kSelfLoopMinRepeat).size();
    r.self_loops = hyp_loops > ref_loops ? hyp_loops - ref_loops : 0;
    for (auto& b : rep.buckets)
      if (b.name == r.bucket) b.add(r);
    rep.corpus.add(r);
    rep.utterances.push_back(std::move(r));
  }
  return rep;
}

Hypothesis recognize(const TransformerModel& model, const Utterance& utt, const BeamConfig& beam) {
  Graph::Pause no_record;
  const std::size_t fd = model.config().input_feature_dim;
  if (utt.frames.size() != utt.n_frames * fd)
    throw ShapeError("utterance " + utt.id + " frames do not match the model feature size");
  const Tensor frames(Shape{1, utt.n_frames, fd}, utt.frames);
  const Tensor enc = model.encode(frames, {utt.n_frames});
  auto hyps = beam_decode(model, enc, utt.n_frames, beam);
  if (hyps.empty()) return Hypothesis{};
  return hyps.front();
}

EvalReport evaluate(const TransformerModel& model, const Dataset& data, const BeamConfig& beam) {
  return evaluate(data, [&](const Utterance& utt, bool& truncated) {
    Hypothesis h = recognize(model, utt, beam);
    truncated = !h.finished;
    return h.tokens;
  });
}

}  // namespace seqtx
