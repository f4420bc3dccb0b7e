#include "tarnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

#include "tarnet/errors.hpp"
#include "tarnet/frontend.hpp"
#include "tarnet/threads.hpp"

namespace tarnet {

double topk_accuracy(const std::vector<std::vector<double>>& scores,
                     const std::vector<int>& labels, int k) {
  if (scores.size() != labels.size())
    throw UsageError("topk_accuracy: scores and labels differ in length");
  if (scores.empty()) throw UsageError("topk_accuracy: empty input");
  if (k < 1) throw UsageError("topk_accuracy: k must be >= 1");
  int64_t hits = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    const auto& s = scores[i];
    const int label = labels[i];
    if (label < 0 || label >= static_cast<int>(s.size()))
      throw DataError("topk_accuracy: label out of range");
    const int kk = std::min<int>(k, static_cast<int>(s.size()));
    // Rank of the true class under "higher score first, lower index first".
    int rank = 0;
    for (int j = 0; j < static_cast<int>(s.size()); ++j) {
      if (j == label) continue;
      if (s[j] > s[label] || (s[j] == s[label] && j < label)) ++rank;
    }
    if (rank < kk) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

Prf weighted_prf(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.size() != pred.size())
    throw UsageError("weighted_prf: label vectors differ in length");
  if (truth.empty()) throw UsageError("weighted_prf: empty input");
  int max_label = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || pred[i] < 0) throw DataError("weighted_prf: negative label");
    max_label = std::max({max_label, truth[i], pred[i]});
  }
  const int classes = max_label + 1;
  std::vector<int64_t> tp(classes, 0), true_count(classes, 0), pred_count(classes, 0);
  for (size_t i = 0; i < truth.size(); ++i) {
    ++true_count[static_cast<size_t>(truth[i])];
    ++pred_count[static_cast<size_t>(pred[i])];
    if (truth[i] == pred[i]) ++tp[static_cast<size_t>(truth[i])];
  }
  Prf out;
  const double total = static_cast<double>(truth.size());
  for (int c = 0; c < classes; ++c) {
    if (true_count[c] == 0) continue;  // zero support, zero weight
    const double weight = static_cast<double>(true_count[c]) / total;
    const double p = pred_count[c] > 0
                         ? static_cast<double>(tp[c]) / static_cast<double>(pred_count[c])
                         : 0.0;
    const double r = static_cast<double>(tp[c]) / static_cast<double>(true_count[c]);
    const double f1 = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    out.precision += weight * p;
    out.recall += weight * r;
    out.f1 += weight * f1;
  }
  return out;
}

ArResult approx_randomization(const std::vector<double>& scores_a,
                              const std::vector<double>& scores_b, int n_perm,
                              uint64_t seed) {
  if (scores_a.size() != scores_b.size())
    throw UsageError("approx_randomization: paired score vectors differ in length");
  if (scores_a.empty()) throw UsageError("approx_randomization: empty input");
  if (n_perm < 1) throw UsageError("approx_randomization: n_perm must be >= 1");

  const size_t n = scores_a.size();
  long double sum_a = 0.0, sum_b = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sum_a += scores_a[i];
    sum_b += scores_b[i];
  }
  const double observed =
      std::abs(static_cast<double>(sum_a - sum_b)) / static_cast<double>(n);

  Rng rng = Rng::stream(seed, "ar");
  int64_t at_least = 0;
  for (int r = 0; r < n_perm; ++r) {
    long double pa = 0.0, pb = 0.0;
    for (size_t i = 0; i < n; ++i) {
      if (rng.next_u64() & 1) {
        pa += scores_b[i];
        pb += scores_a[i];
      } else {
        pa += scores_a[i];
        pb += scores_b[i];
      }
    }
    const double stat = std::abs(static_cast<double>(pa - pb)) / static_cast<double>(n);
    if (stat >= observed - 1e-12) ++at_least;
  }
  ArResult result;
  result.observed = observed;
  result.p_value = static_cast<double>(at_least + 1) / static_cast<double>(n_perm + 1);
  result.n_permutations = n_perm;
  result.seed = seed;
  return result;
}

// ---------------------------------------------------------------------------
// Model evaluation

std::vector<double> EvalReport::top1_correctness() const {
  std::vector<double> out;
  out.reserve(utterances.size());
  for (const auto& u : utterances) out.push_back(u.top1_correct ? 1.0 : 0.0);
  return out;
}

std::string EvalReport::table() const {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  os << "utterances          " << utterances.size() << "\n"
     << "top-1 accuracy      " << top1 << "\n"
     << "top-5 accuracy      " << top5 << "\n"
     << "weighted precision  " << prf.precision << "\n"
     << "weighted recall     " << prf.recall << "\n"
     << "weighted f1         " << prf.f1 << "\n";
  return os.str();
}

std::string EvalReport::csv_header() {
  return "tag,utterances,top1,top5,precision,recall,f1";
}

std::string EvalReport::csv_row(const std::string& tag) const {
  std::ostringstream os;
  os.precision(9);
  os << tag << "," << utterances.size() << "," << top1 << "," << top5 << ","
     << prf.precision << "," << prf.recall << "," << prf.f1;
  return os.str();
}

EvalReport evaluate_model(const TarnetModel& model, const Corpus& corpus,
                          const FrontendConfig& fe, int jobs) {
  if (corpus.utterances.empty()) throw UsageError("evaluate_model: empty corpus");
  const size_t n = corpus.utterances.size();
  std::vector<std::vector<double>> scores(n);
  std::vector<int> labels(n);

  std::exception_ptr failure;
  std::mutex failure_mutex;
  parallel_chunks(static_cast<int64_t>(n), jobs, [&](int, int64_t begin, int64_t end) {
    try {
      for (int64_t i = begin; i < end; ++i) {
        const Utterance& u = corpus.utterances[static_cast<size_t>(i)];
        const Waveform w = load_waveform(u);
        const SpectrogramFeatures feats = log_mel(w, fe);
        Tape tape(Tape::Mode::kNoGrad);
        const Tensor logits = model.forward(tape, feats);
        scores[static_cast<size_t>(i)].assign(logits.data(), logits.data() + logits.numel());
        labels[static_cast<size_t>(i)] = u.speaker;
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  });
  if (failure) std::rethrow_exception(failure);

  EvalReport report;
  report.utterances.resize(n);
  std::vector<int> preds(n);
  for (size_t i = 0; i < n; ++i) {
    const auto& s = scores[i];
    const int classes = static_cast<int>(s.size());
    std::vector<int> order(static_cast<size_t>(classes));
    for (int j = 0; j < classes; ++j) order[static_cast<size_t>(j)] = j;
    std::sort(order.begin(), order.end(), [&s](int a, int b) {
      return s[static_cast<size_t>(a)] != s[static_cast<size_t>(b)]
                 ? s[static_cast<size_t>(a)] > s[static_cast<size_t>(b)]
                 : a < b;
    });
    UtteranceEval& ue = report.utterances[i];
    ue.true_label = labels[i];
    const int keep = std::min(5, classes);
    ue.ranked.assign(order.begin(), order.begin() + keep);
    ue.top1_correct = order[0] == labels[i];
    ue.top5_correct =
        std::find(ue.ranked.begin(), ue.ranked.end(), labels[i]) != ue.ranked.end();
    preds[i] = order[0];
  }
  report.top1 = topk_accuracy(scores, labels, 1);
  report.top5 = topk_accuracy(scores, labels, 5);
  report.prf = weighted_prf(labels, preds);
  return report;
}

}  // namespace tarnet
