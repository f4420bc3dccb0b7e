#include "tarnet/train.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "tarnet/errors.hpp"
#include "tarnet/frontend.hpp"
#include "tarnet/threads.hpp"

namespace tarnet {

Tensor batch_cross_entropy(Tape& tape, const std::vector<Tensor>& logits,
                           const std::vector<int>& labels) {
  if (logits.empty() || logits.size() != labels.size())
    throw UsageError("batch_cross_entropy: batch is empty or mismatched");
  Tensor total = ops::cross_entropy(tape, logits[0], labels[0]);
  for (size_t i = 1; i < logits.size(); ++i)
    total = ops::add(tape, total, ops::cross_entropy(tape, logits[i], labels[i]));
  return ops::scalar_mul(tape, total, 1.0 / static_cast<double>(logits.size()));
}

void sgd_step(const ParamList& params, const TrainConfig& cfg,
              std::vector<std::vector<double>>* velocity, int64_t step_index) {
  if (cfg.momentum > 0.0 && (!velocity || velocity->size() != params.size()))
    throw UsageError("sgd_step: momentum needs one velocity buffer per parameter");
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    const int64_t n = t.numel();
    double* p = t.data();
    const double* g = t.grad();
    const double wd = params[i].decay ? cfg.weight_decay : 0.0;
    double* vel = nullptr;
    if (cfg.momentum > 0.0) {
      auto& buf = (*velocity)[i];
      if (buf.empty()) buf.assign(static_cast<size_t>(n), 0.0);
      vel = buf.data();
    }
    for (int64_t j = 0; j < n; ++j) {
      double gj = g[j] + wd * p[j];
      if (!std::isfinite(gj))
        throw NumericError("non-finite gradient in " + params[i].name +
                           " at step " + std::to_string(step_index));
      if (vel) {
        vel[j] = cfg.momentum * vel[j] + gj;
        gj = vel[j];
      }
      p[j] -= cfg.lr * gj;
    }
  }
}

namespace {

/// Feature cache for utterances whose training crop covers the whole
/// waveform (the features are then deterministic per utterance).
class FeatureCache {
 public:
  bool lookup(size_t key, SpectrogramFeatures* out) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = map_.find(key);
    if (it == map_.end()) return false;
    *out = it->second;
    return true;
  }
  void insert(size_t key, const SpectrogramFeatures& feats) {
    std::lock_guard<std::mutex> lock(mutex_);
    map_.emplace(key, feats);
  }

 private:
  mutable std::mutex mutex_;
  std::unordered_map<size_t, SpectrogramFeatures> map_;
};

struct BatchItem {
  size_t corpus_index;
  bool needs_crop;
  uint64_t crop_seed;
};

double epoch_wall_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

TrainResult train_loop(TarnetModel& model, const Corpus& train_split,
                       const Corpus& val_split, const TrainConfig& cfg,
                       const FrontendConfig& fe, const std::string& out_dir,
                       const std::map<std::string, std::string>& run_meta,
                       const std::map<std::string, std::string>* resume_meta,
                       std::ostream* progress) {
  if (train_split.utterances.empty()) throw UsageError("train_loop: empty train split");
  if (val_split.utterances.empty()) throw UsageError("train_loop: empty val split");
  if (cfg.batch_size < 1) throw UsageError("train_loop: batch_size must be >= 1");
  if (cfg.lr <= 0.0) throw UsageError("train_loop: lr must be > 0");

  const int jobs = resolve_jobs(cfg.jobs);
  Rng rng = Rng::stream(cfg.seed, "train");
  int start_epoch = 0;
  int64_t step = 0;
  double best_val = -1.0;
  if (resume_meta) {
    auto get = [resume_meta](const char* key) {
      auto it = resume_meta->find(key);
      if (it == resume_meta->end())
        throw DataError(std::string("resume checkpoint lacks meta key ") + key);
      return it->second;
    };
    start_epoch = std::stoi(get("train.epoch"));
    step = std::stoll(get("train.step"));
    best_val = std::stod(get("train.best_val_top1"));
    rng.restore_hex(get("train.rng"));
  }

  // Worker replicas share the batch; replica 0 is the master model itself.
  std::vector<TarnetModel> replicas;
  Rng scratch(0);
  for (int r = 1; r < jobs; ++r) {
    replicas.emplace_back(model.config(), scratch);
    replicas.back().copy_parameters_from(model);
  }

  FeatureCache cache;
  std::vector<std::vector<double>> velocity(model.parameters().size());

  std::ofstream epoch_csv;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const std::string log_path = out_dir + "/epochs.csv";
    const bool fresh = !std::filesystem::exists(log_path) ||
                       std::filesystem::file_size(log_path) == 0 || !resume_meta;
    epoch_csv.open(log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!epoch_csv) throw DataError("cannot write epoch log: " + log_path);
    if (fresh) epoch_csv << "epoch,train_loss,val_top1,val_top5,wall_seconds\n";
  }

  auto process_item = [&](TarnetModel& worker, const BatchItem& item,
                          double inv_batch, double* loss_out, bool* hit_out) {
    const Utterance& u = train_split.utterances[item.corpus_index];
    SpectrogramFeatures feats;
    if (!item.needs_crop && cache.lookup(item.corpus_index, &feats)) {
      // cached full-length features
    } else {
      Waveform w = load_waveform(u);
      if (item.needs_crop) {
        Rng crop_rng(item.crop_seed);
        w = crop(w, cfg.crop_seconds, crop_rng);
      }
      feats = log_mel(w, fe);
      if (!item.needs_crop) cache.insert(item.corpus_index, feats);
    }
    Tape tape;
    const Tensor logits = worker.forward(tape, feats);
    const Tensor loss = ops::cross_entropy(tape, logits, u.speaker);
    tape.backward(loss, inv_batch);
    *loss_out = loss.item();
    int best = 0;
    for (int64_t j = 1; j < logits.numel(); ++j)
      if (logits.data()[j] > logits.data()[best]) best = static_cast<int>(j);
    *hit_out = best == u.speaker;
  };

  TrainResult result;
  result.best_val_top1 = std::max(best_val, 0.0);
  result.steps = step;

  std::vector<size_t> order(train_split.utterances.size());
  std::iota(order.begin(), order.end(), size_t{0});

  const ParamList master_params = model.parameters();

  auto save_state = [&](int epochs_done, bool also_best) {
    std::map<std::string, std::string> meta = run_meta;
    meta["train.epoch"] = std::to_string(epochs_done);
    meta["train.step"] = std::to_string(step);
    std::ostringstream os;
    os.precision(17);
    os << best_val;
    meta["train.best_val_top1"] = os.str();
    meta["train.rng"] = rng.state_hex();
    save_checkpoint(out_dir + "/last.ckpt", model, meta);
    if (also_best) save_checkpoint(out_dir + "/best.ckpt", model, meta);
  };

  if (!out_dir.empty() && !resume_meta) save_state(0, false);

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto wall_start = std::chrono::steady_clock::now();
    // Shuffle from the identity each epoch so a resumed run sees the same
    // batch order as an uninterrupted one.
    std::iota(order.begin(), order.end(), size_t{0});
    rng.shuffle(order);

    double loss_sum = 0.0;
    int64_t loss_count = 0, hit_count = 0;

    for (size_t batch_start = 0; batch_start < order.size();
         batch_start += static_cast<size_t>(cfg.batch_size)) {
      const size_t batch_end =
          std::min(order.size(), batch_start + static_cast<size_t>(cfg.batch_size));
      const int64_t batch = static_cast<int64_t>(batch_end - batch_start);

      // Crop randomness is drawn on this thread in batch order, so results
      // do not depend on worker count or scheduling.
      std::vector<BatchItem> items(static_cast<size_t>(batch));
      for (int64_t i = 0; i < batch; ++i) {
        BatchItem& item = items[static_cast<size_t>(i)];
        item.corpus_index = order[batch_start + static_cast<size_t>(i)];
        const Utterance& u = train_split.utterances[item.corpus_index];
        const int64_t have =
            static_cast<int64_t>(std::llround(u.duration_seconds * u.sample_rate));
        const int64_t want =
            static_cast<int64_t>(std::llround(cfg.crop_seconds * u.sample_rate));
        item.needs_crop = want != have;
        item.crop_seed = item.needs_crop ? rng.next_u64() : 0;
      }

      for (auto& r : replicas) {
        r.copy_parameters_from(model);
        r.zero_grads();
      }
      model.zero_grads();

      std::vector<double> losses(static_cast<size_t>(batch), 0.0);
      std::vector<char> hits(static_cast<size_t>(batch), 0);
      std::exception_ptr failure;
      std::mutex failure_mutex;
      parallel_chunks(batch, jobs, [&](int chunk, int64_t begin, int64_t end) {
        TarnetModel& worker = chunk == 0 ? model : replicas[static_cast<size_t>(chunk - 1)];
        try {
          for (int64_t i = begin; i < end; ++i) {
            bool hit = false;
            process_item(worker, items[static_cast<size_t>(i)],
                         1.0 / static_cast<double>(batch),
                         &losses[static_cast<size_t>(i)], &hit);
            hits[static_cast<size_t>(i)] = hit ? 1 : 0;
          }
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
      if (failure) std::rethrow_exception(failure);

      // Merge replica gradients into the master in replica order.
      for (auto& r : replicas) {
        const ParamList rp = r.parameters();
        for (size_t i = 0; i < master_params.size(); ++i) {
          Tensor dst = master_params[i].tensor;
          const Tensor src = rp[i].tensor;
          double* gd = dst.grad();
          const double* gs = src.grad();
          for (int64_t j = 0; j < dst.numel(); ++j) gd[j] += gs[j];
        }
      }

      double batch_loss = 0.0;
      for (double l : losses) batch_loss += l;
      batch_loss /= static_cast<double>(batch);
      if (!std::isfinite(batch_loss))
        throw NumericError("non-finite loss at step " + std::to_string(step));
      loss_sum += batch_loss * static_cast<double>(batch);
      loss_count += batch;
      for (char h : hits) hit_count += h;

      sgd_step(master_params, cfg, &velocity, step);
      ++step;
    }

    EvalReport val = evaluate_model(model, val_split, fe, jobs);

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(loss_count);
    stats.train_top1 = static_cast<double>(hit_count) / static_cast<double>(loss_count);
    stats.val_top1 = val.top1;
    stats.val_top5 = val.top5;
    stats.wall_seconds = epoch_wall_seconds(wall_start);
    result.log.push_back(stats);
    result.steps = step;

    const bool improved = val.top1 > best_val;
    if (improved) best_val = val.top1;
    result.best_val_top1 = std::max(best_val, 0.0);

    if (progress) {
      progress->precision(4);
      *progress << "epoch " << stats.epoch << "  loss " << std::fixed
                << stats.train_loss << "  train_top1 " << stats.train_top1
                << "  val_top1 " << stats.val_top1 << "  val_top5 "
                << stats.val_top5 << "  (" << stats.wall_seconds << " s)"
                << std::endl;
    }

    if (!out_dir.empty()) {
      epoch_csv.precision(9);
      epoch_csv << stats.epoch << "," << stats.train_loss << "," << stats.val_top1
                << "," << stats.val_top5 << "," << stats.wall_seconds << "\n";
      epoch_csv.flush();
      save_state(epoch + 1, improved);
    }

    if (cfg.early_stop_train_top1 > 0.0 &&
        stats.train_top1 >= cfg.early_stop_train_top1 &&
        (cfg.early_stop_val_top1 <= 0.0 || stats.val_top1 >= cfg.early_stop_val_top1))
      break;
  }
  return result;
}

}  // namespace tarnet
