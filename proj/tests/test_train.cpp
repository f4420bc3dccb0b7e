#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fd_harness.hpp"
#include "tarnet/errors.hpp"
#include "tarnet/train.hpp"

using namespace tarnet;

namespace {

ModelConfig toy_model_config(int speakers) {
  ModelConfig cfg;
  cfg.num_mels = 80;
  cfg.encoder.bottleneck = 4;
  cfg.encoder.hidden = 8;
  cfg.encoder.dilations_short = {1, 2};
  cfg.encoder.dilations_mid = {4};
  cfg.encoder.dilations_long = {8};
  cfg.encoder.repeats = 1;
  cfg.encoder.fused = 8;
  cfg.attention_hidden = 8;
  cfg.embedding = 8;
  cfg.num_speakers = speakers;
  return cfg;
}

struct ToyTask {
  Corpus train;
  Corpus val;
};

ToyTask toy_task(uint64_t seed) {
  Corpus corpus = synth_corpus(3, 6, 0.4, seed);
  SplitSpec spec;
  spec.train = 0.5;
  spec.val = 0.25;
  spec.test = 0.25;
  spec.seed = seed;
  assign_splits(corpus, spec);
  return {filter_split(corpus, Split::kTrain), filter_split(corpus, Split::kVal)};
}

std::vector<double> snapshot(const TarnetModel& model) {
  std::vector<double> out;
  for (const auto& p : model.parameters())
    out.insert(out.end(), p.tensor.data(), p.tensor.data() + p.tensor.numel());
  return out;
}

}  // namespace

TEST_CASE("train: cross entropy of uniform logits is ln K") {
  Tape tape;
  for (int k : {2, 5, 10}) {
    Tensor logits = Tensor::full({k}, 0.37);
    CHECK(ops::cross_entropy(tape, logits, k - 1).item() ==
          doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-12));
  }
}

TEST_CASE("train: cross entropy of a confident correct prediction") {
  Tape tape;
  Tensor logits = Tensor::from({2}, {10.0, -10.0});
  CHECK(ops::cross_entropy(tape, logits, 0).item() ==
        doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-6));
  CHECK(ops::cross_entropy(tape, logits, 0).item() == doctest::Approx(2.061e-9).epsilon(1e-3));
}

TEST_CASE("train: batch cross entropy averages and differentiates") {
  Rng rng(81);
  std::vector<Tensor> logits = {fd::random_tensor({3}, rng), fd::random_tensor({3}, rng)};
  std::vector<int> labels = {0, 2};
  {
    Tape tape;
    const double mean = batch_cross_entropy(tape, logits, labels).item();
    const double a = ops::cross_entropy(tape, logits[0], 0).item();
    const double b = ops::cross_entropy(tape, logits[1], 2).item();
    CHECK(mean == doctest::Approx(0.5 * (a + b)).epsilon(1e-12));
  }
  const double err = fd::max_rel_err(
      [&labels](Tape& t, std::vector<Tensor>& in) {
        return batch_cross_entropy(t, in, labels);
      },
      logits);
  CHECK(err < 1e-4);
}

TEST_CASE("train: sgd update rule") {
  TrainConfig cfg;
  cfg.lr = 0.001;
  cfg.weight_decay = 5e-4;

  SUBCASE("weight decay alone nudges a unit weight to 0.9999995") {
    Tensor p = Tensor::scalar(1.0, true);
    p.zero_grad();
    ParamList params = {{"w", p, true}};
    sgd_step(params, cfg, nullptr, 0);
    CHECK(p.item() == doctest::Approx(0.9999995).epsilon(1e-15));
  }

  SUBCASE("bias and normalization parameters are exempt from decay") {
    Tensor p = Tensor::scalar(1.0, true);
    p.zero_grad();
    ParamList params = {{"b", p, false}};
    sgd_step(params, cfg, nullptr, 0);
    CHECK(p.item() == 1.0);
  }

  SUBCASE("quadratic loss takes one analytic step") {
    cfg.weight_decay = 0.0;
    Tensor p = Tensor::scalar(1.0, true);
    p.zero_grad();
    Tape tape;
    Tensor loss = ops::scalar_mul(tape, ops::mul(tape, p, p), 0.5);
    tape.backward(loss);
    ParamList params = {{"w", p, true}};
    sgd_step(params, cfg, nullptr, 0);
    CHECK(p.item() == doctest::Approx(1.0 - cfg.lr).epsilon(1e-12));
  }

  SUBCASE("zero gradient and zero decay is a fixed point") {
    cfg.weight_decay = 0.0;
    Tensor p = Tensor::scalar(0.7, true);
    p.zero_grad();
    ParamList params = {{"w", p, true}};
    sgd_step(params, cfg, nullptr, 3);
    CHECK(p.item() == 0.7);
  }

  SUBCASE("non-finite gradients raise with the step index") {
    Tensor p = Tensor::scalar(1.0, true);
    p.zero_grad();
    p.grad()[0] = std::nan("");
    ParamList params = {{"w", p, true}};
    CHECK_THROWS_WITH_AS(sgd_step(params, cfg, nullptr, 17),
                         doctest::Contains("step 17"), NumericError);
  }
}

TEST_CASE("train: zero epochs returns the initial state untouched") {
  ToyTask task = toy_task(91);
  Rng rng = Rng::stream(91, "init");
  TarnetModel model(toy_model_config(3), rng);
  const std::vector<double> before = snapshot(model);

  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.batch_size = 4;
  cfg.crop_seconds = 0.4;
  TrainResult result = train_loop(model, task.train, task.val, cfg, FrontendConfig{}, "");
  CHECK(result.log.empty());
  CHECK(snapshot(model) == before);
}

TEST_CASE("train: fixed seed reproduces the loss trajectory") {
  ToyTask task = toy_task(92);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 3;
  cfg.crop_seconds = 0.3;
  cfg.lr = 0.01;
  cfg.seed = 5;

  std::vector<double> runs[2];
  for (int run = 0; run < 2; ++run) {
    Rng rng = Rng::stream(92, "init");
    TarnetModel model(toy_model_config(3), rng);
    TrainResult result = train_loop(model, task.train, task.val, cfg, FrontendConfig{}, "");
    for (const auto& e : result.log) runs[run].push_back(e.train_loss);
  }
  CHECK(runs[0] == runs[1]);
}

TEST_CASE("train: lr is required positive, but scaling to zero leaves params fixed") {
  ToyTask task = toy_task(93);
  Rng rng = Rng::stream(93, "init");
  TarnetModel model(toy_model_config(3), rng);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.lr = 0.0;
  CHECK_THROWS_AS(train_loop(model, task.train, task.val, cfg, FrontendConfig{}, ""),
                  UsageError);

  // lr = 0 at the optimizer level is the identity update.
  Tensor p = Tensor::scalar(0.4, true);
  p.zero_grad();
  p.grad()[0] = 123.0;
  TrainConfig zero;
  zero.lr = 0.0;  // only the loop validates positivity
  zero.weight_decay = 0.0;
  ParamList params = {{"w", p, true}};
  sgd_step(params, zero, nullptr, 0);
  CHECK(p.item() == 0.4);
}

TEST_CASE("train: short run lowers the loss on an easy task") {
  ToyTask task = toy_task(94);
  Rng rng = Rng::stream(94, "init");
  TarnetModel model(toy_model_config(3), rng);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 3;
  cfg.crop_seconds = 0.4;
  cfg.lr = 0.02;
  cfg.seed = 11;
  TrainResult result = train_loop(model, task.train, task.val, cfg, FrontendConfig{}, "");
  REQUIRE(result.log.size() == 10);
  const double first = result.log.front().train_loss;
  std::vector<double> later;
  for (size_t i = 1; i < result.log.size(); ++i) later.push_back(result.log[i].train_loss);
  std::sort(later.begin(), later.end());
  const double median = later[later.size() / 2];
  CHECK(median < first);
}

TEST_CASE("train: resume from a checkpoint reproduces the uninterrupted run") {
  namespace fs = std::filesystem;
  const std::string dir_a = (fs::temp_directory_path() / "tarnet_train_a").string();
  const std::string dir_b = (fs::temp_directory_path() / "tarnet_train_b").string();
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  ToyTask task = toy_task(95);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 3;
  cfg.crop_seconds = 0.3;
  cfg.lr = 0.01;
  cfg.seed = 21;

  Rng rng_a = Rng::stream(95, "init");
  TarnetModel uninterrupted(toy_model_config(3), rng_a);
  train_loop(uninterrupted, task.train, task.val, cfg, FrontendConfig{}, dir_a);

  TrainConfig two = cfg;
  two.epochs = 2;
  Rng rng_b = Rng::stream(95, "init");
  TarnetModel resumed(toy_model_config(3), rng_b);
  train_loop(resumed, task.train, task.val, two, FrontendConfig{}, dir_b);
  LoadedCheckpoint ckpt = load_checkpoint(dir_b + "/last.ckpt");
  CHECK(ckpt.meta.at("train.epoch") == "2");
  train_loop(ckpt.model, task.train, task.val, cfg, FrontendConfig{}, dir_b, {},
             &ckpt.meta);

  const std::vector<double> a = snapshot(uninterrupted);
  const std::vector<double> b = snapshot(ckpt.model);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);  // bitwise

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("train: worker count does not change the schedule") {
  ToyTask task = toy_task(96);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.crop_seconds = 0.3;
  cfg.lr = 0.01;
  cfg.seed = 31;

  // The crop/shuffle schedule must be identical across jobs; parameter sums
  // may differ only by float merge order.
  std::vector<double> losses[2];
  int jobs_list[2] = {1, 2};
  for (int i = 0; i < 2; ++i) {
    cfg.jobs = jobs_list[i];
    Rng rng = Rng::stream(96, "init");
    TarnetModel model(toy_model_config(3), rng);
    TrainResult result = train_loop(model, task.train, task.val, cfg, FrontendConfig{}, "");
    for (const auto& e : result.log) losses[i].push_back(e.train_loss);
  }
  REQUIRE(losses[0].size() == losses[1].size());
  for (size_t i = 0; i < losses[0].size(); ++i)
    CHECK(losses[0][i] == doctest::Approx(losses[1][i]).epsilon(1e-9));
}

TEST_CASE("train: empty splits are rejected") {
  ToyTask task = toy_task(97);
  Rng rng = Rng::stream(97, "init");
  TarnetModel model(toy_model_config(3), rng);
  TrainConfig cfg;
  Corpus empty;
  empty.speaker_names = task.train.speaker_names;
  CHECK_THROWS_AS(train_loop(model, empty, task.val, cfg, FrontendConfig{}, ""),
                  UsageError);
  CHECK_THROWS_AS(train_loop(model, task.train, empty, cfg, FrontendConfig{}, ""),
                  UsageError);
}
