#include "tarnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "tarnet/errors.hpp"

namespace tarnet {

GradcheckOptions::GradcheckOptions() : model(tiny_model_config()) {}

ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.num_mels = 8;
  cfg.encoder.bottleneck = 4;
  cfg.encoder.hidden = 8;
  cfg.encoder.kernel = 3;
  cfg.encoder.dilations_short = {1, 2};
  cfg.encoder.dilations_mid = {4};
  cfg.encoder.dilations_long = {8};
  cfg.encoder.repeats = 1;
  cfg.encoder.fused = 8;
  cfg.pooling = PoolKind::kAttentiveStats;
  cfg.attention_hidden = 8;
  cfg.embedding = 8;
  cfg.num_speakers = 3;
  return cfg;
}

std::vector<std::string> GradcheckReport::failing() const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (!(e.max_rel_err < tolerance)) out.push_back(e.name);
  return out;
}

std::string GradcheckReport::table() const {
  std::ostringstream os;
  for (const auto& e : entries) {
    os << (e.max_rel_err < tolerance ? "ok   " : "FAIL ") << e.name;
    for (size_t i = e.name.size(); i < 44; ++i) os << ' ';
    os.precision(3);
    os << std::scientific << e.max_rel_err << "\n";
  }
  os << "max relative error: " << std::scientific << max_rel_err << " (tolerance "
     << tolerance << ")\n";
  return os.str();
}

namespace {

double rel_err(double a, double b) {
  const double denom = std::max({1e-8, std::abs(a), std::abs(b)});
  return std::abs(a - b) / denom;
}

/// Central differences cannot resolve a derivative below the rounding noise
/// of the two function evaluations (~eps * |f| / period). Differences under
/// this bound are measurement zeros (e.g. the attention bias, whose gradient
/// vanishes exactly because softmax removes per-channel constants), not
/// disagreements: a genuinely broken backward rule sits orders of magnitude
/// above it.
double fd_noise_floor(double f_scale, double h) {
  return 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, f_scale) /
         (2.0 * h);
}

double fd_rel_err(double analytic, double fd, double f_scale, double h) {
  if (std::abs(analytic - fd) <= fd_noise_floor(f_scale, h)) return 0.0;
  return rel_err(analytic, fd);
}

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

/// Values bounded away from zero, for ops with a kink at the origin.
Tensor random_tensor_off_origin(std::vector<int64_t> shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (int64_t i = 0; i < t.numel(); ++i) {
    const double u = rng.uniform(-1.0, 1.0);
    t.data()[i] = (u < 0.0 ? -0.1 : 0.1) + u;
  }
  return t;
}

using GraphFn = std::function<Tensor(Tape&, std::vector<Tensor>&)>;

/// Max relative error between analytic and central-difference gradients of
/// a scalar-valued graph over every element of every input.
double check_graph(const GraphFn& graph, std::vector<Tensor>& inputs, double h) {
  for (auto& t : inputs) t.zero_grad();
  Tape tape;
  Tensor value = graph(tape, inputs);
  tape.backward(value);

  auto eval = [&graph, &inputs]() {
    Tape no_grad(Tape::Mode::kNoGrad);
    return graph(no_grad, inputs).item();
  };

  double worst = 0.0;
  for (auto& t : inputs) {
    for (int64_t i = 0; i < t.numel(); ++i) {
      const double saved = t.data()[i];
      t.data()[i] = saved + h;
      const double up = eval();
      t.data()[i] = saved - h;
      const double down = eval();
      t.data()[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, fd_rel_err(t.grad()[i], fd,
                                         std::max(std::abs(up), std::abs(down)), h));
    }
  }
  return worst;
}

/// Reduces any tensor to a scalar with fixed random weights so every output
/// element influences the checked value.
Tensor weighted_sum(Tape& tape, const Tensor& x, const Tensor& weights) {
  return ops::sum_all(tape, ops::mul(tape, x, weights));
}

void run_op_sweep(Rng& rng, double h, std::vector<GradcheckEntry>& entries) {
  auto probe = [&rng](std::vector<int64_t> shape) {
    Tensor w = random_tensor(std::move(shape), rng);
    w.set_requires_grad(false);
    return w;
  };
  auto push = [&entries, h](const char* name, const GraphFn& fn,
                            std::vector<Tensor> inputs) {
    entries.push_back({name, check_graph(fn, inputs, h)});
  };

  {
    Tensor w = probe({3, 4});
    push("op.add",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::add(t, in[0], in[1]), w);
         },
         {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
    push("op.sub",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::sub(t, in[0], in[1]), w);
         },
         {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
    push("op.mul",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::mul(t, in[0], in[1]), w);
         },
         {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
    push("op.neg",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::neg(t, in[0]), w);
         },
         {random_tensor({3, 4}, rng)});
    push("op.sadd",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::sadd(t, in[0], in[1]), w);
         },
         {random_tensor({3, 4}, rng), random_tensor({1}, rng)});
    push("op.smul",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::smul(t, in[0], in[1]), w);
         },
         {random_tensor({3, 4}, rng), random_tensor({1}, rng)});
    push("op.scalar_add",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::scalar_add(t, in[0], 0.7), w);
         },
         {random_tensor({3, 4}, rng)});
    push("op.scalar_mul",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::scalar_mul(t, in[0], -1.3), w);
         },
         {random_tensor({3, 4}, rng)});
    push("op.row_add",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::row_add(t, in[0], in[1]), w);
         },
         {random_tensor({3, 4}, rng), random_tensor({3}, rng)});
    push("op.row_mul",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::row_mul(t, in[0], in[1]), w);
         },
         {random_tensor({3, 4}, rng), random_tensor({3}, rng)});
    push("op.tile_cols",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::tile_cols(t, in[0], 4), w);
         },
         {random_tensor({3}, rng)});
    push("op.transpose",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::transpose(t, ops::transpose(t, in[0])), w);
         },
         {random_tensor({3, 4}, rng)});
    push("op.reshape",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::reshape(t, in[0], {3, 4}), w);
         },
         {random_tensor({12}, rng)});
  }
  {
    Tensor w = probe({3, 5});
    push("op.matmul",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::matmul(t, in[0], in[1]), w);
         },
         {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng)});
    push("op.conv1x1",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::conv1x1(t, in[0], in[1], in[2]), w);
         },
         {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng),
          random_tensor({3}, rng)});
  }
  {
    Tensor w = probe({3});
    push("op.matmul_vec",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::matmul(t, in[0], in[1]), w);
         },
         {random_tensor({3, 4}, rng), random_tensor({4}, rng)});
  }
  {
    Tensor w = probe({5, 3});
    push("op.concat_rows",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::concat(t, {in[0], in[1]}, 0), w);
         },
         {random_tensor({2, 3}, rng), random_tensor({3, 3}, rng)});
  }
  {
    Tensor w = probe({2, 5});
    push("op.concat_cols",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::concat(t, {in[0], in[1]}, 1), w);
         },
         {random_tensor({2, 2}, rng), random_tensor({2, 3}, rng)});
  }
  {
    Tensor w = probe({2, 2});
    push("op.slice_rows",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::slice(t, in[0], 0, 1, 3), w);
         },
         {random_tensor({4, 2}, rng)});
    push("op.slice_cols",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::slice(t, in[0], 1, 0, 2), w);
         },
         {random_tensor({2, 4}, rng)});
  }
  {
    Tensor w = probe({3, 4});
    push("op.exp",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::exp(t, in[0]), w);
         },
         {random_tensor({3, 4}, rng)});
    push("op.tanh",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::tanh(t, in[0]), w);
         },
         {random_tensor({3, 4}, rng)});
    push("op.log",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::log(t, in[0]), w);
         },
         {random_tensor({3, 4}, rng, 0.5, 2.0)});
    push("op.sqrt",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::sqrt(t, in[0]), w);
         },
         {random_tensor({3, 4}, rng, 0.5, 2.0)});
    push("op.reciprocal",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::reciprocal(t, in[0]), w);
         },
         {random_tensor({3, 4}, rng, 0.5, 2.0)});
    push("op.relu",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::relu(t, in[0]), w);
         },
         {random_tensor_off_origin({3, 4}, rng)});
    push("op.clamp_min",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::clamp_min(t, in[0], 0.0), w);
         },
         {random_tensor_off_origin({3, 4}, rng)});
    push("op.prelu",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::prelu(t, in[0], in[1]), w);
         },
         {random_tensor_off_origin({3, 4}, rng), random_tensor({3}, rng, 0.1, 0.4)});
    push("op.softmax_cols",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::softmax_cols(t, in[0]), w);
         },
         {random_tensor({3, 4}, rng)});
    push("op.gln_norm",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::gln_norm(t, in[0], 1e-8), w);
         },
         {random_tensor({3, 4}, rng)});
    push("op.depthwise_conv_d1",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::depthwise_conv(t, in[0], in[1], in[2], 1), w);
         },
         {random_tensor({3, 4}, rng), random_tensor({3, 3}, rng),
          random_tensor({3}, rng)});
  }
  {
    Tensor w = probe({3, 9});
    push("op.depthwise_conv_d2",
         [w](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::depthwise_conv(t, in[0], in[1], in[2], 2), w);
         },
         {random_tensor({3, 9}, rng), random_tensor({3, 3}, rng),
          random_tensor({3}, rng)});
  }
  {
    Tensor w4 = probe({4});
    push("op.softmax",
         [w4](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::softmax(t, in[0]), w4);
         },
         {random_tensor({4}, rng)});
  }
  {
    Tensor w3 = probe({3});
    push("op.sum_cols",
         [w3](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::sum_cols(t, in[0]), w3);
         },
         {random_tensor({3, 4}, rng)});
    push("op.mean_cols",
         [w3](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::mean_cols(t, in[0]), w3);
         },
         {random_tensor({3, 4}, rng)});
    push("op.var_cols",
         [w3](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::var_cols(t, in[0]), w3);
         },
         {random_tensor({3, 4}, rng)});
    push("op.amax_cols",
         [w3](Tape& t, std::vector<Tensor>& in) {
           return weighted_sum(t, ops::amax_cols(t, in[0]), w3);
         },
         {random_tensor_off_origin({3, 4}, rng)});
  }
  push("op.sum_all",
       [](Tape& t, std::vector<Tensor>& in) { return ops::sum_all(t, in[0]); },
       {random_tensor({3, 4}, rng)});
  push("op.mean_all",
       [](Tape& t, std::vector<Tensor>& in) { return ops::mean_all(t, in[0]); },
       {random_tensor({3, 4}, rng)});
  push("op.cross_entropy",
       [](Tape& t, std::vector<Tensor>& in) {
         return ops::cross_entropy(t, in[0], 1);
       },
       {random_tensor({4}, rng)});
}

void randomize_parameters(const TarnetModel& model, Rng& rng) {
  // Generic weights for derivative checking: the training-time zero
  // initializations would leave whole layers with vacuous gradients.
  for (const auto& p : model.parameters()) {
    Tensor t = p.tensor;
    const bool is_gamma = p.name.size() > 6 && p.name.rfind(".gamma") == p.name.size() - 6;
    const bool is_slope = p.name.size() > 6 && p.name.rfind(".slope") == p.name.size() - 6;
    for (int64_t i = 0; i < t.numel(); ++i) {
      if (is_gamma)
        t.data()[i] = rng.uniform(0.75, 1.25);
      else if (is_slope)
        t.data()[i] = rng.uniform(0.1, 0.4);
      else
        t.data()[i] = rng.uniform(-0.5, 0.5);
    }
  }
}

void run_model_sweep(const GradcheckOptions& opts,
                     std::vector<GradcheckEntry>& entries) {
  Rng rng = Rng::stream(opts.seed, "gradcheck");
  TarnetModel model(opts.model, rng);
  randomize_parameters(model, rng);
  model.set_gln_backward_corruption(opts.break_gln);

  SpectrogramFeatures input{random_tensor({opts.model.num_mels, opts.frames}, rng)};
  input.values.set_requires_grad(false);
  const int label = 1;

  model.zero_grads();
  {
    Tape tape;
    Tensor loss = ops::cross_entropy(tape, model.forward(tape, input), label);
    tape.backward(loss);
  }
  auto eval = [&model, &input, label]() {
    Tape tape(Tape::Mode::kNoGrad);
    return ops::cross_entropy(tape, model.forward(tape, input), label).item();
  };

  std::map<std::string, double> per_layer;
  for (const auto& p : model.parameters()) {
    Tensor t = p.tensor;
    const std::string layer = p.name.substr(0, p.name.rfind('.'));
    double& worst = per_layer[layer];
    for (int64_t i = 0; i < t.numel(); ++i) {
      const double saved = t.data()[i];
      t.data()[i] = saved + opts.step;
      const double up = eval();
      t.data()[i] = saved - opts.step;
      const double down = eval();
      t.data()[i] = saved;
      const double fd = (up - down) / (2.0 * opts.step);
      worst = std::max(worst, fd_rel_err(t.grad()[i], fd,
                                         std::max(std::abs(up), std::abs(down)),
                                         opts.step));
    }
  }
  for (const auto& [layer, err] : per_layer) entries.push_back({layer, err});
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& opts) {
  GradcheckReport report;
  report.tolerance = opts.tolerance;
  Rng op_rng = Rng::stream(opts.seed, "gradcheck-ops");
  run_op_sweep(op_rng, opts.step, report.entries);
  run_model_sweep(opts, report.entries);
  for (const auto& e : report.entries)
    report.max_rel_err = std::max(report.max_rel_err, e.max_rel_err);
  return report;
}

}  // namespace tarnet
