#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tarnet/config.hpp"
#include "tarnet/errors.hpp"
#include "tarnet/frontend.hpp"
#include "tarnet/gradcheck.hpp"
#include "tarnet/metrics.hpp"
#include "tarnet/model.hpp"

namespace py = pybind11;
using namespace tarnet;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_2d(const DoubleArray& arr, const char* what) {
  const py::buffer_info info = arr.request();
  if (info.ndim != 2) throw py::value_error(std::string(what) + " must be 2-D");
  const auto rows = static_cast<int64_t>(info.shape[0]);
  const auto cols = static_cast<int64_t>(info.shape[1]);
  const double* src = static_cast<const double*>(info.ptr);
  return Tensor::from({rows, cols}, std::vector<double>(src, src + rows * cols));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  if (t.rank() == 2) {
    py::array_t<double> out({t.rows(), t.cols()});
    std::copy(t.data(), t.data() + t.numel(), out.mutable_data());
    return out;
  }
  py::array_t<double> out(t.numel());
  std::copy(t.data(), t.data() + t.numel(), out.mutable_data());
  return out;
}

Waveform waveform_from(const DoubleArray& samples, int sample_rate) {
  const py::buffer_info info = samples.request();
  if (info.ndim != 1) throw py::value_error("samples must be a 1-D array");
  const double* src = static_cast<const double*>(info.ptr);
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(src, src + info.shape[0]);
  return w;
}

FrontendConfig frontend_from_kwargs(int sample_rate, int num_mels) {
  FrontendConfig fe;
  fe.sample_rate = sample_rate;
  fe.num_mels = num_mels;
  return fe;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "TARNet speaker identification core (log-Mel frontend, multi-scale "
            "TCN encoder with attentive statistics pooling, metric suite)";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("hz_to_mel", &hz_to_mel, py::arg("hz"));
  m.def("mel_to_hz", &mel_to_hz, py::arg("mel"));

  m.def(
      "log_mel",
      [](const DoubleArray& samples, int sample_rate, int num_mels) {
        const FrontendConfig fe = frontend_from_kwargs(sample_rate, num_mels);
        const SpectrogramFeatures feats = log_mel(waveform_from(samples, sample_rate), fe);
        return array_from_tensor(feats.values);
      },
      py::arg("samples"), py::arg("sample_rate") = 16000, py::arg("num_mels") = 80,
      "Log-Mel spectrogram, shape (num_mels, num_frames)");

  m.def(
      "synth_utterance",
      [](double f0, std::vector<double> formants, std::vector<double> bandwidths,
         double jitter, double duration, int sample_rate, uint64_t seed) {
        if (formants.size() != 3 || bandwidths.size() != 3)
          throw py::value_error("formants and bandwidths must have 3 entries");
        SpeakerProfile p;
        p.f0_hz = f0;
        for (int i = 0; i < 3; ++i) {
          p.formants_hz[i] = formants[static_cast<size_t>(i)];
          p.bandwidths_hz[i] = bandwidths[static_cast<size_t>(i)];
        }
        p.jitter = jitter;
        const Waveform w = synth_utterance(p, duration, sample_rate, seed);
        py::array_t<double> out(static_cast<py::ssize_t>(w.samples.size()));
        std::copy(w.samples.begin(), w.samples.end(), out.mutable_data());
        return out;
      },
      py::arg("f0"), py::arg("formants"), py::arg("bandwidths"),
      py::arg("jitter") = 0.01, py::arg("duration") = 2.0,
      py::arg("sample_rate") = 16000, py::arg("seed") = 0,
      "Deterministic source-filter test utterance");

  m.def(
      "topk_accuracy",
      [](const std::vector<std::vector<double>>& scores, const std::vector<int>& labels,
         int k) { return topk_accuracy(scores, labels, k); },
      py::arg("scores"), py::arg("labels"), py::arg("k"));

  m.def(
      "weighted_prf",
      [](const std::vector<int>& truth, const std::vector<int>& pred) {
        const Prf prf = weighted_prf(truth, pred);
        return py::make_tuple(prf.precision, prf.recall, prf.f1);
      },
      py::arg("truth"), py::arg("pred"),
      "Support-weighted (precision, recall, f1)");

  m.def(
      "approx_randomization",
      [](const std::vector<double>& a, const std::vector<double>& b, int n_perm,
         uint64_t seed) {
        const ArResult r = approx_randomization(a, b, n_perm, seed);
        py::dict out;
        out["observed"] = r.observed;
        out["p_value"] = r.p_value;
        out["n_permutations"] = r.n_permutations;
        out["seed"] = r.seed;
        return out;
      },
      py::arg("scores_a"), py::arg("scores_b"), py::arg("n_perm") = 10000,
      py::arg("seed") = 0,
      "Paired approximate-randomization significance test");

  m.def(
      "receptive_field",
      [](const std::vector<int>& short_d, const std::vector<int>& mid_d,
         const std::vector<int>& long_d, int repeats, int kernel) {
        EncoderConfig cfg;
        cfg.dilations_short = short_d;
        cfg.dilations_mid = mid_d;
        cfg.dilations_long = long_d;
        cfg.repeats = repeats;
        cfg.kernel = kernel;
        return receptive_field(cfg);
      },
      py::arg("dilations_short") = std::vector<int>{1, 2},
      py::arg("dilations_mid") = std::vector<int>{4, 8},
      py::arg("dilations_long") = std::vector<int>{16, 32}, py::arg("repeats") = 3,
      py::arg("kernel") = 3, "Encoder receptive field in frames");

  m.def("gradcheck", [](uint64_t seed) {
    GradcheckOptions opts;
    opts.seed = seed;
    const GradcheckReport report = run_gradcheck(opts);
    return py::make_tuple(report.passed(), report.max_rel_err);
  }, py::arg("seed") = 7, "(passed, max relative error) of the derivative suite");

  py::class_<TarnetModel>(m, "Model")
      .def_static(
          "load",
          [](const std::string& path) {
            return new TarnetModel(std::move(load_checkpoint(path).model));
          },
          py::arg("path"), "Load a TARNET1 checkpoint")
      .def_static(
          "fresh",
          [](int num_mels, int num_speakers, uint64_t seed) {
            ModelConfig cfg;
            cfg.num_mels = num_mels;
            cfg.num_speakers = num_speakers;
            Rng rng = Rng::stream(seed, "init");
            return new TarnetModel(cfg, rng);
          },
          py::arg("num_mels") = 80, py::arg("num_speakers") = 10, py::arg("seed") = 0,
          "Freshly initialized model with the default architecture")
      .def("forward",
           [](const TarnetModel& model, const DoubleArray& features) {
             Tape tape(Tape::Mode::kNoGrad);
             const SpectrogramFeatures feats{tensor_from_2d(features, "features")};
             return array_from_tensor(model.forward(tape, feats));
           },
           py::arg("features"), "Logits for a (num_mels, frames) feature matrix")
      .def("embedding",
           [](const TarnetModel& model, const DoubleArray& features) {
             Tape tape(Tape::Mode::kNoGrad);
             const SpectrogramFeatures feats{tensor_from_2d(features, "features")};
             return array_from_tensor(model.embedding(tape, feats));
           },
           py::arg("features"), "Speaker embedding for a feature matrix")
      .def_property_readonly("num_params", &TarnetModel::count_params)
      .def_property_readonly("num_speakers",
                             [](const TarnetModel& m) { return m.config().num_speakers; })
      .def_property_readonly("receptive_field_frames", [](const TarnetModel& m) {
        return receptive_field(m.config().encoder);
      });
}
