#pragma once

#include <string>
#include <vector>

#include "tarnet/model.hpp"

namespace tarnet {

struct GradcheckOptions {
  ModelConfig model;   // defaults to tiny_model_config()
  int frames = 12;
  uint64_t seed = 7;
  double step = 1e-5;       // central-difference step
  double tolerance = 1e-4;  // max relative error
  bool break_gln = false;   // negative control: corrupt the gLN backward rule

  GradcheckOptions();
};

/// Small model used for fast end-to-end derivative verification.
ModelConfig tiny_model_config();

struct GradcheckEntry {
  std::string name;  // primitive op or model layer
  double max_rel_err = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_rel_err = 0.0;
  double tolerance = 1e-4;

  bool passed() const { return max_rel_err < tolerance; }
  std::vector<std::string> failing() const;
  std::string table() const;
};

/// Checks every analytic gradient against central finite differences:
/// first each tensor primitive on small random operands, then every
/// parameter of the tiny model through the full forward pass and loss.
/// Relative error uses max(|analytic|, |numeric|) floored at 1e-8.
GradcheckReport run_gradcheck(const GradcheckOptions& opts);

}  // namespace tarnet
