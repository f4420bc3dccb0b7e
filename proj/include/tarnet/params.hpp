#pragma once

#include <string>
#include <vector>

#include "tarnet/tensor.hpp"

namespace tarnet {

/// A named trainable tensor. `decay` marks participation in weight decay;
/// biases and normalization affine parameters are exempt.
struct Param {
  std::string name;
  Tensor tensor;
  bool decay = true;
};

using ParamList = std::vector<Param>;

}  // namespace tarnet
