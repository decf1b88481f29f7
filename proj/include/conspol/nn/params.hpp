#pragma once

#include <span>
#include <string>
#include <vector>

namespace conspol::nn {

/// A named, mutable view over one contiguous parameter (or gradient) block.
struct ParamBlock {
  std::string name;
  std::span<double> values;
};

/// Parameters and their gradients are exposed as parallel block lists so
/// optimizers and gradient checkers work on any model.
using ParamList = std::vector<ParamBlock>;

inline std::size_t total_size(const ParamList& list) {
  std::size_t n = 0;
  for (const auto& b : list) n += b.values.size();
  return n;
}

}  // namespace conspol::nn
