#include "restorer/nn/tensor.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace restorer::nn {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, ", ")); }

}  // namespace restorer::nn
