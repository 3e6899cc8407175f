#pragma once

#include <cstddef>
#include <span>

namespace ca {

// Sample provider for training and evaluation. Implementations fill one
// image row and its mask row ([0,1] floats, H*W each) per index; the loops
// above assemble NCHW batches from them.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual std::size_t size() const = 0;
  virtual int height() const = 0;
  virtual int width() const = 0;
  virtual void sample(std::size_t index, std::span<float> image, std::span<float> mask) const = 0;
};

}  // namespace ca
