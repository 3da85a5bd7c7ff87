#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedlab/tensor.hpp"

namespace fedlab {

// One named parameter tensor inside a flat vector.
struct Segment {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Immutable map from segment names to disjoint ranges covering [0, total).
class Layout {
 public:
  static std::shared_ptr<const Layout> build(
      std::vector<std::pair<std::string, std::vector<int>>> tensors);

  const std::vector<Segment>& segments() const { return segments_; }
  std::size_t total() const { return total_; }
  const Segment& find(std::string_view name) const;

  bool operator==(const Layout& other) const;

 private:
  std::vector<Segment> segments_;
  std::size_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const Layout>;

bool same_layout(const LayoutPtr& a, const LayoutPtr& b);

// Flat vector of all trainable weights of one model.
struct ParameterVector {
  LayoutPtr layout;
  std::vector<float> values;

  static ParameterVector zeros(LayoutPtr layout);

  Tensor segment_tensor(const Segment& seg) const;
  void set_segment(const Segment& seg, const Tensor& t);
};

// Flat gradient aligned to a ParameterVector layout.
struct Gradient {
  LayoutPtr layout;
  std::vector<float> values;

  static Gradient zeros(LayoutPtr layout);
  bool all_finite() const;
};

}  // namespace fedlab
