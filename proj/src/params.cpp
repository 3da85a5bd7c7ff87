#include "fedlab/params.hpp"

#include <cmath>

#include "fedlab/errors.hpp"

namespace fedlab {

std::shared_ptr<const Layout> Layout::build(
    std::vector<std::pair<std::string, std::vector<int>>> tensors) {
  auto layout = std::make_shared<Layout>();
  std::size_t offset = 0;
  for (auto& [name, shape] : tensors) {
    for (const auto& seg : layout->segments_)
      if (seg.name == name) throw ConfigError("duplicate segment name: " + name);
    Segment seg;
    seg.name = name;
    seg.shape = shape;
    seg.offset = offset;
    seg.size = static_cast<std::size_t>(shape_size(shape));
    offset += seg.size;
    layout->segments_.push_back(std::move(seg));
  }
  layout->total_ = offset;
  return layout;
}

const Segment& Layout::find(std::string_view name) const {
  for (const auto& seg : segments_)
    if (seg.name == name) return seg;
  throw ConfigError("no segment named '" + std::string(name) + "' in layout");
}

bool Layout::operator==(const Layout& other) const {
  if (total_ != other.total_ || segments_.size() != other.segments_.size()) return false;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const Segment& a = segments_[i];
    const Segment& b = other.segments_[i];
    if (a.name != b.name || a.shape != b.shape || a.offset != b.offset || a.size != b.size)
      return false;
  }
  return true;
}

bool same_layout(const LayoutPtr& a, const LayoutPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return *a == *b;
}

ParameterVector ParameterVector::zeros(LayoutPtr layout) {
  ParameterVector pv;
  pv.values.assign(layout->total(), 0.0f);
  pv.layout = std::move(layout);
  return pv;
}

Tensor ParameterVector::segment_tensor(const Segment& seg) const {
  Tensor t;
  t.shape = seg.shape;
  t.data.assign(values.begin() + static_cast<std::ptrdiff_t>(seg.offset),
                values.begin() + static_cast<std::ptrdiff_t>(seg.offset + seg.size));
  return t;
}

void ParameterVector::set_segment(const Segment& seg, const Tensor& t) {
  if (static_cast<std::size_t>(t.size()) != seg.size)
    throw ConfigError("segment '" + seg.name + "' expects " + std::to_string(seg.size) +
                      " values, got " + std::to_string(t.size()));
  std::copy(t.data.begin(), t.data.end(),
            values.begin() + static_cast<std::ptrdiff_t>(seg.offset));
}

Gradient Gradient::zeros(LayoutPtr layout) {
  Gradient g;
  g.values.assign(layout->total(), 0.0f);
  g.layout = std::move(layout);
  return g;
}

bool Gradient::all_finite() const {
  for (float v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace fedlab
