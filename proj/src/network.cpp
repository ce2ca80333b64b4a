#include "mazelab/network.hpp"

namespace mazelab {

std::vector<NetworkSpec::Plane> NetworkSpec::planes() const {
  std::vector<Plane> out{{height, width, channels}};
  for (const ConvSpec& c : conv) {
    const Plane& p = out.back();
    out.push_back({(p.height - c.kernel) / c.stride + 1, (p.width - c.kernel) / c.stride + 1, c.filters});
  }
  return out;
}

void NetworkSpec::validate() const {
  if (height <= 0 || width <= 0 || channels <= 0) throw ShapeError("network input dimensions must be positive");
  if (actions != 4) throw ShapeError("the policy head must have exactly 4 action logits");
  if (hidden <= 0) throw ShapeError("hidden width must be positive");
  int h = height;
  int w = width;
  for (const ConvSpec& c : conv) {
    if (c.filters <= 0 || c.kernel <= 0 || c.stride <= 0) throw ShapeError("conv layer parameters must be positive");
    if (c.kernel > h || c.kernel > w) throw ShapeError("conv kernel larger than its input plane");
    h = (h - c.kernel) / c.stride + 1;
    w = (w - c.kernel) / c.stride + 1;
  }
}

std::vector<TensorInfo> parameter_layout(const NetworkSpec& spec) {
  std::vector<TensorInfo> out;
  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols) {
    out.push_back({std::move(name), rows, cols, offset});
    offset += static_cast<std::size_t>(rows) * cols;
  };
  const auto planes = spec.planes();
  for (std::size_t l = 0; l < spec.conv.size(); ++l) {
    const auto& c = spec.conv[l];
    add("conv" + std::to_string(l) + ".weight", c.kernel * c.kernel * planes[l].channels, c.filters);
    add("conv" + std::to_string(l) + ".bias", 1, c.filters);
  }
  add("dense.weight", planes.back().size(), spec.hidden);
  add("dense.bias", 1, spec.hidden);
  add("policy.weight", spec.hidden, spec.actions);
  add("policy.bias", 1, spec.actions);
  add("value.weight", spec.hidden, 1);
  add("value.bias", 1, 1);
  return out;
}

}  // namespace mazelab
