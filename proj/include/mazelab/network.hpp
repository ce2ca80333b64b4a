#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mazelab/errors.hpp"
#include "mazelab/rng.hpp"

namespace mazelab {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct ConvSpec {
  int filters = 16;
  int kernel = 3;
  int stride = 2;
  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

// Conv stack (valid padding, ReLU) -> dense ReLU -> {4 logits, 1 value}.
struct NetworkSpec {
  int height = 64;
  int width = 64;
  int channels = 3;
  std::vector<ConvSpec> conv = {{16, 3, 2}, {32, 3, 2}, {32, 3, 2}};
  int hidden = 256;
  int actions = 4;

  struct Plane {
    int height, width, channels;
    int size() const { return height * width * channels; }
  };
  // Plane entering each conv layer, plus the final one.
  std::vector<Plane> planes() const;
  int flat_features() const { return planes().back().size(); }
  int input_size() const { return height * width * channels; }
  void validate() const;
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct TensorInfo {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
  friend bool operator==(const TensorInfo&, const TensorInfo&) = default;
};

// Weight matrices are stored row-major (fan_in x fan_out), biases as 1 x fan_out.
std::vector<TensorInfo> parameter_layout(const NetworkSpec& spec);

template <typename Scalar>
struct Parameters {
  NetworkSpec spec;
  std::vector<TensorInfo> layout;
  Vector<Scalar> values;

  std::size_t count() const { return static_cast<std::size_t>(values.size()); }

  const TensorInfo& tensor(std::size_t i) const { return layout[i]; }
  Eigen::Map<const RowMatrix<Scalar>> matrix(std::size_t i) const {
    return {values.data() + layout[i].offset, layout[i].rows, layout[i].cols};
  }
  Eigen::Map<RowMatrix<Scalar>> matrix(std::size_t i) {
    return {values.data() + layout[i].offset, layout[i].rows, layout[i].cols};
  }

  template <typename Other>
  Parameters<Other> cast() const {
    return {spec, layout, values.template cast<Other>()};
  }
};

// He-normal hidden layers, zero biases, policy head scaled by 0.01 and value
// head by 1.0 relative to 1/sqrt(fan_in).
template <typename Scalar>
Parameters<Scalar> init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Parameters<Scalar> p{spec, parameter_layout(spec), {}};
  std::size_t total = 0;
  for (const auto& t : p.layout) total += t.size();
  p.values = Vector<Scalar>::Zero(static_cast<Eigen::Index>(total));

  CounterRng rng(derive_key(namespaced_seed("init", seed), 0));
  const std::size_t n_tensors = p.layout.size();
  for (std::size_t i = 0; i < n_tensors; i += 2) {
    const TensorInfo& w = p.layout[i];
    double scale = std::sqrt(2.0 / w.rows);
    if (i == n_tensors - 4) scale = 0.01 / std::sqrt(static_cast<double>(w.rows));
    if (i == n_tensors - 2) scale = 1.0 / std::sqrt(static_cast<double>(w.rows));
    CounterRng stream = rng.split(i);
    for (std::size_t k = 0; k < w.size(); ++k) p.values[static_cast<Eigen::Index>(w.offset + k)] = static_cast<Scalar>(scale * stream.normal());
  }
  return p;
}

// Per-layer activations kept for the backward pass.
template <typename Scalar>
struct ForwardCache {
  int batch = 0;
  std::vector<RowMatrix<Scalar>> patches;      // im2col input of each conv layer
  std::vector<RowMatrix<Scalar>> activations;  // post-ReLU output of each conv layer
  RowMatrix<Scalar> input;                     // (batch*H*W) x C, scaled to [0,1]
  RowMatrix<Scalar> hidden;                    // batch x hidden, post-ReLU
  RowMatrix<Scalar> logits;                    // batch x actions
  Vector<Scalar> values;                       // batch
};

namespace detail {

// Input rows are (n, y, x) with channels contiguous; patch columns are (ky, kx, c).
template <typename Scalar>
void im2col(const RowMatrix<Scalar>& in, int batch, const NetworkSpec::Plane& p, const ConvSpec& conv,
            const NetworkSpec::Plane& out_plane, RowMatrix<Scalar>& patches) {
  const int k = conv.kernel;
  const int c = p.channels;
  patches.resize(static_cast<Eigen::Index>(batch) * out_plane.height * out_plane.width,
                 static_cast<Eigen::Index>(k) * k * c);
  for (int n = 0; n < batch; ++n) {
    for (int oy = 0; oy < out_plane.height; ++oy) {
      for (int ox = 0; ox < out_plane.width; ++ox) {
        const Eigen::Index row = (static_cast<Eigen::Index>(n) * out_plane.height + oy) * out_plane.width + ox;
        Scalar* dst = patches.data() + row * patches.cols();
        for (int ky = 0; ky < k; ++ky) {
          const Eigen::Index src_row =
              (static_cast<Eigen::Index>(n) * p.height + oy * conv.stride + ky) * p.width + ox * conv.stride;
          const Scalar* src = in.data() + src_row * c;
          std::copy(src, src + static_cast<std::ptrdiff_t>(k) * c, dst + static_cast<std::ptrdiff_t>(ky) * k * c);
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const RowMatrix<Scalar>& dpatches, int batch, const NetworkSpec::Plane& p, const ConvSpec& conv,
            const NetworkSpec::Plane& out_plane, RowMatrix<Scalar>& din) {
  const int k = conv.kernel;
  const int c = p.channels;
  din = RowMatrix<Scalar>::Zero(static_cast<Eigen::Index>(batch) * p.height * p.width, c);
  for (int n = 0; n < batch; ++n) {
    for (int oy = 0; oy < out_plane.height; ++oy) {
      for (int ox = 0; ox < out_plane.width; ++ox) {
        const Eigen::Index row = (static_cast<Eigen::Index>(n) * out_plane.height + oy) * out_plane.width + ox;
        const Scalar* src = dpatches.data() + row * dpatches.cols();
        for (int ky = 0; ky < k; ++ky) {
          const Eigen::Index dst_row =
              (static_cast<Eigen::Index>(n) * p.height + oy * conv.stride + ky) * p.width + ox * conv.stride;
          Scalar* dst = din.data() + dst_row * c;
          const Scalar* s = src + static_cast<std::ptrdiff_t>(ky) * k * c;
          for (int i = 0; i < k * c; ++i) dst[i] += s[i];
        }
      }
    }
  }
}

}  // namespace detail

// Observations are HxWx3 byte images laid out contiguously, one per batch row.
template <typename Scalar>
void forward(const Parameters<Scalar>& params, std::span<const std::uint8_t> obs, int batch,
             ForwardCache<Scalar>& cache) {
  const NetworkSpec& spec = params.spec;
  if (batch <= 0) throw ShapeError("forward needs a positive batch size");
  if (obs.size() != static_cast<std::size_t>(batch) * spec.input_size())
    throw ShapeError("observation batch has " + std::to_string(obs.size()) + " bytes, expected " +
                     std::to_string(static_cast<std::size_t>(batch) * spec.input_size()));

  cache.batch = batch;
  cache.input.resize(static_cast<Eigen::Index>(batch) * spec.height * spec.width, spec.channels);
  const Scalar inv255 = Scalar(1) / Scalar(255);
  for (std::size_t i = 0; i < obs.size(); ++i) cache.input.data()[i] = Scalar(obs[i]) * inv255;

  const auto planes = spec.planes();
  const std::size_t n_conv = spec.conv.size();
  cache.patches.resize(n_conv);
  cache.activations.resize(n_conv);
  for (std::size_t l = 0; l < n_conv; ++l) {
    const RowMatrix<Scalar>& in = l == 0 ? cache.input : cache.activations[l - 1];
    detail::im2col(in, batch, planes[l], spec.conv[l], planes[l + 1], cache.patches[l]);
    auto& act = cache.activations[l];
    act.noalias() = cache.patches[l] * params.matrix(2 * l);
    act.rowwise() += params.matrix(2 * l + 1).row(0);
    act = act.cwiseMax(Scalar(0));
  }

  const RowMatrix<Scalar>& last = n_conv == 0 ? cache.input : cache.activations.back();
  Eigen::Map<const RowMatrix<Scalar>> flat(last.data(), batch, spec.flat_features());
  const std::size_t d = 2 * n_conv;
  cache.hidden.noalias() = flat * params.matrix(d);
  cache.hidden.rowwise() += params.matrix(d + 1).row(0);
  cache.hidden = cache.hidden.cwiseMax(Scalar(0));
  cache.logits.noalias() = cache.hidden * params.matrix(d + 2);
  cache.logits.rowwise() += params.matrix(d + 3).row(0);
  RowMatrix<Scalar> v = cache.hidden * params.matrix(d + 4);
  cache.values = v.col(0).array() + params.matrix(d + 5)(0, 0);
}

// Accumulates d(loss)/d(params) given d(loss)/d(logits) and d(loss)/d(values).
template <typename Scalar>
void backward(const Parameters<Scalar>& params, const ForwardCache<Scalar>& cache, const RowMatrix<Scalar>& dlogits,
              const Vector<Scalar>& dvalues, Vector<Scalar>& grad) {
  const NetworkSpec& spec = params.spec;
  const int batch = cache.batch;
  if (grad.size() != params.values.size()) grad = Vector<Scalar>::Zero(params.values.size());
  auto g = [&](std::size_t i) {
    const TensorInfo& t = params.layout[i];
    return Eigen::Map<RowMatrix<Scalar>>(grad.data() + t.offset, t.rows, t.cols);
  };

  const std::size_t n_conv = spec.conv.size();
  const std::size_t d = 2 * n_conv;
  g(d + 2).noalias() += cache.hidden.transpose() * dlogits;
  g(d + 3) += dlogits.colwise().sum();
  g(d + 4).noalias() += cache.hidden.transpose() * dvalues;
  g(d + 5)(0, 0) += dvalues.sum();

  RowMatrix<Scalar> dhidden = dlogits * params.matrix(d + 2).transpose();
  dhidden.noalias() += dvalues * params.matrix(d + 4).transpose();
  dhidden = (cache.hidden.array() > Scalar(0)).select(dhidden, Scalar(0));

  const RowMatrix<Scalar>& last = n_conv == 0 ? cache.input : cache.activations.back();
  Eigen::Map<const RowMatrix<Scalar>> flat(last.data(), batch, spec.flat_features());
  g(d).noalias() += flat.transpose() * dhidden;
  g(d + 1) += dhidden.colwise().sum();
  if (n_conv == 0) return;

  const auto planes = spec.planes();
  const RowMatrix<Scalar> dflat = dhidden * params.matrix(d).transpose();
  RowMatrix<Scalar> dact = Eigen::Map<const RowMatrix<Scalar>>(dflat.data(), cache.activations.back().rows(),
                                                               cache.activations.back().cols());
  for (std::size_t l = n_conv; l-- > 0;) {
    const auto& act = cache.activations[l];
    RowMatrix<Scalar> dz = (act.array() > Scalar(0)).select(dact, Scalar(0));
    g(2 * l).noalias() += cache.patches[l].transpose() * dz;
    g(2 * l + 1) += dz.colwise().sum();
    if (l == 0) break;
    RowMatrix<Scalar> dpatches = dz * params.matrix(2 * l).transpose();
    detail::col2im(dpatches, batch, planes[l], spec.conv[l], planes[l + 1], dact);
  }
}

}  // namespace mazelab
