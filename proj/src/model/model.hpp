// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "autodiff/checkpoint.hpp"
#include "autodiff/graph.hpp"
#include "autodiff/tensor.hpp"

namespace wiper {

struct InputSpec {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 1;

  friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

enum class ArchKind { cnn, mlp };

/// Enough to rebuild a model from scratch (checkpoints carry parameters only).
struct Architecture {
  ArchKind kind = ArchKind::cnn;
  InputSpec input;
  std::vector<std::size_t> hidden;  // mlp only
  std::size_t classes = 10;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

enum class LayerKind { conv3x3, relu, max_pool2, flatten, linear };

struct Layer {
  LayerKind kind;
  std::string name;          // parameters are "<name>.weight" and "<name>.bias"
  std::size_t padding = 0;   // conv3x3 only
};

/// A neuron is an input feature j of a fully connected layer; it owns W[:, j].
struct NeuronId {
  std::string layer;
  std::size_t index = 0;
};

template <std::floating_point T>
class Model {
 public:
  using value_type = T;

  /// Graph handles produced by one forward pass.
  struct Trace {
    Var logits;
    Var purified_input;   // activations a_j entering the purified layer, [B, fan_in]
    Var purified_output;  // that layer's pre-activation output, [B, out]
    Var purified_weight;  // that layer's weight leaf, [out, fan_in]
  };

  Model(Architecture arch, std::vector<Layer> layers, std::vector<NamedTensor<T>> params, std::string purified_layer);

  const Architecture& architecture() const noexcept { return arch_; }
  std::span<const Layer> layers() const noexcept { return layers_; }
  const std::vector<NamedTensor<T>>& params() const noexcept { return params_; }
  std::vector<Tensor<T>*> param_ptrs();
  Tensor<T>& param(std::string_view name);
  const Tensor<T>& param(std::string_view name) const;
  std::size_t parameter_count() const;

  const std::string& purified_layer() const noexcept { return purified_; }
  /// Throws unless `name` is a fully connected layer of this model.
  void set_purified_layer(const std::string& name);
  std::vector<std::string> linear_layers() const;
  Tensor<T>& purified_weight() { return param(purified_ + ".weight"); }
  const Tensor<T>& purified_weight() const { return param(purified_ + ".weight"); }
  /// Number of neurons (input features) of the purified layer.
  std::size_t fan_in() const { return purified_weight().extent(1); }
  std::size_t classes() const noexcept { return arch_.classes; }

  /// Records a forward pass with parameters as differentiable leaves.
  Trace forward_tracked(Graph<T>& g, Var input);
  /// Records a forward pass with parameters borrowed as constants.
  Trace forward(Graph<T>& g, Var input) const;

  void zero_grad();
  /// Replaces every parameter value; names and shapes must match exactly.
  void load_params(const std::vector<NamedTensor<T>>& params);

 private:
  template <typename Leaf>
  Trace run(Graph<T>& g, Var input, Leaf&& leaf) const;
  void check_input(const Tensor<T>& x) const;

  Architecture arch_;
  std::vector<Layer> layers_;
  std::vector<NamedTensor<T>> params_;
  std::string purified_;
};

/// conv(3x3,8)-relu-pool-conv(3x3,16)-relu-pool-flatten-fc(classes); convs use zero padding 1.
template <std::floating_point T>
Model<T> build_desk_cnn(InputSpec input, std::size_t classes, std::uint64_t seed);

/// flatten-fc1-relu-...-fcK-relu-fc(classes).
template <std::floating_point T>
Model<T> build_mlp(InputSpec input, std::span<const std::size_t> hidden, std::size_t classes, std::uint64_t seed);

template <std::floating_point T>
Model<T> build_model(const Architecture& arch, std::uint64_t seed);

/// Logits for a [B, C, H, W] batch without recording gradients.
template <std::floating_point T>
Tensor<T> predict_logits(const Model<T>& model, const Tensor<T>& batch);

/// Inputs of the purified layer, [B, fan_in].
template <std::floating_point T>
Tensor<T> neuron_activations(const Model<T>& model, const Tensor<T>& batch);

/// Sets W[:, id.index] of layer id.layer to exactly zero.
template <std::floating_point T>
void zero_neuron(Model<T>& model, const NeuronId& id);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace wiper
