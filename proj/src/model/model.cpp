// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "model/model.hpp"

#include <algorithm>
#include <cmath>

#include "core/rng.hpp"

namespace wiper {

template <std::floating_point T>
Model<T>::Model(Architecture arch, std::vector<Layer> layers, std::vector<NamedTensor<T>> params,
                std::string purified_layer)
    : arch_(std::move(arch)), layers_(std::move(layers)), params_(std::move(params)) {
  set_purified_layer(purified_layer);
}

template <std::floating_point T>
std::vector<Tensor<T>*> Model<T>::param_ptrs() {
  std::vector<Tensor<T>*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p.tensor);
  return out;
}

template <std::floating_point T>
Tensor<T>& Model<T>::param(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p.tensor;
  fail(ErrorCode::invalid_argument, "model has no parameter '" + std::string(name) + "'");
}

template <std::floating_point T>
const Tensor<T>& Model<T>::param(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.tensor;
  fail(ErrorCode::invalid_argument, "model has no parameter '" + std::string(name) + "'");
}

template <std::floating_point T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

template <std::floating_point T>
void Model<T>::set_purified_layer(const std::string& name) {
  const auto it = std::find_if(layers_.begin(), layers_.end(), [&](const Layer& l) { return l.name == name; });
  require(it != layers_.end(), ErrorCode::invalid_argument, "purified layer '" + name + "' does not exist");
  require(it->kind == LayerKind::linear, ErrorCode::invalid_argument,
          "purified layer '" + name + "' is not fully connected");
  purified_ = name;
}

template <std::floating_point T>
std::vector<std::string> Model<T>::linear_layers() const {
  std::vector<std::string> out;
  for (const auto& l : layers_)
    if (l.kind == LayerKind::linear) out.push_back(l.name);
  return out;
}

template <std::floating_point T>
void Model<T>::check_input(const Tensor<T>& x) const {
  const auto& in = arch_.input;
  require(x.rank() == 4 && x.extent(1) == in.channels && x.extent(2) == in.height && x.extent(3) == in.width,
          ErrorCode::shape_mismatch,
          "model input " + shape_string(x.shape()) + " does not match [B," + std::to_string(in.channels) + "," +
              std::to_string(in.height) + "," + std::to_string(in.width) + "]");
}

template <std::floating_point T>
template <typename Leaf>
typename Model<T>::Trace Model<T>::run(Graph<T>& g, Var input, Leaf&& leaf) const {
  check_input(g.value(input));
  Trace trace;
  Var h = input;
  for (const Layer& layer : layers_) {
    switch (layer.kind) {
      case LayerKind::conv3x3:
        h = g.conv2d(h, leaf(layer.name + ".weight"), leaf(layer.name + ".bias"), layer.padding);
        break;
      case LayerKind::relu: h = g.relu(h); break;
      case LayerKind::max_pool2: h = g.max_pool2(h); break;
      case LayerKind::flatten: h = g.flatten(h); break;
      case LayerKind::linear: {
        const bool purified = layer.name == purified_;
        if (purified) trace.purified_input = h;
        const Var w = leaf(layer.name + ".weight");
        h = g.linear(h, w, leaf(layer.name + ".bias"));
        if (purified) {
          trace.purified_weight = w;
          trace.purified_output = h;
        }
        break;
      }
    }
  }
  trace.logits = h;
  return trace;
}

template <std::floating_point T>
typename Model<T>::Trace Model<T>::forward_tracked(Graph<T>& g, Var input) {
  return run(g, input, [&](const std::string& name) { return g.parameter(param(name)); });
}

template <std::floating_point T>
typename Model<T>::Trace Model<T>::forward(Graph<T>& g, Var input) const {
  return run(g, input, [&](const std::string& name) { return g.constant_ref(param(name)); });
}

template <std::floating_point T>
void Model<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <std::floating_point T>
void Model<T>::load_params(const std::vector<NamedTensor<T>>& params) {
  require(params.size() == params_.size(), ErrorCode::shape_mismatch,
          "checkpoint has " + std::to_string(params.size()) + " tensors, model expects " +
              std::to_string(params_.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i].name == params_[i].name, ErrorCode::shape_mismatch,
            "checkpoint tensor '" + params[i].name + "' where model expects '" + params_[i].name + "'");
    require(params[i].tensor.shape() == params_[i].tensor.shape(), ErrorCode::shape_mismatch,
            "checkpoint tensor '" + params[i].name + "' has shape " + shape_string(params[i].tensor.shape()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) params_[i].tensor = params[i].tensor;
}

namespace {

template <std::floating_point T>
Tensor<T> uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <std::floating_point T>
void add_conv(std::vector<Layer>& layers, std::vector<NamedTensor<T>>& params, const std::string& name,
              std::size_t in_ch, std::size_t out_ch, Rng& rng) {
  layers.push_back({LayerKind::conv3x3, name, 1});
  params.push_back({name + ".weight", uniform_init<T>({out_ch, in_ch, 3, 3}, in_ch * 9, rng)});
  params.push_back({name + ".bias", uniform_init<T>({out_ch}, in_ch * 9, rng)});
}

template <std::floating_point T>
void add_linear(std::vector<Layer>& layers, std::vector<NamedTensor<T>>& params, const std::string& name,
                std::size_t in, std::size_t out, Rng& rng) {
  layers.push_back({LayerKind::linear, name, 0});
  params.push_back({name + ".weight", uniform_init<T>({out, in}, in, rng)});
  params.push_back({name + ".bias", uniform_init<T>({out}, in, rng)});
}

}  // namespace

template <std::floating_point T>
Model<T> build_desk_cnn(InputSpec input, std::size_t classes, std::uint64_t seed) {
  require(input.height >= 8 && input.width >= 8, ErrorCode::invalid_argument,
          "desk cnn: input must be at least 8x8 for two pooling stages");
  require(input.channels >= 1 && classes >= 2, ErrorCode::invalid_argument, "desk cnn: need channels>=1, classes>=2");
  Rng rng(seed);
  std::vector<Layer> layers;
  std::vector<NamedTensor<T>> params;
  add_conv<T>(layers, params, "conv1", input.channels, 8, rng);
  layers.push_back({LayerKind::relu, "relu1"});
  layers.push_back({LayerKind::max_pool2, "pool1"});
  add_conv<T>(layers, params, "conv2", 8, 16, rng);
  layers.push_back({LayerKind::relu, "relu2"});
  layers.push_back({LayerKind::max_pool2, "pool2"});
  layers.push_back({LayerKind::flatten, "flatten"});
  const std::size_t features = 16 * (input.height / 4) * (input.width / 4);
  add_linear<T>(layers, params, "fc", features, classes, rng);
  return Model<T>(Architecture{ArchKind::cnn, input, {}, classes}, std::move(layers), std::move(params), "fc");
}

template <std::floating_point T>
Model<T> build_mlp(InputSpec input, std::span<const std::size_t> hidden, std::size_t classes, std::uint64_t seed) {
  require(input.height >= 1 && input.width >= 1 && input.channels >= 1 && classes >= 2,
          ErrorCode::invalid_argument, "mlp: degenerate input or class count");
  for (std::size_t h : hidden) require(h >= 1, ErrorCode::invalid_argument, "mlp: hidden width must be positive");
  Rng rng(seed);
  std::vector<Layer> layers;
  std::vector<NamedTensor<T>> params;
  layers.push_back({LayerKind::flatten, "flatten"});
  std::size_t width = input.height * input.width * input.channels;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    const std::string idx = std::to_string(i + 1);
    add_linear<T>(layers, params, "fc" + idx, width, hidden[i], rng);
    layers.push_back({LayerKind::relu, "relu" + idx});
    width = hidden[i];
  }
  add_linear<T>(layers, params, "fc", width, classes, rng);
  return Model<T>(Architecture{ArchKind::mlp, input, {hidden.begin(), hidden.end()}, classes}, std::move(layers),
                  std::move(params), "fc");
}

template <std::floating_point T>
Model<T> build_model(const Architecture& arch, std::uint64_t seed) {
  return arch.kind == ArchKind::cnn ? build_desk_cnn<T>(arch.input, arch.classes, seed)
                                    : build_mlp<T>(arch.input, arch.hidden, arch.classes, seed);
}

template <std::floating_point T>
Tensor<T> predict_logits(const Model<T>& model, const Tensor<T>& batch) {
  Graph<T> g;
  const auto trace = model.forward(g, g.constant_ref(batch));
  return g.value(trace.logits);
}

template <std::floating_point T>
Tensor<T> neuron_activations(const Model<T>& model, const Tensor<T>& batch) {
  Graph<T> g;
  const auto trace = model.forward(g, g.constant_ref(batch));
  return g.value(trace.purified_input);
}

template <std::floating_point T>
void zero_neuron(Model<T>& model, const NeuronId& id) {
  Tensor<T>& w = model.param(id.layer + ".weight");
  require(w.rank() == 2, ErrorCode::invalid_argument, "zero_neuron: '" + id.layer + "' is not fully connected");
  const std::size_t rows = w.extent(0), cols = w.extent(1);
  require(id.index < cols, ErrorCode::invalid_argument,
          "zero_neuron: index " + std::to_string(id.index) + " >= fan-in " + std::to_string(cols));
  for (std::size_t c = 0; c < rows; ++c) w[c * cols + id.index] = T{0};
}

template class Model<float>;
template class Model<double>;

#define WIPER_INSTANTIATE(T)                                                                            \
  template Model<T> build_desk_cnn<T>(InputSpec, std::size_t, std::uint64_t);                          \
  template Model<T> build_mlp<T>(InputSpec, std::span<const std::size_t>, std::size_t, std::uint64_t); \
  template Model<T> build_model<T>(const Architecture&, std::uint64_t);                                \
  template Tensor<T> predict_logits<T>(const Model<T>&, const Tensor<T>&);                              \
  template Tensor<T> neuron_activations<T>(const Model<T>&, const Tensor<T>&);                          \
  template void zero_neuron<T>(Model<T>&, const NeuronId&);

WIPER_INSTANTIATE(float)
WIPER_INSTANTIATE(double)
#undef WIPER_INSTANTIATE

}  // namespace wiper
