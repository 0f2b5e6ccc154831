#include "fundascreen/tensornet/network.hpp"

#include "fundascreen/error.hpp"

namespace fundascreen::nn {

namespace {

const char* kind_name(LayerSpec::Kind k) {
  switch (k) {
    case LayerSpec::Kind::conv2d: return "conv2d";
    case LayerSpec::Kind::relu: return "relu";
    case LayerSpec::Kind::maxpool2: return "maxpool2";
    case LayerSpec::Kind::global_avg_pool: return "global_avg_pool";
    case LayerSpec::Kind::concat_side: return "concat_side";
    case LayerSpec::Kind::dense: return "dense";
  }
  return "?";
}

LayerSpec::Kind parse_kind(const std::string& s) {
  for (auto k : {LayerSpec::Kind::conv2d, LayerSpec::Kind::relu, LayerSpec::Kind::maxpool2,
                 LayerSpec::Kind::global_avg_pool, LayerSpec::Kind::concat_side, LayerSpec::Kind::dense}) {
    if (s == kind_name(k)) return k;
  }
  fail(ErrorCode::parse, "unknown layer kind '" + s + "'");
}

}  // namespace

Architecture default_architecture(int image_side, int side_dim, int outputs) {
  using K = LayerSpec::Kind;
  Architecture a;
  a.input = Shape{3, image_side, image_side};
  a.side_dim = side_dim;
  a.layers = {{K::conv2d, 8, 3, 1},  {K::relu},           {K::maxpool2},
              {K::conv2d, 16, 3, 1}, {K::relu},           {K::maxpool2},
              {K::conv2d, 32, 3, 1}, {K::relu},           {K::global_avg_pool}};
  if (side_dim > 0) a.layers.push_back({K::concat_side});
  a.layers.push_back({K::dense, outputs});
  return a;
}

void to_json(nlohmann::json& j, const Architecture& a) {
  j = nlohmann::json::object();
  j["input"] = {a.input.channels, a.input.height, a.input.width};
  j["side_dim"] = a.side_dim;
  auto& layers = j["layers"] = nlohmann::json::array();
  for (const auto& l : a.layers) {
    nlohmann::json e = {{"kind", kind_name(l.kind)}};
    if (l.kind == LayerSpec::Kind::conv2d) {
      e["filters"] = l.units;
      e["kernel"] = l.kernel;
      e["stride"] = l.stride;
    } else if (l.kind == LayerSpec::Kind::dense) {
      e["units"] = l.units;
    }
    layers.push_back(e);
  }
}

void from_json(const nlohmann::json& j, Architecture& a) {
  const auto& in = j.at("input");
  a.input = Shape{in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()};
  a.side_dim = j.at("side_dim").get<int>();
  a.layers.clear();
  for (const auto& e : j.at("layers")) {
    LayerSpec l;
    l.kind = parse_kind(e.at("kind").get<std::string>());
    if (l.kind == LayerSpec::Kind::conv2d) {
      l.units = e.at("filters").get<int>();
      l.kernel = e.at("kernel").get<int>();
      l.stride = e.at("stride").get<int>();
    } else if (l.kind == LayerSpec::Kind::dense) {
      l.units = e.at("units").get<int>();
    }
    a.layers.push_back(l);
  }
}

Tensor to_input(const RgbImage& image) {
  const int n = image.side;
  Tensor t(Shape{3, n, n});
  const std::size_t area = static_cast<std::size_t>(n) * n;
  for (std::size_t i = 0; i < area; ++i) {
    for (int c = 0; c < 3; ++c) t.data[c * area + i] = image.rgb[i * 3 + c] - 0.5;
  }
  return t;
}

Network::Network(const Architecture& arch, std::uint64_t seed) : arch_(arch) {
  using K = LayerSpec::Kind;
  if (arch.layers.empty()) fail(ErrorCode::shape_mismatch, "network needs at least one layer");
  Shape shape = arch.input;
  int conv = 0, dense = 0, concat = 0;
  for (const auto& spec : arch.layers) {
    std::unique_ptr<Layer> layer;
    switch (spec.kind) {
      case K::conv2d:
        layer = std::make_unique<Conv2d>(shape, spec.units, spec.kernel, spec.stride, "conv" + std::to_string(conv++));
        break;
      case K::relu: layer = std::make_unique<Relu>(shape); break;
      case K::maxpool2: layer = std::make_unique<MaxPool2>(shape); break;
      case K::global_avg_pool: layer = std::make_unique<GlobalAvgPool>(shape); break;
      case K::concat_side:
        ++concat;
        layer = std::make_unique<ConcatSide>(shape, arch.side_dim);
        break;
      case K::dense: layer = std::make_unique<Dense>(shape, spec.units, "dense" + std::to_string(dense++)); break;
    }
    shape = layer->output_shape();
    layers_.push_back(std::move(layer));
  }
  if (concat > 1) fail(ErrorCode::shape_mismatch, "at most one concat_side layer is supported");
  if ((concat == 1) != (arch.side_dim > 0)) {
    fail(ErrorCode::shape_mismatch, "side_dim > 0 requires exactly one concat_side layer and vice versa");
  }
  Rng rng(seed);
  for (auto& l : layers_) l->initialize(rng);
}

void Network::check_example(const Tensor& input, std::span<const double> side) const {
  if (input.shape != arch_.input || input.data.size() != arch_.input.size()) {
    fail(ErrorCode::shape_mismatch, "network input " + to_string(input.shape) + " does not match " + to_string(arch_.input));
  }
  if (has_side_input() && side.size() != static_cast<std::size_t>(arch_.side_dim)) {
    fail(ErrorCode::shape_mismatch, "network requires a side input of width " + std::to_string(arch_.side_dim));
  }
  if (!has_side_input() && !side.empty()) fail(ErrorCode::shape_mismatch, "network has no side input");
}

std::vector<std::vector<double>> Network::forward(std::span<const Tensor> inputs, std::span<const std::vector<double>> side) {
  if (has_side_input() && side.size() != inputs.size()) {
    fail(ErrorCode::shape_mismatch, "side inputs must be supplied for every example");
  }
  if (!has_side_input() && !side.empty()) fail(ErrorCode::shape_mismatch, "network has no side input");
  cache_.resize(inputs.size());
  side_cache_.assign(side.begin(), side.end());
  std::vector<std::vector<double>> outputs(inputs.size());
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    std::span<const double> s = has_side_input() ? std::span<const double>(side[b]) : std::span<const double>();
    check_example(inputs[b], s);
    auto& acts = cache_[b];
    acts.resize(layers_.size() + 1);
    acts[0] = inputs[b];
    for (std::size_t l = 0; l < layers_.size(); ++l) layers_[l]->forward(acts[l], s, acts[l + 1]);
    outputs[b] = acts.back().data;
  }
  return outputs;
}

void Network::backward(std::span<const std::vector<double>> grad_outputs) {
  if (grad_outputs.size() != cache_.size()) fail(ErrorCode::shape_mismatch, "backward batch differs from forward batch");
  for (auto* p : parameters()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  input_grads_.resize(cache_.size());
  Tensor grad, next;
  for (std::size_t b = 0; b < cache_.size(); ++b) {
    const auto& acts = cache_[b];
    if (grad_outputs[b].size() != acts.back().data.size()) {
      fail(ErrorCode::shape_mismatch, "output gradient has wrong width");
    }
    grad.shape = acts.back().shape;
    grad.data = grad_outputs[b];
    for (std::size_t l = layers_.size(); l-- > 0;) {
      layers_[l]->backward(acts[l], acts[l + 1], grad, next);
      std::swap(grad, next);
    }
    input_grads_[b] = grad;
  }
}

std::vector<double> Network::predict(const Tensor& input, std::span<const double> side) const {
  check_example(input, side);
  Tensor cur = input, next;
  for (const auto& l : layers_) {
    l->forward(cur, side, next);
    std::swap(cur, next);
  }
  return cur.data;
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    for (auto* p : l->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<const Parameter*> Network::parameters() const {
  std::vector<const Parameter*> out;
  for (auto& l : layers_) {
    for (auto* p : l->parameters()) out.push_back(p);
  }
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

}  // namespace fundascreen::nn
