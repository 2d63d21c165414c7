#include "eclipse/optim.hpp"

#include <cmath>
#include <json.hpp>

#include "eclipse/io.hpp"

namespace eclipse {

namespace {

constexpr const char* kCheckpointFormat = "eclipse-checkpoint";
constexpr int kCheckpointVersion = 1;

nlohmann::json tensor_to_json(const Tensor& t) {
  return nlohmann::json{{"shape", t.shape()}, {"data", t.storage()}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
  return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
}

}  // namespace

void adam_step(ParameterSet& params, const Gradients& grads, const AdamOptions& o, AdamState& state) {
  if (!(o.lr > 0.0)) throw ParameterError("adam learning rate must be positive");
  if (o.weight_decay < 0.0) throw ParameterError("adam weight decay must be non-negative");
  if (state.m.size() < params.size()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads.has(i)) continue;
    Tensor& w = params[i].value;
    const Tensor& g = grads[i];
    if (!g.same_shape(w)) {
      throw DimensionError("gradient shape " + shape_string(g.shape()) + " does not match parameter '" +
                           params[i].name + "' " + shape_string(w.shape()));
    }
    if (state.m[i].empty()) {
      state.m[i] = Tensor(w.shape());
      state.v[i] = Tensor(w.shape());
    }
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k] + o.weight_decay * w[k];
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * gk;
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * gk * gk;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const CheckpointExtras& extras) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["epoch"] = extras.epoch;
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& p : params) tensors[p.name] = tensor_to_json(p.value);
  j["params"] = std::move(tensors);
  if (extras.optimizer) {
    nlohmann::json opt;
    opt["step"] = extras.optimizer->step;
    nlohmann::json m = nlohmann::json::object(), v = nlohmann::json::object();
    for (std::size_t i = 0; i < extras.optimizer->m.size() && i < params.size(); ++i) {
      if (extras.optimizer->m[i].empty()) continue;
      m[params[i].name] = tensor_to_json(extras.optimizer->m[i]);
      v[params[i].name] = tensor_to_json(extras.optimizer->v[i]);
    }
    opt["m"] = std::move(m);
    opt["v"] = std::move(v);
    j["optimizer"] = std::move(opt);
  }
  j["metadata"] = nlohmann::json::parse(extras.metadata_json);
  write_file_atomic(path, j.dump());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, ParameterSet& params) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat) throw IoError("not an eclipse checkpoint: " + path.string());
  if (j.value("version", 0) != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version in " + path.string());
  }
  const auto& tensors = j.at("params");
  for (auto& p : params) {
    if (!tensors.contains(p.name)) throw IoError("checkpoint lacks parameter '" + p.name + "'");
    Tensor t = tensor_from_json(tensors.at(p.name));
    if (!t.same_shape(p.value)) {
      throw DimensionError("checkpoint parameter '" + p.name + "' has shape " + shape_string(t.shape()) +
                           ", model expects " + shape_string(p.value.shape()));
    }
    p.value = std::move(t);
  }
  LoadedCheckpoint out;
  out.epoch = j.value("epoch", std::int64_t{-1});
  if (j.contains("optimizer")) {
    const auto& opt = j.at("optimizer");
    out.has_optimizer = true;
    out.optimizer.step = opt.at("step").get<std::int64_t>();
    out.optimizer.m.resize(params.size());
    out.optimizer.v.resize(params.size());
    for (const auto& p : params) {
      if (!opt.at("m").contains(p.name)) continue;
      out.optimizer.m[p.index] = tensor_from_json(opt.at("m").at(p.name));
      out.optimizer.v[p.index] = tensor_from_json(opt.at("v").at(p.name));
    }
  }
  if (j.contains("metadata")) out.metadata_json = j.at("metadata").dump();
  return out;
}

}  // namespace eclipse
