#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "eclipse/autodiff.hpp"

namespace eclipse {

struct AdamOptions {
  double lr = 3e-4;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// Classic Adam with weight decay folded into the gradient (L2, not decoupled).
// Parameters without a gradient entry are left untouched and keep their moments.
void adam_step(ParameterSet& params, const Gradients& grads, const AdamOptions& options, AdamState& state);

class Adam {
 public:
  Adam(ParameterSet& params, AdamOptions options) : params_(&params), options_(options) {}

  void step(const Gradients& grads) { adam_step(*params_, grads, options_, state_); }
  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }
  AdamOptions& options() { return options_; }

 private:
  ParameterSet* params_;
  AdamOptions options_;
  AdamState state_;
};

// Versioned JSON checkpoint: canonical parameter path -> shape + row-major
// values, plus optional optimizer state and a free-form metadata object.
// Doubles are written with round-trip precision, so save/load is bit-exact.
struct CheckpointExtras {
  std::int64_t epoch = -1;
  const AdamState* optimizer = nullptr;
  std::string metadata_json = "{}";
};

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params,
                     const CheckpointExtras& extras = {});

struct LoadedCheckpoint {
  std::int64_t epoch = -1;
  bool has_optimizer = false;
  AdamState optimizer;
  std::string metadata_json = "{}";
};

// Loads values into an already-constructed parameter set; every parameter must
// be present with a matching shape.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, ParameterSet& params);

}  // namespace eclipse
