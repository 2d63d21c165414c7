#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eclipse/engine.hpp"
#include "eclipse/optim.hpp"

namespace eclipse {

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 16;
  AdamOptions adam;
  double lambda = 0.01;
  std::size_t lambda_warmup = 0;  // epochs over which lambda ramps linearly from 0
  double mu = 0.1;
  std::size_t t_steps = 5;
  double tau_init = 5.0;
  double tau_decay = 0.045;
  double tau_floor = 0.05;
  std::uint64_t seed = 0;
  // Pins the granularity while training; validation then uses the matching
  // coarse_only / fine_only policy.
  std::optional<Granularity> granularity;

  // tau_e = max(floor, tau_init * exp(-decay * e)), e counted from 0.
  double tau(std::size_t epoch) const;
  double lambda_at(std::size_t epoch) const;
  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double tau = 0.0;
  StepLoss loss;  // per-episode means of the summed step losses
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double val_cost = 0.0;
};

std::string epoch_csv_header();
std::string epoch_csv_row(const EpochLog& row);

// Mini-batch trainer: per-episode gradients are accumulated, averaged over the
// batch and applied with one Adam step. Every random draw derives from
// (seed, epoch, episode index), so resuming from a checkpoint replays the
// same trajectory.
class Trainer {
 public:
  Trainer(Model& model, const TrainConfig& config, std::span<const Episode> train, std::span<const Episode> val,
          const EvalOptions& val_options);

  EpochLog run_epoch();

  // Runs the remaining epochs. With a non-empty directory, each epoch rewrites
  // train_log.csv and last.ckpt, and best.ckpt whenever validation accuracy
  // strictly improves. The callback sees every finished epoch.
  void fit(const std::filesystem::path& out_dir, const std::function<void(const EpochLog&)>& on_epoch = {});

  void save(const std::filesystem::path& path) const;
  void resume(const std::filesystem::path& path);

  std::size_t epochs_done() const { return epoch_; }
  double best_val_accuracy() const { return best_val_; }
  const std::vector<EpochLog>& history() const { return history_; }

 private:
  Model* model_;
  TrainConfig config_;
  std::span<const Episode> train_;
  std::span<const Episode> val_;
  EvalOptions val_options_;
  Adam adam_;
  std::size_t epoch_ = 0;
  double best_val_ = -1.0;
  std::vector<EpochLog> history_;
};

}  // namespace eclipse
