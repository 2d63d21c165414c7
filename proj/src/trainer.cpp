#include "eclipse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "eclipse/io.hpp"

namespace eclipse {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5F1E;
constexpr std::uint64_t kEpisodeStream = 0xEB15;

}  // namespace

double TrainConfig::tau(std::size_t epoch) const {
  return std::max(tau_floor, tau_init * std::exp(-tau_decay * static_cast<double>(epoch)));
}

double TrainConfig::lambda_at(std::size_t epoch) const {
  if (epoch >= lambda_warmup) return lambda;
  return lambda * static_cast<double>(epoch) / static_cast<double>(lambda_warmup);
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ValidationError("train.epochs must be positive");
  if (batch_size == 0) throw ValidationError("train.batch_size must be positive");
  if (t_steps == 0) throw ValidationError("train.t_steps must be positive");
  if (!(adam.lr > 0.0)) throw ValidationError("train.lr must be positive");
  if (!(adam.weight_decay >= 0.0)) throw ValidationError("train.weight_decay must be non-negative");
  if (!(lambda >= 0.0)) throw ValidationError("train.lambda must be non-negative");
  if (!(mu >= 0.0)) throw ValidationError("train.mu must be non-negative");
  if (!(tau_init > 0.0)) throw ValidationError("train.tau_init must be positive");
  if (!(tau_floor > 0.0)) throw ValidationError("train.tau_floor must be positive");
  if (!(tau_decay >= 0.0)) throw ValidationError("train.tau_decay must be non-negative");
}

std::string epoch_csv_header() {
  return "epoch,tau,loss_total,loss_pred,loss_exit,loss_incre,loss_feat,train_accuracy,val_accuracy,val_cost\n";
}

std::string epoch_csv_row(const EpochLog& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.epoch << ',' << r.tau << ',' << r.loss.total << ',' << r.loss.pred << ',' << r.loss.exit << ','
     << r.loss.incre << ',' << r.loss.feat << ',' << r.train_accuracy << ',' << r.val_accuracy << ',' << r.val_cost
     << '\n';
  return os.str();
}

Trainer::Trainer(Model& model, const TrainConfig& config, std::span<const Episode> train,
                 std::span<const Episode> val, const EvalOptions& val_options)
    : model_(&model),
      config_(config),
      train_(train),
      val_(val),
      val_options_(val_options),
      adam_(model.params(), config.adam) {
  config.validate();
  if (config.granularity) {
    val_options_.infer.policy.kind =
        *config.granularity == Granularity::kFine ? PolicyKind::kFineOnly : PolicyKind::kCoarseOnly;
  }
  if (train.empty()) throw ValidationError("training set is empty");
}

EpochLog Trainer::run_epoch() {
  const std::size_t e = epoch_;
  EpochLog log;
  log.epoch = e + 1;
  log.tau = config_.tau(e);
  const TrainStepOptions step{config_.t_steps, log.tau, config_.lambda_at(e), config_.mu, config_.granularity};

  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle = make_rng(config_.seed, {kShuffleStream, e});
  std::shuffle(order.begin(), order.end(), shuffle);

  ParameterSet& params = model_->params();
  Gradients batch(params.size());
  std::size_t in_batch = 0, correct = 0;
  auto apply = [&] {
    batch.scale(1.0 / static_cast<double>(in_batch));
    adam_.step(batch);
    batch.clear();
    in_batch = 0;
  };
  for (std::size_t idx : order) {
    Rng rng = make_rng(config_.seed, {kEpisodeStream, e, idx});
    Tape tape;
    const TrainRollout r = rollout_train(*model_, train_[idx], step, tape, &rng);
    batch.accumulate(tape.backward(r.loss.total));
    const StepLoss& s = r.loss.bundle.sum;
    log.loss.pred += s.pred;
    log.loss.exit += s.exit;
    log.loss.incre += s.incre;
    log.loss.feat += s.feat;
    log.loss.glimpse += s.glimpse;
    log.loss.total += s.total;
    correct += r.trace.correct;
    if (++in_batch == config_.batch_size) apply();
  }
  if (in_batch > 0) apply();

  const auto n = static_cast<double>(train_.size());
  for (double* x : {&log.loss.pred, &log.loss.exit, &log.loss.incre, &log.loss.feat, &log.loss.glimpse,
                    &log.loss.total}) {
    *x /= n;
  }
  log.train_accuracy = static_cast<double>(correct) / n;
  if (!val_.empty()) {
    EvalOptions opts = val_options_;
    opts.keep_traces = false;
    const Report rep = evaluate(*model_, val_, opts);
    log.val_accuracy = rep.accuracy;
    log.val_cost = rep.mean_cost;
  }
  ++epoch_;
  history_.push_back(log);
  return log;
}

void Trainer::fit(const std::filesystem::path& out_dir, const std::function<void(const EpochLog&)>& on_epoch) {
  const bool write = !out_dir.empty();
  if (write) std::filesystem::create_directories(out_dir);
  while (epoch_ < config_.epochs) {
    const EpochLog log = run_epoch();
    const bool improved = log.val_accuracy > best_val_;
    if (improved) best_val_ = log.val_accuracy;
    if (write) {
      std::string csv = epoch_csv_header();
      for (const auto& row : history_) csv += epoch_csv_row(row);
      write_file_atomic(out_dir / "train_log.csv", csv);
      if (improved) save_checkpoint(out_dir / "best.ckpt", model_->params(), {static_cast<std::int64_t>(epoch_)});
      save(out_dir / "last.ckpt");
    }
    if (on_epoch) on_epoch(log);
  }
}

void Trainer::save(const std::filesystem::path& path) const {
  nlohmann::json meta = {{"best_val_accuracy", best_val_}, {"history", nlohmann::json::array()}};
  for (const auto& h : history_) {
    meta["history"].push_back({{"epoch", h.epoch},
                               {"tau", h.tau},
                               {"pred", h.loss.pred},
                               {"incre", h.loss.incre},
                               {"feat", h.loss.feat},
                               {"glimpse", h.loss.glimpse},
                               {"exit", h.loss.exit},
                               {"total", h.loss.total},
                               {"train_accuracy", h.train_accuracy},
                               {"val_accuracy", h.val_accuracy},
                               {"val_cost", h.val_cost}});
  }
  save_checkpoint(path, model_->params(), {static_cast<std::int64_t>(epoch_), &adam_.state(), meta.dump()});
}

void Trainer::resume(const std::filesystem::path& path) {
  const LoadedCheckpoint ck = load_checkpoint(path, model_->params());
  if (!ck.has_optimizer || ck.epoch < 0) {
    throw IoError(path.string() + " has no optimizer state; only checkpoints written by the trainer can resume");
  }
  adam_.state() = ck.optimizer;
  epoch_ = static_cast<std::size_t>(ck.epoch);
  history_.clear();
  best_val_ = -1.0;
  try {
    const auto meta = nlohmann::json::parse(ck.metadata_json);
    best_val_ = meta.at("best_val_accuracy");
    for (const auto& h : meta.at("history")) {
      EpochLog row;
      row.epoch = h.at("epoch");
      row.tau = h.at("tau");
      row.loss = {h.at("pred"), h.at("incre"), h.at("feat"), h.at("glimpse"), h.at("exit"), h.at("total")};
      row.train_accuracy = h.at("train_accuracy");
      row.val_accuracy = h.at("val_accuracy");
      row.val_cost = h.at("val_cost");
      history_.push_back(row);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed trainer metadata: " + e.what());
  }
}

}  // namespace eclipse
