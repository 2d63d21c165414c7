#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "eclipse/autodiff.hpp"
#include "eclipse/binary_io.hpp"
#include "eclipse/layers.hpp"
#include "eclipse/trace.hpp"

namespace eclipse {

// T raw frame vectors stored as a T x D_raw matrix.
struct VideoSource {
  std::string id;
  Tensor frames;

  std::size_t length() const { return frames.rows(); }
  std::size_t raw_dim() const { return frames.cols(); }
  void validate() const;
};

// Per-frame extraction costs in GFLOP-equivalents plus the per-step model
// overhead (fusion, interaction LSTM, heads).
struct CostModel {
  double fine = 7.8;
  double coarse = 0.3;
  double overhead = 0.01;

  double extraction(Granularity g) const { return g == Granularity::kFine ? fine : coarse; }
  void validate() const;
};

// Online cost accounting for one episode.
class CostLedger {
 public:
  void record_extraction(Granularity g) { (g == Granularity::kFine ? fine_ : coarse_)++; }
  void record_step() { ++steps_; }
  std::size_t fine_extractions() const { return fine_; }
  std::size_t coarse_extractions() const { return coarse_; }
  std::size_t steps() const { return steps_; }
  double total(const CostModel& model) const;

 private:
  std::size_t fine_ = 0;
  std::size_t coarse_ = 0;
  std::size_t steps_ = 0;
};

// Total = sum over extracted steps of the granularity cost + steps * overhead.
// Evaluated as n_fine * fine + n_coarse * coarse + steps * overhead, so the
// online ledger and any offline recount agree bit for bit.
double measure_cost(const EpisodeTrace& trace, const CostModel& model);

struct EncoderConfig {
  std::size_t raw_dim = 32;
  std::size_t coarse_input_dims = 16;  // coarse encoder sees this prefix of each raw frame
  std::size_t fine_width = 128;
  std::size_t coarse_width = 16;
  std::size_t feat_dim = 64;
  std::size_t out_dim = 300;  // 2d, the model dimension shared with the text side

  void validate() const;
};

// Two MLP frame encoders (tanh hidden layers) with separate projections to out_dim.
class EncoderPair {
 public:
  EncoderPair(ParameterSet& params, const EncoderConfig& config, Rng& rng);

  // 1 x out_dim feature of one frame; one cost event is logged when a ledger is given.
  Var extract(Tape& tape, const VideoSource& video, std::size_t frame, Granularity g,
              CostLedger* ledger = nullptr) const;
  // T x out_dim; row i equals extract(video, i, g) bit for bit.
  Var extract_all(Tape& tape, const VideoSource& video, Granularity g) const;
  // 2T x out_dim with row 2i + g holding frame i at granularity g.
  Var feature_bank(Tape& tape, const VideoSource& video) const;

  const EncoderConfig& config() const { return config_; }

 private:
  struct Mlp {
    Linear hidden;
    Linear feature;
    Linear projection;
  };

  Var encode_rows(Tape& tape, Var raw_rows, Granularity g) const;

  EncoderConfig config_;
  Mlp fine_;
  Mlp coarse_;
};

// Feature file: magic "ECLFEAT1", u32 T, u32 D_raw, then T*D_raw little-endian
// float64 values in row-major order.
void write_feature_record(ByteWriter& out, const Tensor& frames);
Tensor read_feature_record(ByteReader& in);
void write_feature_file(const std::filesystem::path& path, const VideoSource& video);
VideoSource read_feature_file(const std::filesystem::path& path);
// Loads every *.feat file in a directory (sorted by name); ids are file stems.
std::vector<VideoSource> load_feature_directory(const std::filesystem::path& dir);

}  // namespace eclipse
