#include "eclipse/frame_encoders.hpp"

#include <algorithm>

#include "eclipse/io.hpp"

namespace eclipse {

namespace {
constexpr char kFeatureMagic[8] = {'E', 'C', 'L', 'F', 'E', 'A', 'T', '1'};
}

void VideoSource::validate() const {
  if (frames.empty() || frames.rank() != 2) throw ValidationError("video '" + id + "' has no frames");
}

void CostModel::validate() const {
  if (!(coarse >= 0.0)) throw ValidationError("cost.coarse must be non-negative");
  if (!(fine > coarse)) throw ValidationError("cost.fine must exceed cost.coarse");
  if (!(overhead >= 0.0)) throw ValidationError("cost.overhead must be non-negative");
}

double CostLedger::total(const CostModel& model) const {
  return static_cast<double>(fine_) * model.fine + static_cast<double>(coarse_) * model.coarse +
         static_cast<double>(steps_) * model.overhead;
}

double measure_cost(const EpisodeTrace& trace, const CostModel& model) {
  CostLedger ledger;
  for (const auto& step : trace.steps) {
    if (step.extracted()) ledger.record_extraction(step.granularity);
    ledger.record_step();
  }
  return ledger.total(model);
}

void EncoderConfig::validate() const {
  if (raw_dim == 0 || fine_width == 0 || coarse_width == 0 || feat_dim == 0 || out_dim == 0) {
    throw ValidationError("encoder dimensions must be positive");
  }
  if (coarse_input_dims == 0 || coarse_input_dims > raw_dim) {
    throw ValidationError("encoders.coarse_input_dims must lie in [1, raw_dim]");
  }
}

EncoderPair::EncoderPair(ParameterSet& params, const EncoderConfig& config, Rng& rng) : config_(config) {
  config.validate();
  fine_.hidden = Linear(params, "encoders.fine.hidden", config.raw_dim, config.fine_width, rng);
  fine_.feature = Linear(params, "encoders.fine.feature", config.fine_width, config.feat_dim, rng);
  fine_.projection = Linear(params, "encoders.fine.proj", config.feat_dim, config.out_dim, rng);
  coarse_.hidden = Linear(params, "encoders.coarse.hidden", config.coarse_input_dims, config.coarse_width, rng);
  coarse_.feature = Linear(params, "encoders.coarse.feature", config.coarse_width, config.feat_dim, rng);
  coarse_.projection = Linear(params, "encoders.coarse.proj", config.feat_dim, config.out_dim, rng);
}

Var EncoderPair::encode_rows(Tape& tape, Var raw_rows, Granularity g) const {
  const Mlp& mlp = g == Granularity::kFine ? fine_ : coarse_;
  Var x = raw_rows;
  if (g == Granularity::kCoarse && config_.coarse_input_dims < config_.raw_dim) {
    x = slice_cols(x, 0, config_.coarse_input_dims);
  }
  Var hidden = tanh(mlp.hidden.forward(tape, x));
  Var feat = tanh(mlp.feature.forward(tape, hidden));
  return mlp.projection.forward(tape, feat);
}

Var EncoderPair::extract(Tape& tape, const VideoSource& video, std::size_t frame, Granularity g,
                         CostLedger* ledger) const {
  if (frame >= video.length()) {
    throw BoundsError("frame index " + std::to_string(frame) + " out of range for video '" + video.id + "' with " +
                      std::to_string(video.length()) + " frames");
  }
  if (video.raw_dim() != config_.raw_dim) {
    throw DimensionError("video '" + video.id + "' has raw dim " + std::to_string(video.raw_dim()) +
                         ", encoders expect " + std::to_string(config_.raw_dim));
  }
  const std::size_t d = video.raw_dim();
  std::vector<double> row(video.frames.values().begin() + static_cast<std::ptrdiff_t>(frame * d),
                          video.frames.values().begin() + static_cast<std::ptrdiff_t>((frame + 1) * d));
  Var raw = tape.constant(Tensor::row(std::move(row)));
  if (ledger) ledger->record_extraction(g);
  return encode_rows(tape, raw, g);
}

Var EncoderPair::extract_all(Tape& tape, const VideoSource& video, Granularity g) const {
  video.validate();
  if (video.raw_dim() != config_.raw_dim) {
    throw DimensionError("video '" + video.id + "' has raw dim " + std::to_string(video.raw_dim()) +
                         ", encoders expect " + std::to_string(config_.raw_dim));
  }
  return encode_rows(tape, tape.constant(video.frames), g);
}

Var EncoderPair::feature_bank(Tape& tape, const VideoSource& video) const {
  return interleave_rows(extract_all(tape, video, Granularity::kCoarse), extract_all(tape, video, Granularity::kFine));
}

void write_feature_record(ByteWriter& out, const Tensor& frames) {
  out.bytes(kFeatureMagic, sizeof kFeatureMagic);
  out.u32(static_cast<std::uint32_t>(frames.rows()));
  out.u32(static_cast<std::uint32_t>(frames.cols()));
  for (double v : frames.values()) out.f64(v);
}

Tensor read_feature_record(ByteReader& in) {
  char magic[8];
  in.bytes(magic, sizeof magic);
  if (!std::equal(magic, magic + 8, kFeatureMagic)) throw IoError("bad feature record magic in " + in.source());
  const std::uint32_t t = in.u32();
  const std::uint32_t d = in.u32();
  if (t == 0 || d == 0) throw IoError("empty feature record in " + in.source());
  std::vector<double> data(static_cast<std::size_t>(t) * d);
  for (auto& v : data) v = in.f64();
  return Tensor::matrix(t, d, std::move(data));
}

void write_feature_file(const std::filesystem::path& path, const VideoSource& video) {
  ByteWriter out;
  write_feature_record(out, video.frames);
  write_file_atomic(path, out.data());
}

VideoSource read_feature_file(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  ByteReader in(bytes, path.string());
  VideoSource v{path.stem().string(), read_feature_record(in)};
  if (!in.done()) throw IoError("trailing bytes in feature file " + path.string());
  return v;
}

std::vector<VideoSource> load_feature_directory(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".feat") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<VideoSource> videos;
  videos.reserve(files.size());
  for (const auto& f : files) videos.push_back(read_feature_file(f));
  return videos;
}

}  // namespace eclipse
