#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "eclipse/episode.hpp"

namespace eclipse {

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class RhoMode { kStratified, kBernoulli };
enum class Setting { kMultipleChoice, kBinary };

const char* rho_mode_name(RhoMode m);
const char* setting_name(Setting s);

// Synthetic video-QA task. A question names one of `num_attributes`
// attributes; each attribute fixes k evidence positions inside the first
// t_min frames. Evidence frame j carries the value of answer part j as a
// one-hot code (times `amplitude`) in either the coarse-visible prefix of the
// raw vector or the fine-only suffix. Every coordinate of every frame also
// carries N(0, sigma^2) noise. The correct answer is the tuple of part values.
struct SynthSpec {
  std::size_t t_min = 20;
  std::size_t t_max = 40;
  std::size_t raw_dim = 32;
  std::size_t coarse_dims = 16;  // prefix visible to the coarse encoder
  std::size_t num_answers = 4;   // N
  std::size_t evidence = 2;      // k
  std::size_t values_per_part = 4;
  std::size_t num_attributes = 4;
  std::size_t filler_words = 12;
  std::size_t min_filler = 2;
  std::size_t max_filler = 5;
  double rho = 0.5;
  // stratified: exactly round(rho * k) evidence slots of each attribute are
  // fine-only, so each frame is fine-only with marginal probability rho.
  // bernoulli: each evidence frame independently with probability rho.
  RhoMode rho_mode = RhoMode::kStratified;
  double sigma = 0.5;
  double amplitude = 4.0;
  std::size_t position_jitter = 0;  // evidence moves by up to +-jitter frames
  Setting setting = Setting::kMultipleChoice;
  std::size_t train_size = 2000;
  std::size_t val_size = 300;
  std::size_t test_size = 1000;

  void validate() const;
  std::size_t code_width() const { return evidence * values_per_part; }
  std::string to_json() const;
  static SynthSpec from_json(const std::string& json);
};

struct SynthLatent {
  int attribute = 0;
  std::vector<int> positions;    // evidence frame per part
  std::vector<int> values;       // answer value per part
  std::vector<int> fine_only;    // 1 when part j's code sits in the fine-only suffix
  std::vector<int> shown_combo;  // binary setting: values of the single shown answer
};

struct SynthEpisode {
  Episode episode;
  SynthLatent latent;
};

// Token inventory shared by every dataset generated from a spec.
Vocab synth_vocab(const SynthSpec& spec);

// Evidence position of part j for attribute a (before jitter); always >= 1 and < t_min.
std::size_t anchor_position(const SynthSpec& spec, std::size_t attribute, std::size_t part);
// Whether part j of attribute a is fine-only in stratified mode.
bool stratified_fine_only(const SynthSpec& spec, std::size_t attribute, std::size_t part);

// Episode `index` depends only on (spec, seed, index).
SynthEpisode generate_episode(const SynthSpec& spec, std::uint64_t seed, std::size_t index);
std::vector<SynthEpisode> generate(const SynthSpec& spec, std::uint64_t seed, std::size_t count,
                                   std::size_t first_index = 0);

// Decodes the part values from the evidence frames (argmax over each part's
// code block in both regions) and matches them against the candidate tokens.
int oracle_answer(const SynthSpec& spec, const SynthEpisode& episode);

struct SynthDataset {
  SynthSpec spec;
  std::uint64_t seed = 0;
  std::string split;
  std::vector<SynthEpisode> episodes;

  std::vector<Episode> plain() const;
};

// Binary dataset file: magic "ESYNTH01", a JSON header {spec, seed, split,
// count}, then per episode: id, a feature record (see frame_encoders), the QA
// token arrays, gt, num_classes and the latent record.
void write_dataset(const std::filesystem::path& path, const SynthDataset& data);
SynthDataset read_dataset(const std::filesystem::path& path);

}  // namespace eclipse
