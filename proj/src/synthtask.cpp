#include "eclipse/synthtask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "eclipse/binary_io.hpp"
#include "eclipse/rng.hpp"

namespace eclipse {

namespace {

constexpr char kDatasetMagic[8] = {'E', 'S', 'Y', 'N', 'T', 'H', '0', '1'};
constexpr std::uint64_t kGtStream = 0xB1A5ED;

std::string answer_token(std::size_t part, int value) {
  return "p" + std::to_string(part) + "_v" + std::to_string(value);
}

std::size_t grid_side(std::size_t answers, std::size_t parts) {
  std::size_t side = 1;
  auto combos = [&](std::size_t s) {
    std::size_t c = 1;
    for (std::size_t j = 0; j < parts; ++j) c *= s;
    return c;
  };
  while (combos(side) < answers) ++side;
  return side;
}

// Balanced class assignment: each block of `classes` consecutive episodes
// uses a random permutation of the class labels.
int balanced_label(std::uint64_t seed, std::size_t index, std::size_t classes) {
  Rng rng = make_rng(seed, {kGtStream, index / classes});
  std::vector<int> perm(classes);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm[index % classes];
}

std::vector<int> encode_combo(const Vocab& vocab, const std::vector<int>& values) {
  std::vector<int> tokens;
  for (std::size_t j = 0; j < values.size(); ++j) tokens.push_back(vocab.index(answer_token(j, values[j])));
  return tokens;
}

}  // namespace

const char* rho_mode_name(RhoMode m) { return m == RhoMode::kStratified ? "stratified" : "bernoulli"; }
const char* setting_name(Setting s) { return s == Setting::kMultipleChoice ? "multiple_choice" : "binary"; }

void SynthSpec::validate() const {
  auto fail = [](const std::string& key, const std::string& why) { throw SpecError("synth." + key + ": " + why); };
  if (t_min < 2) fail("t_min", "videos need at least two frames");
  if (t_max < t_min) fail("t_max", "must be >= synth.t_min");
  if (evidence < 1) fail("evidence", "need at least one evidence frame");
  if (evidence > t_min - 1) fail("evidence", "k = " + std::to_string(evidence) + " exceeds the frames available after frame 0 (T_min - 1)");
  if (num_answers < 2) fail("num_answers", "need at least two candidate answers");
  if (values_per_part < 2) fail("values_per_part", "need at least two values per answer part");
  if (grid_side(num_answers, evidence) > values_per_part) {
    fail("values_per_part", "too few values to build " + std::to_string(num_answers) + " distinct candidates");
  }
  if (num_attributes < 1) fail("num_attributes", "need at least one attribute");
  if (filler_words < 1) fail("filler_words", "need at least one filler word");
  if (max_filler < min_filler) fail("max_filler", "must be >= synth.min_filler");
  if (!(rho >= 0.0 && rho <= 1.0)) fail("rho", "must lie in [0, 1]");
  if (!(sigma >= 0.0)) fail("sigma", "must be non-negative");
  if (!(amplitude > 0.0)) fail("amplitude", "must be positive");
  if (coarse_dims > raw_dim) fail("coarse_dims", "exceeds synth.raw_dim");
  if (code_width() > coarse_dims) fail("coarse_dims", "too small for k * values_per_part code dimensions");
  if (rho > 0.0 && code_width() > raw_dim - coarse_dims) {
    fail("raw_dim", "fine-only region too small for k * values_per_part code dimensions");
  }
  if (train_size == 0 && val_size == 0 && test_size == 0) fail("train_size", "all split sizes are zero");
}

std::string SynthSpec::to_json() const {
  nlohmann::json j = {{"t_min", t_min},
                      {"t_max", t_max},
                      {"raw_dim", raw_dim},
                      {"coarse_dims", coarse_dims},
                      {"num_answers", num_answers},
                      {"evidence", evidence},
                      {"values_per_part", values_per_part},
                      {"num_attributes", num_attributes},
                      {"filler_words", filler_words},
                      {"min_filler", min_filler},
                      {"max_filler", max_filler},
                      {"rho", rho},
                      {"rho_mode", rho_mode_name(rho_mode)},
                      {"sigma", sigma},
                      {"amplitude", amplitude},
                      {"position_jitter", position_jitter},
                      {"setting", setting_name(setting)},
                      {"train_size", train_size},
                      {"val_size", val_size},
                      {"test_size", test_size}};
  return j.dump();
}

SynthSpec SynthSpec::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  SynthSpec s;
  s.t_min = j.at("t_min");
  s.t_max = j.at("t_max");
  s.raw_dim = j.at("raw_dim");
  s.coarse_dims = j.at("coarse_dims");
  s.num_answers = j.at("num_answers");
  s.evidence = j.at("evidence");
  s.values_per_part = j.at("values_per_part");
  s.num_attributes = j.at("num_attributes");
  s.filler_words = j.at("filler_words");
  s.min_filler = j.at("min_filler");
  s.max_filler = j.at("max_filler");
  s.rho = j.at("rho");
  s.rho_mode = j.at("rho_mode") == "bernoulli" ? RhoMode::kBernoulli : RhoMode::kStratified;
  s.sigma = j.at("sigma");
  s.amplitude = j.at("amplitude");
  s.position_jitter = j.at("position_jitter");
  s.setting = j.at("setting") == "binary" ? Setting::kBinary : Setting::kMultipleChoice;
  s.train_size = j.at("train_size");
  s.val_size = j.at("val_size");
  s.test_size = j.at("test_size");
  return s;
}

Vocab synth_vocab(const SynthSpec& spec) {
  Vocab v;
  for (std::size_t i = 0; i < spec.filler_words; ++i) v.add("w" + std::to_string(i));
  for (std::size_t a = 0; a < spec.num_attributes; ++a) v.add("attr" + std::to_string(a));
  for (std::size_t j = 0; j < spec.evidence; ++j) {
    for (std::size_t val = 0; val < spec.values_per_part; ++val) v.add(answer_token(j, static_cast<int>(val)));
  }
  return v;
}

std::size_t anchor_position(const SynthSpec& spec, std::size_t attribute, std::size_t part) {
  // Stride 7 walks the positions 1 .. t_min-1; distinct within an attribute
  // whenever gcd(7, t_min - 1) == 1, and nearly so otherwise.
  const std::size_t span = spec.t_min - 1;
  const std::size_t slot = attribute * spec.evidence + part;
  std::size_t stride = 7;
  while (std::gcd(stride, span) != 1) ++stride;
  return 1 + (slot * stride) % span;
}

bool stratified_fine_only(const SynthSpec& spec, std::size_t attribute, std::size_t part) {
  const auto n_fine = static_cast<std::size_t>(std::lround(spec.rho * static_cast<double>(spec.evidence)));
  return (part + attribute) % spec.evidence < n_fine;
}

SynthEpisode generate_episode(const SynthSpec& spec, std::uint64_t seed, std::size_t index) {
  Rng rng = make_rng(seed, {index});
  std::normal_distribution<double> noise(0.0, spec.sigma);
  const Vocab vocab = synth_vocab(spec);
  SynthEpisode ep;
  SynthLatent& lat = ep.latent;

  const std::size_t T = spec.t_min + uniform_index(rng, spec.t_max - spec.t_min + 1);
  lat.attribute = static_cast<int>(uniform_index(rng, spec.num_attributes));
  const auto a = static_cast<std::size_t>(lat.attribute);

  std::vector<bool> taken(T, false);
  taken[0] = true;
  for (std::size_t j = 0; j < spec.evidence; ++j) {
    auto pos = static_cast<long>(anchor_position(spec, a, j));
    if (spec.position_jitter > 0) {
      const auto jit = static_cast<long>(spec.position_jitter);
      pos += static_cast<long>(uniform_index(rng, static_cast<std::size_t>(2 * jit + 1))) - jit;
      pos = std::clamp(pos, 1L, static_cast<long>(T) - 1);
    }
    while (taken[static_cast<std::size_t>(pos)]) pos = pos + 1 < static_cast<long>(T) ? pos + 1 : 1;
    taken[static_cast<std::size_t>(pos)] = true;
    lat.positions.push_back(static_cast<int>(pos));
    lat.values.push_back(static_cast<int>(uniform_index(rng, spec.values_per_part)));
    const bool fine = spec.rho_mode == RhoMode::kStratified ? stratified_fine_only(spec, a, j)
                                                            : uniform_open01(rng) < spec.rho;
    lat.fine_only.push_back(fine ? 1 : 0);
  }

  Tensor frames = Tensor::zeros(T, spec.raw_dim);
  for (auto& x : frames.values()) x = noise(rng);
  for (std::size_t j = 0; j < spec.evidence; ++j) {
    const std::size_t offset = lat.fine_only[j] ? spec.coarse_dims : 0;
    const std::size_t dim = offset + j * spec.values_per_part + static_cast<std::size_t>(lat.values[j]);
    frames(static_cast<std::size_t>(lat.positions[j]), dim) += spec.amplitude;
  }
  ep.episode.video = {"ep" + std::to_string(index), std::move(frames)};

  QAInstance& qa = ep.episode.qa;
  const std::size_t fillers = spec.min_filler + uniform_index(rng, spec.max_filler - spec.min_filler + 1);
  for (std::size_t i = 0; i < fillers; ++i) {
    qa.question.push_back(vocab.index("w" + std::to_string(uniform_index(rng, spec.filler_words))));
  }
  const std::size_t attr_at = uniform_index(rng, fillers + 1);
  qa.question.insert(qa.question.begin() + static_cast<std::ptrdiff_t>(attr_at),
                     vocab.index("attr" + std::to_string(lat.attribute)));

  // Candidate grid: per part, `side` distinct values including the true one.
  const std::size_t side = grid_side(spec.num_answers, spec.evidence);
  std::vector<std::vector<int>> options(spec.evidence);
  for (std::size_t j = 0; j < spec.evidence; ++j) {
    std::vector<int> pool(spec.values_per_part);
    std::iota(pool.begin(), pool.end(), 0);
    pool.erase(std::find(pool.begin(), pool.end(), lat.values[j]));
    std::shuffle(pool.begin(), pool.end(), rng);
    options[j] = {lat.values[j]};
    options[j].insert(options[j].end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(side - 1));
  }
  std::vector<std::vector<int>> wrong;
  std::vector<std::size_t> digits(spec.evidence, 0);
  for (;;) {
    std::vector<int> combo(spec.evidence);
    bool is_true = true;
    for (std::size_t j = 0; j < spec.evidence; ++j) {
      combo[j] = options[j][digits[j]];
      is_true = is_true && digits[j] == 0;
    }
    if (!is_true) wrong.push_back(std::move(combo));
    std::size_t j = 0;
    while (j < spec.evidence && ++digits[j] == side) digits[j++] = 0;
    if (j == spec.evidence) break;
  }
  std::shuffle(wrong.begin(), wrong.end(), rng);

  if (spec.setting == Setting::kMultipleChoice) {
    qa.num_classes = static_cast<int>(spec.num_answers);
    qa.gt = balanced_label(seed, index, spec.num_answers);
    std::size_t w = 0;
    for (std::size_t i = 0; i < spec.num_answers; ++i) {
      qa.answers.push_back(encode_combo(vocab, static_cast<int>(i) == qa.gt ? lat.values : wrong[w++]));
    }
  } else {
    qa.num_classes = 2;
    qa.gt = balanced_label(seed, index, 2);
    lat.shown_combo = qa.gt == 1 ? lat.values : wrong.front();
    qa.answers.push_back(encode_combo(vocab, lat.shown_combo));
  }
  return ep;
}

std::vector<SynthEpisode> generate(const SynthSpec& spec, std::uint64_t seed, std::size_t count, std::size_t first_index) {
  spec.validate();
  std::vector<SynthEpisode> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_episode(spec, seed, first_index + i));
  return out;
}

int oracle_answer(const SynthSpec& spec, const SynthEpisode& ep) {
  const Vocab vocab = synth_vocab(spec);
  const Tensor& frames = ep.episode.video.frames;
  std::vector<int> decoded;
  for (std::size_t j = 0; j < spec.evidence; ++j) {
    const auto pos = static_cast<std::size_t>(ep.latent.positions[j]);
    int best = 0;
    double best_score = -1e300;
    for (std::size_t v = 0; v < spec.values_per_part; ++v) {
      const std::size_t c = j * spec.values_per_part + v;
      double score = frames(pos, c);
      if (spec.coarse_dims + c < spec.raw_dim) score = std::max(score, frames(pos, spec.coarse_dims + c));
      if (score > best_score) {
        best_score = score;
        best = static_cast<int>(v);
      }
    }
    decoded.push_back(best);
  }
  const std::vector<int> tokens = encode_combo(vocab, decoded);
  const auto& answers = ep.episode.qa.answers;
  if (spec.setting == Setting::kBinary) return answers.front() == tokens ? 1 : 0;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    if (answers[i] == tokens) return static_cast<int>(i);
  }
  return -1;
}

std::vector<Episode> SynthDataset::plain() const {
  std::vector<Episode> out;
  out.reserve(episodes.size());
  for (const auto& e : episodes) out.push_back(e.episode);
  return out;
}

namespace {

void write_ints(ByteWriter& w, const std::vector<int>& xs) {
  w.u32(static_cast<std::uint32_t>(xs.size()));
  for (int x : xs) w.i32(x);
}

std::vector<int> read_ints(ByteReader& r) {
  std::vector<int> xs(r.u32());
  for (auto& x : xs) x = r.i32();
  return xs;
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const SynthDataset& data) {
  ByteWriter w;
  w.bytes(kDatasetMagic, sizeof kDatasetMagic);
  nlohmann::json header = {{"spec", nlohmann::json::parse(data.spec.to_json())},
                           {"seed", data.seed},
                           {"split", data.split},
                           {"count", data.episodes.size()}};
  w.str(header.dump());
  for (const auto& ep : data.episodes) {
    w.str(ep.episode.video.id);
    write_feature_record(w, ep.episode.video.frames);
    const QAInstance& qa = ep.episode.qa;
    write_ints(w, qa.question);
    w.u32(static_cast<std::uint32_t>(qa.answers.size()));
    for (const auto& a : qa.answers) write_ints(w, a);
    w.i32(qa.gt);
    w.i32(qa.num_classes);
    w.i32(ep.latent.attribute);
    write_ints(w, ep.latent.positions);
    write_ints(w, ep.latent.values);
    write_ints(w, ep.latent.fine_only);
    write_ints(w, ep.latent.shown_combo);
  }
  write_file_atomic(path, w.data());
}

SynthDataset read_dataset(const std::filesystem::path& path) {
  const std::string blob = read_file(path);
  ByteReader r(blob, path.string());
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kDatasetMagic))) {
    throw IoError(path.string() + " is not a synthetic dataset file (bad magic)");
  }
  SynthDataset data;
  std::size_t count = 0;
  try {
    const auto header = nlohmann::json::parse(r.str());
    data.spec = SynthSpec::from_json(header.at("spec").dump());
    data.seed = header.at("seed");
    data.split = header.at("split");
    count = header.at("count");
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed dataset header: " + e.what());
  }
  data.episodes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SynthEpisode ep;
    ep.episode.video.id = r.str();
    ep.episode.video.frames = read_feature_record(r);
    QAInstance& qa = ep.episode.qa;
    qa.question = read_ints(r);
    qa.answers.resize(r.u32());
    for (auto& a : qa.answers) a = read_ints(r);
    qa.gt = r.i32();
    qa.num_classes = r.i32();
    ep.latent.attribute = r.i32();
    ep.latent.positions = read_ints(r);
    ep.latent.values = read_ints(r);
    ep.latent.fine_only = read_ints(r);
    ep.latent.shown_combo = read_ints(r);
    data.episodes.push_back(std::move(ep));
  }
  if (!r.done()) throw IoError(path.string() + ": trailing bytes after " + std::to_string(count) + " episodes");
  return data;
}

}  // namespace eclipse
