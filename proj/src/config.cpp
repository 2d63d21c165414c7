#include "eclipse/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>

#include "eclipse/io.hpp"

namespace eclipse {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError(key, "cannot parse '" + text + "' as a " +
                               (std::is_floating_point_v<T> ? "number" : "non-negative integer"));
  }
  return value;
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError(key, "expected true or false, got '" + text + "'");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (text.empty()) throw ConfigError(key, "value is empty");
    return text;
  } else {
    return parse_number<T>(key, text);
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_floating_point_v<T>) {
    return format_double(v);
  } else {
    return std::to_string(v);
  }
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Access>
Field field(std::string key, Access access) {
  return {key,
          [access, key](RunConfig& c, const std::string& v) {
            auto& slot = access(c);
            slot = parse_value<std::remove_reference_t<decltype(slot)>>(key, v);
          },
          [access](const RunConfig& c) { return format_value(access(c)); }};
}

std::string join_policies(const std::vector<Policy>& ps) {
  std::string out;
  for (const auto& p : ps) out += (out.empty() ? "" : ",") + p.name();
  return out;
}

std::vector<Policy> parse_policies(const std::string& key, const std::string& text) {
  std::vector<Policy> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      const Policy p = Policy::parse(item);
      for (const auto& q : out) {
        if (q == p) throw ConfigError(key, "policy '" + item + "' listed twice");
      }
      out.push_back(p);
    } catch (const ValidationError& e) {
      throw ConfigError(key, e.what());
    }
  }
  if (out.empty()) throw ConfigError(key, "needs at least one policy");
  return out;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(field("synth.t_min", [](auto& c) -> auto& { return c.synth.t_min; }));
    f.push_back(field("synth.t_max", [](auto& c) -> auto& { return c.synth.t_max; }));
    f.push_back(field("synth.raw_dim", [](auto& c) -> auto& { return c.synth.raw_dim; }));
    f.push_back(field("synth.coarse_dims", [](auto& c) -> auto& { return c.synth.coarse_dims; }));
    f.push_back(field("synth.num_answers", [](auto& c) -> auto& { return c.synth.num_answers; }));
    f.push_back(field("synth.evidence", [](auto& c) -> auto& { return c.synth.evidence; }));
    f.push_back(field("synth.values_per_part", [](auto& c) -> auto& { return c.synth.values_per_part; }));
    f.push_back(field("synth.num_attributes", [](auto& c) -> auto& { return c.synth.num_attributes; }));
    f.push_back(field("synth.filler_words", [](auto& c) -> auto& { return c.synth.filler_words; }));
    f.push_back(field("synth.min_filler", [](auto& c) -> auto& { return c.synth.min_filler; }));
    f.push_back(field("synth.max_filler", [](auto& c) -> auto& { return c.synth.max_filler; }));
    f.push_back(field("synth.rho", [](auto& c) -> auto& { return c.synth.rho; }));
    f.push_back({"synth.rho_mode",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "stratified") c.synth.rho_mode = RhoMode::kStratified;
                   else if (v == "bernoulli") c.synth.rho_mode = RhoMode::kBernoulli;
                   else throw ConfigError("synth.rho_mode", "expected stratified or bernoulli, got '" + v + "'");
                 },
                 [](const RunConfig& c) { return std::string(rho_mode_name(c.synth.rho_mode)); }});
    f.push_back(field("synth.sigma", [](auto& c) -> auto& { return c.synth.sigma; }));
    f.push_back(field("synth.amplitude", [](auto& c) -> auto& { return c.synth.amplitude; }));
    f.push_back(field("synth.position_jitter", [](auto& c) -> auto& { return c.synth.position_jitter; }));
    f.push_back({"synth.setting",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "multiple_choice") c.synth.setting = Setting::kMultipleChoice;
                   else if (v == "binary") c.synth.setting = Setting::kBinary;
                   else throw ConfigError("synth.setting", "expected multiple_choice or binary, got '" + v + "'");
                 },
                 [](const RunConfig& c) { return std::string(setting_name(c.synth.setting)); }});
    f.push_back(field("synth.train_size", [](auto& c) -> auto& { return c.synth.train_size; }));
    f.push_back(field("synth.val_size", [](auto& c) -> auto& { return c.synth.val_size; }));
    f.push_back(field("synth.test_size", [](auto& c) -> auto& { return c.synth.test_size; }));
    f.push_back(field("data.seed", [](auto& c) -> auto& { return c.data_seed; }));
    f.push_back(field("model.embed_dim", [](auto& c) -> auto& { return c.model.embed_dim; }));
    f.push_back(field("model.text_hidden", [](auto& c) -> auto& { return c.model.text_hidden; }));
    f.push_back(field("model.core_hidden", [](auto& c) -> auto& { return c.model.core_hidden; }));
    f.push_back(field("model.fine_width", [](auto& c) -> auto& { return c.model.fine_width; }));
    f.push_back(field("model.coarse_width", [](auto& c) -> auto& { return c.model.coarse_width; }));
    f.push_back(field("model.feat_dim", [](auto& c) -> auto& { return c.model.feat_dim; }));
    f.push_back(field("model.shared_text_encoder", [](auto& c) -> auto& { return c.model.shared_text_encoder; }));
    f.push_back(field("train.epochs", [](auto& c) -> auto& { return c.train.epochs; }));
    f.push_back(field("train.batch_size", [](auto& c) -> auto& { return c.train.batch_size; }));
    f.push_back(field("train.lr", [](auto& c) -> auto& { return c.train.adam.lr; }));
    f.push_back(field("train.weight_decay", [](auto& c) -> auto& { return c.train.adam.weight_decay; }));
    f.push_back(field("train.lambda", [](auto& c) -> auto& { return c.train.lambda; }));
    f.push_back(field("train.lambda_warmup", [](auto& c) -> auto& { return c.train.lambda_warmup; }));
    f.push_back(field("train.mu", [](auto& c) -> auto& { return c.train.mu; }));
    f.push_back(field("train.t_steps", [](auto& c) -> auto& { return c.train.t_steps; }));
    f.push_back(field("train.tau_init", [](auto& c) -> auto& { return c.train.tau_init; }));
    f.push_back(field("train.tau_decay", [](auto& c) -> auto& { return c.train.tau_decay; }));
    f.push_back(field("train.tau_floor", [](auto& c) -> auto& { return c.train.tau_floor; }));
    f.push_back(field("train.seed", [](auto& c) -> auto& { return c.train.seed; }));
    f.push_back({"train.granularity",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "joint") c.train.granularity.reset();
                   else if (v == "coarse") c.train.granularity = Granularity::kCoarse;
                   else if (v == "fine") c.train.granularity = Granularity::kFine;
                   else throw ConfigError("train.granularity", "expected joint, coarse or fine, got '" + v + "'");
                 },
                 [](const RunConfig& c) -> std::string {
                   if (!c.train.granularity) return "joint";
                   return *c.train.granularity == Granularity::kFine ? "fine" : "coarse";
                 }});
    f.push_back({"eval.policy",
                 [](RunConfig& c, const std::string& v) {
                   try {
                     c.eval.policy = Policy::parse(v);
                   } catch (const ValidationError& e) {
                     throw ConfigError("eval.policy", e.what());
                   }
                 },
                 [](const RunConfig& c) { return c.eval.policy.name(); }});
    f.push_back(field("eval.exit_threshold", [](auto& c) -> auto& { return c.eval.exit_threshold; }));
    f.push_back(field("eval.stochastic_glimpse", [](auto& c) -> auto& { return c.eval.stochastic_glimpse; }));
    f.push_back(field("eval.tau", [](auto& c) -> auto& { return c.eval.tau; }));
    f.push_back(field("cost.fine", [](auto& c) -> auto& { return c.eval.cost.fine; }));
    f.push_back(field("cost.coarse", [](auto& c) -> auto& { return c.eval.cost.coarse; }));
    f.push_back(field("cost.overhead", [](auto& c) -> auto& { return c.eval.cost.overhead; }));
    f.push_back({"ablate.policies",
                 [](RunConfig& c, const std::string& v) { c.ablate_policies = parse_policies("ablate.policies", v); },
                 [](const RunConfig& c) { return join_policies(c.ablate_policies); }});
    f.push_back(field("ablate.retrain_granularity", [](auto& c) -> auto& { return c.ablate_retrain_granularity; }));
    f.push_back(field("run.out_dir", [](auto& c) -> auto& { return c.out_dir; }));
    return f;
  }();
  return table;
}

// Pulls the dotted key off the front of a validation message, if any.
std::string key_of(const std::string& message) {
  const auto end = message.find_first_of(" :");
  const std::string head = message.substr(0, end);
  return head.find('.') != std::string::npos ? head : "";
}

RunConfig defaults() {
  RunConfig c;
  c.ablate_policies = parse_policies("ablate.policies",
                                     "eclipse,final_step,coarse_only,fine_only,uniform_1,uniform_2,uniform_3,uniform_5,"
                                     "avgpool,text_only,random");
  return c;
}

}  // namespace

ModelConfig RunConfig::resolved_model() const {
  ModelConfig m = model;
  m.vocab_size = synth_vocab(synth).size();
  m.raw_dim = synth.raw_dim;
  m.coarse_input_dims = synth.coarse_dims;
  m.t_max = synth.t_max;
  const bool binary = synth.setting == Setting::kBinary;
  m.num_answers = binary ? 1 : synth.num_answers;
  m.num_classes = binary ? 2 : synth.num_answers;
  return m;
}

EvalOptions RunConfig::eval_options() const {
  EvalOptions o;
  o.infer = eval;
  o.infer.t_steps = train.t_steps;
  o.seed = train.seed;
  return o;
}

void RunConfig::validate() const {
  try {
    synth.validate();
    resolved_model().validate();
    train.validate();
    eval.cost.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key_of(e.what()), e.what());
  }
  if (!(eval.exit_threshold >= 0.0 && eval.exit_threshold <= 1.0)) {
    throw ConfigError("eval.exit_threshold", "must lie in [0, 1]");
  }
  if (!(eval.tau > 0.0)) throw ConfigError("eval.tau", "must be positive");
  if (out_dir.empty()) throw ConfigError("run.out_dir", "must not be empty");
}

ConfigMap parse_config_text(const std::string& text, const std::string& source) {
  ConfigMap map;
  std::stringstream ss(text);
  std::string line;
  for (int lineno = 1; std::getline(ss, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("", source + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("", source + ":" + std::to_string(lineno) + ": missing key");
    map[key] = trim(line.substr(eq + 1));
  }
  return map;
}

ConfigMap load_config_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError("", std::string("cannot read config: ") + e.what());
  }
  return parse_config_text(text, path.string());
}

void apply_overrides(ConfigMap& map, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || trim(o.substr(0, eq)).empty()) {
      throw ConfigError("", "override '" + o + "' is not of the form key=value");
    }
    map[trim(o.substr(0, eq))] = trim(o.substr(eq + 1));
  }
}

RunConfig build_run_config(const ConfigMap& map) {
  RunConfig c = defaults();
  const auto& table = fields();
  for (const auto& [key, value] : map) {
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError(key, "unknown config key");
    it->set(c, value);
  }
  c.validate();
  return c;
}

std::string render_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

}  // namespace eclipse
