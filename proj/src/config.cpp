// Copyright 2026 The egru-lm Authors
// SPDX-License-Identifier: Apache-2.0

#include "egru/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <variant>

#include "egru/corpus.hpp"
#include "egru/errors.hpp"
#include "json.hpp"

namespace egru {

namespace {

using json = nlohmann::ordered_json;

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed shares the size_t field kind");

using Field = std::variant<std::string RunConfig::*, std::size_t RunConfig::*, int RunConfig::*,
                           double RunConfig::*, bool RunConfig::*, std::vector<double> RunConfig::*>;

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> f = {
      {"cell_kind", &RunConfig::cell_kind},
      {"embed_dim", &RunConfig::embed_dim},
      {"hidden_dim", &RunConfig::hidden_dim},
      {"num_layers", &RunConfig::num_layers},
      {"dropconnect_p", &RunConfig::dropconnect_p},
      {"dropout_in_p", &RunConfig::dropout_in_p},
      {"dropout_out_p", &RunConfig::dropout_out_p},
      {"tie_weights", &RunConfig::tie_weights},
      {"surrogate_scale", &RunConfig::surrogate_scale},
      {"surrogate_width", &RunConfig::surrogate_width},
      {"forget_bias", &RunConfig::forget_bias},
      {"embed_init_std", &RunConfig::embed_init_std},
      {"threshold_floor", &RunConfig::threshold_floor},
      {"lr", &RunConfig::lr},
      {"beta1", &RunConfig::beta1},
      {"beta2", &RunConfig::beta2},
      {"eps_adam", &RunConfig::eps_adam},
      {"decay_w", &RunConfig::decay_w},
      {"decay_b", &RunConfig::decay_b},
      {"clip_norm", &RunConfig::clip_norm},
      {"batch_size", &RunConfig::batch_size},
      {"bptt_len", &RunConfig::bptt_len},
      {"eval_batch_size", &RunConfig::eval_batch_size},
      {"epochs", &RunConfig::epochs},
      {"max_train_batches", &RunConfig::max_train_batches},
      {"train_path", &RunConfig::train_path},
      {"valid_path", &RunConfig::valid_path},
      {"test_path", &RunConfig::test_path},
      {"vocab_path", &RunConfig::vocab_path},
      {"prune_target", &RunConfig::prune_target},
      {"prune_finetune_epochs", &RunConfig::prune_finetune_epochs},
      {"prune_steps", &RunConfig::prune_steps},
      {"sweep_decay_w", &RunConfig::sweep_decay_w},
      {"sweep_decay_b", &RunConfig::sweep_decay_b},
      {"seed", &RunConfig::seed},
      {"threads", &RunConfig::threads},
      {"include_readout_macs", &RunConfig::include_readout_macs},
      {"precision", &RunConfig::precision},
  };
  return f;
}

const Field& find_field(const std::string& key) {
  for (const auto& [name, field] : fields()) {
    if (name == key) return field;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

double parse_double(const std::string& key, const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + s + "'");
  }
}

long long parse_int(const std::string& key, const std::string& s) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + s + "'");
  }
}

std::size_t parse_count(const std::string& key, const std::string& s) {
  const long long v = parse_int(key, s);
  if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "1" || s == "true" || s == "on" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "off" || s == "no") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + s + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& s) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }),
               item.end());
    if (!item.empty()) out.push_back(parse_double(key, item));
  }
  return out;
}

void set_from_json(RunConfig& cfg, const std::string& key, const json& v) {
  const Field& field = find_field(key);
  auto type_error = [&](const char* want) {
    return ConfigError("config key '" + key + "': expected " + want + ", got " + v.dump());
  };
  std::visit(
      [&](auto member) {
        using M = std::remove_reference_t<decltype(cfg.*member)>;
        if constexpr (std::is_same_v<M, std::string>) {
          if (!v.is_string()) throw type_error("a string");
          cfg.*member = v.get<std::string>();
        } else if constexpr (std::is_same_v<M, bool>) {
          if (!v.is_boolean()) throw type_error("a boolean");
          cfg.*member = v.get<bool>();
        } else if constexpr (std::is_same_v<M, double>) {
          if (!v.is_number()) throw type_error("a number");
          cfg.*member = v.get<double>();
        } else if constexpr (std::is_same_v<M, std::vector<double>>) {
          if (!v.is_array()) throw type_error("an array of numbers");
          std::vector<double> out;
          for (const auto& x : v) {
            if (!x.is_number()) throw type_error("an array of numbers");
            out.push_back(x.get<double>());
          }
          cfg.*member = std::move(out);
        } else {
          if (!v.is_number_integer()) throw type_error("an integer");
          if constexpr (std::is_unsigned_v<M>) {
            if (v.get<long long>() < 0) throw type_error("a non-negative integer");
          }
          cfg.*member = v.get<M>();
        }
      },
      field);
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [name, field] : fields()) out.push_back(name);
  return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Field& field = find_field(key);
  std::visit(
      [&](auto member) {
        using M = std::remove_reference_t<decltype(cfg.*member)>;
        if constexpr (std::is_same_v<M, std::string>) {
          cfg.*member = value;
        } else if constexpr (std::is_same_v<M, bool>) {
          cfg.*member = parse_bool(key, value);
        } else if constexpr (std::is_same_v<M, double>) {
          cfg.*member = parse_double(key, value);
        } else if constexpr (std::is_same_v<M, std::vector<double>>) {
          cfg.*member = parse_list(key, value);
        } else if constexpr (std::is_same_v<M, int>) {
          cfg.*member = static_cast<int>(parse_int(key, value));
        } else {
          cfg.*member = static_cast<M>(parse_count(key, value));
        }
      },
      field);
}

RunConfig config_from_json_text(const std::string& text, RunConfig base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "code_version") continue;  // informational, written with resolved configs
    set_from_json(base, key, value);
  }
  return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError&) {
    throw ConfigError("cannot read config file " + path);
  }
  return config_from_json_text(text, std::move(base));
}

void apply_env_overrides(RunConfig& cfg, const std::function<const char*(const char*)>& getenv) {
  for (const auto& key : config_keys()) {
    const std::string name = kEnvPrefix + upper(key);
    const char* v = getenv ? getenv(name.c_str()) : std::getenv(name.c_str());
    if (v) set_config_value(cfg, key, v);
  }
}

std::string config_to_json(const RunConfig& cfg, bool with_version) {
  json j = json::object();
  if (with_version) j["code_version"] = kCodeVersion;
  for (const auto& [name, field] : fields()) {
    std::visit([&](auto member) { j[name] = cfg.*member; }, field);
  }
  return j.dump(2);
}

LmConfig RunConfig::lm_config(std::size_t vocab_size) const {
  LmConfig c;
  c.vocab_size = vocab_size;
  c.embed_dim = embed_dim;
  c.hidden_dim = hidden_dim;
  c.num_layers = num_layers;
  c.cell_kind = parse_cell_kind(cell_kind);
  c.dropconnect_p = dropconnect_p;
  c.dropout_in_p = dropout_in_p;
  c.dropout_out_p = dropout_out_p;
  c.tie_weights = tie_weights;
  c.surrogate_scale = surrogate_scale;
  c.surrogate_width = surrogate_width;
  c.forget_bias = forget_bias;
  c.embed_init_std = embed_init_std;
  return c;
}

AdamWConfig RunConfig::adamw_config() const {
  AdamWConfig c;
  c.lr = lr;
  c.beta1 = beta1;
  c.beta2 = beta2;
  c.eps = eps_adam;
  c.decay_w = decay_w;
  c.decay_b = decay_b;
  return c;
}

PruneSchedule RunConfig::prune_schedule() const {
  PruneSchedule s;
  if (!prune_steps.empty()) {
    for (double t : prune_steps) s.steps.push_back({t, prune_finetune_epochs});
  } else {
    s = PruneSchedule::increments(prune_target, prune_finetune_epochs);
  }
  s.validate();
  return s;
}

void RunConfig::validate() const {
  parse_cell_kind(cell_kind);
  if (std::isnan(threshold_floor)) throw ConfigError("threshold_floor must not be NaN");
  if (precision != "f32" && precision != "f64") throw ConfigError("precision must be f32 or f64");
  if (batch_size == 0 || bptt_len == 0 || eval_batch_size == 0) {
    throw ConfigError("batch_size, bptt_len and eval_batch_size must be positive");
  }
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (decay_w < 0.0 || decay_b < 0.0) throw ConfigError("weight decay must be non-negative");
  if (!(prune_target >= 0.0 && prune_target < 1.0)) throw ConfigError("prune_target must be in [0, 1)");
  if (prune_finetune_epochs < 0) throw ConfigError("prune_finetune_epochs must be non-negative");
  try {
    lm_config(2).validate();
    if (!prune_steps.empty()) prune_schedule();
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace egru
