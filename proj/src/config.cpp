// Copyright 2026 The bsroformer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "bsr/config.hpp"

#include <charconv>

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "bsr/errors.hpp"

namespace bsr {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || !std::isfinite(out)) throw ConfigError("'" + v + "' is not a number");
  return out;
}

std::uint64_t parse_unsigned(const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("'" + v + "' is not a non-negative integer");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("'" + v + "' is out of range");
  }
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::size_t> parse_list(const std::string& v) { return BandScheme::from_list(v).widths; }

std::string format_list(const std::vector<std::size_t>& v) { return BandScheme{v}.to_list(); }

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Get>
Field size_field(const char* key, Get member) {
  return {key, [member](RunConfig& c, const std::string& v) { member(c) = static_cast<std::size_t>(parse_unsigned(v)); },
          [member](const RunConfig& c) { return std::to_string(member(c)); }};
}

template <typename Get>
Field double_field(const char* key, Get member) {
  return {key, [member](RunConfig& c, const std::string& v) { member(c) = parse_double(v); },
          [member](const RunConfig& c) { return format_double(member(c)); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"sample_rate",
       [](RunConfig& c, const std::string& v) { c.model.sample_rate = static_cast<int>(parse_unsigned(v)); },
       [](const RunConfig& c) { return std::to_string(c.model.sample_rate); }},
      size_field("channels", [](auto& c) -> auto& { return c.model.channels; }),
      size_field("fft_size", [](auto& c) -> auto& { return c.model.stft.fft_size; }),
      size_field("hop", [](auto& c) -> auto& { return c.model.stft.hop; }),
      {"band_widths",
       [](RunConfig& c, const std::string& v) {
         c.model.bands = v == "default" ? BandScheme{} : BandScheme::from_list(v);
       },
       [](const RunConfig& c) { return c.model.band_scheme().to_list(); }},
      size_field("dim", [](auto& c) -> auto& { return c.model.dim; }),
      size_field("depth", [](auto& c) -> auto& { return c.model.depth; }),
      size_field("heads", [](auto& c) -> auto& { return c.model.heads; }),
      double_field("attn_dropout", [](auto& c) -> auto& { return c.model.attn_dropout; }),
      double_field("ff_dropout", [](auto& c) -> auto& { return c.model.ff_dropout; }),
      {"positional",
       [](RunConfig& c, const std::string& v) { c.model.positional = parse_positional_variant(v); },
       [](const RunConfig& c) { return to_string(c.model.positional); }},
      double_field("rope_base", [](auto& c) -> auto& { return c.model.rope_base; }),
      {"deframe", [](RunConfig& c, const std::string& v) { c.model.deframe = parse_deframe_mode(v); },
       [](const RunConfig& c) { return to_string(c.model.deframe); }},
      double_field("segment_seconds", [](auto& c) -> auto& { return c.model.segment_seconds; }),
      double_field("hop_seconds", [](auto& c) -> auto& { return c.model.hop_seconds; }),
      {"target_stem", [](RunConfig& c, const std::string& v) { c.train.target_stem = v; },
       [](const RunConfig& c) { return c.train.target_stem; }},
      size_field("batch_size", [](auto& c) -> auto& { return c.train.batch_size; }),
      double_field("learning_rate", [](auto& c) -> auto& { return c.train.learning_rate; }),
      double_field("lr_decay", [](auto& c) -> auto& { return c.train.lr_decay; }),
      size_field("lr_decay_steps", [](auto& c) -> auto& { return c.train.lr_decay_steps; }),
      double_field("adam_beta1", [](auto& c) -> auto& { return c.train.adam_beta1; }),
      double_field("adam_beta2", [](auto& c) -> auto& { return c.train.adam_beta2; }),
      double_field("adam_eps", [](auto& c) -> auto& { return c.train.adam_eps; }),
      double_field("weight_decay", [](auto& c) -> auto& { return c.train.weight_decay; }),
      double_field("ema_decay", [](auto& c) -> auto& { return c.train.ema_decay; }),
      size_field("grad_accum", [](auto& c) -> auto& { return c.train.grad_accum; }),
      size_field("pool_capacity", [](auto& c) -> auto& { return c.train.pool_capacity; }),
      double_field("gain_db", [](auto& c) -> auto& { return c.train.gain_db; }),
      double_field("silence_prob", [](auto& c) -> auto& { return c.train.silence_prob; }),
      double_field("loudness_gate_db", [](auto& c) -> auto& { return c.train.loudness_gate_db; }),
      size_field("crop_retries", [](auto& c) -> auto& { return c.train.crop_retries; }),
      {"loss_windows", [](RunConfig& c, const std::string& v) { c.train.loss_windows = parse_list(v); },
       [](const RunConfig& c) { return format_list(c.train.loss_windows); }},
      size_field("loss_hop", [](auto& c) -> auto& { return c.train.loss_hop; }),
      size_field("validate_every", [](auto& c) -> auto& { return c.train.validate_every; }),
      size_field("checkpoint_every", [](auto& c) -> auto& { return c.train.checkpoint_every; }),
      {"seed", [](RunConfig& c, const std::string& v) { c.train.seed = parse_unsigned(v); },
       [](const RunConfig& c) { return std::to_string(c.train.seed); }},
  };
  return table;
}

std::size_t to_samples(double seconds, int rate) {
  return static_cast<std::size_t>(std::llround(seconds * static_cast<double>(rate)));
}

}  // namespace

std::size_t stem_index(const std::string& name) {
  for (std::size_t i = 0; i < kStemNames.size(); ++i) {
    if (kStemNames[i] == name) return i;
  }
  throw ConfigError("unknown stem '" + name + "' (expected vocals, bass, drums or other)");
}

std::string to_string(DeframeMode mode) { return mode == DeframeMode::tc ? "tc" : "oa"; }

DeframeMode parse_deframe_mode(const std::string& text) {
  if (text == "tc") return DeframeMode::tc;
  if (text == "oa") return DeframeMode::oa;
  throw ConfigError("unknown deframe mode '" + text + "' (expected tc or oa)");
}

std::size_t ModelConfig::segment_samples() const { return to_samples(segment_seconds, sample_rate); }
std::size_t ModelConfig::hop_samples() const { return to_samples(hop_seconds, sample_rate); }

BandScheme ModelConfig::band_scheme() const {
  return bands.widths.empty() ? default_band_scheme(stft, sample_rate) : bands;
}

RoformerConfig ModelConfig::roformer() const {
  RoformerConfig r;
  r.dim = dim;
  r.depth = depth;
  r.heads = heads;
  r.attn_dropout = attn_dropout;
  r.ff_dropout = ff_dropout;
  r.positional = positional;
  r.rope_base = rope_base;
  r.max_time = frames();
  r.max_bands = band_scheme().count();
  return r;
}

void ModelConfig::validate() const {
  if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
  if (channels == 0) throw ConfigError("channels must be positive");
  stft.validate();
  band_scheme().validate(stft.bins());
  if (!(segment_seconds > 0) || !(hop_seconds > 0)) throw ConfigError("segment and hop lengths must be positive");
  if (!(segment_seconds > hop_seconds)) throw ConfigError("segment_seconds must exceed hop_seconds");
  if (hop_samples() == 0) throw ConfigError("hop_seconds is shorter than one sample");
  if (segment_samples() < 2) throw ConfigError("segment_seconds is shorter than two samples");
  roformer().validate();
}

void TrainConfig::validate() const {
  const auto index = stem_index(target_stem);
  if (index == 3) throw ConfigError("'other' is derived as the residual and is never trained");
  if (batch_size == 0 || grad_accum == 0) throw ConfigError("batch_size and grad_accum must be positive");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(lr_decay > 0 && lr_decay <= 1)) throw ConfigError("lr_decay must lie in (0, 1]");
  if (lr_decay_steps == 0) throw ConfigError("lr_decay_steps must be positive");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
  if (!(ema_decay >= 0 && ema_decay <= 1)) throw ConfigError("ema_decay must lie in [0, 1]");
  if (pool_capacity == 0) throw ConfigError("pool_capacity must be positive");
  if (!(gain_db >= 0)) throw ConfigError("gain_db must be non-negative");
  if (!(silence_prob >= 0 && silence_prob <= 1)) throw ConfigError("silence_prob must lie in [0, 1]");
  if (loss_windows.empty()) throw ConfigError("loss_windows is empty");
  for (std::size_t i = 0; i < loss_windows.size(); ++i) {
    if (loss_windows[i] < 2 || loss_windows[i] % 2 != 0) throw ConfigError("loss windows must be even and >= 2");
    if (i > 0 && loss_windows[i] >= loss_windows[i - 1]) throw ConfigError("loss windows must be descending");
  }
  if (loss_hop == 0) throw ConfigError("loss_hop must be positive");
  if (validate_every == 0 || checkpoint_every == 0) {
    throw ConfigError("validate_every and checkpoint_every must be positive");
  }
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(number) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* field = nullptr;
    for (const auto& f : fields()) {
      if (key == f.key) field = &f;
    }
    if (field == nullptr) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' repeated");
    try {
      field->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

std::string RunConfig::serialize() const {
  std::ostringstream out;
  for (const auto& f : fields()) out << f.key << " = " << f.get(*this) << "\n";
  return out.str();
}

RunConfig canonical_config() { return RunConfig{}; }

RunConfig smoke_config() {
  RunConfig cfg;
  cfg.model.dim = 16;
  cfg.model.depth = 1;
  cfg.model.heads = 2;
  cfg.model.attn_dropout = 0.0;
  cfg.model.ff_dropout = 0.0;
  cfg.model.bands = BandScheme{{512, 513}};
  cfg.model.segment_seconds = 0.5;
  cfg.model.hop_seconds = 0.25;
  cfg.train.batch_size = 2;
  cfg.train.learning_rate = 2e-3;
  cfg.train.validate_every = 100;
  cfg.train.checkpoint_every = 100;
  return cfg;
}

}  // namespace bsr
