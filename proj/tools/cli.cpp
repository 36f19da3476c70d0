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

#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "bsr/checkpoint.hpp"
#include "bsr/dataset.hpp"
#include "bsr/errors.hpp"
#include "bsr/fixture.hpp"
#include "bsr/segments.hpp"
#include "bsr/selftest.hpp"
#include "bsr/training.hpp"
#include "bsr/wav.hpp"

namespace bsr::cli {
namespace {

namespace fs = std::filesystem;

const std::vector<std::string> kColumns = {"Vocals", "Bass", "Drums", "Other"};

RunConfig resolve_config(const std::string& source) {
  if (source == "canonical") return canonical_config();
  if (source == "smoke") return smoke_config();
  return RunConfig::load(source);
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir);
}

std::string fixed(double v, int precision) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

// ---- separate ---------------------------------------------------------------

struct SeparateArgs {
  std::vector<std::string> models;
  std::string input;
  std::string out;
  std::string deframe;
  std::size_t jobs = 1;
  bool any_rate = false;
};

int cmd_separate(const SeparateArgs& a, std::ostream& out) {
  std::map<std::size_t, StemModel<float>> models;
  std::optional<RunConfig> reference;
  for (const auto& spec : a.models) {
    const auto eq = spec.find('=');
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    const auto ckpt = load_checkpoint(path);
    const std::string stem = eq == std::string::npos ? ckpt.stem : spec.substr(0, eq);
    const auto index = stem_index(stem);
    if (stem == "other") throw ConfigError("'other' is the residual and takes no model");
    if (ckpt.stem != stem) {
      throw DataError(path + " holds a " + ckpt.stem + " model, not " + stem);
    }
    if (models.count(index)) throw ConfigError("more than one model given for " + stem);
    const auto& mc = ckpt.config.model;
    if (reference) {
      const auto& rc = reference->model;
      if (mc.sample_rate != rc.sample_rate || mc.stft.fft_size != rc.stft.fft_size ||
          mc.stft.hop != rc.stft.hop || mc.channels != rc.channels) {
        throw MismatchError(path + ": sample rate, STFT or channel settings differ from the other models");
      }
    } else {
      reference = ckpt.config;
    }
    models.emplace(index, model_from_checkpoint(ckpt));
  }
  if (models.empty()) throw ConfigError("at least one --model is required");

  const auto& mc = reference->model;
  const auto mixture = read_wav(a.input, {a.any_rate ? 0 : kDefaultSampleRate});
  if (mixture.sample_rate != mc.sample_rate) {
    throw MismatchError(a.input + ": sample rate " + std::to_string(mixture.sample_rate) + " Hz, models use " +
                        std::to_string(mc.sample_rate) + " Hz");
  }
  if (mixture.channels != mc.channels) {
    throw DataError(a.input + ": " + std::to_string(mixture.channels) + " channels, models expect " +
                    std::to_string(mc.channels));
  }
  make_dir(a.out);

  std::array<std::optional<Waveform>, 4> stems;
  for (const auto& [index, model] : models) {
    const auto mode = a.deframe.empty() ? model.config.deframe : parse_deframe_mode(a.deframe);
    stems[index] = separate_track(model, mixture, mode, a.jobs);
  }
  if (stems[0] && stems[1] && stems[2]) stems[3] = residual_other(mixture, *stems[0], *stems[1], *stems[2]);
  for (std::size_t s = 0; s < stems.size(); ++s) {
    if (!stems[s]) continue;
    const auto path = (fs::path(a.out) / (kStemNames[s] + ".wav")).string();
    write_wav(path, *stems[s]);
    out << "wrote " << path << " (" << stems[s]->length << " samples)\n";
  }
  return kOk;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string valid;
  std::string out;
  std::string stem;
  std::size_t steps = 0;
  std::optional<std::uint64_t> seed;
  std::size_t log_every = 10;
  bool any_rate = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  auto cfg = resolve_config(a.config);
  if (a.seed) cfg.train.seed = *a.seed;
  if (!a.stem.empty()) cfg.train.target_stem = a.stem;
  cfg.validate();
  const WavReadOptions read{a.any_rate ? 0 : kDefaultSampleRate};
  const auto songs = load_songs(a.data, read);
  const auto valid = a.valid.empty() ? std::vector<Song>{} : load_songs(a.valid, read);
  make_dir(a.out);

  TrainOptions options;
  options.steps = a.steps;
  options.out_dir = a.out;
  options.on_step = [&](const StepRecord& r) {
    if (a.log_every == 0) return;
    if ((r.step + 1) % a.log_every != 0 && r.step + 1 != a.steps && !r.valid_sdr) return;
    out << "step " << std::setw(6) << r.step + 1 << "  lr " << r.lr << "  loss " << fixed(r.loss, 5);
    if (r.valid_sdr) out << "  valid SDR " << fixed(*r.valid_sdr, 2) << " dB";
    out << '\n' << std::flush;
  };
  const auto result = train(cfg, songs, valid, options);
  out << "trained " << cfg.train.target_stem << " for " << a.steps << " steps on " << songs.size()
      << " songs; checkpoints in " << a.out << '\n';
  if (result.best_sdr) out << "best validation SDR " << fixed(*result.best_sdr, 2) << " dB\n";
  return kOk;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string ref;
  std::string est;
  std::string metric = "global";
  std::string jsonl;
  std::size_t jobs = 1;
  bool any_rate = false;
};

nlohmann::json row_json(const std::string& track, const std::string& metric, const std::array<double, 4>& v,
                        double avg) {
  nlohmann::json j;
  j["track"] = track;
  j["metric"] = metric;
  for (std::size_t s = 0; s < 4; ++s) j[kStemNames[s]] = v[s];
  j["avg"] = avg;
  return j;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const bool chunked = a.metric == "chunked";
  std::error_code ec;
  if (!fs::is_directory(a.ref, ec)) throw DataError("reference directory " + a.ref + " does not exist");
  std::vector<std::string> tracks;
  for (const auto& e : fs::directory_iterator(a.ref)) {
    if (e.is_directory()) tracks.push_back(e.path().filename().string());
  }
  std::sort(tracks.begin(), tracks.end());
  if (tracks.empty()) throw DataError("reference directory " + a.ref + " holds no tracks");

  std::vector<std::string> missing;
  for (const auto& t : tracks) {
    for (const auto& s : kStemNames) {
      for (const auto& root : {a.ref, a.est}) {
        const auto p = fs::path(root) / t / (s + ".wav");
        if (!fs::exists(p)) missing.push_back(p.string());
      }
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing counterpart files:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw DataError(msg);
  }

  const WavReadOptions read{a.any_rate ? 0 : kDefaultSampleRate};
  std::vector<std::array<double, 4>> scores(tracks.size());
  parallel_for(tracks.size(), a.jobs, [&](std::size_t i) {
    for (std::size_t s = 0; s < 4; ++s) {
      const auto ref = read_wav((fs::path(a.ref) / tracks[i] / (kStemNames[s] + ".wav")).string(), read);
      const auto est = read_wav((fs::path(a.est) / tracks[i] / (kStemNames[s] + ".wav")).string(), read);
      scores[i][s] = chunked ? chunked_median_sdr(ref, est) : sdr(ref, est);
    }
  });

  auto avg = [](const std::array<double, 4>& v) { return (v[0] + v[1] + v[2] + v[3]) / 4.0; };
  std::array<double, 4> aggregate{};
  for (std::size_t s = 0; s < 4; ++s) {
    std::vector<double> column;
    for (const auto& row : scores) column.push_back(row[s]);
    if (chunked) {
      aggregate[s] = median(column);
    } else {
      double sum = 0;
      for (double v : column) sum += v;
      aggregate[s] = sum / static_cast<double>(column.size());
    }
  }
  const std::string aggregate_name = chunked ? "median" : "mean";

  if (!a.jsonl.empty()) {
    std::ofstream j(a.jsonl);
    if (!j) throw IoError("cannot write " + a.jsonl);
    for (std::size_t i = 0; i < tracks.size(); ++i) j << row_json(tracks[i], a.metric, scores[i], avg(scores[i])) << '\n';
    j << row_json("[" + aggregate_name + "]", a.metric, aggregate, avg(aggregate)) << '\n';
    if (!j) throw IoError("cannot write " + a.jsonl);
  }

  std::size_t name_width = aggregate_name.size() + 2;
  for (const auto& t : tracks) name_width = std::max(name_width, t.size());
  auto line = [&](const std::string& name, const std::array<double, 4>& v) {
    out << std::left << std::setw(static_cast<int>(name_width)) << name << std::right;
    for (double x : v) out << std::setw(9) << fixed(x, 2);
    out << std::setw(9) << fixed(avg(v), 2) << '\n';
  };
  out << "SDR (" << (chunked ? "median of 1 s chunks" : "global") << ", dB)\n";
  out << std::left << std::setw(static_cast<int>(name_width)) << "Track" << std::right;
  for (const auto& c : kColumns) out << std::setw(9) << c;
  out << std::setw(9) << "Avg." << '\n';
  for (std::size_t i = 0; i < tracks.size(); ++i) line(tracks[i], scores[i]);
  line("[" + aggregate_name + "]", aggregate);
  return kOk;
}

// ---- inspect ----------------------------------------------------------------

int cmd_inspect(const std::string& config, bool print_config, std::ostream& out) {
  const auto cfg = resolve_config(config);
  cfg.validate();
  if (print_config) {
    out << cfg.serialize();
    return kOk;
  }
  const auto& mc = cfg.model;
  const auto scheme = mc.band_scheme();
  const double hz_per_bin = static_cast<double>(mc.sample_rate) / static_cast<double>(mc.stft.fft_size);
  out << "sample rate " << mc.sample_rate << " Hz, n_fft " << mc.stft.fft_size << ", hop " << mc.stft.hop
      << ", " << mc.frames() << " frames per " << mc.segment_seconds << " s segment\n";
  out << scheme.count() << " bands over " << scheme.total_bins() << " bins\n";
  out << " band      first   last  width    low Hz   high Hz\n";
  for (std::size_t n = 0; n < scheme.count(); ++n) {
    const std::size_t first = scheme.start(n), last = first + scheme.widths[n] - 1;
    out << std::setw(5) << n << std::setw(11) << first << std::setw(7) << last << std::setw(7)
        << scheme.widths[n] << std::setw(10) << fixed(first * hz_per_bin, 1) << std::setw(10)
        << fixed(last * hz_per_bin, 1) << '\n';
  }
  const auto b = param_count(mc);
  out << "parameters (D = " << mc.dim << ", " << mc.depth << " blocks, " << mc.heads << " heads, "
      << to_string(mc.positional) << ")\n";
  out << "  band split      " << std::setw(12) << b.band_split << '\n';
  out << "  transformer     " << std::setw(12) << b.blocks << "  (" << mc.depth << " x " << b.per_block << ")\n";
  if (b.positional != 0) out << "  positional      " << std::setw(12) << b.positional << '\n';
  out << "  mask estimator  " << std::setw(12) << b.mask << '\n';
  out << "  total           " << std::setw(12) << b.total << "  (" << fixed(b.total / 1e6, 2) << "M)\n";
  return kOk;
}

// ---- selftest ---------------------------------------------------------------

int cmd_selftest(const std::string& suite, std::size_t corrupt_rope, std::ostream& out) {
  SelftestOptions options;
  options.corrupt_rope_position = corrupt_rope;
  const auto results = run_selftest(parse_selftest_suite(suite), options);
  std::size_t failed = 0;
  for (const auto& r : results) {
    if (!r.passed) ++failed;
    out << (r.passed ? "PASS " : "FAIL ") << r.suite << '/' << r.name << " (" << fixed(r.seconds, 2)
        << " s): " << r.detail << '\n';
  }
  out << results.size() - failed << '/' << results.size() << " checks passed\n";
  return failed == 0 ? kOk : kSelftestFailed;
}

// ---- fixture / init ---------------------------------------------------------

int cmd_fixture(const std::string& dir, std::size_t songs, double seconds, std::uint64_t seed, std::ostream& out) {
  std::vector<Song> list;
  for (std::size_t i = 0; i < songs; ++i) {
    auto rng = derive_rng(seed, i);
    std::ostringstream name;
    name << "song_" << std::setw(2) << std::setfill('0') << i;
    list.push_back(synthetic_song(name.str(), seconds, kDefaultSampleRate, 2, rng));
  }
  make_dir(dir);
  save_songs(dir, list);
  out << "wrote " << songs << " synthetic songs to " << dir << '\n';
  return kOk;
}

int cmd_init(const std::string& config, const std::string& stem, const std::string& path,
             const std::string& constant_mask, std::uint64_t seed, std::ostream& out) {
  auto cfg = resolve_config(config);
  cfg.train.seed = seed;
  cfg.validate();
  const auto index = stem_index(stem);
  if (stem == "other") throw ConfigError("'other' is the residual and takes no model");
  Rng rng(seed);
  auto model = init_stem_model<float>(cfg.model, stem, rng);
  const auto channels = cfg.model.channels;
  if (constant_mask == "identity") {
    set_constant_band_masks(model.mask, model.scheme, channels,
                            std::vector<std::complex<double>>(model.scheme.count(), {1.0, 0.0}));
  } else if (constant_mask == "band-oracle") {
    set_constant_band_masks(model.mask, model.scheme, channels,
                            band_range_mask(model.scheme, cfg.model.stft, cfg.model.sample_rate,
                                            fixture_ranges()[index]));
  }
  save_checkpoint(path, make_checkpoint(model, cfg, 0));
  out << "wrote " << stem << " checkpoint to " << path << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Band-split RoPE transformer music source separation"};
  app.name("bsroformer");
  app.require_subcommand(1);
  app.set_version_flag("--version", "bsroformer 0.1.0");

  SeparateArgs sep;
  auto* separate = app.add_subcommand("separate", "Separate a mixture into stems");
  separate->add_option("--model", sep.models, "Stem checkpoint, as stem=path or path")->required();
  separate->add_option("--input", sep.input, "Mixture WAV file")->required();
  separate->add_option("--out", sep.out, "Output directory")->required();
  separate->add_option("--deframe", sep.deframe, "Segment recombination (default: from the checkpoint)")
      ->check(CLI::IsMember({"tc", "oa"}));
  separate->add_option("--jobs", sep.jobs, "Segments processed in parallel")->check(CLI::PositiveNumber);
  separate->add_flag("--any-rate", sep.any_rate, "Accept input sample rates other than 44100 Hz");

  TrainArgs tr;
  auto* training = app.add_subcommand("train", "Train one stem model");
  training->add_option("--config", tr.config, "Config file, or 'smoke' / 'canonical'")->required();
  training->add_option("--data", tr.data, "Training songs as <song>/<stem>.wav")->required();
  training->add_option("--valid", tr.valid, "Validation songs in the same layout");
  training->add_option("--steps", tr.steps, "Optimizer steps")->required();
  training->add_option("--out", tr.out, "Checkpoint and log directory")->required();
  training->add_option("--seed", tr.seed, "Overrides the config seed");
  training->add_option("--stem", tr.stem, "Overrides the config target stem")
      ->check(CLI::IsMember({"vocals", "bass", "drums"}));
  training->add_option("--log-every", tr.log_every, "Progress line interval (0: quiet)");
  training->add_flag("--any-rate", tr.any_rate, "Accept sample rates other than 44100 Hz");

  EvalArgs ev;
  auto* evaluate = app.add_subcommand("eval", "Score estimated stems against references");
  evaluate->add_option("--ref", ev.ref, "Reference tracks as <track>/<stem>.wav")->required();
  evaluate->add_option("--est", ev.est, "Estimates in the same layout")->required();
  evaluate->add_option("--metric", ev.metric, "global or chunked")->check(CLI::IsMember({"global", "chunked"}));
  evaluate->add_option("--jsonl", ev.jsonl, "Also write JSON lines records to this file");
  evaluate->add_option("--jobs", ev.jobs, "Tracks scored in parallel")->check(CLI::PositiveNumber);
  evaluate->add_flag("--any-rate", ev.any_rate, "Accept sample rates other than 44100 Hz");

  std::string inspect_config;
  auto* inspect = app.add_subcommand("inspect", "Print the band table and parameter counts");
  bool inspect_print = false;
  inspect->add_option("--config", inspect_config, "Config file, or 'smoke' / 'canonical'")->required();
  inspect->add_flag("--print-config", inspect_print, "Print the full config text instead");

  std::string suite = "all";
  std::size_t corrupt_rope = 0;
  auto* selftest = app.add_subcommand("selftest", "Run gradient and invariant checks");
  selftest->add_option("--suite", suite, "grad, invariants or all")
      ->check(CLI::IsMember({"grad", "invariants", "all"}));
  selftest->add_option("--corrupt-rope", corrupt_rope, "Perturb one RoPE angle (negative control)")
      ->group("");

  std::string fixture_out;
  std::size_t fixture_songs = 4;
  double fixture_seconds = 3.0;
  std::uint64_t fixture_seed = 0;
  auto* fixture = app.add_subcommand("fixture", "Write synthetic disjoint-band songs");
  fixture->add_option("--out", fixture_out, "Output directory")->required();
  fixture->add_option("--songs", fixture_songs, "Number of songs")->check(CLI::PositiveNumber);
  fixture->add_option("--seconds", fixture_seconds, "Song length")->check(CLI::PositiveNumber);
  fixture->add_option("--seed", fixture_seed, "Random seed");

  std::string init_config, init_stem, init_out, init_mask = "none";
  std::uint64_t init_seed = 0;
  auto* init = app.add_subcommand("init", "Write a freshly initialised checkpoint");
  init->add_option("--config", init_config, "Config file, or 'smoke' / 'canonical'")->required();
  init->add_option("--stem", init_stem, "Target stem")->required()->check(CLI::IsMember({"vocals", "bass", "drums"}));
  init->add_option("--out", init_out, "Checkpoint path")->required();
  init->add_option("--seed", init_seed, "Random seed");
  init->add_option("--constant-mask", init_mask, "none, identity or band-oracle (fixture ranges)")
      ->check(CLI::IsMember({"none", "identity", "band-oracle"}));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*separate) return cmd_separate(sep, out);
    if (*training) return cmd_train(tr, out);
    if (*evaluate) return cmd_eval(ev, out);
    if (*inspect) return cmd_inspect(inspect_config, inspect_print, out);
    if (*selftest) return cmd_selftest(suite, corrupt_rope, out);
    if (*fixture) return cmd_fixture(fixture_out, fixture_songs, fixture_seconds, fixture_seed, out);
    if (*init) return cmd_init(init_config, init_stem, init_out, init_mask, init_seed, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const MismatchError& e) {
    err << "mismatch: " << e.what() << '\n';
    return kMismatch;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const DimensionError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace bsr::cli
