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

#include "bsr/selftest.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>

#include "bsr/checkpoint.hpp"
#include "bsr/errors.hpp"
#include "bsr/grad_check.hpp"
#include "bsr/ops.hpp"
#include "bsr/segments.hpp"
#include "bsr/training.hpp"
#include "bsr/wav.hpp"

namespace bsr {
namespace {

using Check = std::function<std::pair<bool, std::string>()>;

template <typename T>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0, bool grad = false) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(normal(rng));
  return Tensor<T>(shape, std::move(v), grad);
}

Waveform noise(std::size_t channels, std::size_t length, Rng& rng, float scale = 0.5f) {
  Waveform w(channels, length);
  std::uniform_real_distribution<float> u(-scale, scale);
  for (auto& v : w.samples) v = u(rng);
  return w;
}

double max_abs_diff(const Waveform& a, const Waveform& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a.samples[i]) - b.samples[i]));
  }
  return worst;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

std::pair<bool, std::string> grad_result(const GradCheckReport& r, double tolerance) {
  const bool ok = r.max_rel_error < tolerance;
  return {ok, "max rel error " + fmt(r.max_rel_error) + " over " + std::to_string(r.checked) +
                  " entries (tolerance " + fmt(tolerance) + ")" + (ok ? "" : "; worst " + r.worst)};
}

ModelConfig toy_model_config() {
  ModelConfig mc;
  mc.stft = {256, 64, true};
  mc.bands = BandScheme{{64, 65}};
  mc.dim = 8;
  mc.depth = 1;
  mc.heads = 2;
  mc.attn_dropout = mc.ff_dropout = 0.0;
  mc.segment_seconds = 0.1;
  mc.hop_seconds = 0.05;
  return mc;
}

std::vector<std::pair<std::string, Check>> grad_checks() {
  std::vector<std::pair<std::string, Check>> checks;
  checks.emplace_back("rmsnorm+linear", [] {
    Rng rng(1);
    auto x = random_tensor<double>({3, 6}, rng, 1.0, true);
    auto scale = random_tensor<double>({6}, rng, 1.0, true);
    auto layer = init_linear<double>(6, 4, rng);
    auto f = [&] { return ops::sum(ops::square(linear(rmsnorm(x, scale), layer))); };
    return grad_result(grad_check(f, {x, scale, layer.weight, layer.bias}), 1e-6);
  });
  checks.emplace_back("glu", [] {
    Rng rng(2);
    auto x = random_tensor<double>({4, 6}, rng, 1.0, true);
    auto f = [&] { return ops::sum(ops::square(glu(x))); };
    return grad_result(grad_check(f, {x}), 1e-6);
  });
  checks.emplace_back("rope attention", [] {
    Rng rng(3);
    auto layer = init_layer<double>(8, rng);
    RopeEncoder enc(4, 16);
    auto h = random_tensor<double>({2, 5, 8}, rng, 1.0, true);
    auto f = [&] { return ops::sum(ops::square(attention(h, layer.attn, 2, &enc, nullptr, 0.0, {}))); };
    const auto& a = layer.attn;
    return grad_result(grad_check(f, {h, a.norm, a.q.weight, a.k.weight, a.v.weight, a.out.weight, a.q.bias}),
                       1e-5);
  });
  checks.emplace_back("feedforward", [] {
    Rng rng(4);
    auto layer = init_layer<double>(8, rng);
    auto h = random_tensor<double>({3, 8}, rng, 1.0, true);
    auto f = [&] { return ops::sum(ops::square(feedforward(h, layer.ff, 0.0, {}))); };
    const auto& p = layer.ff;
    return grad_result(grad_check(f, {h, p.norm, p.up.weight, p.up.bias, p.down.weight, p.down.bias}), 1e-5);
  });
  checks.emplace_back("hierarchical block", [] {
    Rng rng(5);
    RoformerConfig cfg;
    cfg.dim = 8;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.attn_dropout = cfg.ff_dropout = 0.0;
    cfg.max_time = 4;
    cfg.max_bands = 3;
    auto params = init_roformer<double>(cfg, rng);
    const auto enc = make_rope_encoders(cfg);
    auto h = random_tensor<double>({1, 4, 3, 8}, rng, 1.0, true);
    auto f = [&] { return ops::sum(ops::square(transformer_stack(h, params, cfg, enc, {}))); };
    NamedParams<double> named;
    append_params(params, named);
    std::vector<Tensor<double>> ps{h};
    for (auto& [n, t] : named) ps.push_back(t);
    return grad_result(grad_check(f, ps, {.samples = 200, .seed = 5}), 1e-4);
  });
  checks.emplace_back("band split", [] {
    Rng rng(6);
    BandScheme scheme{{3, 2, 4}};
    auto params = init_band_split<double>(scheme, 2, 6, rng);
    auto spec = random_tensor<double>({1, 2, 3, 9, 2}, rng, 1.0, true);
    auto f = [&] { return ops::sum(ops::square(band_split_forward(spec, scheme, params))); };
    std::vector<Tensor<double>> ps{spec};
    for (auto& b : params.bands) {
      ps.push_back(b.norm);
      ps.push_back(b.proj.weight);
      ps.push_back(b.proj.bias);
    }
    return grad_result(grad_check(f, ps), 1e-5);
  });
  checks.emplace_back("mask estimator", [] {
    Rng rng(7);
    BandScheme scheme{{3, 2}};
    auto params = init_mask_estimator<double>(scheme, 2, 4, rng);
    auto h = random_tensor<double>({1, 3, 2, 4}, rng, 1.0, true);
    auto f = [&] { return ops::sum(ops::square(mask_estimate(h, params, scheme, 2))); };
    NamedParams<double> named;
    append_params(params, named);
    std::vector<Tensor<double>> ps{h};
    for (auto& [n, t] : named) ps.push_back(t);
    return grad_result(grad_check(f, ps), 1e-5);
  });
  checks.emplace_back("loss", [] {
    Rng rng(8);
    auto y = random_tensor<double>({1, 2, 300}, rng);
    auto yhat = random_tensor<double>({1, 2, 300}, rng, 1.0, true);
    const LossConfig cfg{{64, 32, 16}, 7};
    auto f = [&] { return separation_loss(y, yhat, cfg).total; };
    return grad_result(grad_check(f, {yhat}, {.epsilon = 1e-5}), 1e-5);
  });
  checks.emplace_back("end-to-end model", [] {
    const auto mc = toy_model_config();
    Rng rng(9);
    auto model = init_stem_model<double>(mc, "vocals", rng);
    auto mixture = random_tensor<double>({1, 2, mc.segment_samples()}, rng, 0.3);
    auto target = random_tensor<double>({1, 2, mc.segment_samples()}, rng, 0.1);
    auto f = [&] { return separation_loss(target, forward(model, mixture, {}).estimate, LossConfig{}).total; };
    std::vector<Tensor<double>> ps;
    for (auto& [n, t] : model.named_params()) ps.push_back(t);
    return grad_result(grad_check(f, ps, {.epsilon = 1e-7, .samples = 48, .seed = 9, .floor = 1e-4}), 1e-3);
  });
  return checks;
}

std::vector<std::pair<std::string, Check>> invariant_checks(const SelftestOptions& options) {
  std::vector<std::pair<std::string, Check>> checks;
  checks.emplace_back("rope norm preservation", [] {
    RopeEncoder enc(48, 801);
    Rng rng(11);
    auto x = random_tensor<double>({801, 8, 48}, rng);
    std::vector<std::size_t> pos(801);
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
    auto y = ops::rope_rotate(x, enc, 0, pos);
    double worst = 0;
    for (std::size_t r = 0; r < 801 * 8; ++r) {
      double a = 0, b = 0;
      for (std::size_t j = 0; j < 48; ++j) {
        a += x.data()[r * 48 + j] * x.data()[r * 48 + j];
        b += y.data()[r * 48 + j] * y.data()[r * 48 + j];
      }
      worst = std::max(worst, std::abs(std::sqrt(a) - std::sqrt(b)) / std::sqrt(a));
    }
    return std::pair{worst < 1e-6, "max relative norm change " + fmt(worst)};
  });
  checks.emplace_back("rope relative position", [options] {
    RopeEncoder enc(16, 64);
    if (options.corrupt_rope_position != 0) {
      enc.corrupt_angle_for_testing(options.corrupt_rope_position, options.corrupt_rope_delta);
    }
    Rng rng(12);
    auto q = random_tensor<double>({32, 16}, rng);
    auto k = random_tensor<double>({32, 16}, rng);
    double worst = 0;
    std::vector<std::size_t> base(32);
    for (std::size_t i = 0; i < 32; ++i) base[i] = i;
    auto logits = [&](std::size_t shift) {
      std::vector<std::size_t> pos(32);
      for (std::size_t i = 0; i < 32; ++i) pos[i] = base[i] + shift;
      return ops::matmul(ops::rope_rotate(q, enc, 0, pos), ops::permute(ops::rope_rotate(k, enc, 0, pos), {1, 0}));
    };
    const auto ref = logits(0);
    for (std::size_t shift = 1; shift <= 32; ++shift) {
      const auto moved = logits(shift);
      for (std::size_t i = 0; i < ref.numel(); ++i) {
        worst = std::max(worst, std::abs(moved.data()[i] - ref.data()[i]));
      }
    }
    return std::pair{worst < 1e-9, "max logit change under a common shift " + fmt(worst)};
  });
  checks.emplace_back("band scheme", [] {
    const auto scheme = default_band_scheme({2048, 441, true}, 44100);
    const bool ok = scheme.count() == 62 && scheme.total_bins() == 1025;
    return std::pair{ok, std::to_string(scheme.count()) + " bands over " + std::to_string(scheme.total_bins()) +
                             " bins"};
  });
  checks.emplace_back("stft round trip", [] {
    Rng rng(13);
    const auto x = noise(2, 44100, rng);
    const StftConfig cfg{2048, 441, true};
    const auto y = istft(stft(x, cfg), cfg, x.length);
    const double err = max_abs_diff(x, y);
    return std::pair{err < 1e-5, "max abs error " + fmt(err)};
  });
  checks.emplace_back("identity mask model", [] {
    auto run = smoke_config();
    Rng rng(14);
    auto model = init_stem_model<float>(run.model, "vocals", rng);
    set_constant_band_masks(model.mask, model.scheme, 2, {{1, 0}, {1, 0}});
    const auto x = noise(2, run.model.segment_samples(), rng);
    const double err = max_abs_diff(forward_segment(model, x).estimate, x);
    return std::pair{err < 1e-6 * x.peak(), "max abs error " + fmt(err)};
  });
  checks.emplace_back("enframe/deframe round trip", [] {
    Rng rng(15);
    const auto x = noise(2, 5000, rng);
    const auto frames = enframe(x, 1200, 600);
    const double tc = max_abs_diff(deframe_tc(frames), x);
    const double oa = max_abs_diff(deframe_oa(frames), x);
    return std::pair{tc == 0.0 && oa < 1e-6, "tc error " + fmt(tc) + ", oa error " + fmt(oa)};
  });
  checks.emplace_back("parameter count", [] {
    const auto b = param_count(canonical_config().model);
    const std::size_t expected = 1602308 + 12 * 3547392 + b.mask;
    const double millions = static_cast<double>(b.total) / 1e6;
    const bool ok = b.total == expected && std::abs(millions - 93.4) / 93.4 < 0.02;
    return std::pair{ok, fmt(millions) + "M parameters"};
  });
  checks.emplace_back("checkpoint round trip", [] {
    auto run = smoke_config();
    Rng rng(16);
    const auto model = init_stem_model<float>(run.model, "drums", rng);
    const auto back = model_from_checkpoint(decode_checkpoint(encode_checkpoint(make_checkpoint(model, run, 7))));
    const auto a = model.named_params(), b = back.named_params();
    bool ok = a.size() == b.size();
    for (std::size_t i = 0; ok && i < a.size(); ++i) {
      ok = a[i].first == b[i].first &&
           std::equal(a[i].second.data().begin(), a[i].second.data().end(), b[i].second.data().begin());
    }
    return std::pair{ok, std::to_string(a.size()) + " tensors"};
  });
  checks.emplace_back("wav round trip", [] {
    Rng rng(17);
    const auto x = noise(2, 1000, rng, 1.0f);
    const auto f = decode_wav(encode_wav(x, WavFormat::float32));
    const double pcm16 = max_abs_diff(decode_wav(encode_wav(x, WavFormat::pcm16)), x) * 32767;
    const double pcm24 = max_abs_diff(decode_wav(encode_wav(x, WavFormat::pcm24)), x) * 8388607;
    const bool ok = f.samples == x.samples && pcm16 <= 1.0 && pcm24 <= 1.0;
    return std::pair{ok, "pcm16 " + fmt(pcm16) + " LSB, pcm24 " + fmt(pcm24) + " LSB"};
  });
  return checks;
}

void run_checks(const std::string& suite, const std::vector<std::pair<std::string, Check>>& checks,
                std::vector<SelftestResult>& out) {
  for (const auto& [name, check] : checks) {
    SelftestResult r;
    r.suite = suite;
    r.name = name;
    const auto start = std::chrono::steady_clock::now();
    try {
      std::tie(r.passed, r.detail) = check();
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("threw: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.push_back(std::move(r));
  }
}

}  // namespace

SelftestSuite parse_selftest_suite(const std::string& text) {
  if (text == "grad") return SelftestSuite::grad;
  if (text == "invariants") return SelftestSuite::invariants;
  if (text == "all") return SelftestSuite::all;
  throw ConfigError("unknown selftest suite '" + text + "' (expected grad, invariants or all)");
}

std::vector<SelftestResult> run_selftest(SelftestSuite suite, const SelftestOptions& options) {
  std::vector<SelftestResult> out;
  if (suite != SelftestSuite::invariants) run_checks("grad", grad_checks(), out);
  if (suite != SelftestSuite::grad) run_checks("invariants", invariant_checks(options), out);
  return out;
}

}  // namespace bsr
