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

#include "bsr/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "bsr/rng.hpp"

namespace bsr {

GradCheckReport grad_check(const std::function<Tensor<double>()>& f,
                           const std::vector<Tensor<double>>& params,
                           const GradCheckOptions& options) {
  std::vector<Tensor<double>> ps = params;
  for (auto& p : ps) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tape<double> tape;
    auto rec = tape.record();
    const auto loss = f();
    tape.backward(loss);
  }

  // (param, index) pairs to probe.
  std::vector<std::pair<std::size_t, std::size_t>> probes;
  if (options.samples == 0) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
      for (std::size_t j = 0; j < ps[i].numel(); ++j) probes.emplace_back(i, j);
    }
  } else {
    std::size_t total = 0;
    for (const auto& p : ps) total += p.numel();
    Rng rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    for (std::size_t s = 0; s < options.samples; ++s) {
      std::size_t flat = pick(rng);
      std::size_t i = 0;
      while (flat >= ps[i].numel()) flat -= ps[i++].numel();
      probes.emplace_back(i, flat);
    }
  }

  GradCheckReport report;
  for (const auto& [i, j] : probes) {
    auto data = ps[i].mutable_data();
    const double analytic = ps[i].has_grad() ? ps[i].grad()[j] : 0.0;
    const double saved = data[j];
    data[j] = saved + options.epsilon;
    const double up = f().item();
    data[j] = saved - options.epsilon;
    const double down = f().item();
    data[j] = saved;
    const double numeric = (up - down) / (2.0 * options.epsilon);
    const double abs_err = std::abs(analytic - numeric);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
    const double rel = abs_err / denom;
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    if (rel > report.max_rel_error || report.checked == 0) {
      report.max_rel_error = std::max(report.max_rel_error, rel);
      std::ostringstream os;
      os << "param " << i << "[" << j << "]: analytic " << analytic << " vs numeric " << numeric;
      report.worst = os.str();
    }
    ++report.checked;
  }
  for (auto& p : ps) p.zero_grad();
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace bsr
