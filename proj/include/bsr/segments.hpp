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

// Whole-track processing: fixed-length segments at a fixed hop, recombined
// by truncate-and-concatenate or overlap-and-average.

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "bsr/config.hpp"
#include "bsr/dsp.hpp"
#include "bsr/model.hpp"

namespace bsr {

struct Frames {
  std::vector<Waveform> segments;
  std::size_t length = 0;   // original sample count
  std::size_t segment = 0;  // samples per segment
  std::size_t hop = 0;
};

/// Number of segments needed to cover `length` samples.
std::size_t segment_count(std::size_t length, std::size_t segment, std::size_t hop);

/// Segments start at multiples of `hop`; the last is zero-padded.
Frames enframe(const Waveform& x, std::size_t segment, std::size_t hop);

/// Keeps the centre `hop` samples of each segment; the first segment also
/// keeps its opening and the last its closing part, so the output has the
/// original length.
Waveform deframe_tc(const Frames& frames);

/// Plain mean of all segments covering each sample.
Waveform deframe_oa(const Frames& frames);

Waveform deframe(const Frames& frames, DeframeMode mode);

/// mixture - vocals - bass - drums.
Waveform residual_other(const Waveform& mixture, const Waveform& vocals, const Waveform& bass,
                        const Waveform& drums);

/// Separates a whole track with one stem model; segments run on up to `jobs`
/// threads and the result does not depend on the job count.
Waveform separate_track(const StemModel<float>& model, const Waveform& mixture, DeframeMode mode,
                        std::size_t jobs = 1);

/// Runs `work(i)` for i in [0, count) on up to `jobs` threads. The first
/// exception thrown is rethrown after all workers stop.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& work);

}  // namespace bsr
