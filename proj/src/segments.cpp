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

#include "bsr/segments.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "bsr/errors.hpp"

namespace bsr {

namespace {

void check_frames(const Frames& frames) {
  if (frames.segment == 0 || frames.hop == 0 || frames.hop > frames.segment) {
    throw DimensionError("invalid segment/hop sizes");
  }
  if (frames.segments.size() != segment_count(frames.length, frames.segment, frames.hop)) {
    throw DimensionError("expected " + std::to_string(segment_count(frames.length, frames.segment, frames.hop)) +
                         " segments, got " + std::to_string(frames.segments.size()));
  }
  for (const auto& s : frames.segments) {
    if (s.length != frames.segment || s.channels != frames.segments[0].channels) {
      throw DimensionError("segments have inconsistent lengths or channel counts");
    }
  }
}

}  // namespace

std::size_t segment_count(std::size_t length, std::size_t segment, std::size_t hop) {
  if (length <= segment) return 1;
  return (length - segment + hop - 1) / hop + 1;
}

Frames enframe(const Waveform& x, std::size_t segment, std::size_t hop) {
  if (x.empty()) throw DimensionError("cannot enframe an empty waveform");
  if (segment == 0 || hop == 0 || hop > segment) throw DimensionError("invalid segment/hop sizes");
  Frames frames{{}, x.length, segment, hop};
  const std::size_t count = segment_count(x.length, segment, hop);
  for (std::size_t k = 0; k < count; ++k) {
    Waveform s(x.channels, segment, x.sample_rate);
    const std::size_t start = k * hop;
    const std::size_t n = std::min(segment, x.length - start);
    for (std::size_t c = 0; c < x.channels; ++c) {
      std::copy_n(x.channel(c).begin() + static_cast<std::ptrdiff_t>(start), n, s.channel(c).begin());
    }
    frames.segments.push_back(std::move(s));
  }
  return frames;
}

Waveform deframe_tc(const Frames& frames) {
  check_frames(frames);
  const auto& first = frames.segments.front();
  Waveform out(first.channels, frames.length, first.sample_rate);
  const std::size_t margin = (frames.segment - frames.hop) / 2;
  const std::size_t count = frames.segments.size();
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t start = k * frames.hop;
    const std::size_t keep_from = k == 0 ? 0 : margin;
    const std::size_t keep_to = k + 1 == count ? frames.segment : margin + frames.hop;
    for (std::size_t c = 0; c < out.channels; ++c) {
      for (std::size_t i = keep_from; i < keep_to && start + i < frames.length; ++i) {
        out.at(c, start + i) = frames.segments[k].at(c, i);
      }
    }
  }
  return out;
}

Waveform deframe_oa(const Frames& frames) {
  check_frames(frames);
  const auto& first = frames.segments.front();
  Waveform out(first.channels, frames.length, first.sample_rate);
  std::vector<float> count(frames.length, 0.0f);
  for (std::size_t k = 0; k < frames.segments.size(); ++k) {
    const std::size_t start = k * frames.hop;
    const std::size_t n = std::min(frames.segment, frames.length - start);
    for (std::size_t i = 0; i < n; ++i) count[start + i] += 1.0f;
    for (std::size_t c = 0; c < out.channels; ++c) {
      for (std::size_t i = 0; i < n; ++i) out.at(c, start + i) += frames.segments[k].at(c, i);
    }
  }
  for (std::size_t c = 0; c < out.channels; ++c) {
    for (std::size_t i = 0; i < frames.length; ++i) out.at(c, i) /= count[i];
  }
  return out;
}

Waveform deframe(const Frames& frames, DeframeMode mode) {
  return mode == DeframeMode::tc ? deframe_tc(frames) : deframe_oa(frames);
}

Waveform residual_other(const Waveform& mixture, const Waveform& vocals, const Waveform& bass,
                        const Waveform& drums) {
  for (const Waveform* s : {&vocals, &bass, &drums}) {
    if (s->channels != mixture.channels || s->length != mixture.length) {
      throw DimensionError("stem of " + std::to_string(s->channels) + "x" + std::to_string(s->length) +
                           " does not match the mixture's " + std::to_string(mixture.channels) + "x" +
                           std::to_string(mixture.length));
    }
  }
  Waveform out = mixture;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    out.samples[i] = mixture.samples[i] - vocals.samples[i] - bass.samples[i] - drums.samples[i];
  }
  return out;
}

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& work) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (std::size_t j = 0; j < jobs; ++j) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          work(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
}

Waveform separate_track(const StemModel<float>& model, const Waveform& mixture, DeframeMode mode,
                        std::size_t jobs) {
  if (mixture.sample_rate != model.config.sample_rate) {
    throw MismatchError("track sample rate " + std::to_string(mixture.sample_rate) + " differs from the " +
                        model.stem + " model's " + std::to_string(model.config.sample_rate));
  }
  auto frames = enframe(mixture, model.config.segment_samples(), model.config.hop_samples());
  parallel_for(frames.segments.size(), jobs, [&](std::size_t k) {
    frames.segments[k] = forward_segment(model, frames.segments[k]).estimate;
  });
  return deframe(frames, mode);
}

}  // namespace bsr
