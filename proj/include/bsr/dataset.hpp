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

// On-disk song layout: <root>/<song>/{vocals,bass,drums,other}.wav, with an
// optional mixture.wav that is ignored because the mixture is the stem sum.

#pragma once

#include <string>
#include <vector>

#include "bsr/training.hpp"
#include "bsr/wav.hpp"

namespace bsr {

/// Loads every song directory under root in name order. Collects all
/// problems (missing stems, unreadable files, shape disagreements) and throws
/// one DataError listing the offending paths.
std::vector<Song> load_songs(const std::string& root, const WavReadOptions& options = {});

/// Writes each song's stems plus mixture.wav in the same layout.
void save_songs(const std::string& root, const std::vector<Song>& songs);

}  // namespace bsr
