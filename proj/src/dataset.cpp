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

#include "bsr/dataset.hpp"

#include <algorithm>
#include <filesystem>

#include "bsr/errors.hpp"

namespace bsr {

namespace fs = std::filesystem;

std::vector<Song> load_songs(const std::string& root, const WavReadOptions& options) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DataError("data directory " + root + " does not exist");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw DataError("data directory " + root + " holds no song directories");

  std::vector<Song> songs;
  std::vector<std::string> problems;
  for (const auto& dir : dirs) {
    Song song;
    song.name = dir.filename().string();
    bool ok = true;
    for (std::size_t s = 0; s < kStemNames.size(); ++s) {
      const auto path = (dir / (kStemNames[s] + ".wav")).string();
      if (!fs::exists(path)) {
        problems.push_back(path + ": missing");
        ok = false;
        continue;
      }
      try {
        song.stems[s] = read_wav(path, options);
      } catch (const Error& e) {
        problems.push_back(e.what());
        ok = false;
      }
    }
    if (!ok) continue;
    const auto& first = song.stems[0];
    for (std::size_t s = 1; s < kStemNames.size(); ++s) {
      const auto& w = song.stems[s];
      if (w.channels != first.channels || w.length != first.length || w.sample_rate != first.sample_rate) {
        problems.push_back((dir / (kStemNames[s] + ".wav")).string() + ": shape or rate differs from " +
                           (dir / (kStemNames[0] + ".wav")).string());
        ok = false;
      }
    }
    if (ok) songs.push_back(std::move(song));
  }
  if (!problems.empty()) {
    std::string msg = "malformed data layout under " + root + " (expected <song>/<stem>.wav):";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DataError(msg);
  }
  return songs;
}

void save_songs(const std::string& root, const std::vector<Song>& songs) {
  for (const auto& song : songs) {
    const auto dir = fs::path(root) / song.name;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string());
    for (std::size_t s = 0; s < kStemNames.size(); ++s) {
      write_wav((dir / (kStemNames[s] + ".wav")).string(), song.stems[s]);
    }
    write_wav((dir / "mixture.wav").string(), song.mixture());
  }
}

}  // namespace bsr
