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

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "bsr/dataset.hpp"
#include "bsr/fixture.hpp"
#include "bsr/wav.hpp"

using namespace bsr;
namespace fs = std::filesystem;

namespace {

Waveform noise(std::size_t channels, std::size_t length, std::uint64_t seed, float scale = 1.0f) {
  Rng rng(seed);
  std::uniform_real_distribution<float> u(-scale, scale);
  Waveform w(channels, length);
  for (auto& v : w.samples) v = u(rng);
  return w;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

}  // namespace

TEST_CASE("float32 wav round trip is bit exact") {
  auto x = noise(2, 777, 1, 1.5f);
  x.samples[3] = -0.0f;
  x.samples[4] = 1e-42f;
  const auto bytes = encode_wav(x);
  CHECK(bytes.size() == 44 + 2 * 777 * 4);
  const auto y = decode_wav(bytes);
  CHECK(y.channels == 2);
  CHECK(y.length == 777);
  CHECK(y.sample_rate == 44100);
  CHECK(std::memcmp(x.samples.data(), y.samples.data(), x.samples.size() * sizeof(float)) == 0);
}

TEST_CASE("integer wav formats round trip within one step") {
  const auto x = noise(2, 1000, 2);
  for (auto [format, bits] : {std::pair{WavFormat::pcm16, 16}, std::pair{WavFormat::pcm24, 24}}) {
    const double full = std::ldexp(1.0, bits - 1) - 1.0;
    const auto y = decode_wav(encode_wav(x, format));
    double worst = 0;
    for (std::size_t i = 0; i < x.samples.size(); ++i) {
      worst = std::max(worst, std::abs(static_cast<double>(x.samples[i]) - y.samples[i]) * full);
    }
    CHECK(worst <= 1.0);
    // Re-encoding decoded integer audio reproduces the same bytes.
    CHECK(encode_wav(y, format) == encode_wav(x, format));
  }
}

TEST_CASE("integer scaling is symmetric and clamps") {
  Waveform x(1, 4);
  x.samples = {1.0f, -1.0f, 2.0f, -3.0f};
  const auto y = decode_wav(encode_wav(x, WavFormat::pcm16));
  CHECK(y.samples == std::vector<float>{1.0f, -1.0f, 1.0f, -1.0f});

  // The most negative code still decodes to -1.
  auto bytes = encode_wav(x, WavFormat::pcm16);
  bytes[44] = 0x00;
  bytes[45] = 0x80;
  CHECK(decode_wav(bytes).samples[0] == -1.0f);

  Waveform half(1, 1);
  half.samples = {0.5f};
  const auto b24 = encode_wav(half, WavFormat::pcm24);
  const std::int32_t code = b24[44] | b24[45] << 8 | b24[46] << 16;
  CHECK(code == 4194304);  // round(0.5 * 8388607)
}

TEST_CASE("wav reader handles extra chunks and extensible headers") {
  const auto x = noise(2, 50, 3);
  auto plain = encode_wav(x, WavFormat::pcm24);
  // Insert an odd-sized LIST chunk (with pad byte) before the data chunk.
  std::vector<std::uint8_t> list = {'L', 'I', 'S', 'T', 3, 0, 0, 0, 'a', 'b', 'c', 0};
  auto with_list = plain;
  with_list.insert(with_list.begin() + 36, list.begin(), list.end());
  put_u32(with_list, 4, static_cast<std::uint32_t>(with_list.size() - 8));
  CHECK(decode_wav(with_list).samples == decode_wav(plain).samples);

  // WAVE_FORMAT_EXTENSIBLE carrying PCM.
  std::vector<std::uint8_t> ext(plain.begin(), plain.begin() + 12);
  const std::uint8_t fmt[] = {'f', 'm', 't', ' ', 40, 0, 0, 0, 0xFE, 0xFF};
  ext.insert(ext.end(), std::begin(fmt), std::end(fmt));
  ext.insert(ext.end(), plain.begin() + 22, plain.begin() + 36);
  const std::uint8_t tail[] = {22, 0, 24, 0, 3, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0x10, 0, 0x80, 0, 0, 0xAA, 0, 0x38, 0x9B, 0x71};
  ext.insert(ext.end(), std::begin(tail), std::end(tail));
  ext.insert(ext.end(), plain.begin() + 36, plain.end());
  put_u32(ext, 4, static_cast<std::uint32_t>(ext.size() - 8));
  CHECK(decode_wav(ext).samples == decode_wav(plain).samples);
}

TEST_CASE("wav reader rejects bad input") {
  const auto x = noise(1, 20, 4);
  CHECK_THROWS_AS(decode_wav({}), DataError);
  auto bytes = encode_wav(x);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_wav(bad_magic), DataError);
  auto bad_bits = bytes;
  bad_bits[34] = 8;  // 8-bit float
  CHECK_THROWS_AS(decode_wav(bad_bits), DataError);
  auto no_data = std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 36);
  CHECK_THROWS_AS(decode_wav(no_data), DataError);

  Waveform other_rate(1, 20, 48000);
  const auto b48 = encode_wav(other_rate);
  CHECK_THROWS_AS(decode_wav(b48), MismatchError);
  CHECK(decode_wav(b48, {0}).sample_rate == 48000);
  CHECK(decode_wav(b48, {48000}).sample_rate == 48000);
}

TEST_CASE("wav files on disk") {
  const auto dir = scratch("bsr_wav_io");
  const auto x = noise(2, 300, 5);
  write_wav((dir / "a.wav").string(), x);
  CHECK(read_wav((dir / "a.wav").string()).samples == x.samples);
  CHECK_THROWS_AS(read_wav((dir / "missing.wav").string()), IoError);
  CHECK_THROWS_AS(write_wav((dir / "no" / "such" / "dir.wav").string(), x), IoError);
  std::ofstream((dir / "junk.wav").string()) << "not audio";
  try {
    read_wav((dir / "junk.wav").string());
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("junk.wav") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("song directories load in name order and problems are listed") {
  const auto dir = scratch("bsr_songs");
  Rng rng(6);
  std::vector<Song> songs = {synthetic_song("b", 0.3, 44100, 2, rng), synthetic_song("a", 0.2, 44100, 2, rng)};
  save_songs(dir.string(), songs);
  CHECK(fs::exists(dir / "a" / "mixture.wav"));
  const auto loaded = load_songs(dir.string());
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].name == "a");
  CHECK(loaded[1].stems[2].samples == songs[0].stems[2].samples);

  fs::remove(dir / "a" / "bass.wav");
  write_wav((dir / "b" / "drums.wav").string(), Waveform(2, 10));
  try {
    load_songs(dir.string());
    FAIL("expected a data error");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find((dir / "a" / "bass.wav").string()) != std::string::npos);
    CHECK(msg.find((dir / "b" / "drums.wav").string()) != std::string::npos);
  }
  CHECK_THROWS_AS(load_songs((dir / "nothing").string()), DataError);
  fs::remove_all(dir);
}
