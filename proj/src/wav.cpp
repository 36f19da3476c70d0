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

#include "bsr/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "bsr/errors.hpp"

namespace bsr {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

std::int32_t quantize(float x, int bits) {
  const double full = std::ldexp(1.0, bits - 1) - 1.0;
  const double v = std::round(std::clamp(static_cast<double>(x), -1.0, 1.0) * full);
  return static_cast<std::int32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_wav(const Waveform& audio, WavFormat format) {
  if (audio.channels == 0 || audio.channels > 0xFFFF) {
    throw DimensionError("cannot encode a waveform with " + std::to_string(audio.channels) + " channels");
  }
  const std::uint16_t bits = format == WavFormat::pcm16 ? 16 : format == WavFormat::pcm24 ? 24 : 32;
  const std::uint32_t block = static_cast<std::uint32_t>(audio.channels) * bits / 8;
  const std::uint64_t data_bytes = static_cast<std::uint64_t>(block) * audio.length;
  if (data_bytes + 36 > 0xFFFFFFFFull) throw DimensionError("waveform too long for a RIFF file");

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes + 1);
  put_tag(out, "RIFF");
  put_u32(out, static_cast<std::uint32_t>(36 + data_bytes + (data_bytes & 1)));
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, format == WavFormat::float32 ? kFormatFloat : kFormatPcm);
  put_u16(out, static_cast<std::uint16_t>(audio.channels));
  put_u32(out, static_cast<std::uint32_t>(audio.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(audio.sample_rate) * block);
  put_u16(out, static_cast<std::uint16_t>(block));
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, static_cast<std::uint32_t>(data_bytes));
  for (std::size_t i = 0; i < audio.length; ++i) {
    for (std::size_t c = 0; c < audio.channels; ++c) {
      const float x = audio.at(c, i);
      switch (format) {
        case WavFormat::float32:
          put_u32(out, std::bit_cast<std::uint32_t>(x));
          break;
        case WavFormat::pcm16:
          put_u16(out, static_cast<std::uint16_t>(quantize(x, 16)));
          break;
        case WavFormat::pcm24: {
          const auto v = static_cast<std::uint32_t>(quantize(x, 24));
          out.push_back(static_cast<std::uint8_t>(v & 0xFF));
          out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
          out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
          break;
        }
      }
    }
  }
  if (data_bytes & 1) out.push_back(0);
  return out;
}

Waveform decode_wav(const std::vector<std::uint8_t>& bytes, const WavReadOptions& options) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError("not a RIFF/WAVE file");
  }
  std::uint16_t tag = 0, channels = 0, bits = 0, block = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::size_t size = get_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || size > available) throw DataError("truncated fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      tag = get_u16(f);
      channels = get_u16(f + 2);
      rate = get_u32(f + 4);
      block = get_u16(f + 12);
      bits = get_u16(f + 14);
      if (tag == kFormatExtensible) {
        if (size < 40) throw DataError("truncated extensible fmt chunk");
        tag = get_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      // Streaming writers sometimes leave the size unset; trust the file length.
      data_size = std::min(size, available);
      break;
    }
    if (size > available) throw DataError("truncated chunk");
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw DataError("missing fmt chunk");
  if (data == nullptr) throw DataError("missing data chunk");
  if (channels == 0) throw DataError("zero channels");
  const bool supported = (tag == kFormatPcm && (bits == 16 || bits == 24)) || (tag == kFormatFloat && bits == 32);
  if (!supported) {
    throw DataError("unsupported sample format (tag " + std::to_string(tag) + ", " + std::to_string(bits) +
                    " bits); expected 16/24-bit PCM or 32-bit float");
  }
  if (block != channels * bits / 8) throw DataError("inconsistent block alignment");
  if (options.required_rate != 0 && static_cast<int>(rate) != options.required_rate) {
    throw MismatchError("sample rate " + std::to_string(rate) + " Hz, expected " +
                        std::to_string(options.required_rate) + " Hz");
  }

  const std::size_t frames = data_size / block;
  if (frames == 0) throw DataError("no audio frames");
  Waveform out(channels, frames, static_cast<int>(rate));
  const double full = std::ldexp(1.0, bits - 1) - 1.0;
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + i * block + c * bits / 8;
      float x = 0;
      if (tag == kFormatFloat) {
        x = std::bit_cast<float>(get_u32(p));
      } else if (bits == 16) {
        x = static_cast<float>(std::max(-1.0, static_cast<std::int16_t>(get_u16(p)) / full));
      } else {
        std::int32_t v = p[0] | p[1] << 8 | p[2] << 16;
        if (v & 0x800000) v -= 0x1000000;
        x = static_cast<float>(std::max(-1.0, v / full));
      }
      out.at(c, i) = x;
    }
  }
  return out;
}

Waveform read_wav(const std::string& path, const WavReadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes, options);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  } catch (const MismatchError& e) {
    throw MismatchError(path + ": " + e.what());
  }
}

void write_wav(const std::string& path, const Waveform& audio, WavFormat format) {
  const auto bytes = encode_wav(audio, format);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write " + path);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot write " + path);
  }
}

}  // namespace bsr
