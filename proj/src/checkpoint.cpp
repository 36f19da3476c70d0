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

#include "bsr/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bsr/errors.hpp"

namespace bsr {

namespace {

constexpr char kMagic[8] = {'B', 'S', 'R', 'F', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::string& buffer() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw DataError("checkpoint is truncated");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(std::string_view bytes) {
  uLong value = crc32(0L, Z_NULL, 0);
  const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
  std::size_t left = bytes.size();
  while (left > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    value = crc32(value, p, chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(value);
}

void write_section(Writer& w, const std::string& name, const NamedParams<float>& tensors) {
  w.str(name);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [tname, t] : tensors) {
    w.str(tname);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u64(d);
    for (float v : t.data()) w.f32(v);
  }
}

NamedParams<float> read_section(Reader& r) {
  NamedParams<float> tensors;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw DataError("tensor '" + name + "' has invalid rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t total = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint64_t d = r.u64();
      if (d == 0 || d > r.remaining()) throw DataError("tensor '" + name + "' has an invalid dimension");
      total *= d;
      if (total * 4 > r.remaining()) throw DataError("checkpoint is truncated");
      shape.push_back(static_cast<std::size_t>(d));
    }
    std::vector<float> data(static_cast<std::size_t>(total));
    for (auto& v : data) v = r.f32();
    tensors.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  return tensors;
}

NamedParams<float> snapshot(const NamedParams<float>& source) {
  NamedParams<float> out;
  out.reserve(source.size());
  for (const auto& [name, t] : source) out.emplace_back(name, t.detach());
  return out;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u32(1);
  w.str(ckpt.stem);
  w.u64(ckpt.step);
  w.str(ckpt.config.serialize());
  w.u32(ckpt.ema.empty() ? 1 : 2);
  write_section(w, "params", ckpt.params);
  if (!ckpt.ema.empty()) write_section(w, "ema", ckpt.ema);
  w.u32(crc(w.buffer()));
  return std::move(w.buffer());
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic + 4 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw DataError("not a checkpoint (bad magic)");
  }
  const auto body = bytes.substr(0, bytes.size() - 4);
  Reader tail(bytes.substr(bytes.size() - 4));
  if (tail.u32() != crc(body)) throw DataError("checkpoint checksum mismatch");
  Reader r(body);
  char magic[sizeof kMagic];
  r.bytes(magic, sizeof magic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t stems = r.u32();
  if (stems != 1) throw DataError("checkpoint holds " + std::to_string(stems) + " stems; only 1 is supported");
  Checkpoint ckpt;
  ckpt.stem = r.str();
  ckpt.step = r.u64();
  try {
    ckpt.config = RunConfig::parse(r.str());
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint config is invalid: ") + e.what());
  }
  const std::uint32_t sections = r.u32();
  for (std::uint32_t s = 0; s < sections; ++s) {
    const std::string name = r.str();
    if (name == "params") {
      ckpt.params = read_section(r);
    } else if (name == "ema") {
      ckpt.ema = read_section(r);
    } else {
      throw DataError("unknown checkpoint section '" + name + "'");
    }
  }
  if (r.remaining() != 0) throw DataError("trailing bytes in checkpoint");
  if (ckpt.params.empty()) throw DataError("checkpoint has no parameters");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint " + path);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot write checkpoint " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return decode_checkpoint(buf.str());
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

Checkpoint make_checkpoint(const StemModel<float>& model, const RunConfig& config, std::uint64_t step,
                           const NamedParams<float>* ema) {
  Checkpoint ckpt;
  ckpt.stem = model.stem;
  ckpt.step = step;
  ckpt.config = config;
  ckpt.config.model = model.config;
  ckpt.params = snapshot(model.named_params());
  if (ema != nullptr) ckpt.ema = snapshot(*ema);
  return ckpt;
}

StemModel<float> model_from_checkpoint(const Checkpoint& ckpt, bool prefer_ema) {
  Rng rng(0);
  auto model = init_stem_model<float>(ckpt.config.model, ckpt.stem, rng);
  try {
    assign_params(model, prefer_ema && !ckpt.ema.empty() ? ckpt.ema : ckpt.params);
  } catch (const MismatchError& e) {
    throw DataError(std::string("checkpoint weights do not match its config: ") + e.what());
  }
  return model;
}

}  // namespace bsr
