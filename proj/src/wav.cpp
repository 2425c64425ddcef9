// Copyright 2026 The protosv Authors.
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

#include "protosv/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "protosv/error.hpp"

namespace protosv {
namespace {

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<char*>(b), 4);
}

void write_u16(std::ostream& out, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  out.write(reinterpret_cast<char*>(b), 2);
}

struct FmtChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits_per_sample = 0;
};

// Walks the RIFF chunks, fills fmt and positions the stream at the start of
// the data payload. Returns the data byte count.
std::uint32_t parse_header(std::istream& in, const std::filesystem::path& path,
                           FmtChunk* fmt) {
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0)
    throw DataError("not a RIFF file: " + path.string());
  read_u32(in);  // riff size, unused
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0)
    throw DataError("not a WAVE file: " + path.string());

  bool have_fmt = false;
  while (in.read(tag, 4)) {
    std::uint32_t size = read_u32(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      fmt->format = read_u16(in);
      fmt->channels = read_u16(in);
      fmt->sample_rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      fmt->bits_per_sample = read_u16(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw DataError("WAVE data before fmt: " + path.string());
      if (fmt->format != 1 || fmt->bits_per_sample != 16)
        throw DataError("unsupported WAVE encoding (need 16-bit PCM): " +
                        path.string());
      if (fmt->channels != 1)
        throw DataError("unsupported channel count (need mono): " +
                        path.string());
      return size;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);  // chunks are word-aligned
    }
  }
  throw DataError("WAVE file has no data chunk: " + path.string());
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open wav file: " + path.string());
  FmtChunk fmt;
  const std::uint32_t data_bytes = parse_header(in, path, &fmt);
  const std::uint32_t n = data_bytes / 2;
  if (n == 0) throw DataError("empty wav file: " + path.string());

  Waveform w;
  w.sample_rate = static_cast<int>(fmt.sample_rate);
  w.samples.resize(n);
  std::vector<char> raw(data_bytes);
  in.read(raw.data(), data_bytes);
  if (!in) throw DataError("truncated wav data: " + path.string());
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::int16_t s = static_cast<std::int16_t>(
        static_cast<unsigned char>(raw[2 * i]) |
        (static_cast<unsigned char>(raw[2 * i + 1]) << 8));
    w.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return w;
}

WavInfo read_wav_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open wav file: " + path.string());
  FmtChunk fmt;
  const std::uint32_t data_bytes = parse_header(in, path, &fmt);
  WavInfo info;
  info.num_samples = data_bytes / 2;
  info.sample_rate = static_cast<int>(fmt.sample_rate);
  if (info.num_samples == 0) throw DataError("empty wav file: " + path.string());
  return info;
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  if (w.sample_rate <= 0) throw ConfigError("write_wav: sample_rate must be > 0");
  if (w.samples.empty()) throw ConfigError("write_wav: empty waveform");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot create wav file: " + path.string());

  const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
  const std::uint32_t data_bytes = n * 2;
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  write_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  write_u16(out, 2);   // block align
  write_u16(out, 16);  // bits
  out.write("data", 4);
  write_u32(out, data_bytes);

  std::vector<char> raw(data_bytes);
  for (std::uint32_t i = 0; i < n; ++i) {
    double v = std::clamp(w.samples[i], -1.0, 1.0);
    const auto s =
        static_cast<std::int16_t>(std::lrint(v * 32767.0));
    raw[2 * i] = static_cast<char>(s & 0xff);
    raw[2 * i + 1] = static_cast<char>((s >> 8) & 0xff);
  }
  out.write(raw.data(), data_bytes);
  if (!out) throw DataError("failed writing wav file: " + path.string());
}

}  // namespace protosv
