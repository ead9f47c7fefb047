#include "multifuse/wav.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace multifuse::wav {

namespace {

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("wav: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  if (!in) throw std::runtime_error("wav: truncated file");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

}  // namespace

AudioSignal read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav: cannot open " + path);

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0)
    throw std::runtime_error("wav: not a RIFF file: " + path);
  read_u32(in);  // riff size, unused
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0)
    throw std::runtime_error("wav: not a WAVE file: " + path);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  bool have_fmt = false;
  std::vector<char> data;

  while (in.read(tag, 4)) {
    const std::uint32_t chunk_size = read_u32(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_u16(in);
      channels = read_u16(in);
      sample_rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw std::runtime_error("wav: data chunk before fmt chunk: " + path);
      data.resize(chunk_size);
      in.read(data.data(), chunk_size);
      if (!in) throw std::runtime_error("wav: truncated data chunk: " + path);
      break;
    } else {
      // skip unknown chunk (chunks are word-aligned)
      in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }

  if (!have_fmt || data.empty()) throw std::runtime_error("wav: missing fmt or data chunk: " + path);
  if (channels != 1 && channels != 2)
    throw std::runtime_error("wav: unsupported channel count " + std::to_string(channels));

  AudioSignal out;
  out.sample_rate = static_cast<int>(sample_rate);

  if (format == 1 && bits == 16) {
    const std::size_t frames = data.size() / (2u * channels);
    out.samples.resize(frames);
    const unsigned char* p = reinterpret_cast<const unsigned char*>(data.data());
    for (std::size_t i = 0; i < frames; ++i) {
      double acc = 0.0;
      for (std::uint16_t c = 0; c < channels; ++c) {
        const std::size_t off = (i * channels + c) * 2;
        const std::int16_t s = static_cast<std::int16_t>(p[off] | (p[off + 1] << 8));
        acc += static_cast<double>(s) / 32768.0;
      }
      out.samples[i] = acc / channels;
    }
  } else if (format == 3 && bits == 32) {
    const std::size_t frames = data.size() / (4u * channels);
    out.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
      double acc = 0.0;
      for (std::uint16_t c = 0; c < channels; ++c) {
        float f;
        std::memcpy(&f, data.data() + (i * channels + c) * 4, 4);
        acc += static_cast<double>(f);
      }
      out.samples[i] = acc / channels;
    }
  } else {
    throw std::runtime_error("wav: unsupported format " + std::to_string(format) + "/" +
                             std::to_string(bits) + "-bit (want PCM16 or float32)");
  }
  return out;
}

void write_pcm16(const std::string& path, const AudioSignal& signal) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("wav: cannot write " + path);
  const std::uint32_t n = static_cast<std::uint32_t>(signal.samples.size());
  const std::uint32_t data_bytes = n * 2;
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<std::uint32_t>(signal.sample_rate));
  write_u32(out, static_cast<std::uint32_t>(signal.sample_rate) * 2);
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (double v : signal.samples) {
    double c = v;
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    const std::int16_t s = static_cast<std::int16_t>(c >= 0 ? c * 32767.0 + 0.5 : c * 32768.0 - 0.5);
    write_u16(out, static_cast<std::uint16_t>(s));
  }
}

}  // namespace multifuse::wav
