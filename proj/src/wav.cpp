#include "convhead/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace convhead {

namespace {

std::uint32_t rd_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t rd_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void wr_u16(std::ostream& out, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

AudioClip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open wav: " + path);
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(path + ": not a RIFF/WAVE file");
  }

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t len = rd_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) {
      throw FormatError(path + ": truncated chunk '" + std::string(id, id + 4) + "'");
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) {
        throw FormatError(path + ": fmt chunk too short");
      }
      format = rd_u16(bytes.data() + body);
      channels = rd_u16(bytes.data() + body + 2);
      sample_rate = rd_u32(bytes.data() + body + 4);
      bits = rd_u16(bytes.data() + body + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1);  // chunks are word-aligned
  }

  if (sample_rate == 0 || channels == 0) {
    throw FormatError(path + ": missing fmt chunk");
  }
  if (data == nullptr) {
    throw FormatError(path + ": missing data chunk");
  }

  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32) {
    throw FormatError(path + ": unsupported encoding (format " + std::to_string(format) +
                      ", " + std::to_string(bits) + " bit); expected 16-bit PCM or float32");
  }

  const std::size_t bytes_per_sample = pcm16 ? 2 : 4;
  const std::size_t frame_size = bytes_per_sample * channels;
  const std::size_t frames = data_len / frame_size;

  AudioClip clip;
  clip.sample_rate = static_cast<int>(sample_rate);
  clip.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::uint16_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + f * frame_size + c * bytes_per_sample;
      if (pcm16) {
        const std::int16_t s = static_cast<std::int16_t>(rd_u16(p));
        acc += static_cast<double>(s) / 32768.0;
      } else {
        float v;
        std::memcpy(&v, p, 4);
        acc += static_cast<double>(v);
      }
    }
    clip.samples[f] = acc / channels;
  }
  return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
  if (clip.sample_rate <= 0) {
    throw InputError("write_wav: sample_rate must be positive");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open for writing: " + path);
  }
  const std::uint32_t data_len = static_cast<std::uint32_t>(clip.samples.size() * 2);
  out.write("RIFF", 4);
  wr_u32(out, 36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  wr_u32(out, 16);
  wr_u16(out, 1);  // PCM
  wr_u16(out, 1);  // mono
  wr_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  wr_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  wr_u16(out, 2);
  wr_u16(out, 16);
  out.write("data", 4);
  wr_u32(out, data_len);
  for (double s : clip.samples) {
    const double clamped = std::clamp(s, -1.0, 1.0);
    const std::int16_t q =
        static_cast<std::int16_t>(std::lrint(clamped * 32767.0));
    wr_u16(out, static_cast<std::uint16_t>(q));
  }
  if (!out) {
    throw IoError("write failed: " + path);
  }
}

}  // namespace convhead
