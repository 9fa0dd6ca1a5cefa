#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "audiomt/error.hpp"
#include "audiomt/frontend.hpp"

namespace audiomt {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::string(bytes.begin(), bytes.begin() + 4) != "RIFF" ||
      std::string(bytes.begin() + 8, bytes.begin() + 12) != "WAVE") {
    throw Error(ErrorCode::MalformedWav, "missing RIFF/WAVE header: " + path.string());
  }

  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint16_t bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(bytes.begin() + pos, bytes.begin() + pos + 4);
    const std::uint32_t size = read_u32(&bytes[pos + 4]);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size() && id != "data") {
      throw Error(ErrorCode::MalformedWav, "truncated chunk " + id);
    }
    if (id == "fmt ") {
      if (size < 16) throw Error(ErrorCode::MalformedWav, "short fmt chunk");
      std::uint16_t format = read_u16(&bytes[body]);
      channels = read_u16(&bytes[body + 2]);
      rate = read_u32(&bytes[body + 4]);
      bits = read_u16(&bytes[body + 14]);
      if (format == kFormatExtensible && size >= 26) {
        format = read_u16(&bytes[body + 24]);
      }
      if (format != kFormatPcm || bits != 16) {
        throw Error(ErrorCode::UnsupportedWavFormat,
                    "only PCM16 is supported: " + path.string());
      }
      if (channels != 1) {
        throw Error(ErrorCode::ChannelCountUnsupported,
                    std::to_string(channels) + " channels in " + path.string());
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(ErrorCode::MalformedWav, "data chunk before fmt");
      const std::size_t available = std::min<std::size_t>(size, bytes.size() - body);
      AudioClip clip;
      clip.sample_rate = static_cast<int>(rate);
      clip.samples.resize(available / 2);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(read_u16(&bytes[body + 2 * i]));
        clip.samples[i] = static_cast<double>(v) / 32768.0;
      }
      if (clip.sample_rate <= 0) throw Error(ErrorCode::MalformedWav, "zero sample rate");
      return clip;
    }
    pos = body + size + (size & 1);
  }
  throw Error(ErrorCode::MalformedWav, "no data chunk in " + path.string());
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  validate(clip);
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (double s : clip.samples) {
    const double clamped = std::clamp(s, -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

AudioClip load_audio(const std::filesystem::path& path) {
  AudioClip clip = read_wav(path);
  if (clip.sample_rate != kTargetSampleRate && !clip.samples.empty()) {
    clip = resample(clip, kTargetSampleRate);
  }
  return clip;
}

}  // namespace audiomt
