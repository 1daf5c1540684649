#include "gevbf/wav.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "gevbf/error.hpp"

namespace gevbf {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::vector<char>& buf, std::size_t pos) {
  require(pos + sizeof(T) <= buf.size(), ErrorKind::kIo, "truncated WAV file");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

template <typename T>
void put_le(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(buf.size() >= 12 && std::memcmp(buf.data(), "RIFF", 4) == 0 && std::memcmp(buf.data() + 8, "WAVE", 4) == 0,
          ErrorKind::kIo, path.string() + " is not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_pos = 0, data_len = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.data() + pos, 4);
    const auto len = read_le<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      format = read_le<std::uint16_t>(buf, body);
      channels = read_le<std::uint16_t>(buf, body + 2);
      rate = read_le<std::uint32_t>(buf, body + 4);
      bits = read_le<std::uint16_t>(buf, body + 14);
      if (format == kFormatExtensible) format = read_le<std::uint16_t>(buf, body + 24);
      have_fmt = true;
    } else if (id == "data") {
      data_pos = body;
      data_len = std::min<std::size_t>(len, buf.size() - body);
    }
    pos = body + len + (len & 1u);
  }
  require(have_fmt && data_pos != 0, ErrorKind::kIo, path.string() + ": missing fmt or data chunk");
  require(channels >= 1, ErrorKind::kIo, "WAV has zero channels");
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  require(pcm16 || f32, ErrorKind::kIo, "unsupported WAV encoding (need PCM16 or float32)");

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t n = data_len / frame_bytes;
  WavData wav;
  wav.sample_rate = static_cast<int>(rate);
  wav.samples.resize(channels, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < channels; ++c) {
      const std::size_t at = data_pos + i * frame_bytes + static_cast<std::size_t>(c) * (bits / 8);
      wav.samples(c, static_cast<Eigen::Index>(i)) =
          pcm16 ? read_le<std::int16_t>(buf, at) / 32768.0 : static_cast<double>(read_le<float>(buf, at));
    }
  }
  return wav;
}

void write_wav(const std::filesystem::path& path, const WavData& wav, WavFormat format) {
  const auto channels = static_cast<std::uint16_t>(wav.samples.rows());
  const auto n = static_cast<std::uint32_t>(wav.samples.cols());
  require(channels >= 1, ErrorKind::kShape, "cannot write a WAV with zero channels");
  const std::uint16_t bits = format == WavFormat::kPcm16 ? 16 : 32;
  const std::uint32_t block = channels * (bits / 8);
  const std::uint32_t data_len = block * n;

  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out.write("RIFF", 4);
  put_le<std::uint32_t>(out, 36 + data_len);
  out.write("WAVEfmt ", 8);
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, format == WavFormat::kPcm16 ? kFormatPcm : kFormatFloat);
  put_le<std::uint16_t>(out, channels);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(wav.sample_rate));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(wav.sample_rate) * block);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(block));
  put_le<std::uint16_t>(out, bits);
  out.write("data", 4);
  put_le<std::uint32_t>(out, data_len);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (int c = 0; c < channels; ++c) {
      const double v = wav.samples(c, i);
      if (format == WavFormat::kPcm16) {
        const double clipped = std::clamp(v, -1.0, 32767.0 / 32768.0);
        put_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(clipped * 32768.0)));
      } else {
        put_le<float>(out, static_cast<float>(v));
      }
    }
  }
  require(out.good(), ErrorKind::kIo, "short write to " + path.string());
}

void require_sample_rate(const WavData& wav, int expected_rate) {
  require(wav.sample_rate == expected_rate, ErrorKind::kInvalidInput,
          "sample rate " + std::to_string(wav.sample_rate) + " Hz does not match configured " +
              std::to_string(expected_rate) + " Hz (no resampling is performed)");
}

}  // namespace gevbf
