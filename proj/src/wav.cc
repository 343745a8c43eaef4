// wav.cc
//
// Minimal RIFF/WAVE reader and writer for 16-bit mono PCM.

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "moscope/binary_io.h"
#include "moscope/corpus.h"
#include "moscope/error.h"

namespace moscope {

AudioBuffer parse_wav(std::span<const std::uint8_t> bytes,
                      const std::string &source) {
  ByteReader in(bytes, source);
  if (in.get_bytes(4, "RIFF tag") != "RIFF")
    throw FormatError(source + ": not a RIFF file");
  in.get_u32("RIFF size");
  if (in.get_bytes(4, "WAVE tag") != "WAVE")
    throw FormatError(source + ": RIFF file is not WAVE");

  bool have_fmt = false;
  AudioBuffer audio;
  while (in.remaining() > 0) {
    std::string id = in.get_bytes(4, "chunk id");
    std::uint32_t size = in.get_u32("chunk size");
    if (id == "fmt ") {
      if (size < 16) throw FormatError(source + ": fmt chunk too short");
      std::uint16_t format = in.get_u16("format tag");
      std::uint16_t channels = in.get_u16("channel count");
      std::uint32_t rate = in.get_u32("sample rate");
      in.get_u32("byte rate");
      in.get_u16("block align");
      std::uint16_t bits = in.get_u16("bits per sample");
      in.skip(size - 16, "fmt extension");
      if (size % 2) in.skip(1, "chunk padding");
      if (format != 1)
        throw FormatError(fmt::format("{}: format tag {} is not PCM (1)", source, format));
      if (channels != 1)
        throw FormatError(fmt::format(
            "{}: {} channels; only mono is accepted (no downmix)", source, channels));
      if (bits != 16)
        throw FormatError(fmt::format("{}: {}-bit samples; only 16-bit is accepted",
                                      source, bits));
      if (rate == 0) throw FormatError(source + ": sample rate is zero");
      audio.sample_rate = rate;
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError(source + ": data chunk before fmt chunk");
      if (size % 2) throw FormatError(source + ": odd data chunk size for 16-bit audio");
      std::size_t n = size / 2;
      audio.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        auto s = static_cast<std::int16_t>(in.get_u16("sample data"));
        audio.samples[i] = static_cast<double>(s) / 32768.0;
      }
      return audio;
    } else {
      in.skip(size + (size % 2), "chunk body");
    }
  }
  throw FormatError(source + ": no data chunk");
}

AudioBuffer read_wav(const std::filesystem::path &path) {
  return parse_wav(read_file_bytes(path), path.string());
}

std::vector<std::uint8_t> encode_wav(const AudioBuffer &audio) {
  if (audio.sample_rate == 0) throw DataError("sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  ByteWriter out;
  out.put_bytes("RIFF");
  out.put_u32(36 + data_bytes);
  out.put_bytes("WAVE");
  out.put_bytes("fmt ");
  out.put_u32(16);
  out.put_u16(1);
  out.put_u16(1);
  out.put_u32(audio.sample_rate);
  out.put_u32(audio.sample_rate * 2);
  out.put_u16(2);
  out.put_u16(16);
  out.put_bytes("data");
  out.put_u32(data_bytes);
  for (double x : audio.samples) {
    double scaled = std::nearbyint(x * 32768.0);
    scaled = std::clamp(scaled, -32768.0, 32767.0);
    out.put_u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  return out.bytes();
}

void write_wav(const std::filesystem::path &path, const AudioBuffer &audio) {
  write_file_atomic(path, encode_wav(audio));
}

}  // namespace moscope
