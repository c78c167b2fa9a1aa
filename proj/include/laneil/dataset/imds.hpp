#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "laneil/core/binary.hpp"
#include "laneil/dataset/dataset.hpp"

namespace laneil::data {

// Packed dataset file:
//   "IMDS" | version u16 = 1 | count u32 | C u16 | H u16 | W u16
//   then per sample: C*H*W f32 input, 2 f32 action, u8 domain tag
// All values little-endian.
namespace imds {

inline constexpr std::string_view kMagic = "IMDS";
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 16;
inline constexpr std::size_t kSampleBytes = InputTensor::kSize * 4 + 2 * 4 + 1;

inline std::size_t file_size(std::size_t count) { return kHeaderBytes + count * kSampleBytes; }

}  // namespace imds

inline std::vector<unsigned char> encode_imds(const Dataset& ds) {
  require(ds.size() <= 0xFFFFFFFFu, ErrorKind::InvalidArgument, "dataset too large for IMDS");
  ByteWriter w;
  w.buffer().reserve(imds::file_size(ds.size()));
  w.bytes(imds::kMagic);
  w.put<std::uint16_t>(imds::kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.size()));
  w.put<std::uint16_t>(InputTensor::kChannels);
  w.put<std::uint16_t>(InputTensor::kHeight);
  w.put<std::uint16_t>(InputTensor::kWidth);
  for (const auto& s : ds.samples) {
    require(s.input.data.size() == InputTensor::kSize, ErrorKind::ShapeMismatch, "sample input has wrong size");
    w.floats(s.input.data.data(), InputTensor::kSize);
    w.floats(s.action.data(), 2);
    w.put<std::uint8_t>(s.domain_id);
  }
  return std::move(w.buffer());
}

// Decodes and validates an IMDS buffer. Provenance is rebuilt from the
// domain tags.
inline Dataset decode_imds(const std::vector<unsigned char>& buf) {
  using Reason = FormatError::Reason;
  ByteReader r(buf);
  if (r.remaining() < 4 || r.bytes(4) != imds::kMagic) throw FormatError(Reason::BadMagic, 0, "bad magic, expected IMDS");
  const std::size_t version_at = r.offset();
  const auto version = r.get<std::uint16_t>();
  if (version != imds::kVersion)
    throw FormatError(Reason::BadVersion, version_at, "unsupported IMDS version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  const std::size_t dims_at = r.offset();
  const auto c = r.get<std::uint16_t>(), h = r.get<std::uint16_t>(), w = r.get<std::uint16_t>();
  if (c != InputTensor::kChannels || h != InputTensor::kHeight || w != InputTensor::kWidth)
    throw FormatError(Reason::BadHeader, dims_at,
                      "unexpected tensor dims " + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w));
  Dataset ds;
  ds.samples.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Sample& s = ds.samples[i];
    const std::size_t at = r.offset();
    r.floats(s.input.data.data(), InputTensor::kSize);
    r.floats(s.action.data(), 2);
    s.domain_id = r.get<std::uint8_t>();
    for (float v : s.input.data)
      if (!(v >= 0.0f && v <= 1.0f))
        throw FormatError(Reason::InvalidValue, at, "sample " + std::to_string(i) + " input outside [0, 1]");
    for (float v : s.action)
      if (!(v >= -1.0f && v <= 1.0f))
        throw FormatError(Reason::InvalidValue, at, "sample " + std::to_string(i) + " action outside [-1, 1]");
    if (s.domain_id > 3)
      throw FormatError(Reason::InvalidValue, at, "sample " + std::to_string(i) + " has unknown domain tag");
  }
  if (r.remaining() != 0)
    throw FormatError(Reason::BadHeader, r.offset(), "trailing bytes after " + std::to_string(count) + " samples");
  ds.provenance = provenance_from_tags(ds.samples);
  return ds;
}

inline void write_imds(const Dataset& ds, const std::string& path) { write_file(path, encode_imds(ds)); }

inline Dataset read_imds(const std::string& path) {
  try {
    return decode_imds(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(e.reason(), e.offset(), path + ": " + e.what());
  }
}

}  // namespace laneil::data
