#include "atlasforge/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>

namespace atlasforge {

namespace {

constexpr char kMagic[6] = {'R', 'V', 'O', 'L', '1', '\0'};
constexpr std::size_t kHeaderSize = 21;

void putU32le(std::uint8_t* p, std::uint32_t v) {
  p[0] = static_cast<std::uint8_t>(v);
  p[1] = static_cast<std::uint8_t>(v >> 8);
  p[2] = static_cast<std::uint8_t>(v >> 16);
  p[3] = static_cast<std::uint8_t>(v >> 24);
}

std::uint32_t getU32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

struct Header {
  Dims3 dims;
  std::uint8_t dtype = 0;
  std::uint8_t channels = 0;
};

std::vector<std::uint8_t> readAll(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open " + path);
  std::fseek(f, 0, SEEK_END);
  long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  std::size_t got = bytes.empty() ? 0 : std::fread(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (got != bytes.size()) throw IoError("short read on " + path);
  return bytes;
}

// Writes via a temp file in the same directory and renames into place.
void writeAll(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw IoError("cannot open " + tmp + " for writing");
  std::size_t put = bytes.empty() ? 0 : std::fwrite(bytes.data(), 1, bytes.size(), f);
  int flushErr = std::fflush(f);
  std::fclose(f);
  if (put != bytes.size() || flushErr != 0) {
    std::remove(tmp.c_str());
    throw IoError("short write on " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::remove(tmp.c_str());
    throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
  }
}

Header parseHeader(const std::vector<std::uint8_t>& bytes, const std::string& path) {
  if (bytes.size() < kHeaderSize) throw TruncatedFileError(path + ": header truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw BadMagicError(path + ": bad magic");
  Header h;
  h.dims.x = getU32le(bytes.data() + 6);
  h.dims.y = getU32le(bytes.data() + 10);
  h.dims.z = getU32le(bytes.data() + 14);
  h.dtype = bytes[18];
  h.channels = bytes[19];
  return h;
}

std::size_t scalarSize(std::uint8_t dtype) { return dtype == 0 ? 4 : 2; }

void checkPayload(const Header& h, std::size_t payloadBytes, const std::string& path) {
  if (h.dtype > 1) throw PayloadSizeError(path + ": unknown dtype code");
  std::uint64_t expected = h.dims.voxels() * h.channels * scalarSize(h.dtype);
  if (payloadBytes < expected) throw TruncatedFileError(path + ": payload truncated");
  if (payloadBytes > expected) throw PayloadSizeError(path + ": payload size mismatch");
}

std::vector<std::uint8_t> encode(const Dims3& dims, std::uint8_t dtype, std::uint8_t channels,
                                 const float* f32, const std::uint16_t* u16, std::uint64_t count) {
  std::vector<std::uint8_t> bytes(kHeaderSize + count * scalarSize(dtype));
  std::memcpy(bytes.data(), kMagic, sizeof(kMagic));
  putU32le(bytes.data() + 6, dims.x);
  putU32le(bytes.data() + 10, dims.y);
  putU32le(bytes.data() + 14, dims.z);
  bytes[18] = dtype;
  bytes[19] = channels;
  bytes[20] = 0;
  std::uint8_t* out = bytes.data() + kHeaderSize;
  if (dtype == 0) {
    for (std::uint64_t i = 0; i < count; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, &f32[i], 4);
      putU32le(out + 4 * i, bits);
    }
  } else {
    for (std::uint64_t i = 0; i < count; ++i) {
      out[2 * i] = static_cast<std::uint8_t>(u16[i]);
      out[2 * i + 1] = static_cast<std::uint8_t>(u16[i] >> 8);
    }
  }
  return bytes;
}

}  // namespace

Volume::Volume(Dims3 dims, Dtype dtype) : dims_(dims), dtype_(dtype) {
  if (dims.x == 0 || dims.y == 0 || dims.z == 0)
    throw InvalidArgumentError("volume dims must be positive");
  if (dtype_ == Dtype::Float32)
    f32_.assign(dims.voxels(), 0.0f);
  else
    u16_.assign(dims.voxels(), 0);
}

Volume Volume::fromFloats(Dims3 dims, std::vector<float> data) {
  Volume v(dims, Dtype::Float32);
  if (data.size() != dims.voxels())
    throw InvalidArgumentError("float data length does not match dims");
  v.f32_ = std::move(data);
  return v;
}

Volume Volume::fromLabels(Dims3 dims, std::vector<std::uint16_t> data) {
  Volume v(dims, Dtype::Label16);
  if (data.size() != dims.voxels())
    throw InvalidArgumentError("label data length does not match dims");
  v.u16_ = std::move(data);
  return v;
}

std::vector<float>& Volume::floats() {
  if (dtype_ != Dtype::Float32) throw InvalidArgumentError("volume is not float32");
  return f32_;
}
const std::vector<float>& Volume::floats() const {
  if (dtype_ != Dtype::Float32) throw InvalidArgumentError("volume is not float32");
  return f32_;
}
std::vector<std::uint16_t>& Volume::labels() {
  if (dtype_ != Dtype::Label16) throw InvalidArgumentError("volume is not label16");
  return u16_;
}
const std::vector<std::uint16_t>& Volume::labels() const {
  if (dtype_ != Dtype::Label16) throw InvalidArgumentError("volume is not label16");
  return u16_;
}

Volume loadVolume(const std::string& path) {
  auto bytes = readAll(path);
  Header h = parseHeader(bytes, path);
  if (h.channels != 1) throw PayloadSizeError(path + ": expected single-channel volume");
  checkPayload(h, bytes.size() - kHeaderSize, path);
  const std::uint8_t* p = bytes.data() + kHeaderSize;
  std::uint64_t count = h.dims.voxels();
  if (h.dtype == 0) {
    std::vector<float> data(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      std::uint32_t bits = getU32le(p + 4 * i);
      std::memcpy(&data[i], &bits, 4);
    }
    return Volume::fromFloats(h.dims, std::move(data));
  }
  std::vector<std::uint16_t> data(count);
  for (std::uint64_t i = 0; i < count; ++i)
    data[i] = static_cast<std::uint16_t>(p[2 * i] | (p[2 * i + 1] << 8));
  return Volume::fromLabels(h.dims, std::move(data));
}

void saveVolume(const Volume& v, const std::string& path) {
  const bool isFloat = v.dtype() == Dtype::Float32;
  writeAll(path, encode(v.dims(), isFloat ? 0 : 1, 1,
                        isFloat ? v.floats().data() : nullptr,
                        isFloat ? nullptr : v.labels().data(), v.dims().voxels()));
}

DisplacementField loadDisplacementField(const std::string& path) {
  auto bytes = readAll(path);
  Header h = parseHeader(bytes, path);
  if (h.dtype != 0) throw PayloadSizeError(path + ": displacement fields must be float32");
  if (h.channels != 3) throw PayloadSizeError(path + ": expected 3-channel field");
  checkPayload(h, bytes.size() - kHeaderSize, path);
  DisplacementField f;
  f.dims = h.dims;
  std::uint64_t count = h.dims.voxels() * 3;
  f.vectors.resize(count);
  const std::uint8_t* p = bytes.data() + kHeaderSize;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t bits = getU32le(p + 4 * i);
    std::memcpy(&f.vectors[i], &bits, 4);
  }
  return f;
}

void saveDisplacementField(const DisplacementField& f, const std::string& path) {
  if (f.vectors.size() != f.dims.voxels() * 3)
    throw InvalidArgumentError("field vector count does not match dims");
  writeAll(path, encode(f.dims, 0, 3, f.vectors.data(), nullptr, f.vectors.size()));
}

Volume histogramMatch(const Volume& source, const Volume& reference) {
  if (source.dtype() != Dtype::Float32 || reference.dtype() != Dtype::Float32)
    throw InvalidArgumentError("histogram matching requires float32 volumes");
  constexpr int kBins = 256;

  const auto& src = source.floats();
  const auto& ref = reference.floats();
  auto [refMinIt, refMaxIt] = std::minmax_element(ref.begin(), ref.end());
  float refMin = *refMinIt, refMax = *refMaxIt;
  if (refMin == refMax)
    throw DegenerateReferenceError("histogram matching reference is constant");
  auto [srcMinIt, srcMaxIt] = std::minmax_element(src.begin(), src.end());
  float srcMin = *srcMinIt, srcMax = *srcMaxIt;

  auto binOf = [](float v, float lo, float hi) {
    if (hi == lo) return 0;
    int b = static_cast<int>((v - lo) / (hi - lo) * kBins);
    return std::clamp(b, 0, kBins - 1);
  };

  std::vector<std::uint64_t> srcHist(kBins, 0), refHist(kBins, 0);
  for (float v : src) ++srcHist[binOf(v, srcMin, srcMax)];
  for (float v : ref) ++refHist[binOf(v, refMin, refMax)];

  std::vector<double> srcCdf(kBins), refCdf(kBins);
  std::uint64_t acc = 0;
  for (int b = 0; b < kBins; ++b) {
    acc += srcHist[b];
    srcCdf[b] = static_cast<double>(acc) / static_cast<double>(src.size());
  }
  acc = 0;
  for (int b = 0; b < kBins; ++b) {
    acc += refHist[b];
    refCdf[b] = static_cast<double>(acc) / static_cast<double>(ref.size());
  }

  // Quantile map: each source bin goes to the centre of the first reference
  // bin whose CDF reaches the source bin's CDF.
  double refWidth = (static_cast<double>(refMax) - refMin) / kBins;
  std::vector<float> mapping(kBins);
  int r = 0;
  for (int b = 0; b < kBins; ++b) {
    while (r < kBins - 1 && refCdf[r] < srcCdf[b]) ++r;
    mapping[b] = static_cast<float>(refMin + (r + 0.5) * refWidth);
  }

  std::vector<float> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i)
    out[i] = mapping[binOf(src[i], srcMin, srcMax)];
  return Volume::fromFloats(source.dims(), std::move(out));
}

namespace {

float sampleTrilinear(const Volume& v, double px, double py, double pz) {
  const Dims3& d = v.dims();
  double fx = std::floor(px), fy = std::floor(py), fz = std::floor(pz);
  int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy), z0 = static_cast<int>(fz);
  double wx = px - fx, wy = py - fy, wz = pz - fz;
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        int x = x0 + dx, y = y0 + dy, z = z0 + dz;
        if (x < 0 || y < 0 || z < 0 || x >= static_cast<int>(d.x) ||
            y >= static_cast<int>(d.y) || z >= static_cast<int>(d.z))
          continue;  // outside samples contribute 0
        double w = (dx ? wx : 1.0 - wx) * (dy ? wy : 1.0 - wy) * (dz ? wz : 1.0 - wz);
        acc += w * v.floatAt(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                             static_cast<std::uint32_t>(z));
      }
  return static_cast<float>(acc);
}

std::uint16_t sampleNearest(const Volume& v, double px, double py, double pz) {
  const Dims3& d = v.dims();
  int x = static_cast<int>(std::floor(px + 0.5));
  int y = static_cast<int>(std::floor(py + 0.5));
  int z = static_cast<int>(std::floor(pz + 0.5));
  if (x < 0 || y < 0 || z < 0 || x >= static_cast<int>(d.x) || y >= static_cast<int>(d.y) ||
      z >= static_cast<int>(d.z))
    return 0;
  return v.labelAt(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                   static_cast<std::uint32_t>(z));
}

}  // namespace

Volume applyTransform(const Volume& volume, const DisplacementField* field,
                      Interpolation interpolation) {
  if (volume.dtype() == Dtype::Label16 && interpolation != Interpolation::Nearest)
    throw InvalidArgumentError("label volumes must be resampled with nearest interpolation");
  if (volume.dtype() == Dtype::Float32 && interpolation != Interpolation::Trilinear)
    throw InvalidArgumentError("float volumes must be resampled with trilinear interpolation");
  if (field == nullptr) return volume;  // identity transform is exact

  const Dims3 out = field->dims;
  Volume result(out, volume.dtype());
  const float* disp = field->vectors.data();
  std::uint64_t i = 0;
  for (std::uint32_t z = 0; z < out.z; ++z)
    for (std::uint32_t y = 0; y < out.y; ++y)
      for (std::uint32_t x = 0; x < out.x; ++x, ++i) {
        double px = x + static_cast<double>(disp[3 * i + 0]);
        double py = y + static_cast<double>(disp[3 * i + 1]);
        double pz = z + static_cast<double>(disp[3 * i + 2]);
        if (volume.dtype() == Dtype::Float32)
          result.floats()[i] = sampleTrilinear(volume, px, py, pz);
        else
          result.labels()[i] = sampleNearest(volume, px, py, pz);
      }
  return result;
}

}  // namespace atlasforge
