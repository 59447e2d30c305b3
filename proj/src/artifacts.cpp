#include "atlasforge/artifacts.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace atlasforge {

namespace {

namespace fs = std::filesystem;

void putU32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void putU64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void putF32(std::vector<std::uint8_t>& b, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  putU32(b, bits);
}
void putF64(std::vector<std::uint8_t>& b, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  putU64(b, bits);
}

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t at = 0;
  std::string path;

  void need(std::size_t n) const {
    if (at + n > bytes.size()) throw TruncatedFileError(path + ": unexpected end of file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
    at += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[at + i]) << (8 * i);
    at += 8;
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(&bytes[at]), n);
    at += n;
    return s;
  }
  std::uint8_t u8() {
    need(1);
    return bytes[at++];
  }
};

std::vector<std::uint8_t> readFile(const std::string& path) {
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

void writeFileAtomic(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  const std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw IoError("cannot open " + tmp + " for writing");
  std::size_t put = bytes.empty() ? 0 : std::fwrite(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (put != bytes.size()) {
    std::remove(tmp.c_str());
    throw IoError("short write on " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path);
}

void writeJsonAtomic(const nlohmann::json& j, const std::string& path) {
  const std::string text = j.dump(2) + "\n";
  writeFileAtomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

nlohmann::json readJson(const std::string& path) {
  auto bytes = readFile(path);
  try {
    return nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(path + ": " + e.what());
  }
}

constexpr char kSampleMagic[5] = {'A', 'F', 'S', '1', '\0'};
constexpr char kModelMagic[5] = {'A', 'F', 'M', '1', '\0'};

}  // namespace

std::string hexU64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

const PatchGeometry& GeometryFile::forRoi(std::uint16_t roi) const {
  for (const PatchGeometry& g : rois)
    if (g.roi == roi) return g;
  throw InvalidArgumentError("roi " + std::to_string(roi) + " not present in geometry");
}

std::string GeometryFile::contentHash() const {
  std::ostringstream s;
  s << "dilation=" << dilation << ";roiCount=" << roiCount;
  for (const PatchGeometry& g : rois) {
    s << ";roi=" << g.roi << ":size=" << g.size[0] << "," << g.size[1] << "," << g.size[2]
      << ":raw=" << g.sizeRaw[0] << "," << g.sizeRaw[1] << "," << g.sizeRaw[2] << ":centers=";
    for (const auto& [id, c] : g.centers)
      s << id << "@" << c[0] << "," << c[1] << "," << c[2] << ";";
  }
  return hexU64(fnv1a64(s.str()));
}

void saveGeometry(const GeometryFile& g, const std::string& path) {
  nlohmann::json j;
  j["dilation"] = g.dilation;
  j["roiCount"] = g.roiCount;
  j["hash"] = g.contentHash();
  j["rois"] = nlohmann::json::array();
  for (const PatchGeometry& r : g.rois) {
    nlohmann::json o;
    o["roi"] = r.roi;
    o["size"] = r.size;
    o["sizeRaw"] = r.sizeRaw;
    o["centers"] = nlohmann::json::object();
    for (const auto& [id, c] : r.centers) o["centers"][id] = c;
    j["rois"].push_back(o);
  }
  writeJsonAtomic(j, path);
}

GeometryFile loadGeometry(const std::string& path) {
  nlohmann::json j = readJson(path);
  GeometryFile g;
  try {
    g.dilation = j.at("dilation").get<int>();
    g.roiCount = j.at("roiCount").get<int>();
    for (const auto& o : j.at("rois")) {
      PatchGeometry r;
      r.roi = o.at("roi").get<std::uint16_t>();
      r.size = o.at("size").get<std::array<int, 3>>();
      r.sizeRaw = o.at("sizeRaw").get<std::array<int, 3>>();
      for (const auto& [id, c] : o.at("centers").items())
        r.centers[id] = c.get<std::array<int, 3>>();
      g.rois.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(path + ": " + e.what());
  }
  return g;
}

std::string sampleSetPath(const std::string& dir, std::uint16_t roi) {
  return (fs::path(dir) / ("roi-" + std::to_string(roi) + ".afs")).string();
}

void saveSampleSet(const SampleSet& s, const std::string& path) {
  nlohmann::json meta;
  meta["roi"] = s.roi;
  meta["k"] = s.k;
  meta["patchSize"] = s.patchSize;
  meta["count"] = s.samples.size();
  meta["searchRadiusFactor"] = s.searchRadiusFactor;
  meta["seed"] = s.seed;
  meta["geometryHash"] = s.geometryHash;
  const std::string metaText = meta.dump();

  const std::size_t voxels =
      static_cast<std::size_t>(s.patchSize[0]) * s.patchSize[1] * s.patchSize[2];
  std::vector<std::uint8_t> bytes;
  bytes.reserve(64 + s.samples.size() * voxels * (4 + s.k * 5 + 1));
  bytes.insert(bytes.end(), kSampleMagic, kSampleMagic + 5);
  putU32(bytes, static_cast<std::uint32_t>(metaText.size()));
  bytes.insert(bytes.end(), metaText.begin(), metaText.end());
  for (const TrainingSample& t : s.samples) {
    for (float v : t.x.floats()) putF32(bytes, v);
    for (int k = 0; k < s.k; ++k)
      for (float v : t.atlasImages[k].floats()) putF32(bytes, v);
    for (int k = 0; k < s.k; ++k)
      for (std::uint16_t v : t.atlasLabels[k].labels())
        bytes.push_back(static_cast<std::uint8_t>(v));
    for (std::uint16_t v : t.y.labels()) bytes.push_back(static_cast<std::uint8_t>(v));
  }
  writeFileAtomic(path, bytes);
}

SampleSet loadSampleSet(const std::string& path) {
  auto bytes = readFile(path);
  Reader r{bytes, 0, path};
  if (r.str(5) != std::string(kSampleMagic, 5)) throw BadMagicError(path + ": bad magic");
  const std::uint32_t metaLen = r.u32();
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.str(metaLen));
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(path + ": " + e.what());
  }
  SampleSet s;
  s.roi = meta.at("roi").get<std::uint16_t>();
  s.k = meta.at("k").get<int>();
  s.patchSize = meta.at("patchSize").get<std::array<int, 3>>();
  s.searchRadiusFactor = meta.at("searchRadiusFactor").get<double>();
  s.seed = meta.at("seed").get<std::uint64_t>();
  s.geometryHash = meta.at("geometryHash").get<std::string>();
  const std::size_t count = meta.at("count").get<std::size_t>();

  const Dims3 pd{static_cast<std::uint32_t>(s.patchSize[0]),
                 static_cast<std::uint32_t>(s.patchSize[1]),
                 static_cast<std::uint32_t>(s.patchSize[2])};
  const std::size_t voxels = pd.voxels();
  s.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    TrainingSample t;
    std::vector<float> x(voxels);
    for (auto& v : x) v = r.f32();
    t.x = Volume::fromFloats(pd, std::move(x));
    for (int k = 0; k < s.k; ++k) {
      std::vector<float> img(voxels);
      for (auto& v : img) v = r.f32();
      t.atlasImages.push_back(Volume::fromFloats(pd, std::move(img)));
    }
    for (int k = 0; k < s.k; ++k) {
      std::vector<std::uint16_t> lab(voxels);
      for (auto& v : lab) v = r.u8();
      t.atlasLabels.push_back(Volume::fromLabels(pd, std::move(lab)));
    }
    std::vector<std::uint16_t> y(voxels);
    for (auto& v : y) v = r.u8();
    t.y = Volume::fromLabels(pd, std::move(y));
    s.samples.push_back(std::move(t));
  }
  if (r.at != bytes.size()) throw PayloadSizeError(path + ": trailing bytes");
  return s;
}

std::string modelIndexPath(const std::string& dir, std::uint16_t roi) {
  return (fs::path(dir) / ("roi-" + std::to_string(roi) + ".json")).string();
}

void saveModelIndex(const ModelIndex& idx, const std::string& path) {
  nlohmann::json j;
  j["roi"] = idx.roi;
  j["k"] = idx.k;
  j["patchSize"] = idx.patchSize;
  j["searchRadiusFactor"] = idx.searchRadiusFactor;
  j["geometryHash"] = idx.geometryHash;
  j["members"] = nlohmann::json::array();
  for (const MemberRecord& m : idx.members) {
    nlohmann::json o;
    o["file"] = m.file;
    o["widthMultiplier"] = m.widthMultiplier;
    o["seed"] = m.seed;
    o["bestEpoch"] = m.bestEpoch;
    o["stoppedEpoch"] = m.stoppedEpoch;
    j["members"].push_back(o);
  }
  writeJsonAtomic(j, path);
}

ModelIndex loadModelIndex(const std::string& path) {
  nlohmann::json j = readJson(path);
  ModelIndex idx;
  try {
    idx.roi = j.at("roi").get<std::uint16_t>();
    idx.k = j.at("k").get<int>();
    idx.patchSize = j.at("patchSize").get<std::array<int, 3>>();
    idx.searchRadiusFactor = j.at("searchRadiusFactor").get<double>();
    idx.geometryHash = j.at("geometryHash").get<std::string>();
    for (const auto& o : j.at("members")) {
      MemberRecord m;
      m.file = o.at("file").get<std::string>();
      m.widthMultiplier = o.at("widthMultiplier").get<double>();
      m.seed = o.at("seed").get<std::uint64_t>();
      m.bestEpoch = o.at("bestEpoch").get<int>();
      m.stoppedEpoch = o.at("stoppedEpoch").get<int>();
      idx.members.push_back(m);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(path + ": " + e.what());
  }
  return idx;
}

std::vector<std::uint16_t> listModelRois(const std::string& dir) {
  std::vector<std::uint16_t> rois;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("roi-", 0) == 0 && name.size() > 9 &&
        name.compare(name.size() - 5, 5, ".json") == 0) {
      try {
        rois.push_back(static_cast<std::uint16_t>(std::stoi(name.substr(4))));
      } catch (...) {
      }
    }
  }
  if (ec) throw IoError("cannot list " + dir);
  std::sort(rois.begin(), rois.end());
  return rois;
}

void saveMemberModel(const TrainedSfcn& member, std::uint16_t roi, int memberIndex,
                     const std::string& path) {
  nlohmann::json meta;
  meta["roi"] = roi;
  meta["member"] = memberIndex;
  meta["k"] = member.spec.k;
  meta["patchSize"] = member.spec.patchSize;
  meta["widthMultiplier"] = member.spec.widthMultiplier;
  meta["dropout"] = member.spec.dropout;
  meta["bestEpoch"] = member.bestEpoch;
  meta["stoppedEpoch"] = member.stoppedEpoch;
  meta["history"] = nlohmann::json::array();
  for (const EpochStats& e : member.history)
    meta["history"].push_back({{"loss", e.meanLoss}, {"dsc", e.valDsc}});
  const std::string metaText = meta.dump();

  // const_cast: allState() hands out mutable views, serialization only reads.
  auto refs = const_cast<Network&>(member.net).allState();
  std::vector<std::uint8_t> bytes;
  bytes.insert(bytes.end(), kModelMagic, kModelMagic + 5);
  putU32(bytes, static_cast<std::uint32_t>(metaText.size()));
  bytes.insert(bytes.end(), metaText.begin(), metaText.end());
  putU32(bytes, static_cast<std::uint32_t>(refs.size()));
  for (const ParamRef& p : refs) {
    putU32(bytes, static_cast<std::uint32_t>(p.name.size()));
    bytes.insert(bytes.end(), p.name.begin(), p.name.end());
    putU64(bytes, p.values->size());
    for (double v : *p.values) putF64(bytes, v);
  }
  writeFileAtomic(path, bytes);
}

TrainedSfcn loadMemberModel(const std::string& path) {
  auto bytes = readFile(path);
  Reader r{bytes, 0, path};
  if (r.str(5) != std::string(kModelMagic, 5)) throw BadMagicError(path + ": bad magic");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.str(r.u32()));
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(path + ": " + e.what());
  }

  TrainedSfcn m;
  m.spec.k = meta.at("k").get<int>();
  m.spec.patchSize = meta.at("patchSize").get<std::array<int, 3>>();
  m.spec.widthMultiplier = meta.at("widthMultiplier").get<double>();
  m.spec.dropout = meta.at("dropout").get<double>();
  m.bestEpoch = meta.at("bestEpoch").get<int>();
  m.stoppedEpoch = meta.at("stoppedEpoch").get<int>();
  for (const auto& e : meta.at("history"))
    m.history.push_back({e.at("loss").get<double>(), e.at("dsc").get<double>()});
  m.net = buildSfcn(m.spec);

  auto refs = m.net.allState();
  const std::uint32_t tensorCount = r.u32();
  if (tensorCount != refs.size())
    throw VersionMismatchError(path + ": stored tensor count does not match the architecture");
  for (ParamRef& ref : refs) {
    const std::string name = r.str(r.u32());
    if (name != ref.name)
      throw VersionMismatchError(path + ": tensor " + name + " does not match " + ref.name);
    const std::uint64_t count = r.u64();
    if (count != ref.values->size())
      throw VersionMismatchError(path + ": tensor " + name + " has unexpected size");
    for (auto& v : *ref.values) v = r.f64();
  }
  if (r.at != bytes.size()) throw PayloadSizeError(path + ": trailing bytes");
  return m;
}

}  // namespace atlasforge
