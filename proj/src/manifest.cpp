#include "atlasforge/manifest.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace atlasforge {

namespace {

namespace fs = std::filesystem;

nlohmann::json readJson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(path + ": " + e.what());
  }
  return j;
}

std::string resolve(const std::string& base, const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).string();
}

VolumeEntry parseEntry(const nlohmann::json& j, const std::string& base, bool labelRequired) {
  VolumeEntry e;
  e.id = j.at("id").get<std::string>();
  e.imagePath = resolve(base, j.at("image").get<std::string>());
  if (j.contains("label"))
    e.labelPath = resolve(base, j.at("label").get<std::string>());
  else if (labelRequired)
    throw ManifestError("entry " + e.id + " is missing its label");
  return e;
}

void writeJsonFile(const nlohmann::json& j, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw IoError("short write on " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path);
}

}  // namespace

const std::string& Manifest::transformFor(const std::string& templateId,
                                          const std::string& ontoId) const {
  auto it = transforms.find(transformKey(templateId, ontoId));
  if (it == transforms.end())
    throw ManifestError("missing transform for template " + templateId + " onto " + ontoId);
  return it->second;
}

Manifest Manifest::load(const std::string& path) {
  nlohmann::json j = readJson(path);
  const std::string base = fs::path(path).parent_path().string();
  Manifest m;
  try {
    m.roiCount = j.at("roiCount").get<int>();
    for (const auto& e : j.at("templates")) m.templates.push_back(parseEntry(e, base, true));
    for (const auto& e : j.at("targets")) m.targets.push_back(parseEntry(e, base, true));
    if (j.contains("tests"))
      for (const auto& e : j.at("tests")) m.tests.push_back(parseEntry(e, base, false));
    for (const auto& t : j.at("transforms")) {
      const std::string field = t.at("field").get<std::string>();
      m.transforms[transformKey(t.at("template").get<std::string>(),
                                t.at("onto").get<std::string>())] =
          field == "identity" ? field : resolve(base, field);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(path + ": " + e.what());
  }
  if (m.roiCount < 1) throw ManifestError(path + ": roiCount must be >= 1");
  if (m.templates.empty()) throw ManifestError(path + ": needs at least one template");
  // Every template must map onto every target and test image.
  for (const auto& t : m.templates) {
    for (const auto& o : m.targets) m.transformFor(t.id, o.id);
    for (const auto& o : m.tests) m.transformFor(t.id, o.id);
  }
  return m;
}

std::vector<const WarpedEntry*> PrepManifest::warpedOnto(const std::string& ontoId) const {
  std::vector<const WarpedEntry*> out;
  for (const WarpedEntry& w : warped)
    if (w.ontoId == ontoId) out.push_back(&w);
  return out;
}

PrepManifest PrepManifest::load(const std::string& path) {
  nlohmann::json j = readJson(path);
  const std::string base = fs::path(path).parent_path().string();
  PrepManifest m;
  try {
    m.roiCount = j.at("roiCount").get<int>();
    m.referenceId = j.at("reference").get<std::string>();
    for (const auto& e : j.at("targets")) m.targets.push_back(parseEntry(e, base, true));
    if (j.contains("tests"))
      for (const auto& e : j.at("tests")) m.tests.push_back(parseEntry(e, base, false));
    for (const auto& w : j.at("warped")) {
      WarpedEntry e;
      e.templateId = w.at("template").get<std::string>();
      e.ontoId = w.at("onto").get<std::string>();
      e.imagePath = resolve(base, w.at("image").get<std::string>());
      e.labelPath = resolve(base, w.at("label").get<std::string>());
      m.warped.push_back(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(path + ": " + e.what());
  }
  return m;
}

void PrepManifest::save(const std::string& path) const {
  const fs::path base = fs::path(path).parent_path();
  auto rel = [&](const std::string& p) {
    if (p.empty()) return p;
    return fs::path(p).lexically_relative(base).string();
  };
  nlohmann::json j;
  j["roiCount"] = roiCount;
  j["reference"] = referenceId;
  auto entries = [&](const std::vector<VolumeEntry>& list) {
    nlohmann::json arr = nlohmann::json::array();
    for (const VolumeEntry& e : list) {
      nlohmann::json o;
      o["id"] = e.id;
      o["image"] = rel(e.imagePath);
      if (!e.labelPath.empty()) o["label"] = rel(e.labelPath);
      arr.push_back(o);
    }
    return arr;
  };
  j["targets"] = entries(targets);
  j["tests"] = entries(tests);
  j["warped"] = nlohmann::json::array();
  for (const WarpedEntry& w : warped) {
    nlohmann::json o;
    o["template"] = w.templateId;
    o["onto"] = w.ontoId;
    o["image"] = rel(w.imagePath);
    o["label"] = rel(w.labelPath);
    j["warped"].push_back(o);
  }
  writeJsonFile(j, path);
}

}  // namespace atlasforge
