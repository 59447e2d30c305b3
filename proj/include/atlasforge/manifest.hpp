#pragma once

#include <map>
#include <string>
#include <vector>

#include "atlasforge/errors.hpp"

namespace atlasforge {

struct VolumeEntry {
  std::string id;
  std::string imagePath;
  std::string labelPath;  // may be empty (unlabelled test image)
};

// Dataset description: template and target atlases, test images, one
// displacement-field path (or "identity") per (template, target-or-test)
// pair, and the number of regions of interest. Relative paths are resolved
// against the manifest's directory at load time.
struct Manifest {
  int roiCount = 0;
  std::vector<VolumeEntry> templates;
  std::vector<VolumeEntry> targets;
  std::vector<VolumeEntry> tests;
  // key: templateId + "\n" + ontoId; value: field path or "identity"
  std::map<std::string, std::string> transforms;

  static std::string transformKey(const std::string& templateId, const std::string& ontoId) {
    return templateId + "\n" + ontoId;
  }
  const std::string& transformFor(const std::string& templateId, const std::string& ontoId) const;

  static Manifest load(const std::string& path);
};

// Output of the preprocessing step: histogram-matched images plus every
// template warped onto every target and test grid.
struct WarpedEntry {
  std::string templateId;
  std::string ontoId;
  std::string imagePath;
  std::string labelPath;
};

struct PrepManifest {
  int roiCount = 0;
  std::string referenceId;
  std::vector<VolumeEntry> targets;  // matched image + original label
  std::vector<VolumeEntry> tests;
  std::vector<WarpedEntry> warped;

  std::vector<const WarpedEntry*> warpedOnto(const std::string& ontoId) const;

  static PrepManifest load(const std::string& path);
  void save(const std::string& path) const;  // paths relative to the file
};

}  // namespace atlasforge
