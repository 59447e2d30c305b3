#include "support/synthetic.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace synth {

using namespace atlasforge;

VolumePair makeVolume(const Config& cfg, Rng& rng) {
  const std::uint32_t g = cfg.gridSize;
  const Dims3 dims{g, g, g};
  VolumePair out{Volume(dims, Dtype::Float32), Volume(dims, Dtype::Label16)};

  struct Ellipsoid {
    double cx, cy, cz, rx, ry, rz;
    double intensity;
    std::uint16_t roi;
  };
  auto jitter = [&](double base, double amount) { return base + rng.uniform(-amount, amount); };
  const double q = g / 32.0;  // keep proportions on other grid sizes
  Ellipsoid e1{jitter(11.0 * q, 1.0), jitter(12.0 * q, 1.0), jitter(11.0 * q, 1.0),
               jitter(cfg.radius1, 0.5), jitter(cfg.radius1 + 0.7, 0.5),
               jitter(cfg.radius1, 0.5), cfg.roi1Intensity, 1};
  Ellipsoid e2{jitter(21.0 * q, 1.0), jitter(20.0 * q, 1.0), jitter(21.0 * q, 1.0),
               jitter(cfg.radius2 + 0.7, 0.5), jitter(cfg.radius2, 0.5),
               jitter(cfg.radius2, 0.5), cfg.roi2Intensity, 2};

  auto& img = out.image.floats();
  auto& lab = out.label.labels();
  std::uint64_t i = 0;
  for (std::uint32_t z = 0; z < g; ++z)
    for (std::uint32_t y = 0; y < g; ++y)
      for (std::uint32_t x = 0; x < g; ++x, ++i) {
        double base = cfg.background;
        for (const Ellipsoid& e : {e1, e2}) {
          const double dx = (x - e.cx) / e.rx, dy = (y - e.cy) / e.ry, dz = (z - e.cz) / e.rz;
          if (dx * dx + dy * dy + dz * dz <= 1.0) {
            base = e.intensity;
            lab[i] = e.roi;
          }
        }
        img[i] = static_cast<float>(base + cfg.noiseSigma * rng.normal());
      }
  return out;
}

std::string writeDataset(const std::string& dir, const Config& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  Rng rng(cfg.seed);

  nlohmann::json manifest;
  manifest["roiCount"] = 2;
  manifest["templates"] = nlohmann::json::array();
  manifest["targets"] = nlohmann::json::array();
  manifest["tests"] = nlohmann::json::array();
  manifest["transforms"] = nlohmann::json::array();

  std::vector<std::string> templateIds, ontoIds;
  auto emit = [&](const std::string& id, const char* group) {
    VolumePair v = makeVolume(cfg, rng);
    const std::string img = id + "_image.rvol", lab = id + "_label.rvol";
    saveVolume(v.image, (fs::path(dir) / img).string());
    saveVolume(v.label, (fs::path(dir) / lab).string());
    manifest[group].push_back({{"id", id}, {"image", img}, {"label", lab}});
  };
  for (int i = 0; i < cfg.templates; ++i) {
    const std::string id = "tpl" + std::to_string(i);
    emit(id, "templates");
    templateIds.push_back(id);
  }
  for (int i = 0; i < cfg.targets; ++i) {
    const std::string id = "tgt" + std::to_string(i);
    emit(id, "targets");
    ontoIds.push_back(id);
  }
  for (int i = 0; i < cfg.tests; ++i) {
    const std::string id = "test" + std::to_string(i);
    emit(id, "tests");
    ontoIds.push_back(id);
  }
  for (const std::string& t : templateIds)
    for (const std::string& o : ontoIds)
      manifest["transforms"].push_back({{"template", t}, {"onto", o}, {"field", "identity"}});

  const std::string path = (fs::path(dir) / "manifest.json").string();
  std::ofstream out(path);
  out << manifest.dump(2) << "\n";
  return path;
}

}  // namespace synth
