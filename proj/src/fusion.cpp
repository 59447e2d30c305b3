#include "atlasforge/fusion.hpp"

#include <set>

namespace atlasforge {

FuseResult fuse(const std::vector<RoiPrediction>& predictions, const Dims3& volumeDims) {
  if (predictions.empty()) throw InvalidArgumentError("fuse needs >= 1 prediction");
  std::set<std::uint16_t> ids;
  for (const RoiPrediction& p : predictions)
    if (!ids.insert(p.roi).second)
      throw InvalidArgumentError("duplicate roi id " + std::to_string(p.roi));

  FuseResult r{Volume(volumeDims, Dtype::Label16), Volume(volumeDims, Dtype::Float32)};
  auto& labels = r.labels.labels();
  std::vector<double> conf(volumeDims.voxels(), 0.0);

  for (const RoiPrediction& p : predictions) {
    if (p.probability.size() !=
        static_cast<std::size_t>(p.size[0]) * p.size[1] * p.size[2])
      throw DimsMismatchError("prediction patch size mismatch");
    const int ox = p.center[0] - p.size[0] / 2;
    const int oy = p.center[1] - p.size[1] / 2;
    const int oz = p.center[2] - p.size[2] / 2;
    std::size_t i = 0;
    for (int z = 0; z < p.size[2]; ++z)
      for (int y = 0; y < p.size[1]; ++y)
        for (int x = 0; x < p.size[0]; ++x, ++i) {
          const int vx = ox + x, vy = oy + y, vz = oz + z;
          if (vx < 0 || vy < 0 || vz < 0 || vx >= static_cast<int>(volumeDims.x) ||
              vy >= static_cast<int>(volumeDims.y) || vz >= static_cast<int>(volumeDims.z))
            continue;
          const double product = p.binary[i] ? p.probability[i] : 0.0;
          if (product <= 0.0) continue;
          const std::uint64_t vi = flatIndex(volumeDims, vx, vy, vz);
          if (product > conf[vi] || (product == conf[vi] && p.roi < labels[vi])) {
            conf[vi] = product;
            labels[vi] = p.roi;
          }
        }
  }
  for (std::uint64_t i = 0; i < conf.size(); ++i)
    r.confidence.floats()[i] = static_cast<float>(conf[i]);
  return r;
}

void embedPatch(const Volume& patch, const std::array<int, 3>& center, Volume& target) {
  if (patch.dtype() != target.dtype())
    throw InvalidArgumentError("embedPatch: dtype mismatch");
  const Dims3 pd = patch.dims();
  const Dims3 td = target.dims();
  const int ox = center[0] - static_cast<int>(pd.x) / 2;
  const int oy = center[1] - static_cast<int>(pd.y) / 2;
  const int oz = center[2] - static_cast<int>(pd.z) / 2;
  std::uint64_t i = 0;
  for (std::uint32_t z = 0; z < pd.z; ++z)
    for (std::uint32_t y = 0; y < pd.y; ++y)
      for (std::uint32_t x = 0; x < pd.x; ++x, ++i) {
        const int vx = ox + static_cast<int>(x);
        const int vy = oy + static_cast<int>(y);
        const int vz = oz + static_cast<int>(z);
        if (vx < 0 || vy < 0 || vz < 0 || vx >= static_cast<int>(td.x) ||
            vy >= static_cast<int>(td.y) || vz >= static_cast<int>(td.z))
          continue;
        const std::uint64_t vi = flatIndex(td, vx, vy, vz);
        if (patch.dtype() == Dtype::Float32)
          target.floats()[vi] = patch.floats()[i];
        else
          target.labels()[vi] = patch.labels()[i];
      }
}

}  // namespace atlasforge
