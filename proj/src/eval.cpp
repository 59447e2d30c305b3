#include "atlasforge/eval.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

namespace atlasforge {

double dsc(const BinaryMask& a, const BinaryMask& b) {
  if (!(a.dims == b.dims)) throw DimsMismatchError("dsc: mask dims differ");
  std::uint64_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    na += a.bits[i] != 0;
    nb += b.bits[i] != 0;
    inter += a.bits[i] && b.bits[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

namespace {

BinaryMask maskWhere(const Volume& v, std::uint16_t roi, bool anyForeground) {
  BinaryMask m(v.dims());
  const auto& lab = v.labels();
  for (std::size_t i = 0; i < lab.size(); ++i)
    m.bits[i] = anyForeground ? (lab[i] != 0) : (lab[i] == roi);
  return m;
}

void finalize(RoiScore& s) {
  double sum = 0.0;
  for (double v : s.values) sum += v;
  s.mean = s.values.empty() ? 0.0 : sum / static_cast<double>(s.values.size());
  double var = 0.0;
  for (double v : s.values) var += (v - s.mean) * (v - s.mean);
  s.stddev = s.values.empty() ? 0.0 : std::sqrt(var / static_cast<double>(s.values.size()));
}

}  // namespace

EvaluationReport evaluate(const std::vector<std::pair<const Volume*, const Volume*>>& pairs,
                          const std::vector<std::uint16_t>& roiIds) {
  if (pairs.empty()) throw InvalidArgumentError("evaluate needs >= 1 volume pair");
  EvaluationReport report;
  for (std::uint16_t roi : roiIds) {
    RoiScore s;
    s.roi = roi;
    report.rois.push_back(s);
  }
  for (const auto& [pred, truth] : pairs) {
    if (!(pred->dims() == truth->dims()))
      throw DimsMismatchError("evaluate: volume dims differ");
    for (std::size_t r = 0; r < roiIds.size(); ++r)
      report.rois[r].values.push_back(
          dsc(maskWhere(*pred, roiIds[r], false), maskWhere(*truth, roiIds[r], false)));
    report.allLabels.values.push_back(
        dsc(maskWhere(*pred, 0, true), maskWhere(*truth, 0, true)));
  }
  for (RoiScore& s : report.rois) finalize(s);
  finalize(report.allLabels);
  return report;
}

void writeReportJson(const EvaluationReport& report, const std::string& path) {
  nlohmann::json j;
  j["rois"] = nlohmann::json::array();
  for (const RoiScore& s : report.rois) {
    nlohmann::json r;
    r["roi"] = s.roi;
    r["mean"] = s.mean;
    r["stddev"] = s.stddev;
    r["values"] = s.values;
    j["rois"].push_back(r);
  }
  j["allLabels"]["mean"] = report.allLabels.mean;
  j["allLabels"]["stddev"] = report.allLabels.stddev;
  j["allLabels"]["values"] = report.allLabels.values;

  const std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw IoError("cannot open " + tmp + " for writing");
  const std::string text = j.dump(2) + "\n";
  const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
  std::fclose(f);
  if (!ok || std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot write " + path);
}

}  // namespace atlasforge
