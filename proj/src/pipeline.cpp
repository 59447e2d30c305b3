#include "atlasforge/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <map>

#include "atlasforge/artifacts.hpp"
#include "atlasforge/ensemble.hpp"
#include "atlasforge/fusion.hpp"
#include "atlasforge/patchsearch.hpp"

namespace atlasforge {

namespace {

namespace fs = std::filesystem;

void ensureDir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir);
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void note(bool verbose, const char* fmt, auto... args) {
  if (!verbose) return;
  std::printf(fmt, args...);
  std::printf("\n");
  std::fflush(stdout);
}

// Salts for deriving per-step rng streams from the user seed.
constexpr std::uint64_t kSampleSalt = 0x73616d706c65ull;

}  // namespace

void runPrep(const PrepOptions& opt) {
  const Manifest m = Manifest::load(opt.manifestPath);
  ensureDir(opt.outDir);

  std::string referenceId = opt.referenceId.empty() ? m.templates.front().id : opt.referenceId;
  const VolumeEntry* refEntry = nullptr;
  auto findRef = [&](const std::vector<VolumeEntry>& list) {
    for (const VolumeEntry& e : list)
      if (e.id == referenceId) refEntry = &e;
  };
  findRef(m.templates);
  findRef(m.targets);
  findRef(m.tests);
  if (!refEntry) throw ManifestError("reference id " + referenceId + " not in manifest");
  const Volume reference = loadVolume(refEntry->imagePath);

  PrepManifest out;
  out.roiCount = m.roiCount;
  out.referenceId = referenceId;

  std::map<std::string, Volume> matchedTemplates;  // id -> matched image
  std::map<std::string, Volume> templateLabels;

  auto matchAndSave = [&](const VolumeEntry& e) {
    Volume img = loadVolume(e.imagePath);
    Volume matched = e.id == referenceId ? img : histogramMatch(img, reference);
    const std::string path = join(opt.outDir, e.id + "_image.rvol");
    saveVolume(matched, path);
    return std::pair<Volume, std::string>(std::move(matched), path);
  };

  for (const VolumeEntry& e : m.templates) {
    auto [matched, path] = matchAndSave(e);
    matchedTemplates.emplace(e.id, std::move(matched));
    templateLabels.emplace(e.id, loadVolume(e.labelPath));
    note(opt.verbose, "[prep] matched template %s", e.id.c_str());
  }
  auto prepTargetsOrTests = [&](const std::vector<VolumeEntry>& list, bool isTarget) {
    for (const VolumeEntry& e : list) {
      auto [matched, path] = matchAndSave(e);
      VolumeEntry pe;
      pe.id = e.id;
      pe.imagePath = path;
      if (!e.labelPath.empty()) {
        pe.labelPath = join(opt.outDir, e.id + "_label.rvol");
        saveVolume(loadVolume(e.labelPath), pe.labelPath);
      }
      (isTarget ? out.targets : out.tests).push_back(pe);
      note(opt.verbose, "[prep] matched %s %s", isTarget ? "target" : "test", e.id.c_str());

      for (const VolumeEntry& t : m.templates) {
        const std::string& field = m.transformFor(t.id, e.id);
        Volume warpedImage, warpedLabel;
        if (field == "identity") {
          if (!(matchedTemplates.at(t.id).dims() == matched.dims()))
            throw DimsMismatchError("identity transform between grids of different dims (" +
                                    t.id + " onto " + e.id + ")");
          warpedImage = matchedTemplates.at(t.id);
          warpedLabel = templateLabels.at(t.id);
        } else {
          const DisplacementField df = loadDisplacementField(field);
          if (!(df.dims == matched.dims()))
            throw DimsMismatchError("field dims do not match " + e.id + " grid");
          warpedImage = applyTransform(matchedTemplates.at(t.id), &df, Interpolation::Trilinear);
          warpedLabel = applyTransform(templateLabels.at(t.id), &df, Interpolation::Nearest);
        }
        WarpedEntry w;
        w.templateId = t.id;
        w.ontoId = e.id;
        w.imagePath = join(opt.outDir, "warp_" + t.id + "_onto_" + e.id + "_image.rvol");
        w.labelPath = join(opt.outDir, "warp_" + t.id + "_onto_" + e.id + "_label.rvol");
        saveVolume(warpedImage, w.imagePath);
        saveVolume(warpedLabel, w.labelPath);
        out.warped.push_back(w);
      }
    }
  };
  prepTargetsOrTests(m.targets, true);
  prepTargetsOrTests(m.tests, false);

  out.save(join(opt.outDir, "prep.json"));
  note(opt.verbose, "[prep] wrote %s", join(opt.outDir, "prep.json").c_str());
}

void runGeometry(const GeometryOptions& opt) {
  if (opt.dilationRadius < 0) throw InvalidArgumentError("dilation radius must be >= 0");
  const PrepManifest pm = PrepManifest::load(opt.prepManifestPath);

  // Warped template labels per destination volume.
  std::map<std::string, std::vector<Volume>> warpedLabels;
  auto loadWarped = [&](const std::string& ontoId) {
    std::vector<Volume> labels;
    for (const WarpedEntry* w : pm.warpedOnto(ontoId)) labels.push_back(loadVolume(w->labelPath));
    if (labels.empty()) throw ManifestError("no warped templates onto " + ontoId);
    return labels;
  };
  for (const VolumeEntry& e : pm.targets) warpedLabels.emplace(e.id, loadWarped(e.id));
  for (const VolumeEntry& e : pm.tests) warpedLabels.emplace(e.id, loadWarped(e.id));

  GeometryFile geo;
  geo.dilation = opt.dilationRadius;
  geo.roiCount = pm.roiCount;
  for (int roi = 1; roi <= pm.roiCount; ++roi) {
    PatchGeometry g;
    g.roi = static_cast<std::uint16_t>(roi);
    std::vector<Cuboid> cuboids;
    for (const VolumeEntry& e : pm.targets) {
      std::vector<const Volume*> refs;
      for (const Volume& v : warpedLabels.at(e.id)) refs.push_back(&v);
      cuboids.push_back(
          boundingCuboid(dilate(roiUnion(refs, g.roi), opt.dilationRadius)));
    }
    g.sizeRaw = roiPatchSize(cuboids);
    for (int a = 0; a < 3; ++a) g.size[a] = std::max(g.sizeRaw[a], 8);
    for (const auto& [id, labels] : warpedLabels) {
      std::vector<const Volume*> refs;
      for (const Volume& v : labels) refs.push_back(&v);
      g.centers[id] = roiPatchCenter(refs, g.roi, opt.dilationRadius);
    }
    note(opt.verbose, "[geometry] roi %d patch %dx%dx%d (raw %dx%dx%d)", roi, g.size[0],
         g.size[1], g.size[2], g.sizeRaw[0], g.sizeRaw[1], g.sizeRaw[2]);
    geo.rois.push_back(std::move(g));
  }
  saveGeometry(geo, opt.outPath);
}

void runSample(const SampleOptions& opt) {
  if (opt.roi < 1) throw InvalidArgumentError("--roi must be >= 1");
  if (opt.k < 1) throw InvalidArgumentError("--k must be >= 1");
  const PrepManifest pm = PrepManifest::load(opt.prepManifestPath);
  const GeometryFile geo = loadGeometry(opt.geometryPath);
  const PatchGeometry& g = geo.forRoi(static_cast<std::uint16_t>(opt.roi));
  ensureDir(opt.outDir);

  SampleSet set;
  set.roi = g.roi;
  set.k = opt.k;
  set.patchSize = g.size;
  set.searchRadiusFactor = opt.searchRadiusFactor;
  set.seed = opt.seed;
  set.geometryHash = geo.contentHash();

  const std::array<int, 3> radius = searchRadiusFor(g.size, opt.searchRadiusFactor);
  Rng rng(deriveSeed(opt.seed, static_cast<std::uint64_t>(opt.roi), kSampleSalt));

  const int nTargets = static_cast<int>(pm.targets.size());
  if (nTargets < 1) throw ManifestError("prep manifest has no targets");
  for (int j = 0; j < nTargets; ++j) {
    const VolumeEntry& tgt = pm.targets[j];
    int countJ = opt.count / nTargets + (j < opt.count % nTargets ? 1 : 0);
    if (countJ == 0) continue;
    countJ = std::max(countJ, 3);  // the sampler needs all three pools

    const Volume image = loadVolume(tgt.imagePath);
    const Volume label = loadVolume(tgt.labelPath);
    std::vector<Volume> wImages, wLabels;
    for (const WarpedEntry* w : pm.warpedOnto(tgt.id)) {
      wImages.push_back(loadVolume(w->imagePath));
      wLabels.push_back(loadVolume(w->labelPath));
    }
    if (static_cast<int>(wImages.size()) < opt.k)
      throw InsufficientTemplatesError("fewer templates than k for target " + tgt.id);
    std::vector<const Volume*> imgRefs, labRefs;
    for (const Volume& v : wImages) imgRefs.push_back(&v);
    for (const Volume& v : wLabels) labRefs.push_back(&v);

    const auto centers =
        sampleTrainingCenters(label, g.roi, g.size, countJ, geo.dilation, rng);
    for (const SampledCenter& c : centers)
      set.samples.push_back(buildTrainingSample(image, label, g.roi, c.pos, g.size, imgRefs,
                                                labRefs, opt.k, radius));
    note(opt.verbose, "[sample] roi %d target %s: %d patches", opt.roi, tgt.id.c_str(), countJ);
  }

  saveSampleSet(set, sampleSetPath(opt.outDir, set.roi));
}

void runTrain(const TrainOptions& opt) {
  if (opt.roi < 1) throw InvalidArgumentError("--roi must be >= 1");
  const GeometryFile geo = loadGeometry(opt.geometryPath);
  const SampleSet set = loadSampleSet(sampleSetPath(opt.samplesDir,
                                                    static_cast<std::uint16_t>(opt.roi)));
  if (set.geometryHash != geo.contentHash())
    throw VersionMismatchError("sample set was built against a different geometry");
  ensureDir(opt.outDir);

  // Deterministic split: every 8th sample validates.
  std::vector<TrainingSample> train, val;
  for (std::size_t i = 0; i < set.samples.size(); ++i)
    (i % 8 == 7 ? val : train).push_back(set.samples[i]);
  if (val.empty() && train.size() > 1) {
    val.push_back(train.back());
    train.pop_back();
  }
  if (val.empty()) val = train;

  EnsembleSpec ensemble;
  ensemble.members = opt.members;
  if (!opt.widthMultipliers.empty()) ensemble.widthMultipliers = opt.widthMultipliers;

  SFCNSpec base;
  base.k = set.k;
  base.patchSize = set.patchSize;

  TrainConfig config;
  config.batchSize = opt.batchSize;
  config.warmupEpochs = opt.warmupEpochs;
  config.maxEpochs = opt.maxEpochs;
  config.learningRate = opt.learningRate;
  config.seed = opt.seed;

  note(opt.verbose, "[train] roi %d: %zu train / %zu val samples, %d members", opt.roi,
       train.size(), val.size(), opt.members);
  std::vector<TrainedSfcn> members = trainMfcn(set.roi, train, val, ensemble, base, config);

  ModelIndex idx;
  idx.roi = set.roi;
  idx.k = set.k;
  idx.patchSize = set.patchSize;
  idx.searchRadiusFactor = set.searchRadiusFactor;
  idx.geometryHash = set.geometryHash;
  for (std::size_t m = 0; m < members.size(); ++m) {
    MemberRecord rec;
    rec.file = "roi-" + std::to_string(set.roi) + "-member-" + std::to_string(m) + ".afm";
    rec.widthMultiplier = members[m].spec.widthMultiplier;
    rec.seed = deriveSeed(opt.seed, set.roi, m);
    rec.bestEpoch = members[m].bestEpoch;
    rec.stoppedEpoch = members[m].stoppedEpoch;
    saveMemberModel(members[m], set.roi, static_cast<int>(m), join(opt.outDir, rec.file));
    idx.members.push_back(rec);
    note(opt.verbose, "[train] roi %d member %zu: best epoch %d (val dsc %.4f), stopped at %d",
         opt.roi, m, members[m].bestEpoch,
         members[m].history[members[m].bestEpoch - 1].valDsc, members[m].stoppedEpoch);
  }
  saveModelIndex(idx, modelIndexPath(opt.outDir, set.roi));
}

void runSegment(const SegmentOptions& opt) {
  const PrepManifest pm = PrepManifest::load(opt.prepManifestPath);
  const GeometryFile geo = loadGeometry(opt.geometryPath);
  const std::string geoHash = geo.contentHash();

  const VolumeEntry* test = nullptr;
  for (const VolumeEntry& e : pm.tests)
    if (e.id == opt.imageRef || e.imagePath == opt.imageRef ||
        fs::path(e.imagePath).filename() == fs::path(opt.imageRef).filename())
      test = &e;
  if (!test)
    throw ManifestError("image " + opt.imageRef + " is not a test entry of the prep manifest");

  const Volume testImage = loadVolume(test->imagePath);
  std::vector<Volume> wImages, wLabels;
  for (const WarpedEntry* w : pm.warpedOnto(test->id)) {
    wImages.push_back(loadVolume(w->imagePath));
    wLabels.push_back(loadVolume(w->labelPath));
  }
  std::vector<const Volume*> imgRefs, labRefs;
  for (const Volume& v : wImages) imgRefs.push_back(&v);
  for (const Volume& v : wLabels) labRefs.push_back(&v);

  std::vector<RoiPrediction> predictions;
  for (const PatchGeometry& g : geo.rois) {
    const std::string idxPath = modelIndexPath(opt.modelsDir, g.roi);
    if (!fs::exists(idxPath))
      throw MissingModelError("no trained model for roi " + std::to_string(g.roi) + " in " +
                              opt.modelsDir);
    const ModelIndex idx = loadModelIndex(idxPath);
    if (idx.geometryHash != geoHash)
      throw VersionMismatchError("models for roi " + std::to_string(g.roi) +
                                 " were trained against a different geometry");
    if (idx.patchSize != g.size)
      throw VersionMismatchError("model patch size disagrees with geometry");
    if (static_cast<int>(imgRefs.size()) < idx.k)
      throw InsufficientTemplatesError("fewer templates than k for test " + test->id);

    std::vector<TrainedSfcn> members;
    for (const MemberRecord& rec : idx.members)
      members.push_back(loadMemberModel(join(opt.modelsDir, rec.file)));
    if (members.empty()) throw MissingModelError("model index lists no members");

    auto centerIt = g.centers.find(test->id);
    if (centerIt == g.centers.end())
      throw ManifestError("geometry has no centre for test " + test->id);

    TrainingSample sample;
    sample.x = extractPatch(testImage, centerIt->second, g.size);
    sample.y = Volume(sample.x.dims(), Dtype::Label16);  // unused at test time
    std::vector<SearchResult> candidates;
    for (std::size_t m = 0; m < imgRefs.size(); ++m) {
      SearchResult r = mostSimilar(sample.x, *imgRefs[m], centerIt->second,
                                   searchRadiusFor(g.size, idx.searchRadiusFactor),
                                   static_cast<int>(m));
      const std::array<int, 3> at = {centerIt->second[0] + r.offset[0],
                                     centerIt->second[1] + r.offset[1],
                                     centerIt->second[2] + r.offset[2]};
      r.labelPatch = binarizeToRoi(extractPatch(*labRefs[m], at, g.size), g.roi);
      candidates.push_back(std::move(r));
    }
    for (auto& r : topK(std::move(candidates), idx.k)) {
      sample.atlasImages.push_back(std::move(r.imagePatch));
      sample.atlasLabels.push_back(std::move(r.labelPatch));
    }
    predictions.push_back(predictRoi(members, sample, g.roi, centerIt->second));
    note(opt.verbose, "[segment] roi %u done", g.roi);
  }

  const FuseResult fused = fuse(predictions, testImage.dims());
  saveVolume(fused.labels, opt.outPath);
  if (!opt.confidencePath.empty()) saveVolume(fused.confidence, opt.confidencePath);
  note(opt.verbose, "[segment] wrote %s", opt.outPath.c_str());
}

EvaluationReport runEvaluate(const EvaluateOptions& opt) {
  if (opt.predPaths.size() != opt.truthPaths.size() || opt.predPaths.empty())
    throw InvalidArgumentError("evaluate needs matching --pred/--truth lists");
  std::vector<Volume> volumes;
  volumes.reserve(opt.predPaths.size() * 2);
  std::vector<std::pair<const Volume*, const Volume*>> pairs;
  for (std::size_t i = 0; i < opt.predPaths.size(); ++i) {
    volumes.push_back(loadVolume(opt.predPaths[i]));
    volumes.push_back(loadVolume(opt.truthPaths[i]));
    pairs.emplace_back(&volumes[volumes.size() - 2], &volumes[volumes.size() - 1]);
  }
  const EvaluationReport report = evaluate(pairs, opt.rois);
  if (!opt.outPath.empty()) writeReportJson(report, opt.outPath);
  if (opt.verbose) {
    for (const RoiScore& s : report.rois)
      std::printf("[evaluate] roi %u: dsc %.4f (sd %.4f)\n", s.roi, s.mean, s.stddev);
    std::printf("[evaluate] all labels: dsc %.4f (sd %.4f)\n", report.allLabels.mean,
                report.allLabels.stddev);
  }
  return report;
}

}  // namespace atlasforge
