// Command-line front end; goes through the public C API only.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "atlasforge.h"

namespace {

int report(af_status status) {
  if (status == AF_OK) return 0;
  std::fprintf(stderr, "error (%s): %s\n", af_status_name(status), af_last_error());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-atlas guided volumetric segmentation pipeline"};
  app.require_subcommand(1);

  // prep
  std::string prepManifest, prepOut, prepReference;
  CLI::App* prep = app.add_subcommand("prep", "Histogram match and apply transforms");
  prep->add_option("--manifest", prepManifest, "Dataset manifest")->required();
  prep->add_option("--out", prepOut, "Output directory")->required();
  prep->add_option("--reference", prepReference, "Histogram reference id (default: first template)");

  // geometry
  std::string geoManifest, geoOut;
  int geoDilation = 3;
  CLI::App* geometry = app.add_subcommand("geometry", "Per-ROI patch sizes and centres");
  geometry->add_option("--manifest", geoManifest, "prep.json from the prep step")->required();
  geometry->add_option("--dilation", geoDilation, "Dilation radius (default 3)");
  geometry->add_option("--out", geoOut, "Geometry output (geo.json)")->required();

  // sample
  std::string smpManifest, smpGeometry, smpOut;
  int smpRoi = 0, smpCount = 1000, smpK = 3;
  std::uint64_t smpSeed = 0;
  double smpRadius = 0.75;
  CLI::App* sample = app.add_subcommand("sample", "Extract training samples for one ROI");
  sample->add_option("--manifest", smpManifest, "prep.json from the prep step")->required();
  sample->add_option("--geometry", smpGeometry, "geo.json from the geometry step")->required();
  sample->add_option("--roi", smpRoi, "ROI id")->required();
  sample->add_option("--count", smpCount, "Training patches per ROI (default 1000)");
  sample->add_option("--k", smpK, "Similar atlas patches per sample (default 3)");
  sample->add_option("--seed", smpSeed, "Random seed")->required();
  sample->add_option("--search-radius-factor", smpRadius,
                     "Search radius as a fraction of the patch size (default 0.75)");
  sample->add_option("--out", smpOut, "Samples output directory")->required();

  // train
  std::string trnSamples, trnGeometry, trnOut;
  int trnRoi = 0, trnMembers = 3, trnBatch = 2, trnWarmup = 5, trnMaxEpochs = 15;
  double trnLr = 0.01;
  std::uint64_t trnSeed = 0;
  std::vector<double> trnWidths;
  CLI::App* train = app.add_subcommand("train", "Train the ensemble for one ROI");
  train->add_option("--samples", trnSamples, "Samples directory")->required();
  train->add_option("--geometry", trnGeometry, "geo.json from the geometry step")->required();
  train->add_option("--roi", trnRoi, "ROI id")->required();
  train->add_option("--members", trnMembers, "Ensemble members (default 3)");
  train->add_option("--lr", trnLr, "Learning rate (default 0.01)");
  train->add_option("--seed", trnSeed, "Random seed")->required();
  train->add_option("--width-multipliers", trnWidths,
                    "Per-member width multipliers (default 1.0,0.75,1.25)")
      ->delimiter(',');
  train->add_option("--batch-size", trnBatch, "Mini-batch size (default 2)");
  train->add_option("--warmup", trnWarmup, "Epochs before early stopping engages (default 5)");
  train->add_option("--max-epochs", trnMaxEpochs, "Hard epoch cap (default 15)");
  train->add_option("--out", trnOut, "Models output directory")->required();

  // segment
  std::string segManifest, segGeometry, segImage, segModels, segOut, segConfidence;
  CLI::App* segment = app.add_subcommand("segment", "Segment a test image");
  segment->add_option("--manifest", segManifest, "prep.json from the prep step")->required();
  segment->add_option("--geometry", segGeometry, "geo.json from the geometry step")->required();
  segment->add_option("--image", segImage, "Test id or prepped test image path")->required();
  segment->add_option("--models", segModels, "Models directory")->required();
  segment->add_option("--out", segOut, "Output label volume")->required();
  segment->add_option("--confidence", segConfidence, "Output confidence volume");

  // evaluate
  std::vector<std::string> evalPred, evalTruth;
  std::vector<std::uint16_t> evalRois;
  std::string evalOut;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Score predictions against ground truth");
  evaluate->add_option("--pred", evalPred, "Predicted label volume(s)")
      ->required()
      ->delimiter(',');
  evaluate->add_option("--truth", evalTruth, "Ground-truth label volume(s)")
      ->required()
      ->delimiter(',');
  evaluate->add_option("--rois", evalRois, "ROI ids, e.g. 1,2")->required()->delimiter(',');
  evaluate->add_option("--out", evalOut, "Report output (json)");

  CLI11_PARSE(app, argc, argv);

  if (prep->parsed()) {
    af_prep_options o;
    af_prep_options_init(&o);
    o.manifest_path = prepManifest.c_str();
    o.out_dir = prepOut.c_str();
    o.reference_id = prepReference.empty() ? nullptr : prepReference.c_str();
    o.verbose = 1;
    return report(af_prep(&o));
  }
  if (geometry->parsed()) {
    af_geometry_options o;
    af_geometry_options_init(&o);
    o.prep_manifest_path = geoManifest.c_str();
    o.dilation_radius = geoDilation;
    o.out_path = geoOut.c_str();
    o.verbose = 1;
    return report(af_geometry(&o));
  }
  if (sample->parsed()) {
    af_sample_options o;
    af_sample_options_init(&o);
    o.prep_manifest_path = smpManifest.c_str();
    o.geometry_path = smpGeometry.c_str();
    o.roi = smpRoi;
    o.count = smpCount;
    o.k = smpK;
    o.seed = smpSeed;
    o.search_radius_factor = smpRadius;
    o.out_dir = smpOut.c_str();
    o.verbose = 1;
    return report(af_sample(&o));
  }
  if (train->parsed()) {
    af_train_options o;
    af_train_options_init(&o);
    o.samples_dir = trnSamples.c_str();
    o.geometry_path = trnGeometry.c_str();
    o.out_dir = trnOut.c_str();
    o.roi = trnRoi;
    o.members = trnMembers;
    o.learning_rate = trnLr;
    o.seed = trnSeed;
    if (!trnWidths.empty()) {
      o.width_multipliers = trnWidths.data();
      o.width_multiplier_count = static_cast<int>(trnWidths.size());
    }
    o.batch_size = trnBatch;
    o.warmup_epochs = trnWarmup;
    o.max_epochs = trnMaxEpochs;
    o.verbose = 1;
    return report(af_train(&o));
  }
  if (segment->parsed()) {
    af_segment_options o;
    af_segment_options_init(&o);
    o.prep_manifest_path = segManifest.c_str();
    o.geometry_path = segGeometry.c_str();
    o.image = segImage.c_str();
    o.models_dir = segModels.c_str();
    o.out_path = segOut.c_str();
    o.confidence_path = segConfidence.empty() ? nullptr : segConfidence.c_str();
    o.verbose = 1;
    return report(af_segment(&o));
  }
  if (evaluate->parsed()) {
    std::vector<const char*> preds, truths;
    for (const std::string& s : evalPred) preds.push_back(s.c_str());
    for (const std::string& s : evalTruth) truths.push_back(s.c_str());
    af_evaluate_options o;
    af_evaluate_options_init(&o);
    o.pred_paths = preds.data();
    o.truth_paths = truths.data();
    o.pair_count = static_cast<int>(preds.size());
    o.rois = evalRois.data();
    o.roi_count = static_cast<int>(evalRois.size());
    o.out_path = evalOut.empty() ? nullptr : evalOut.c_str();
    o.verbose = 1;
    return report(af_evaluate(&o));
  }
  return 1;
}
