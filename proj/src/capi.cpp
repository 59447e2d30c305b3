#include "atlasforge.h"

#include <cstring>
#include <string>

#include "atlasforge/eval.hpp"
#include "atlasforge/pipeline.hpp"
#include "atlasforge/volume.hpp"

using namespace atlasforge;

extern "C" {

struct af_volume {
  Volume rep;
};

}  // extern "C"

namespace {

thread_local std::string g_lastError;

af_status fail(af_status code, const std::string& message) {
  g_lastError = message;
  return code;
}

// Runs a callable and maps thrown errors onto status codes.
template <typename Fn>
af_status guarded(Fn&& fn) {
  try {
    fn();
    return AF_OK;
  } catch (const BadMagicError& e) {
    return fail(AF_ERR_BAD_MAGIC, e.what());
  } catch (const TruncatedFileError& e) {
    return fail(AF_ERR_TRUNCATED, e.what());
  } catch (const PayloadSizeError& e) {
    return fail(AF_ERR_PAYLOAD_SIZE, e.what());
  } catch (const DimsMismatchError& e) {
    return fail(AF_ERR_DIMS_MISMATCH, e.what());
  } catch (const DegenerateReferenceError& e) {
    return fail(AF_ERR_DEGENERATE_REFERENCE, e.what());
  } catch (const EmptyMaskError& e) {
    return fail(AF_ERR_EMPTY_MASK, e.what());
  } catch (const InsufficientTemplatesError& e) {
    return fail(AF_ERR_INSUFFICIENT_TEMPLATES, e.what());
  } catch (const ManifestError& e) {
    return fail(AF_ERR_MANIFEST, e.what());
  } catch (const MissingModelError& e) {
    return fail(AF_ERR_MISSING_MODEL, e.what());
  } catch (const VersionMismatchError& e) {
    return fail(AF_ERR_VERSION_MISMATCH, e.what());
  } catch (const DivergenceError& e) {
    return fail(AF_ERR_DIVERGENCE, e.what());
  } catch (const InvalidArgumentError& e) {
    return fail(AF_ERR_INVALID_ARGUMENT, e.what());
  } catch (const IoError& e) {
    return fail(AF_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(AF_ERR_UNKNOWN, e.what());
  } catch (...) {
    return fail(AF_ERR_UNKNOWN, "unknown error");
  }
}

af_status requireArgs(bool ok) {
  if (!ok) return fail(AF_ERR_INVALID_ARGUMENT, "null argument");
  return AF_OK;
}

}  // namespace

extern "C" {

const char* af_status_name(af_status status) {
  switch (status) {
    case AF_OK: return "ok";
    case AF_ERR_IO: return "io-error";
    case AF_ERR_BAD_MAGIC: return "bad-magic";
    case AF_ERR_TRUNCATED: return "truncated";
    case AF_ERR_PAYLOAD_SIZE: return "payload-size-mismatch";
    case AF_ERR_DIMS_MISMATCH: return "dims-mismatch";
    case AF_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case AF_ERR_DEGENERATE_REFERENCE: return "degenerate-reference";
    case AF_ERR_EMPTY_MASK: return "empty-mask";
    case AF_ERR_INSUFFICIENT_TEMPLATES: return "insufficient-templates";
    case AF_ERR_MANIFEST: return "manifest-error";
    case AF_ERR_MISSING_MODEL: return "missing-model";
    case AF_ERR_VERSION_MISMATCH: return "version-mismatch";
    case AF_ERR_DIVERGENCE: return "divergence";
    case AF_ERR_UNKNOWN: return "unknown";
  }
  return "unknown";
}

const char* af_last_error(void) { return g_lastError.c_str(); }

af_status af_volume_load(const char* path, af_volume** out) {
  if (af_status s = requireArgs(path && out)) return s;
  return guarded([&] { *out = new af_volume{loadVolume(path)}; });
}

af_status af_volume_save(const af_volume* volume, const char* path) {
  if (af_status s = requireArgs(volume && path)) return s;
  return guarded([&] { saveVolume(volume->rep, path); });
}

af_status af_volume_create_f32(const uint32_t dims[3], const float* data, af_volume** out) {
  if (af_status s = requireArgs(dims && data && out)) return s;
  return guarded([&] {
    Dims3 d{dims[0], dims[1], dims[2]};
    *out = new af_volume{
        Volume::fromFloats(d, std::vector<float>(data, data + d.voxels()))};
  });
}

af_status af_volume_create_u16(const uint32_t dims[3], const uint16_t* data, af_volume** out) {
  if (af_status s = requireArgs(dims && data && out)) return s;
  return guarded([&] {
    Dims3 d{dims[0], dims[1], dims[2]};
    *out = new af_volume{
        Volume::fromLabels(d, std::vector<std::uint16_t>(data, data + d.voxels()))};
  });
}

void af_volume_free(af_volume* volume) { delete volume; }

void af_volume_dims(const af_volume* volume, uint32_t dims[3]) {
  if (!volume || !dims) return;
  dims[0] = volume->rep.dims().x;
  dims[1] = volume->rep.dims().y;
  dims[2] = volume->rep.dims().z;
}

int af_volume_dtype(const af_volume* volume) {
  if (!volume) return -1;
  return volume->rep.dtype() == Dtype::Float32 ? 0 : 1;
}

const float* af_volume_f32(const af_volume* volume) {
  if (!volume || volume->rep.dtype() != Dtype::Float32) return nullptr;
  return volume->rep.floats().data();
}

const uint16_t* af_volume_u16(const af_volume* volume) {
  if (!volume || volume->rep.dtype() != Dtype::Label16) return nullptr;
  return volume->rep.labels().data();
}

af_status af_histogram_match(const af_volume* source, const af_volume* reference,
                             af_volume** out) {
  if (af_status s = requireArgs(source && reference && out)) return s;
  return guarded([&] { *out = new af_volume{histogramMatch(source->rep, reference->rep)}; });
}

af_status af_dsc(const af_volume* a, const af_volume* b, uint16_t roi, double* out) {
  if (af_status s = requireArgs(a && b && out)) return s;
  return guarded([&] {
    auto maskOf = [&](const Volume& v) {
      BinaryMask m(v.dims());
      const auto& lab = v.labels();
      for (std::size_t i = 0; i < lab.size(); ++i) m.bits[i] = lab[i] == roi;
      return m;
    };
    *out = dsc(maskOf(a->rep), maskOf(b->rep));
  });
}

void af_prep_options_init(af_prep_options* opt) {
  if (opt) *opt = af_prep_options{nullptr, nullptr, nullptr, 0};
}

af_status af_prep(const af_prep_options* opt) {
  if (af_status s = requireArgs(opt && opt->manifest_path && opt->out_dir)) return s;
  return guarded([&] {
    PrepOptions o;
    o.manifestPath = opt->manifest_path;
    o.outDir = opt->out_dir;
    if (opt->reference_id) o.referenceId = opt->reference_id;
    o.verbose = opt->verbose != 0;
    runPrep(o);
  });
}

void af_geometry_options_init(af_geometry_options* opt) {
  if (opt) *opt = af_geometry_options{nullptr, 3, nullptr, 0};
}

af_status af_geometry(const af_geometry_options* opt) {
  if (af_status s = requireArgs(opt && opt->prep_manifest_path && opt->out_path)) return s;
  return guarded([&] {
    GeometryOptions o;
    o.prepManifestPath = opt->prep_manifest_path;
    o.dilationRadius = opt->dilation_radius;
    o.outPath = opt->out_path;
    o.verbose = opt->verbose != 0;
    runGeometry(o);
  });
}

void af_sample_options_init(af_sample_options* opt) {
  if (opt) *opt = af_sample_options{nullptr, nullptr, 0, 1000, 3, 0, 0.75, nullptr, 0};
}

af_status af_sample(const af_sample_options* opt) {
  if (af_status s = requireArgs(opt && opt->prep_manifest_path && opt->geometry_path &&
                                opt->out_dir))
    return s;
  return guarded([&] {
    SampleOptions o;
    o.prepManifestPath = opt->prep_manifest_path;
    o.geometryPath = opt->geometry_path;
    o.roi = opt->roi;
    o.count = opt->count;
    o.k = opt->k;
    o.seed = opt->seed;
    o.searchRadiusFactor = opt->search_radius_factor;
    o.outDir = opt->out_dir;
    o.verbose = opt->verbose != 0;
    runSample(o);
  });
}

void af_train_options_init(af_train_options* opt) {
  if (opt)
    *opt = af_train_options{nullptr, nullptr, nullptr, 0, 3, 0.01, 0, nullptr, 0, 2, 5, 15, 0};
}

af_status af_train(const af_train_options* opt) {
  if (af_status s = requireArgs(opt && opt->samples_dir && opt->geometry_path && opt->out_dir))
    return s;
  return guarded([&] {
    TrainOptions o;
    o.samplesDir = opt->samples_dir;
    o.geometryPath = opt->geometry_path;
    o.outDir = opt->out_dir;
    o.roi = opt->roi;
    o.members = opt->members;
    o.learningRate = opt->learning_rate;
    o.seed = opt->seed;
    if (opt->width_multipliers && opt->width_multiplier_count > 0)
      o.widthMultipliers.assign(opt->width_multipliers,
                                opt->width_multipliers + opt->width_multiplier_count);
    o.batchSize = opt->batch_size;
    o.warmupEpochs = opt->warmup_epochs;
    o.maxEpochs = opt->max_epochs;
    o.verbose = opt->verbose != 0;
    runTrain(o);
  });
}

void af_segment_options_init(af_segment_options* opt) {
  if (opt) *opt = af_segment_options{nullptr, nullptr, nullptr, nullptr, nullptr, nullptr, 0};
}

af_status af_segment(const af_segment_options* opt) {
  if (af_status s = requireArgs(opt && opt->prep_manifest_path && opt->geometry_path &&
                                opt->image && opt->models_dir && opt->out_path))
    return s;
  return guarded([&] {
    SegmentOptions o;
    o.prepManifestPath = opt->prep_manifest_path;
    o.geometryPath = opt->geometry_path;
    o.imageRef = opt->image;
    o.modelsDir = opt->models_dir;
    o.outPath = opt->out_path;
    if (opt->confidence_path) o.confidencePath = opt->confidence_path;
    o.verbose = opt->verbose != 0;
    runSegment(o);
  });
}

void af_evaluate_options_init(af_evaluate_options* opt) {
  if (opt) *opt = af_evaluate_options{nullptr, nullptr, 0, nullptr, 0, nullptr, 0};
}

af_status af_evaluate(const af_evaluate_options* opt) {
  if (af_status s = requireArgs(opt && opt->pred_paths && opt->truth_paths && opt->rois &&
                                opt->pair_count > 0 && opt->roi_count > 0))
    return s;
  return guarded([&] {
    EvaluateOptions o;
    for (int i = 0; i < opt->pair_count; ++i) {
      o.predPaths.emplace_back(opt->pred_paths[i]);
      o.truthPaths.emplace_back(opt->truth_paths[i]);
    }
    o.rois.assign(opt->rois, opt->rois + opt->roi_count);
    if (opt->out_path) o.outPath = opt->out_path;
    o.verbose = opt->verbose != 0;
    runEvaluate(o);
  });
}

}  // extern "C"
