#include "tbscreen/pipeline.hpp"

#include <map>

#include "tbscreen/error.hpp"
#include "tbscreen/image_io.hpp"
#include "tbscreen/parallel.hpp"

namespace tbscreen {

Tensor prepare_patch(const Tensor& patch, std::size_t factor) {
  Tensor out = factor == 1 ? patch : downsample(constant(patch), factor).value();
  double mean = 0.0;
  for (double v : out.data()) mean += v;
  mean /= static_cast<double>(out.size());
  for (auto& v : out.data()) v = (v - mean) / kPatchContrastScale;
  return out;
}

std::vector<PatchSample> load_patch_samples(std::span<const PatchManifestEntry> entries,
                                            std::size_t patch_side, std::size_t factor) {
  std::vector<PatchSample> out(entries.size());
  std::map<std::filesystem::path, std::vector<std::size_t>> by_image;
  std::vector<std::filesystem::path> order;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto [it, fresh] = by_image.try_emplace(entries[i].image);
    if (fresh) order.push_back(entries[i].image);
    it->second.push_back(i);
  }
  for (const auto& path : order) {
    const Tensor image = load_image(path);
    const std::size_t h = image.dim(1), w = image.dim(2);
    for (std::size_t i : by_image[path]) {
      const auto& e = entries[i];
      if (e.anchor.x + patch_side > w || e.anchor.y + patch_side > h)
        throw GeometryError("patch at (" + std::to_string(e.anchor.x) + "," +
                            std::to_string(e.anchor.y) + ") exceeds '" + path.string() + "'");
      PatchGrid single{w, h, patch_side, 0, {e.anchor}};
      out[i] = {prepare_patch(extract_patch(image, single, 0), factor), e.label};
    }
  }
  return out;
}

std::vector<double> score_image(const PatchModel& model, const Tensor& image, const PatchGrid& grid,
                                std::size_t factor) {
  std::vector<double> scores(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    scores[i] = model.score(prepare_patch(extract_patch(image, grid, i), factor));
  });
  return scores;
}

namespace {
PatchGrid head_grid(const LogisticBundle& head, const Tensor& image) {
  if (image.rank() != 3 || image.dim(1) != head.image_h || image.dim(2) != head.image_w)
    throw GeometryError("image " + shape_string(image.shape()) + " does not match the " +
                        std::to_string(head.image_w) + "x" + std::to_string(head.image_h) +
                        " geometry the pipeline was trained on");
  return plan_grid(head.image_w, head.image_h, head.patch_side, head.overlap);
}
}  // namespace

HistogramFeature image_feature(const PatchModel& model, const LogisticBundle& head,
                               const Tensor& image) {
  const auto grid = head_grid(head, image);
  return build_histogram(score_image(model, image, grid, head.downsample), head.bins);
}

ImageReport predict_image(const PatchModel& model, const LogisticBundle& head, const Tensor& image) {
  ImageReport r;
  r.grid = head_grid(head, image);
  r.patch_scores = score_image(model, image, r.grid, head.downsample);
  r.histogram = build_histogram(r.patch_scores, head.bins);
  r.probability = logistic_predict(head.model, r.histogram);
  r.label = r.probability >= kDecisionThreshold ? Label::positive : Label::negative;
  return r;
}

}  // namespace tbscreen
