#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "vsgnet/data.hpp"

namespace vsg {

// Synthetic desk-scale dataset with a planted, learnable labeling rule.
//
// Object classes: `participating` action-bearing classes plus one distractor
// class that never interacts. Action k applies to object class (k mod
// participating); even actions require the human and object boxes to
// overlap, odd actions require them to be disjoint. Features carry the
// geometry-free identity signals: a human's box region is marked in channel
// 0, an object's box region in channel 2 + class. Labels are therefore
// recoverable from box geometry (spatial branch) and class channels (visual
// branch), while RoI-pooled features alone cannot resolve the overlap
// predicate.
struct FixtureSpec {
  std::uint64_t seed = 7;
  int num_images = 16;
  int humans_per_image = 2;
  int objects_per_image = 2;
  int num_actions = 6;
  int feature_channels = 16;
  int feature_height = 16;
  int feature_width = 16;
  int holdout_images = 0;  // if > 0, also writes train/eval split manifests

  int participating_classes() const { return std::max(1, (num_actions + 1) / 2); }
  int object_classes() const { return participating_classes() + 1; }
};

// Minimum pairwise overlap area when boxes do overlap; keeps the planted
// predicate away from its decision boundary.
inline constexpr double kFixtureOverlapMargin = 0.015;

inline bool fixture_action_active(int action, int object_class, const Box& human,
                                  const Box& object, int participating) {
  if (object_class != action % participating) return false;
  const bool overlap = box_intersection(human, object) > 0.0;
  return (action % 2 == 0) ? overlap : !overlap;
}

namespace detail {

inline Box sample_fixture_box(Rng& rng) {
  const double w = rng.uniform(0.18, 0.45);
  const double h = rng.uniform(0.18, 0.45);
  const double cx = rng.uniform(0.02 + w / 2, 0.98 - w / 2);
  const double cy = rng.uniform(0.02 + h / 2, 0.98 - h / 2);
  return Box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

// Stamp `v` into `channel` over the cells whose centers fall in the box.
template <typename Real>
void stamp_box(Tensor<Real>& feature, int channel, const Box& b, Real v) {
  const int h = feature.dim(1), w = feature.dim(2);
  Real* base = feature.data() + static_cast<std::size_t>(channel) * h * w;
  for (int r = 0; r < h; ++r) {
    const double cy = (r + 0.5) / h;
    if (cy < b.y1 || cy >= b.y2) continue;
    for (int c = 0; c < w; ++c) {
      const double cx = (c + 0.5) / w;
      if (cx >= b.x1 && cx < b.x2) base[static_cast<std::size_t>(r) * w + c] += v;
    }
  }
}

}  // namespace detail

struct FixturePaths {
  std::string manifest;
  std::string train_manifest;  // empty unless holdout_images > 0
  std::string eval_manifest;
};

inline FixturePaths generate_fixture(const FixtureSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (spec.num_images < 1 || spec.humans_per_image < 1 || spec.objects_per_image < 0 ||
      spec.num_actions < 1)
    throw UsageError("fixture: counts must be >= 1 (objects may be 0)");
  if (spec.feature_channels < 2 + spec.object_classes())
    throw UsageError("fixture: feature_channels must be >= " +
                     std::to_string(2 + spec.object_classes()) +
                     " to hold the class channels");
  if (spec.holdout_images >= spec.num_images)
    throw UsageError("fixture: holdout_images must be < num_images");

  fs::create_directories(fs::path(out_dir) / "features");
  Rng rng(spec.seed);
  const int participating = spec.participating_classes();
  const int classes = spec.object_classes();

  Json images = Json::array();
  std::vector<GroundTruthTriplet> annotations;

  for (int img = 0; img < spec.num_images; ++img) {
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "img_%04d", img);
    const std::string image_id = idbuf;

    // Box layout: resample until every human/object pair is either disjoint
    // or overlaps by at least the margin, so the planted predicate has no
    // boundary cases.
    std::vector<Box> human_boxes(spec.humans_per_image);
    std::vector<Box> object_boxes(spec.objects_per_image);
    for (int attempt = 0; attempt < 200; ++attempt) {
      for (auto& b : human_boxes) b = detail::sample_fixture_box(rng);
      for (auto& b : object_boxes) b = detail::sample_fixture_box(rng);
      bool ok = true;
      for (const auto& hb : human_boxes)
        for (const auto& ob : object_boxes) {
          const double inter = box_intersection(hb, ob);
          if (inter > 0.0 && inter < kFixtureOverlapMargin) ok = false;
        }
      if (ok) break;
    }

    std::vector<int> object_class(spec.objects_per_image);
    for (auto& c : object_class) c = static_cast<int>(rng.next_below(classes));

    // Feature map: low noise plus identity stamps.
    Tensor<float> feature(
        Shape{spec.feature_channels, spec.feature_height, spec.feature_width});
    for (auto& v : feature.values()) v = static_cast<float>(rng.normal() * 0.05);
    for (const auto& hb : human_boxes) detail::stamp_box(feature, 0, hb, 1.0f);
    for (int o = 0; o < spec.objects_per_image; ++o)
      detail::stamp_box(feature, 2 + object_class[o], object_boxes[o], 1.0f);

    const std::string feature_rel = "features/" + image_id + ".vsgt";
    write_tensor_file((fs::path(out_dir) / feature_rel).string(), feature);

    Json dets = Json::array();
    for (const auto& hb : human_boxes)
      dets.push_back(Json{{"box", detail::box_to_json(hb)},
                          {"class_id", 0},
                          {"score", rng.uniform(0.85, 0.95)},
                          {"is_human", true}});
    for (int o = 0; o < spec.objects_per_image; ++o)
      dets.push_back(Json{{"box", detail::box_to_json(object_boxes[o])},
                          {"class_id", object_class[o]},
                          {"score", rng.uniform(0.75, 0.85)},
                          {"is_human", false}});
    images.push_back(
        Json{{"id", image_id}, {"feature", feature_rel}, {"detections", dets}});

    for (const auto& hb : human_boxes)
      for (int o = 0; o < spec.objects_per_image; ++o)
        for (int a = 0; a < spec.num_actions; ++a)
          if (fixture_action_active(a, object_class[o], hb, object_boxes[o],
                                    participating))
            annotations.push_back(
                GroundTruthTriplet{image_id, hb, object_boxes[o], a});
  }

  save_annotations((fs::path(out_dir) / "annotations.jsonl").string(), annotations);

  CompatibilityTable compat;
  compat.num_actions = spec.num_actions;
  compat.num_object_classes = classes;
  compat.allowed.assign(static_cast<std::size_t>(spec.num_actions) * classes, 0);
  for (int a = 0; a < spec.num_actions; ++a)
    compat.allowed[static_cast<std::size_t>(a) * classes + (a % participating)] = 1;
  save_compatibility((fs::path(out_dir) / "compatibility.json").string(), compat);

  auto write_manifest = [&](const std::string& name, int first, int count) {
    Json sub = Json::array();
    for (int i = first; i < first + count; ++i) sub.push_back(images[static_cast<std::size_t>(i)]);
    Json j{{"version", 1},
           {"num_actions", spec.num_actions},
           {"object_classes", classes},
           {"annotations_path", "annotations.jsonl"},
           {"compatibility_path", "compatibility.json"},
           {"images", sub}};
    const std::string path = (fs::path(out_dir) / name).string();
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
    return path;
  };

  FixturePaths paths;
  paths.manifest = write_manifest("manifest.json", 0, spec.num_images);
  if (spec.holdout_images > 0) {
    paths.train_manifest = write_manifest("train_manifest.json", 0,
                                          spec.num_images - spec.holdout_images);
    paths.eval_manifest = write_manifest(
        "eval_manifest.json", spec.num_images - spec.holdout_images,
        spec.holdout_images);
  }
  return paths;
}

}  // namespace vsg
