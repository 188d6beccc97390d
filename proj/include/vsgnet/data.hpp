#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "vsgnet/common.hpp"
#include "vsgnet/serialize.hpp"
#include "vsgnet/tensor.hpp"

namespace vsg {

struct DetectionBox {
  Box box;
  int class_id = 0;
  double score = 0.0;
  bool is_human = false;
};

inline void validate(const DetectionBox& d, const std::string& where) {
  if (!d.box.well_formed())
    throw DataError(where + ": box is not well-formed (x1<x2, y1<y2 required)");
  if (d.box.x1 < 0.0 || d.box.y1 < 0.0 || d.box.x2 > 1.0 || d.box.y2 > 1.0)
    throw DataError(where + ": box coordinates must lie in [0,1]");
  if (d.score < 0.0 || d.score > 1.0)
    throw DataError(where + ": score must lie in [0,1]");
  if (!d.is_human && d.class_id < 0)
    throw DataError(where + ": object class_id must be >= 0");
}

struct GroundTruthTriplet {
  std::string image_id;
  Box human;
  std::optional<Box> object;  // empty for human-only actions
  int action_id = 0;
};

struct CompatibilityTable {
  int num_actions = 0;
  int num_object_classes = 0;
  std::vector<std::uint8_t> allowed;  // num_actions x num_object_classes
  std::vector<int> human_only;

  bool allows(int action, int object_class) const {
    if (action < 0 || action >= num_actions || object_class < 0 ||
        object_class >= num_object_classes)
      return false;
    return allowed[static_cast<std::size_t>(action) * num_object_classes +
                   object_class] != 0;
  }

  bool is_human_only(int action) const {
    for (const int a : human_only)
      if (a == action) return true;
    return false;
  }

  // With an empty table every action/object combination passes.
  bool empty() const { return allowed.empty(); }
};

template <typename Real>
struct ImageRecord {
  std::string id;
  Tensor<Real> feature;  // C x H_f x W_f
  std::vector<DetectionBox> humans;
  std::vector<DetectionBox> objects;
};

template <typename Real>
struct Dataset {
  int num_actions = 0;
  int num_object_classes = 0;
  std::vector<ImageRecord<Real>> images;
  std::vector<GroundTruthTriplet> annotations;
  CompatibilityTable compat;

  // Ground truth grouped per image, built once at load.
  std::unordered_map<std::string, std::vector<std::size_t>> annotation_index;

  std::vector<const GroundTruthTriplet*> annotations_for(const std::string& image_id) const {
    std::vector<const GroundTruthTriplet*> out;
    auto it = annotation_index.find(image_id);
    if (it == annotation_index.end()) return out;
    for (const std::size_t i : it->second) out.push_back(&annotations[i]);
    return out;
  }
};

namespace detail {

inline Box box_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4)
    throw DataError(where + ": box must be an array of 4 numbers");
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
             j[3].get<double>()};
}

inline Json box_to_json(const Box& b) {
  return Json::array({b.x1, b.y1, b.x2, b.y2});
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  try {
    Json j;
    in >> j;
    return j;
  } catch (const Json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace detail

inline CompatibilityTable load_compatibility(const std::string& path) {
  const Json j = detail::read_json_file(path);
  CompatibilityTable t;
  t.num_actions = j.at("num_actions").get<int>();
  t.num_object_classes = j.at("num_object_classes").get<int>();
  if (t.num_actions < 1 || t.num_object_classes < 1)
    throw DataError(path + ": compatibility table dimensions must be positive");
  const auto& m = j.at("matrix");
  if (static_cast<int>(m.size()) != t.num_actions)
    throw DataError(path + ": matrix must have one row per action");
  t.allowed.reserve(static_cast<std::size_t>(t.num_actions) * t.num_object_classes);
  for (const auto& row : m) {
    if (static_cast<int>(row.size()) != t.num_object_classes)
      throw DataError(path + ": matrix row width must equal num_object_classes");
    for (const auto& v : row) t.allowed.push_back(v.get<int>() != 0 ? 1 : 0);
  }
  if (j.contains("human_only"))
    for (const auto& a : j.at("human_only")) t.human_only.push_back(a.get<int>());
  for (int a = 0; a < t.num_actions; ++a) {
    bool any = false;
    for (int c = 0; c < t.num_object_classes; ++c) any = any || t.allows(a, c);
    if (!any && !t.is_human_only(a))
      throw DataError(path + ": action " + std::to_string(a) +
                      " has no compatible object class and is not flagged human-only");
  }
  return t;
}

inline void save_compatibility(const std::string& path, const CompatibilityTable& t) {
  Json m = Json::array();
  for (int a = 0; a < t.num_actions; ++a) {
    Json row = Json::array();
    for (int c = 0; c < t.num_object_classes; ++c) row.push_back(t.allows(a, c) ? 1 : 0);
    m.push_back(row);
  }
  Json j{{"num_actions", t.num_actions},
         {"num_object_classes", t.num_object_classes},
         {"matrix", m},
         {"human_only", t.human_only}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

inline std::vector<GroundTruthTriplet> load_annotations(const std::string& path,
                                                        int num_actions) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open annotations file: " + path);
  std::vector<GroundTruthTriplet> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    GroundTruthTriplet g;
    g.image_id = j.at("image_id").get<std::string>();
    g.human = detail::box_from_json(j.at("human_box"), where);
    if (!g.human.well_formed()) throw DataError(where + ": human box not well-formed");
    if (j.contains("object_box") && !j.at("object_box").is_null()) {
      g.object = detail::box_from_json(j.at("object_box"), where);
      if (!g.object->well_formed())
        throw DataError(where + ": object box not well-formed");
    }
    g.action_id = j.at("action_id").get<int>();
    if (g.action_id < 0 || g.action_id >= num_actions)
      throw DataError(where + ": action_id " + std::to_string(g.action_id) +
                      " outside [0, " + std::to_string(num_actions) + ")");
    out.push_back(std::move(g));
  }
  return out;
}

inline void save_annotations(const std::string& path,
                             const std::vector<GroundTruthTriplet>& anns) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  for (const auto& g : anns) {
    Json j{{"image_id", g.image_id},
           {"human_box", detail::box_to_json(g.human)},
           {"object_box", g.object ? detail::box_to_json(*g.object) : Json(nullptr)},
           {"action_id", g.action_id}};
    out << j.dump() << "\n";
  }
}

// Loads a manifest plus everything it references. Feature tensors are read
// eagerly unless load_features is false (metrics-only use); annotations are
// filtered to the images the manifest lists.
template <typename Real>
Dataset<Real> load_dataset(const std::string& manifest_path,
                           bool load_features = true) {
  namespace fs = std::filesystem;
  const Json j = detail::read_json_file(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  auto resolve = [&base](const std::string& p) {
    return (fs::path(p).is_absolute() ? fs::path(p) : base / p).string();
  };

  Dataset<Real> ds;
  ds.num_actions = j.at("num_actions").get<int>();
  ds.num_object_classes = j.at("object_classes").get<int>();
  if (ds.num_actions < 1) throw DataError(manifest_path + ": num_actions must be >= 1");

  std::unordered_set<std::string> ids;
  int idx = 0;
  for (const auto& im : j.at("images")) {
    const std::string where = manifest_path + ": images[" + std::to_string(idx) + "]";
    ImageRecord<Real> rec;
    rec.id = im.at("id").get<std::string>();
    if (!ids.insert(rec.id).second)
      throw DataError(where + ": duplicate image id '" + rec.id + "'");
    if (load_features) {
      rec.feature = read_tensor_file<Real>(resolve(im.at("feature").get<std::string>()));
      if (rec.feature.rank() != 3)
        throw DataError(where + ": feature map must be rank 3, got " +
                        shape_str(rec.feature.shape()));
    }
    int det = 0;
    for (const auto& dj : im.at("detections")) {
      DetectionBox d;
      d.box = detail::box_from_json(dj.at("box"), where);
      d.class_id = dj.at("class_id").get<int>();
      d.score = dj.at("score").get<double>();
      d.is_human = dj.at("is_human").get<bool>();
      validate(d, where + ": detection " + std::to_string(det));
      if (d.is_human)
        rec.humans.push_back(d);
      else
        rec.objects.push_back(d);
      ++det;
    }
    ds.images.push_back(std::move(rec));
    ++idx;
  }

  if (j.contains("annotations_path")) {
    auto all = load_annotations(resolve(j.at("annotations_path").get<std::string>()),
                                ds.num_actions);
    for (auto& g : all)
      if (ids.count(g.image_id)) ds.annotations.push_back(std::move(g));
  }
  if (j.contains("compatibility_path"))
    ds.compat = load_compatibility(resolve(j.at("compatibility_path").get<std::string>()));

  for (std::size_t i = 0; i < ds.annotations.size(); ++i)
    ds.annotation_index[ds.annotations[i].image_id].push_back(i);
  return ds;
}

}  // namespace vsg
