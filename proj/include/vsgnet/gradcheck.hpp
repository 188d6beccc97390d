#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vsgnet/head.hpp"
#include "vsgnet/train.hpp"

namespace vsg {

// |a - n| relative to max(1, |a|, |n|); the unit floor keeps finite-difference
// noise on near-zero gradients from dominating the ratio.
inline double grad_rel_err(double analytic, double numeric) {
  const double denom =
      std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

// Central finite differences of a scalar-valued forward against the tape
// gradients, at double precision. loss_fn must be a pure function of the
// leaf tensors; perturbed evaluations run without an active tape.
inline double fd_check(const std::function<Tensor<double>()>& loss_fn,
                       std::vector<Tensor<double>> leaves, double step = 1e-5) {
  for (auto& l : leaves) l.zero_grad();
  {
    Tape<double> tape;
    auto loss = loss_fn();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (auto& l : leaves) analytic.push_back(l.grad_values());

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& t = leaves[li];
    const std::size_t n = t.numel();
    for (std::size_t i = 0; i < n; ++i) {
      const double v0 = t[i];
      t[i] = v0 + step;
      const double fp = loss_fn().item();
      t[i] = v0 - step;
      const double fm = loss_fn().item();
      t[i] = v0;
      const double numeric = (fp - fm) / (2.0 * step);
      worst = std::max(worst, grad_rel_err(analytic[li][i], numeric));
    }
  }
  return worst;
}

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
};

namespace detail {

inline Tensor<double> rand_tensor(const Shape& s, Rng& rng, double lo = -1.0,
                                  double hi = 1.0, bool requires_grad = true) {
  Tensor<double> t(s);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  if (requires_grad) t.set_requires_grad(true);
  return t;
}

// Random values kept away from the ReLU kink so finite differences stay on
// one side of it.
inline Tensor<double> rand_tensor_kink_safe(const Shape& s, Rng& rng) {
  Tensor<double> t(s);
  for (auto& v : t.values()) {
    double x = rng.uniform(-1.0, 1.0);
    while (std::abs(x) < 1e-3) x = rng.uniform(-1.0, 1.0);
    v = x;
  }
  t.set_requires_grad(true);
  return t;
}

// Distinct, well-separated values in random order, for max-pooling checks.
inline Tensor<double> rand_tensor_distinct(const Shape& s, Rng& rng) {
  const std::size_t n = shape_numel(s);
  std::vector<double> vals(n);
  for (std::size_t i = 0; i < n; ++i)
    vals[i] = 0.01 * static_cast<double>(i) + rng.uniform(0.0, 0.002);
  rng.shuffle(vals);
  Tensor<double> t = Tensor<double>::from_data(s, std::move(vals));
  t.set_requires_grad(true);
  return t;
}

// In-memory two-human/two-object record with box overlaps well away from
// any rasterization or pooling boundary.
inline ImageRecord<double> gradcheck_record(const ModelConfig& cfg, Rng& rng) {
  ImageRecord<double> rec;
  rec.id = "gradcheck";
  rec.feature = rand_tensor(Shape{cfg.feature_channels, 12, 12}, rng, -0.5, 0.5,
                            /*requires_grad=*/false);
  rec.humans = {DetectionBox{Box{0.10, 0.10, 0.50, 0.60}, 0, 0.90, true},
                DetectionBox{Box{0.45, 0.30, 0.90, 0.80}, 0, 0.95, true}};
  rec.objects = {DetectionBox{Box{0.20, 0.40, 0.60, 0.90}, 0, 0.80, false},
                 DetectionBox{Box{0.55, 0.05, 0.95, 0.50}, 1, 0.70, false}};
  return rec;
}

inline ModelConfig gradcheck_config() {
  ModelConfig cfg;
  cfg.feature_channels = 4;
  cfg.pair_dim = 6;
  cfg.num_actions = 3;
  cfg.roi_size = 10;
  cfg.spatial_map_size = 32;
  cfg.spatial_channels1 = 3;
  cfg.spatial_channels2 = 3;
  return cfg;
}

}  // namespace detail

// Finite-difference checks for every layer primitive.
inline std::vector<GradCheckEntry> gradcheck_primitives(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCheckEntry> out;
  auto run = [&out](const std::string& name,
                    const std::function<Tensor<double>()>& fn,
                    std::vector<Tensor<double>> leaves) {
    out.push_back(GradCheckEntry{name, fd_check(fn, std::move(leaves))});
  };

  {
    auto x = detail::rand_tensor(Shape{2, 5, 5}, rng);
    auto w = detail::rand_tensor(Shape{3, 2, 3, 3}, rng);
    auto b = detail::rand_tensor(Shape{3}, rng);
    run("conv2d_s1p1", [=]() { return sum(conv2d(x, w, b, 1, 1)); }, {x, w, b});
  }
  {
    auto x = detail::rand_tensor(Shape{2, 7, 7}, rng);
    auto w = detail::rand_tensor(Shape{2, 2, 3, 3}, rng);
    auto b = detail::rand_tensor(Shape{2}, rng);
    run("conv2d_s2p0", [=]() { return sum(conv2d(x, w, b, 2, 0)); }, {x, w, b});
  }
  {
    auto x = detail::rand_tensor(Shape{4}, rng);
    auto w = detail::rand_tensor(Shape{3, 4}, rng);
    auto b = detail::rand_tensor(Shape{3}, rng);
    run("fully_connected", [=]() { return sum(fully_connected(x, w, b)); }, {x, w, b});
  }
  {
    ResidualBlockParams<double> block;
    block.conv1 = detail::make_conv<double>(2, 2, 3, 1, 1);
    block.conv2 = detail::make_conv<double>(2, 2, 3, 1, 1);
    for (Tensor<double>* t : {&block.conv1.weight, &block.conv1.bias,
                              &block.conv2.weight, &block.conv2.bias}) {
      for (auto& v : t->values()) v = rng.uniform(-0.7, 0.7);
      t->set_requires_grad(true);
    }
    auto x = detail::rand_tensor_kink_safe(Shape{2, 4, 4}, rng);
    run("residual_block", [=]() { return sum(residual_block(x, block)); },
        {x, block.conv1.weight, block.conv1.bias, block.conv2.weight,
         block.conv2.bias});
  }
  {
    auto x = detail::rand_tensor(Shape{3, 4, 5}, rng);
    run("global_average_pool", [=]() { return sum(global_average_pool(x)); }, {x});
  }
  {
    auto x = detail::rand_tensor_distinct(Shape{2, 8, 8}, rng);
    const Box box{0.1, 0.2, 0.7, 0.9};
    run("roi_pool", [=]() { return sum(roi_pool(x, box, 3, 3)); }, {x});
  }
  {
    auto x = detail::rand_tensor_kink_safe(Shape{6}, rng);
    run("relu", [=]() { return sum(relu(x)); }, {x});
  }
  {
    auto x = detail::rand_tensor(Shape{6}, rng);
    run("sigmoid", [=]() { return sum(sigmoid(x)); }, {x});
  }
  {
    auto a = detail::rand_tensor(Shape{5}, rng);
    auto b = detail::rand_tensor(Shape{5}, rng);
    run("elementwise_mul", [=]() { return sum(mul(a, b)); }, {a, b});
  }
  {
    auto a = detail::rand_tensor(Shape{5}, rng);
    auto s = detail::rand_tensor(Shape{1}, rng);
    run("mul_scalar", [=]() { return sum(mul_scalar(a, s)); }, {a, s});
  }
  {
    auto a = detail::rand_tensor(Shape{3}, rng);
    auto b = detail::rand_tensor(Shape{4}, rng);
    auto c = detail::rand_tensor(Shape{2}, rng);
    run("concat", [=]() { return sum(concat<double>({a, b, c})); }, {a, b, c});
  }
  {
    auto a = detail::rand_tensor(Shape{4}, rng);
    auto b = detail::rand_tensor(Shape{4}, rng);
    run("add", [=]() { return sum(add(a, b)); }, {a, b});
  }
  {
    auto p = detail::rand_tensor(Shape{6}, rng, 0.05, 0.95);
    std::vector<double> y;
    for (int i = 0; i < 6; ++i) y.push_back(rng.uniform() < 0.5 ? 0.0 : 1.0);
    run("bce_mean", [=]() { return bce_mean(p, y); }, {p});
  }
  return out;
}

// End-to-end check: loss over every candidate pair of a synthetic record,
// gradients of every parameter active in the given branch configuration.
inline GradCheckEntry gradcheck_model(std::uint64_t seed, Ablation ablation) {
  Rng rng(seed);
  ModelConfig model = detail::gradcheck_config();
  HeadConfig head;
  head.ablation = ablation;
  ModelParams<double> params = make_params<double>(model);
  init_params(params, seed ^ 0xABCDULL);
  const auto rec = detail::gradcheck_record(model, rng);

  std::vector<std::vector<double>> labels;
  for (int i = 0; i < 4; ++i) {
    std::vector<double> y;
    for (int a = 0; a < model.num_actions; ++a)
      y.push_back(rng.uniform() < 0.5 ? 0.0 : 1.0);
    labels.push_back(std::move(y));
  }

  auto loss_fn = [&]() {
    auto fwd = forward_image(rec, params, model, head);
    std::vector<Tensor<double>> losses;
    for (std::size_t i = 0; i < fwd.pairs.size(); ++i)
      losses.push_back(bce_mean(fwd.pairs[i].fused, labels[i]));
    return scale(add_n(losses), 1.0 / static_cast<double>(losses.size()));
  };

  std::vector<Tensor<double>> leaves;
  for (auto& [name, t] : named_params(params))
    if (param_active(name, ablation)) leaves.push_back(t);
  return GradCheckEntry{"model_" + to_string(ablation),
                        fd_check(loss_fn, std::move(leaves))};
}

// Isolates the gradient path that runs through the adjacency values: the
// loss depends only on the graph predictions, so any gradient reaching the
// spatial branch must have flowed through alpha = i.
inline GradCheckEntry gradcheck_adjacency_path(std::uint64_t seed) {
  Rng rng(seed);
  ModelConfig model = detail::gradcheck_config();
  HeadConfig head;
  head.ablation = Ablation::kFull;
  ModelParams<double> params = make_params<double>(model);
  init_params(params, seed ^ 0xBEEFULL);
  const auto rec = detail::gradcheck_record(model, rng);

  auto loss_fn = [&]() {
    auto fwd = forward_image(rec, params, model, head);
    std::vector<Tensor<double>> parts;
    for (const auto& pair : fwd.pairs) parts.push_back(sum(pair.p_graph));
    return scale(add_n(parts), 1.0 / static_cast<double>(parts.size()));
  };

  std::vector<Tensor<double>> leaves;
  for (auto& [name, t] : named_params(params))
    if (name.rfind("spatial.", 0) == 0) leaves.push_back(t);
  return GradCheckEntry{"graph_adjacency_path", fd_check(loss_fn, std::move(leaves))};
}

inline GradCheckReport run_gradcheck(std::uint64_t seed) {
  GradCheckReport report;
  report.entries = gradcheck_primitives(seed);
  for (const Ablation ab : {Ablation::kVisual, Ablation::kVisualGraph,
                            Ablation::kVisualSpatial, Ablation::kFull})
    report.entries.push_back(gradcheck_model(seed, ab));
  report.entries.push_back(gradcheck_adjacency_path(seed));
  for (const auto& e : report.entries)
    report.max_rel_err = std::max(report.max_rel_err, e.max_rel_err);
  return report;
}

}  // namespace vsg
