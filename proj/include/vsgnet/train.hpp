#pragma once

#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "vsgnet/config.hpp"
#include "vsgnet/head.hpp"

namespace vsg {

// Multi-hot action labels for a candidate pair: every ground-truth triplet
// whose human and object boxes both overlap the candidate at IoU >= 0.5
// contributes its action.
template <typename Real>
std::vector<Real> pair_label(const Box& human, const Box& object,
                             const std::vector<const GroundTruthTriplet*>& gts,
                             int num_actions, double iou_thresh = 0.5) {
  std::vector<Real> label(static_cast<std::size_t>(num_actions), Real(0));
  for (const auto* gt : gts) {
    if (!gt->object) continue;  // human-only actions stay out of the pair head
    if (box_iou(human, gt->human) >= iou_thresh &&
        box_iou(object, *gt->object) >= iou_thresh)
      label[static_cast<std::size_t>(gt->action_id)] = Real(1);
  }
  return label;
}

// Mean over classes of the per-class binary cross-entropy on the fused
// prediction vector.
template <typename Real>
Tensor<Real> pair_loss(const Tensor<Real>& fused, const std::vector<Real>& label) {
  return bce_mean(fused, label);
}

inline bool lr_filter_matches(const std::string& filter, const std::string& name) {
  if (filter.empty()) return true;
  if (filter[0] == '!') return name.rfind(filter.substr(1), 0) != 0;
  return name.rfind(filter, 0) == 0;
}

// SGD with momentum and L2-in-gradient weight decay:
//   v <- momentum * v + g + weight_decay * theta
//   theta <- theta - lr * v
// Velocity persists across steps; the learning rate may vary per epoch and
// per parameter group through the configured schedule.
template <typename Real>
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<std::pair<std::string, Tensor<Real>>> params,
               TrainConfig cfg)
      : params_(std::move(params)), cfg_(std::move(cfg)) {
    velocity_.reserve(params_.size());
    for (auto& [name, t] : params_)
      velocity_.emplace_back(t.numel(), Real(0));
  }

  double lr_for(int epoch, const std::string& name) const {
    double lr = cfg_.lr;
    for (const auto& rule : cfg_.lr_schedule)
      if (epoch >= rule.from_epoch && epoch < rule.to_epoch &&
          lr_filter_matches(rule.params, name))
        lr = rule.lr;
    return lr;
  }

  void step(int epoch) {
    for (std::size_t p = 0; p < params_.size(); ++p) {
      auto& [name, t] = params_[p];
      if (!t.requires_grad()) continue;
      if (t.grad_values().size() != t.numel())
        throw DataError("sgd_step: gradient buffer missing for " + name);
      const Real lr = static_cast<Real>(lr_for(epoch, name));
      const Real momentum = static_cast<Real>(cfg_.momentum);
      const Real wd = static_cast<Real>(cfg_.weight_decay);
      Real* theta = t.data();
      const Real* grad = t.grad();
      Real* vel = velocity_[p].data();
      const std::size_t n = t.numel();
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(static_cast<double>(grad[i])))
          throw NumericError("sgd_step: non-finite gradient in " + name);
        vel[i] = momentum * vel[i] + grad[i] + wd * theta[i];
        theta[i] -= lr * vel[i];
      }
    }
  }

  void zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor<Real>>> params_;
  std::vector<std::vector<Real>> velocity_;
  TrainConfig cfg_;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean pair loss per epoch
  int epochs_run = 0;
};

// Epoch-wise SGD over batches of images; the loss for a batch is the mean
// pair loss over every candidate pair in it. The optional callback runs
// after each epoch and may return false to stop early (used for
// train-until-target runs); checkpointing is the caller's business.
template <typename Real>
TrainResult train_loop(const Dataset<Real>& ds, ModelParams<Real>& params,
                       const EngineConfig& cfg,
                       const std::function<bool(int, double)>& on_epoch = {}) {
  if (ds.images.empty()) throw DataError("train_loop: dataset has no images");
  if (ds.num_actions != cfg.model.num_actions)
    throw DataError("train_loop: dataset has " + std::to_string(ds.num_actions) +
                    " actions but the model is configured for " +
                    std::to_string(cfg.model.num_actions));
  validate(cfg);

  SgdOptimizer<Real> opt(named_params(params), cfg.train);
  Rng shuffle_rng(cfg.train.seed ^ 0x7A17E5ULL);
  TrainResult result;

  std::vector<std::size_t> order(ds.images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t pair_count = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.train.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.train.batch_size));
      Tape<Real> tape;
      std::vector<Tensor<Real>> losses;
      for (std::size_t b = start; b < end; ++b) {
        const auto& rec = ds.images[order[b]];
        const auto gts = ds.annotations_for(rec.id);
        auto fwd = forward_image(rec, params, cfg.model, cfg.head);
        for (const auto& pair : fwd.pairs) {
          const auto label = pair_label<Real>(
              rec.humans[static_cast<std::size_t>(pair.human_index)].box,
              rec.objects[static_cast<std::size_t>(pair.object_index)].box, gts,
              ds.num_actions);
          losses.push_back(pair_loss(pair.fused, label));
        }
      }
      if (losses.empty()) continue;
      auto batch_loss =
          scale(add_n(losses), Real(1) / static_cast<Real>(losses.size()));
      const double value = static_cast<double>(batch_loss.item());
      if (!std::isfinite(value))
        throw NumericError("train_loop: loss diverged at epoch " +
                           std::to_string(epoch));
      tape.backward(batch_loss);
      opt.step(epoch);
      opt.zero_grad();
      loss_sum += value * static_cast<double>(losses.size());
      pair_count += losses.size();
    }
    const double mean_loss = pair_count > 0 ? loss_sum / static_cast<double>(pair_count) : 0.0;
    result.epoch_loss.push_back(mean_loss);
    result.epochs_run = epoch + 1;
    if (on_epoch && !on_epoch(epoch, mean_loss)) break;
  }
  return result;
}

}  // namespace vsg
