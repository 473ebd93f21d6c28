#pragma once

#include <vector>

#include "nn_model.hpp"

// The three local update rules. All of them hold every forward-propagation
// loss first and apply one optimizer step with the combined gradient, so a
// width never trains against parameters another width already moved.
namespace slimfl::nn {

enum class TrainAlgorithm { SusTrain, SlimTrain, UsTrain };
enum class OptimizerKind { Sgd, Adam };
enum class DistillMode { SoftIpkd, HardTarget };

struct TrainerConfig {
    TrainAlgorithm algorithm = TrainAlgorithm::SusTrain;
    OptimizerKind optimizer = OptimizerKind::Adam;
    DistillMode distill = DistillMode::SoftIpkd;
    double learning_rate = 1e-3;
    double w1 = 0.5;
    double w2 = 0.5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    // Width list for the alternating trainers; a single entry degrades them to
    // plain single-width training. Test hooks may set weights outside the
    // production constraints.
    std::vector<int> widths = {1, 2};

    void validate_production() const;
};

struct OptimizerState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;

    void reset();
    void apply(std::vector<double>& theta, const std::vector<double>& g, const TrainerConfig& cfg);
};

// Superposed update: one step with w1 * grad(sub-width) + w2 * grad(full),
// where the sub-width loss distills against the detached full-width logits of
// the current parameters (or trains on hard targets in HardTarget mode).
// Returns w1*loss1 + w2*loss2.
double sustrain_step(SlimmableModel& model, OptimizerState& opt, const Batch& batch,
                     const TrainerConfig& cfg);

// Task-loss gradients accumulated over the width list, unit weights, one step.
double slimtrain_step(SlimmableModel& model, OptimizerState& opt, const Batch& batch,
                      const TrainerConfig& cfg);

// Task loss at the largest width plus distillation for the remaining widths
// against its detached logits, unit weights, one step.
double ustrain_step(SlimmableModel& model, OptimizerState& opt, const Batch& batch,
                    const TrainerConfig& cfg);

double train_step(SlimmableModel& model, OptimizerState& opt, const Batch& batch,
                  const TrainerConfig& cfg);

// Single-width task-loss step (the vanilla baselines).
double fixed_width_step(SlimmableModel& model, OptimizerState& opt, const Batch& batch,
                        const TrainerConfig& cfg, int width_index);

}  // namespace slimfl::nn
