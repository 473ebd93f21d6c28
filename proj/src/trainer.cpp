#include "trainer.hpp"

#include <algorithm>
#include <cmath>

namespace slimfl::nn {

void TrainerConfig::validate_production() const {
    if (learning_rate <= 0.0) throw invalid_parameter("learning rate must be > 0");
    if (!(w1 > 0.0) || !(w2 > 0.0)) throw invalid_parameter("ST weights must be > 0");
    if (std::abs(w1 + w2 - 1.0) > 1e-9) throw invalid_parameter("ST weights must sum to 1");
    if (widths.empty()) throw invalid_parameter("width list must not be empty");
    for (int w : widths)
        if (w < 1 || w > kWidthCount) throw invalid_parameter("width index out of range");
}

void OptimizerState::reset() {
    m.clear();
    v.clear();
    step = 0;
}

void OptimizerState::apply(std::vector<double>& theta, const std::vector<double>& g,
                           const TrainerConfig& cfg) {
    if (cfg.optimizer == OptimizerKind::Sgd) {
        for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= cfg.learning_rate * g[j];
        return;
    }
    if (m.size() != theta.size()) {
        m.assign(theta.size(), 0.0);
        v.assign(theta.size(), 0.0);
        step = 0;
    }
    ++step;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, double(step));
    const double c2 = 1.0 - std::pow(b2, double(step));
    for (std::size_t j = 0; j < theta.size(); ++j) {
        m[j] = b1 * m[j] + (1.0 - b1) * g[j];
        v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
        theta[j] -= cfg.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.adam_eps);
    }
}

double sustrain_step(SlimmableModel& model, OptimizerState& opt, const Batch& batch,
                     const TrainerConfig& cfg) {
    const WidthMask full = width_mask(model, kWidthCount);
    const WidthMask half = width_mask(model, 1);

    double loss_full = 0.0;
    std::vector<double> teacher;
    std::vector<double> g_full =
        grad(model, full, batch, LossKind::Task, nullptr, &loss_full, &teacher);

    double loss_sub = 0.0;
    std::vector<double> g_sub =
        cfg.distill == DistillMode::SoftIpkd
            ? grad(model, half, batch, LossKind::Distill, &teacher, &loss_sub)
            : grad(model, half, batch, LossKind::Task, nullptr, &loss_sub);

    std::vector<double> g(model.theta.size());
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = cfg.w1 * g_sub[j] + cfg.w2 * g_full[j];
    opt.apply(model.theta, g, cfg);
    return cfg.w1 * loss_sub + cfg.w2 * loss_full;
}

double slimtrain_step(SlimmableModel& model, OptimizerState& opt, const Batch& batch,
                      const TrainerConfig& cfg) {
    std::vector<double> g(model.theta.size(), 0.0);
    double loss = 0.0;
    for (int w : cfg.widths) {
        const WidthMask mask = width_mask(model, w);
        double lw = 0.0;
        std::vector<double> gw = grad(model, mask, batch, LossKind::Task, nullptr, &lw);
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += gw[j];
        loss += lw;
    }
    opt.apply(model.theta, g, cfg);
    return loss / double(cfg.widths.size());
}

double ustrain_step(SlimmableModel& model, OptimizerState& opt, const Batch& batch,
                    const TrainerConfig& cfg) {
    if (cfg.widths.empty()) throw invalid_parameter("width list must not be empty");
    const int top = *std::max_element(cfg.widths.begin(), cfg.widths.end());
    const WidthMask top_mask = width_mask(model, top);

    double loss_top = 0.0;
    std::vector<double> teacher;
    std::vector<double> g(model.theta.size(), 0.0);
    std::vector<double> g_top =
        grad(model, top_mask, batch, LossKind::Task, nullptr, &loss_top, &teacher);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += g_top[j];

    double loss = loss_top;
    for (int w : cfg.widths) {
        if (w == top) continue;
        const WidthMask mask = width_mask(model, w);
        double lw = 0.0;
        std::vector<double> gw =
            cfg.distill == DistillMode::SoftIpkd
                ? grad(model, mask, batch, LossKind::Distill, &teacher, &lw)
                : grad(model, mask, batch, LossKind::Task, nullptr, &lw);
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += gw[j];
        loss += lw;
    }
    opt.apply(model.theta, g, cfg);
    return loss / double(cfg.widths.size());
}

double train_step(SlimmableModel& model, OptimizerState& opt, const Batch& batch,
                  const TrainerConfig& cfg) {
    switch (cfg.algorithm) {
        case TrainAlgorithm::SusTrain:
            return sustrain_step(model, opt, batch, cfg);
        case TrainAlgorithm::SlimTrain:
            return slimtrain_step(model, opt, batch, cfg);
        case TrainAlgorithm::UsTrain:
            return ustrain_step(model, opt, batch, cfg);
    }
    throw invalid_parameter("unknown training algorithm");
}

double fixed_width_step(SlimmableModel& model, OptimizerState& opt, const Batch& batch,
                        const TrainerConfig& cfg, int width_index) {
    const WidthMask mask = width_mask(model, width_index);
    double loss = 0.0;
    std::vector<double> g = grad(model, mask, batch, LossKind::Task, nullptr, &loss);
    opt.apply(model.theta, g, cfg);
    return loss;
}

}  // namespace slimfl::nn
