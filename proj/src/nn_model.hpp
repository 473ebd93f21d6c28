#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "errors.hpp"

// Width-maskable networks over a flat 64-bit parameter vector. The production
// plan is UL-MobileNet (two depthwise-separable stages on 28x28x1 inputs,
// global average pooling, one linear head); the machinery is generic over
// plans so tests can run on small hand-checkable instances.
namespace slimfl::nn {

enum class LayerKind { Conv, DepthwiseConv, PointwiseConv, GlobalAvgPool, Linear };
enum class Activation { ReLU6, None };

struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 0;
    Activation activation = Activation::None;
    bool has_bias = false;
};

using LayerPlan = std::vector<LayerSpec>;

// The Table-style plan: conv(1->32,3x3), dw(32,3x3), pw(32->32), dw(32,3x3),
// pw(32->64), gap, linear(64->10, bias). 4,586 parameters at full width.
LayerPlan ul_mobilenet_plan();

void validate_plan(const LayerPlan& plan);
std::size_t layer_param_count(const LayerSpec& spec);
std::size_t plan_param_count(const LayerPlan& plan);

constexpr int kWidthCount = 2;

// Width 1 keeps the first ceil(C/2) channels of every hidden layer, width 2
// keeps everything. Network inputs and the classifier outputs are never
// masked.
double width_ratio(int width_index);
int active_channels(int channels, int width_index);

struct SlimmableModel {
    LayerPlan plan;
    std::vector<double> theta;
};

struct WidthMask {
    int index = kWidthCount;
    std::vector<std::uint8_t> bits;
    std::size_t active_count = 0;

    bool operator[](std::size_t i) const { return bits[i] != 0; }
};

SlimmableModel build_model(const LayerPlan& plan, std::uint64_t seed);
SlimmableModel build_ul_mobilenet(std::uint64_t seed);

WidthMask width_mask(const SlimmableModel& model, int width_index);

struct Batch {
    int count = 0;
    int channels = 1;
    int height = 28;
    int width = 28;
    std::vector<double> images;  // count * channels * height * width
    std::vector<int> labels;     // empty when only logits are needed

    const double* image(int b) const { return images.data() + std::size_t(b) * channels * height * width; }
};

// Logits, row-major count x classes. Identical whether the mask is applied to
// the parameters up front or inactive channels are skipped during the pass.
std::vector<double> forward(const SlimmableModel& model, const WidthMask& mask, const Batch& batch);

int plan_classes(const LayerPlan& plan);

struct LossResult {
    double value = 0.0;
    std::vector<double> dlogits;
};

// Mean softmax cross-entropy against integer labels; gradient is
// (softmax - onehot) / batch.
LossResult task_loss(const std::vector<double>& logits, const std::vector<int>& labels, int classes);

// Mean cross-entropy H(softmax(teacher), log-softmax(student)); the teacher is
// a constant. Gradient wrt student logits is (p_student - p_teacher) / batch.
LossResult distill_loss(const std::vector<double>& student_logits,
                        const std::vector<double>& teacher_logits, int classes);

enum class LossKind { Task, Distill };

// Reverse-mode gradient of the batch loss at the masked point; entries outside
// the mask are zero. teacher_logits required iff kind == Distill. Optionally
// reports the loss value and the logits of this forward pass.
std::vector<double> grad(const SlimmableModel& model, const WidthMask& mask, const Batch& batch,
                         LossKind kind, const std::vector<double>* teacher_logits = nullptr,
                         double* loss_out = nullptr, std::vector<double>* logits_out = nullptr);

struct ModelStats {
    std::size_t params = 0;
    double flops = 0.0;  // multiply-accumulate count of one forward pass
    std::uint64_t payload_bits = 0;
};

// flops counted at the given input size with same padding and stride 1.
// payload bits: ceil(bits_per_param * params) when bits_per_param > 0,
// otherwise the fixed per-width constants for the production plan
// (172,688 / 86,344) and 32 bits/parameter for other plans.
ModelStats model_stats(const SlimmableModel& model, int width_index, int image_h = 28,
                       int image_w = 28, double bits_per_param = 0.0);

// Checkpoint: "SLNN", u32 version, u64 param count, u8 width count, then
// little-endian doubles. Masks are recomputed on load, never serialized.
void save_checkpoint(const SlimmableModel& model, const std::string& path);
SlimmableModel load_checkpoint(const std::string& path, const LayerPlan& plan);

}  // namespace slimfl::nn
