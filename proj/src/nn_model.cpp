#include "nn_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "rng.hpp"

namespace slimfl::nn {

namespace {

constexpr char kMagic[4] = {'S', 'L', 'N', 'N'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint64_t kUlPayloadBitsFull = 172688;
constexpr std::uint64_t kUlPayloadBitsHalf = 86344;

bool is_conv_like(LayerKind k) {
    return k == LayerKind::Conv || k == LayerKind::DepthwiseConv || k == LayerKind::PointwiseConv;
}

double relu6(double x) { return std::min(std::max(x, 0.0), 6.0); }

// Vectorizable row primitives; the restrict qualifiers on the function
// boundary are what lets the compiler prove independence.
inline void row_axpy(double* __restrict out, const double* __restrict in, double w, int n) {
    for (int x = 0; x < n; ++x) out[x] += w * in[x];
}

// Four independent accumulators: deterministic order, no dependency chain.
inline double row_dot(const double* __restrict a, const double* __restrict b, int n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int x = 0;
    for (; x + 4 <= n; x += 4) {
        s0 += a[x] * b[x];
        s1 += a[x + 1] * b[x + 1];
        s2 += a[x + 2] * b[x + 2];
        s3 += a[x + 3] * b[x + 3];
    }
    double tail = 0.0;
    for (; x < n; ++x) tail += a[x] * b[x];
    return ((s0 + s1) + (s2 + s3)) + tail;
}

// One kernel tap over the valid spatial region of a plane. Taps without a
// horizontal shift cover whole contiguous row blocks and run as one long
// operation; pointwise layers always take that path.
inline void tap_axpy(double* op, const double* ip, double wv, int H, int W, int sy, int sx) {
    const int y0 = std::max(0, -sy), y1 = H - std::max(0, sy);
    if (y1 <= y0) return;
    if (sx == 0) {
        row_axpy(op + std::ptrdiff_t(y0) * W, ip + std::ptrdiff_t(y0 + sy) * W, wv, (y1 - y0) * W);
        return;
    }
    const int x0 = std::max(0, -sx), x1 = W - std::max(0, sx);
    for (int y = y0; y < y1; ++y)
        row_axpy(op + std::ptrdiff_t(y) * W + x0, ip + std::ptrdiff_t(y + sy) * W + sx + x0, wv,
                 x1 - x0);
}

// The weight gradient of one tap: sum over the valid region of
// d(out)[y][x] * in[y+sy][x+sx].
inline double tap_dot(const double* dop, const double* ip, int H, int W, int sy, int sx) {
    const int y0 = std::max(0, -sy), y1 = H - std::max(0, sy);
    if (y1 <= y0) return 0.0;
    if (sx == 0)
        return row_dot(dop + std::ptrdiff_t(y0) * W, ip + std::ptrdiff_t(y0 + sy) * W,
                       (y1 - y0) * W);
    const int x0 = std::max(0, -sx), x1 = W - std::max(0, sx);
    double acc = 0.0;
    for (int y = y0; y < y1; ++y)
        acc += row_dot(dop + std::ptrdiff_t(y) * W + x0,
                       ip + std::ptrdiff_t(y + sy) * W + sx + x0, x1 - x0);
    return acc;
}

}  // namespace

LayerPlan ul_mobilenet_plan() {
    LayerPlan plan;
    plan.push_back({LayerKind::Conv, 1, 32, 3, Activation::ReLU6, false});
    plan.push_back({LayerKind::DepthwiseConv, 32, 32, 3, Activation::ReLU6, false});
    plan.push_back({LayerKind::PointwiseConv, 32, 32, 1, Activation::ReLU6, false});
    plan.push_back({LayerKind::DepthwiseConv, 32, 32, 3, Activation::ReLU6, false});
    plan.push_back({LayerKind::PointwiseConv, 32, 64, 1, Activation::ReLU6, false});
    plan.push_back({LayerKind::GlobalAvgPool, 64, 64, 0, Activation::None, false});
    plan.push_back({LayerKind::Linear, 64, 10, 0, Activation::None, true});
    return plan;
}

void validate_plan(const LayerPlan& plan) {
    if (plan.empty()) throw invalid_parameter("empty layer plan");
    int channels = plan.front().in_channels;
    bool pooled = false;
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const LayerSpec& s = plan[i];
        if (s.in_channels != channels)
            throw invalid_parameter("layer " + std::to_string(i) + " input channels mismatch");
        if (pooled && s.kind != LayerKind::Linear)
            throw invalid_parameter("only a linear layer may follow global average pooling");
        if (s.kind == LayerKind::GlobalAvgPool) pooled = true;
        switch (s.kind) {
            case LayerKind::Conv:
                if (s.kernel < 1) throw invalid_parameter("conv kernel must be >= 1");
                break;
            case LayerKind::PointwiseConv:
                if (s.kernel != 1) throw invalid_parameter("pointwise kernel must be 1");
                break;
            case LayerKind::DepthwiseConv:
                if (s.kernel < 1) throw invalid_parameter("depthwise kernel must be >= 1");
                if (s.in_channels != s.out_channels)
                    throw invalid_parameter("depthwise layer must preserve channel count");
                break;
            case LayerKind::GlobalAvgPool:
                if (s.in_channels != s.out_channels)
                    throw invalid_parameter("pooling must preserve channel count");
                break;
            case LayerKind::Linear:
                if (i + 1 != plan.size()) throw invalid_parameter("linear layer must be terminal");
                break;
        }
        channels = s.out_channels;
    }
}

std::size_t layer_param_count(const LayerSpec& s) {
    std::size_t n = 0;
    switch (s.kind) {
        case LayerKind::Conv:
        case LayerKind::PointwiseConv:
            n = std::size_t(s.out_channels) * s.in_channels * s.kernel * s.kernel;
            break;
        case LayerKind::DepthwiseConv:
            n = std::size_t(s.out_channels) * s.kernel * s.kernel;
            break;
        case LayerKind::GlobalAvgPool:
            n = 0;
            break;
        case LayerKind::Linear:
            n = std::size_t(s.out_channels) * s.in_channels;
            break;
    }
    if (s.has_bias && s.kind != LayerKind::GlobalAvgPool) n += s.out_channels;
    return n;
}

std::size_t plan_param_count(const LayerPlan& plan) {
    std::size_t n = 0;
    for (const auto& s : plan) n += layer_param_count(s);
    return n;
}

double width_ratio(int width_index) {
    if (width_index < 1 || width_index > kWidthCount)
        throw invalid_parameter("width index must be 1 or 2");
    return width_index == 1 ? 0.5 : 1.0;
}

int active_channels(int channels, int width_index) {
    double r = width_ratio(width_index);
    return static_cast<int>(std::ceil(r * channels));
}

namespace {

std::vector<std::size_t> layer_offsets(const LayerPlan& plan) {
    std::vector<std::size_t> off(plan.size() + 1, 0);
    for (std::size_t i = 0; i < plan.size(); ++i) off[i + 1] = off[i] + layer_param_count(plan[i]);
    return off;
}

// Active output channels per layer under the prefix rule: inputs and the
// classifier output stay unmasked, hidden channels shrink to ceil(r*C).
std::vector<int> active_out_per_layer(const LayerPlan& plan, int width_index) {
    std::vector<int> act(plan.size());
    int prev = plan.front().in_channels;  // network input, unmasked
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const LayerSpec& s = plan[i];
        switch (s.kind) {
            case LayerKind::Conv:
            case LayerKind::PointwiseConv:
                act[i] = active_channels(s.out_channels, width_index);
                break;
            case LayerKind::DepthwiseConv:
            case LayerKind::GlobalAvgPool:
                act[i] = prev;
                break;
            case LayerKind::Linear:
                act[i] = s.out_channels;  // classes, unmasked
                break;
        }
        prev = act[i];
    }
    return act;
}

std::vector<int> active_in_per_layer(const LayerPlan& plan, const std::vector<int>& act_out) {
    std::vector<int> act(plan.size());
    int prev = plan.front().in_channels;
    for (std::size_t i = 0; i < plan.size(); ++i) {
        act[i] = prev;
        prev = act_out[i];
    }
    return act;
}

}  // namespace

SlimmableModel build_model(const LayerPlan& plan, std::uint64_t seed) {
    validate_plan(plan);
    SlimmableModel model;
    model.plan = plan;
    model.theta.assign(plan_param_count(plan), 0.0);
    auto off = layer_offsets(plan);
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const LayerSpec& s = plan[i];
        std::size_t weights = layer_param_count(s);
        if (weights == 0) continue;
        std::size_t bias = (s.has_bias ? std::size_t(s.out_channels) : 0);
        double fan_in = 0, fan_out = 0;
        switch (s.kind) {
            case LayerKind::Conv:
            case LayerKind::PointwiseConv:
                fan_in = double(s.in_channels) * s.kernel * s.kernel;
                fan_out = double(s.out_channels) * s.kernel * s.kernel;
                break;
            case LayerKind::DepthwiseConv:
                fan_in = fan_out = double(s.kernel) * s.kernel;
                break;
            case LayerKind::Linear:
                fan_in = s.in_channels;
                fan_out = s.out_channels;
                break;
            default:
                break;
        }
        double bound = std::sqrt(6.0 / (fan_in + fan_out));
        auto st = rng::stream(seed, "init", i);
        for (std::size_t j = 0; j < weights - bias; ++j)
            model.theta[off[i] + j] = (2.0 * st.next_unit() - 1.0) * bound;
        // biases start at zero
    }
    return model;
}

SlimmableModel build_ul_mobilenet(std::uint64_t seed) { return build_model(ul_mobilenet_plan(), seed); }

WidthMask width_mask(const SlimmableModel& model, int width_index) {
    width_ratio(width_index);  // validates the index
    const LayerPlan& plan = model.plan;
    auto act_out = active_out_per_layer(plan, width_index);
    auto act_in = active_in_per_layer(plan, act_out);

    WidthMask mask;
    mask.index = width_index;
    mask.bits.assign(model.theta.size(), 0);

    auto off = layer_offsets(plan);
    for (std::size_t l = 0; l < plan.size(); ++l) {
        const LayerSpec& s = plan[l];
        std::size_t base = off[l];
        switch (s.kind) {
            case LayerKind::Conv:
            case LayerKind::PointwiseConv: {
                std::size_t kk = std::size_t(s.kernel) * s.kernel;
                for (int o = 0; o < act_out[l]; ++o)
                    for (int i = 0; i < act_in[l]; ++i)
                        for (std::size_t k = 0; k < kk; ++k)
                            mask.bits[base + (std::size_t(o) * s.in_channels + i) * kk + k] = 1;
                break;
            }
            case LayerKind::DepthwiseConv: {
                std::size_t kk = std::size_t(s.kernel) * s.kernel;
                for (int ch = 0; ch < act_out[l]; ++ch)
                    for (std::size_t k = 0; k < kk; ++k) mask.bits[base + std::size_t(ch) * kk + k] = 1;
                break;
            }
            case LayerKind::Linear: {
                for (int o = 0; o < act_out[l]; ++o)
                    for (int i = 0; i < act_in[l]; ++i)
                        mask.bits[base + std::size_t(o) * s.in_channels + i] = 1;
                if (s.has_bias) {
                    std::size_t bbase = base + std::size_t(s.out_channels) * s.in_channels;
                    for (int o = 0; o < act_out[l]; ++o) mask.bits[bbase + o] = 1;
                }
                break;
            }
            case LayerKind::GlobalAvgPool:
                break;
        }
    }
    mask.active_count = std::size_t(std::count(mask.bits.begin(), mask.bits.end(), 1));
    return mask;
}

namespace {

// Forward tape: the activation chain acts[0..L], acts[0] being the input
// images and acts[L] the logits. ReLU6 gates its backward pass on the post
// activation (the derivative is one exactly where 0 < y < 6), so the
// pre-activation values never need to be kept.
struct Tape {
    std::vector<std::vector<double>> acts;
    std::vector<int> act_in, act_out;
    int height = 0, width = 0;

    const std::vector<double>& logits() const { return acts.back(); }
};

void conv_forward(const LayerSpec& s, const double* __restrict theta, const double* __restrict in,
                  double* __restrict pre, int B, int H, int W, int act_out, int act_in) {
    const int pad = s.kernel / 2;
    const std::size_t kk = std::size_t(s.kernel) * s.kernel;
    const std::size_t plane = std::size_t(H) * W;
    // Each output plane accumulates in a scratch buffer and is stored once;
    // the repeated read-modify-write of output planes is what saturates the
    // cache otherwise.
    std::vector<double> acc(plane);
    for (int b = 0; b < B; ++b) {
        const double* inb = in + std::size_t(b) * s.in_channels * plane;
        double* outb = pre + std::size_t(b) * s.out_channels * plane;
        for (int o = 0; o < act_out; ++o) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int i = 0; i < act_in; ++i) {
                const double* ip = inb + std::size_t(i) * plane;
                const double* w = theta + (std::size_t(o) * s.in_channels + i) * kk;
                for (int ky = 0; ky < s.kernel; ++ky)
                    for (int kx = 0; kx < s.kernel; ++kx) {
                        const double wv = w[std::size_t(ky) * s.kernel + kx];
                        if (wv == 0.0) continue;
                        tap_axpy(acc.data(), ip, wv, H, W, ky - pad, kx - pad);
                    }
            }
            std::copy(acc.begin(), acc.end(), outb + std::size_t(o) * plane);
        }
    }
}

void depthwise_forward(const LayerSpec& s, const double* __restrict theta,
                       const double* __restrict in, double* __restrict pre, int B, int H, int W,
                       int act) {
    const int pad = s.kernel / 2;
    const std::size_t kk = std::size_t(s.kernel) * s.kernel;
    const std::size_t plane = std::size_t(H) * W;
    for (int b = 0; b < B; ++b) {
        const double* inb = in + std::size_t(b) * s.in_channels * plane;
        double* outb = pre + std::size_t(b) * s.out_channels * plane;
        for (int ch = 0; ch < act; ++ch) {
            const double* ip = inb + std::size_t(ch) * plane;
            double* op = outb + std::size_t(ch) * plane;
            const double* w = theta + std::size_t(ch) * kk;
            for (int ky = 0; ky < s.kernel; ++ky)
                for (int kx = 0; kx < s.kernel; ++kx) {
                    const double wv = w[std::size_t(ky) * s.kernel + kx];
                    if (wv == 0.0) continue;
                    tap_axpy(op, ip, wv, H, W, ky - pad, kx - pad);
                }
        }
    }
}

Tape forward_tape(const SlimmableModel& model, const WidthMask& mask, const Batch& batch) {
    const LayerPlan& plan = model.plan;
    if (batch.channels != plan.front().in_channels)
        throw invalid_parameter("batch channel count does not match the plan");
    if (batch.count <= 0) throw invalid_parameter("empty batch");
    if (std::size_t(batch.count) * batch.channels * batch.height * batch.width !=
        batch.images.size())
        throw invalid_parameter("batch image buffer size mismatch");
    if (mask.bits.size() != model.theta.size())
        throw invalid_parameter("mask does not belong to this model");

    Tape tape;
    tape.act_out = active_out_per_layer(plan, mask.index);
    tape.act_in = active_in_per_layer(plan, tape.act_out);
    tape.acts.resize(plan.size() + 1);
    tape.height = batch.height;
    tape.width = batch.width;
    tape.acts[0] = batch.images;

    auto off = layer_offsets(plan);
    const int B = batch.count;
    int H = batch.height, W = batch.width;

    for (std::size_t l = 0; l < plan.size(); ++l) {
        const LayerSpec& s = plan[l];
        const double* theta = model.theta.data() + off[l];
        const std::vector<double>& in = tape.acts[l];
        std::vector<double>& out = tape.acts[l + 1];
        switch (s.kind) {
            case LayerKind::Conv:
            case LayerKind::PointwiseConv: {
                out.assign(std::size_t(B) * s.out_channels * H * W, 0.0);
                conv_forward(s, theta, in.data(), out.data(), B, H, W, tape.act_out[l],
                             tape.act_in[l]);
                if (s.activation == Activation::ReLU6)
                    for (auto& v : out) v = relu6(v);
                break;
            }
            case LayerKind::DepthwiseConv: {
                out.assign(std::size_t(B) * s.out_channels * H * W, 0.0);
                depthwise_forward(s, theta, in.data(), out.data(), B, H, W, tape.act_out[l]);
                if (s.activation == Activation::ReLU6)
                    for (auto& v : out) v = relu6(v);
                break;
            }
            case LayerKind::GlobalAvgPool: {
                const std::size_t plane = std::size_t(H) * W;
                out.assign(std::size_t(B) * s.out_channels, 0.0);
                for (int b = 0; b < B; ++b)
                    for (int ch = 0; ch < tape.act_out[l]; ++ch) {
                        const double* ip = in.data() + (std::size_t(b) * s.in_channels + ch) * plane;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < plane; ++j) acc += ip[j];
                        out[std::size_t(b) * s.out_channels + ch] = acc / double(plane);
                    }
                H = 1;
                W = 1;
                break;
            }
            case LayerKind::Linear: {
                if (H != 1 || W != 1)
                    throw invalid_parameter("linear layer requires pooled (1x1) features");
                const double* bias =
                    s.has_bias ? theta + std::size_t(s.out_channels) * s.in_channels : nullptr;
                out.assign(std::size_t(B) * s.out_channels, 0.0);
                for (int b = 0; b < B; ++b) {
                    const double* fb = in.data() + std::size_t(b) * s.in_channels;
                    double* ob = out.data() + std::size_t(b) * s.out_channels;
                    for (int o = 0; o < s.out_channels; ++o) {
                        double acc = bias ? bias[o] : 0.0;
                        const double* w = theta + std::size_t(o) * s.in_channels;
                        ob[o] = acc + row_dot(w, fb, tape.act_in[l]);
                    }
                }
                break;
            }
        }
    }
    return tape;
}

}  // namespace

std::vector<double> forward(const SlimmableModel& model, const WidthMask& mask, const Batch& batch) {
    Tape tape = forward_tape(model, mask, batch);
    return std::move(tape.acts.back());
}

int plan_classes(const LayerPlan& plan) { return plan.back().out_channels; }

namespace {

void softmax_row(const double* logits, double* out, int classes) {
    double m = logits[0];
    for (int c = 1; c < classes; ++c) m = std::max(m, logits[c]);
    double z = 0.0;
    for (int c = 0; c < classes; ++c) {
        out[c] = std::exp(logits[c] - m);
        z += out[c];
    }
    for (int c = 0; c < classes; ++c) out[c] /= z;
}

double log_sum_exp_row(const double* logits, int classes) {
    double m = logits[0];
    for (int c = 1; c < classes; ++c) m = std::max(m, logits[c]);
    double z = 0.0;
    for (int c = 0; c < classes; ++c) z += std::exp(logits[c] - m);
    return m + std::log(z);
}

}  // namespace

LossResult task_loss(const std::vector<double>& logits, const std::vector<int>& labels, int classes) {
    const std::size_t B = labels.size();
    if (logits.size() != B * classes) throw invalid_parameter("logit/label shape mismatch");
    LossResult r;
    r.dlogits.assign(logits.size(), 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        const int y = labels[b];
        if (y < 0 || y >= classes) throw invalid_parameter("label out of range");
        const double* row = logits.data() + b * classes;
        double* drow = r.dlogits.data() + b * classes;
        const double lse = log_sum_exp_row(row, classes);
        r.value += lse - row[y];
        softmax_row(row, drow, classes);
        drow[y] -= 1.0;
        for (int c = 0; c < classes; ++c) drow[c] /= double(B);
    }
    r.value /= double(B);
    return r;
}

LossResult distill_loss(const std::vector<double>& student_logits,
                        const std::vector<double>& teacher_logits, int classes) {
    if (student_logits.size() != teacher_logits.size())
        throw invalid_parameter("student/teacher logit shape mismatch");
    const std::size_t B = student_logits.size() / classes;
    LossResult r;
    r.dlogits.assign(student_logits.size(), 0.0);
    std::vector<double> pt(classes), ps(classes);
    for (std::size_t b = 0; b < B; ++b) {
        const double* srow = student_logits.data() + b * classes;
        const double* trow = teacher_logits.data() + b * classes;
        double* drow = r.dlogits.data() + b * classes;
        softmax_row(trow, pt.data(), classes);
        softmax_row(srow, ps.data(), classes);
        const double lse = log_sum_exp_row(srow, classes);
        for (int c = 0; c < classes; ++c) {
            r.value += pt[c] * (lse - srow[c]);
            drow[c] = (ps[c] - pt[c]) / double(B);
        }
    }
    r.value /= double(B);
    return r;
}

std::vector<double> grad(const SlimmableModel& model, const WidthMask& mask, const Batch& batch,
                         LossKind kind, const std::vector<double>* teacher_logits, double* loss_out,
                         std::vector<double>* logits_out) {
    const LayerPlan& plan = model.plan;
    Tape tape = forward_tape(model, mask, batch);
    const int classes = plan_classes(plan);

    LossResult loss;
    if (kind == LossKind::Task) {
        loss = task_loss(tape.logits(), batch.labels, classes);
    } else {
        if (teacher_logits == nullptr)
            throw invalid_parameter("distill gradient requires teacher logits");
        loss = distill_loss(tape.logits(), *teacher_logits, classes);
    }
    if (loss_out) *loss_out = loss.value;
    if (logits_out) *logits_out = tape.logits();

    std::vector<double> g(model.theta.size(), 0.0);
    auto off = layer_offsets(plan);
    const int B = batch.count;

    // Spatial size seen by each layer's input.
    std::vector<double> dcur = std::move(loss.dlogits);
    for (std::size_t li = plan.size(); li-- > 0;) {
        const LayerSpec& s = plan[li];
        const double* theta = model.theta.data() + off[li];
        double* gtheta = g.data() + off[li];
        const std::vector<double>& in = tape.acts[li];
        const int act_out = tape.act_out[li];
        const int act_in = tape.act_in[li];
        const bool spatial = is_conv_like(s.kind);
        const int H = spatial || s.kind == LayerKind::GlobalAvgPool ? tape.height : 1;
        const int W = spatial || s.kind == LayerKind::GlobalAvgPool ? tape.width : 1;
        const std::size_t plane = std::size_t(H) * W;

        switch (s.kind) {
            case LayerKind::Linear: {
                std::vector<double> din(std::size_t(B) * s.in_channels, 0.0);
                double* gb = s.has_bias ? gtheta + std::size_t(s.out_channels) * s.in_channels
                                        : nullptr;
                for (int b = 0; b < B; ++b) {
                    const double* fb = in.data() + std::size_t(b) * s.in_channels;
                    const double* drow = dcur.data() + std::size_t(b) * s.out_channels;
                    double* dinb = din.data() + std::size_t(b) * s.in_channels;
                    for (int o = 0; o < act_out; ++o) {
                        const double dv = drow[o];
                        if (gb) gb[o] += dv;
                        double* gw = gtheta + std::size_t(o) * s.in_channels;
                        const double* w = theta + std::size_t(o) * s.in_channels;
                        for (int i = 0; i < act_in; ++i) {
                            gw[i] += dv * fb[i];
                            dinb[i] += dv * w[i];
                        }
                    }
                }
                dcur = std::move(din);
                break;
            }
            case LayerKind::GlobalAvgPool: {
                std::vector<double> din(std::size_t(B) * s.in_channels * plane, 0.0);
                for (int b = 0; b < B; ++b)
                    for (int ch = 0; ch < act_out; ++ch) {
                        const double dv =
                            dcur[std::size_t(b) * s.out_channels + ch] / double(plane);
                        double* dp = din.data() + (std::size_t(b) * s.in_channels + ch) * plane;
                        for (std::size_t j = 0; j < plane; ++j) dp[j] += dv;
                    }
                dcur = std::move(din);
                break;
            }
            case LayerKind::Conv:
            case LayerKind::PointwiseConv:
            case LayerKind::DepthwiseConv: {
                // Gate through the activation first; the saturated regions
                // of the post activation are exactly the zero-derivative ones.
                if (s.activation == Activation::ReLU6) {
                    const std::vector<double>& post = tape.acts[li + 1];
                    for (std::size_t j = 0; j < dcur.size(); ++j)
                        if (!(post[j] > 0.0 && post[j] < 6.0)) dcur[j] = 0.0;
                }
                std::vector<double> din(std::size_t(B) * s.in_channels * plane, 0.0);
                const int pad = s.kernel / 2;
                const std::size_t kk = std::size_t(s.kernel) * s.kernel;
                const bool depthwise = s.kind == LayerKind::DepthwiseConv;
                std::vector<double> acc(plane);
                for (int b = 0; b < B; ++b) {
                    const double* inb = in.data() + std::size_t(b) * s.in_channels * plane;
                    const double* doutb = dcur.data() + std::size_t(b) * s.out_channels * plane;
                    double* dinb = din.data() + std::size_t(b) * s.in_channels * plane;
                    for (int i = 0; i < act_in; ++i) {
                        const double* ip = inb + std::size_t(i) * plane;
                        std::fill(acc.begin(), acc.end(), 0.0);
                        const int o_begin = depthwise ? i : 0;
                        const int o_end = depthwise ? i + 1 : act_out;
                        for (int o = o_begin; o < o_end; ++o) {
                            const double* dop = doutb + std::size_t(o) * plane;
                            const std::size_t wbase =
                                depthwise ? std::size_t(o) * kk
                                          : (std::size_t(o) * s.in_channels + i) * kk;
                            for (int ky = 0; ky < s.kernel; ++ky)
                                for (int kx = 0; kx < s.kernel; ++kx) {
                                    const int sy = ky - pad, sx = kx - pad;
                                    const double wv = theta[wbase + std::size_t(ky) * s.kernel + kx];
                                    gtheta[wbase + std::size_t(ky) * s.kernel + kx] +=
                                        tap_dot(dop, ip, H, W, sy, sx);
                                    // d(in)[y+sy][x+sx] += d(out)[y][x] * w is the
                                    // same tap with the shift reversed.
                                    if (wv != 0.0) tap_axpy(acc.data(), dop, wv, H, W, -sy, -sx);
                                }
                        }
                        row_axpy(dinb + std::size_t(i) * plane, acc.data(), 1.0, int(plane));
                    }
                }
                dcur = std::move(din);
                break;
            }
        }
    }

    // Keep the contract exact even for coordinates the loops never touched.
    for (std::size_t j = 0; j < g.size(); ++j)
        if (!mask[j]) g[j] = 0.0;
    return g;
}

ModelStats model_stats(const SlimmableModel& model, int width_index, int image_h, int image_w,
                       double bits_per_param) {
    const LayerPlan& plan = model.plan;
    auto act_out = active_out_per_layer(plan, width_index);
    auto act_in = active_in_per_layer(plan, act_out);
    auto full_out = active_out_per_layer(plan, kWidthCount);
    auto full_in = active_in_per_layer(plan, full_out);

    ModelStats st;
    double flops = 0.0;
    std::size_t params = 0;
    const double plane = double(image_h) * image_w;
    for (std::size_t l = 0; l < plan.size(); ++l) {
        const LayerSpec& s = plan[l];
        switch (s.kind) {
            case LayerKind::Conv:
            case LayerKind::PointwiseConv:
                params += std::size_t(act_out[l]) * act_in[l] * s.kernel * s.kernel;
                flops += plane * act_out[l] * act_in[l] * s.kernel * s.kernel;
                break;
            case LayerKind::DepthwiseConv:
                params += std::size_t(act_out[l]) * s.kernel * s.kernel;
                flops += plane * act_out[l] * s.kernel * s.kernel;
                break;
            case LayerKind::GlobalAvgPool:
                flops += plane * act_out[l];
                break;
            case LayerKind::Linear:
                params += std::size_t(act_out[l]) * act_in[l];
                if (s.has_bias) params += act_out[l];
                flops += double(act_out[l]) * act_in[l];
                break;
        }
    }
    st.params = params;
    st.flops = flops;

    if (bits_per_param > 0.0) {
        st.payload_bits = static_cast<std::uint64_t>(std::ceil(bits_per_param * double(params)));
    } else if (plan_param_count(plan) == 4586) {
        st.payload_bits = (width_index == kWidthCount) ? kUlPayloadBitsFull : kUlPayloadBitsHalf;
    } else {
        st.payload_bits = std::uint64_t(params) * 64;
    }
    return st;
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
    out.write(reinterpret_cast<char*>(b), 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
    out.write(reinterpret_cast<char*>(b), 8);
}

std::uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::ifstream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const SlimmableModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open checkpoint for writing: " + path);
    out.write(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u64(out, model.theta.size());
    char widths = static_cast<char>(kWidthCount);
    out.write(&widths, 1);
    for (double v : model.theta) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_u64(out, bits);
    }
    if (!out) throw io_error("checkpoint write failed: " + path);
}

SlimmableModel load_checkpoint(const std::string& path, const LayerPlan& plan) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw io_error("bad checkpoint magic: " + path);
    const std::uint32_t version = get_u32(in);
    if (version != kCheckpointVersion)
        throw io_error("unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t count = get_u64(in);
    char widths = 0;
    in.read(&widths, 1);
    if (!in || widths != kWidthCount) throw io_error("unsupported width count in checkpoint");
    if (count != plan_param_count(plan))
        throw io_error("checkpoint parameter count does not match the plan");
    SlimmableModel model;
    model.plan = plan;
    model.theta.resize(count);
    for (std::uint64_t j = 0; j < count; ++j) {
        std::uint64_t bits = get_u64(in);
        if (!in) throw io_error("truncated checkpoint: " + path);
        std::memcpy(&model.theta[j], &bits, 8);
    }
    return model;
}

}  // namespace slimfl::nn
