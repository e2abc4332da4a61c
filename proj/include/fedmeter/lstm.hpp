#ifndef FEDMETER_LSTM_HPP
#define FEDMETER_LSTM_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "fedmeter/numerics.hpp"
#include "fedmeter/rng.hpp"

namespace fedmeter {

// Full parameter set of a peephole LSTM forecaster with a scalar linear
// head. The flattened vector of all fields, in the order listed below,
// is the unit that federation averages and compression encodes.
struct LstmParams {
    Matrix w_f, w_i, w_z, w_o;  // input weights, H x D
    Matrix r_f, r_i, r_z, r_o;  // recurrent weights, H x H
    Vector p_f, p_i, p_o;       // peephole weights, H
    Vector b_f, b_i, b_z, b_o;  // biases, H
    Vector head_w;              // output head weights, H
    double head_b = 0.0;        // output head bias

    LstmParams() = default;
    LstmParams(std::size_t hidden, std::size_t input_dim);

    std::size_t hidden() const { return b_f.size(); }
    std::size_t input_dim() const { return w_f.cols; }

    // 4HD + 4H^2 + 3H + 4H + H + 1
    std::size_t param_count() const;

    // Flatten order: w_f w_i w_z w_o, r_f r_i r_z r_o, p_f p_i p_o,
    // b_f b_i b_z b_o, head_w, head_b.
    Vector flatten() const;
    static LstmParams unflatten(std::span<const double> flat,
                                std::size_t hidden, std::size_t input_dim);

    // params += delta, in flatten order.
    void add_flat(std::span<const double> delta);

    void fill(double value);

    bool operator==(const LstmParams&) const = default;
};

// Gradients mirror the parameter fields exactly.
using Gradients = LstmParams;

// Per-step activations of one forward pass, each plane T x H.
struct LstmState {
    Matrix f, i, z, c, o, h;
    Matrix tanh_c;  // cached tanh(c) for the backward pass

    std::size_t steps() const { return f.rows; }
    void resize(std::size_t steps, std::size_t hidden);
};

struct ForwardResult {
    double prediction = 0.0;
    LstmState state;
};

struct TrainConfig {
    std::size_t hidden_units = 50;
    std::size_t window = 48;
    double learning_rate = 0.01;
    std::size_t epochs = 4;
    double clip_norm = 5.0;  // global-norm gradient clip before each step

    void validate() const;
};

// One supervised example: T normalized inputs and the next value.
struct TrainingWindow {
    std::span<const double> input;
    double target = 0.0;
};

// Xavier-uniform weights, zero biases and peepholes, forget-gate
// bias 1.0. Deterministic given the stream.
LstmParams init_params(std::size_t hidden, std::size_t input_dim,
                       RngStream rng);

// Runs the gate recurrences over the window and applies the linear head
// to the last hidden state.
ForwardResult forward(const LstmParams& p, std::span<const double> x);

// In-place variant reusing caller-owned state buffers.
double forward_into(const LstmParams& p, std::span<const double> x,
                    LstmState& state);

double squared_loss(double prediction, double target);

// Exact reverse-mode gradients of squared_loss w.r.t. every parameter,
// including the peephole paths through c^(t-1) and c^t.
Gradients backward(const LstmParams& p, std::span<const double> x,
                   double target, const ForwardResult& fwd);

struct BackwardScratch {
    Vector dh, dc, dhn, daf, dai, daz, dao;
    void resize(std::size_t hidden);
};

void backward_into(const LstmParams& p, std::span<const double> x,
                   double target, const LstmState& state, double prediction,
                   Gradients& grads, BackwardScratch& scratch);

// p <- p - lr * g
void sgd_step(LstmParams& p, const Gradients& g, double lr);

// Scales gradients to the given global norm if they exceed it; returns
// the factor applied (1.0 when within bounds).
double clip_global_norm(Gradients& g, double max_norm);

struct SegmentResult {
    double mean_loss = 0.0;  // mean pre-step loss over the segment
};

// One sequential SGD pass over the windows in order; params updated
// in place, one step per window.
SegmentResult train_segment(LstmParams& p,
                            std::span<const TrainingWindow> windows,
                            const TrainConfig& cfg);

// Teacher-forced one-step-ahead predictions. Prediction m consumes the
// `window` true values of `series` ending at position
// size - (horizon - 1) + m, so the final prediction extends one step
// past the series end and earlier ones roll over recorded actuals.
std::vector<double> forecast(const LstmParams& p,
                             std::span<const double> series,
                             std::size_t horizon, std::size_t window);

}  // namespace fedmeter

#endif
