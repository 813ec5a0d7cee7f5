#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "rach/rng.hpp"

namespace rach::nn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using ParamView = std::span<double>;
using GradView = std::span<const double>;

enum class Activation { identity = 0, relu = 1, tanh = 2 };
enum class Loss { mse, huber };

// Elementwise loss on one output and its derivative w.r.t. the prediction.
// mse: (y - t)^2. huber (delta = 1): 0.5 e^2 if |e| <= 1, else |e| - 0.5.
double loss_value(Loss loss, double prediction, double target);
double loss_derivative(Loss loss, double prediction, double target);

// Fills m (fan_out x fan_in) from U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
void xavier_uniform(Matrix& m, RngStream& rng);

struct DenseLayer {
    Matrix weights; // out x in
    Vector bias;
    Activation activation = Activation::identity;

    DenseLayer() = default;
    DenseLayer(int inputs, int outputs, Activation act);

    int inputs() const { return static_cast<int>(weights.cols()); }
    int outputs() const { return static_cast<int>(weights.rows()); }
};

// activation(W x + b); throws std::invalid_argument on a shape mismatch.
Vector dense_forward(const DenseLayer& layer, const Vector& input);

struct DenseGrad {
    Matrix weights;
    Vector bias;
};

// One training example. An empty mask means every output contributes; a
// mask entry of 0 removes that output from the loss.
struct Sample {
    Vector input;
    Vector target;
    Vector mask;
};

class Mlp {
public:
    struct Tape {
        std::vector<Vector> inputs; // inputs[k] feeds layer k
        std::vector<Vector> outputs;
    };

    Mlp() = default;
    // sizes = {in, hidden..., out}; Xavier-uniform weights, zero biases.
    Mlp(const std::vector<int>& sizes, Activation hidden, Activation output, RngStream& rng);
    explicit Mlp(std::vector<DenseLayer> layers);

    Vector forward(const Vector& input) const;
    Vector forward(const Vector& input, Tape& tape) const;
    // Accumulates parameter gradients into `grads`; returns dL/d(input).
    Vector backward(const Tape& tape, const Vector& grad_output, std::vector<DenseGrad>& grads) const;

    std::vector<DenseGrad> zero_grads() const;
    std::vector<ParamView> parameters();

    int inputs() const { return layers_.front().inputs(); }
    int outputs() const { return layers_.back().outputs(); }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }

private:
    std::vector<DenseLayer> layers_;
};

std::vector<GradView> views(const std::vector<DenseGrad>& grads);

struct MlpGradients {
    std::vector<DenseGrad> layers;
    double loss = 0.0; // mean over the batch
};

// Gradients of the mean per-sample loss (summed over unmasked outputs).
MlpGradients backprop(const Mlp& net, Loss loss, std::span<const Sample> batch);

// Gate blocks are stacked in the order input, forget, output, candidate.
struct LstmCell {
    Matrix weights; // 4H x (D + H), acting on [x; h]
    Vector bias;    // 4H

    LstmCell() = default;
    LstmCell(int input_size, int hidden_size);

    int input_size() const { return static_cast<int>(weights.cols() - weights.rows() / 4); }
    int hidden_size() const { return static_cast<int>(weights.rows() / 4); }
};

struct LstmState {
    Vector h;
    Vector c;

    static LstmState zeros(int hidden) { return {Vector::Zero(hidden), Vector::Zero(hidden)}; }
};

LstmState lstm_step(const LstmCell& cell, const Vector& input, const LstmState& state);

struct LstmGrad {
    Matrix weights;
    Vector bias;
};

// Per-step values kept for backpropagation through time.
struct LstmTape {
    std::vector<Vector> joined; // [x_t; h_{t-1}]
    std::vector<Vector> gates;  // activated i, f, o, g stacked
    std::vector<Vector> c_prev;
    std::vector<Vector> tanh_c;
};

// Runs the cell over the columns of `sequence` (D x T) from a zero state.
LstmState lstm_forward(const LstmCell& cell, const Matrix& sequence, LstmTape* tape);

// Backpropagates dL/dh_T through every recorded step, accumulating into grads.
void lstm_backward(const LstmCell& cell, const LstmTape& tape, const Vector& grad_h_last, LstmGrad& grads);

// LSTM over a window followed by a dense head on the final hidden state.
class LstmRegressor {
public:
    LstmRegressor() = default;
    LstmRegressor(int input_size, int hidden_size, int outputs, RngStream& rng);
    LstmRegressor(LstmCell cell, DenseLayer head);

    Vector forward(const Matrix& sequence) const;

    std::vector<ParamView> parameters();
    const LstmCell& cell() const { return cell_; }
    const DenseLayer& head() const { return head_; }
    LstmCell& cell() { return cell_; }
    DenseLayer& head() { return head_; }

private:
    LstmCell cell_;
    DenseLayer head_;
};

struct SequenceSample {
    Matrix sequence; // D x T
    Vector target;
};

struct LstmRegressorGradients {
    LstmGrad cell;
    DenseGrad head;
    double loss = 0.0;

    std::vector<GradView> views() const;
};

LstmRegressorGradients backprop(const LstmRegressor& net, Loss loss, std::span<const SequenceSample> batch);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Bias-corrected Adam. Moment buffers are sized on the first step.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(AdamConfig config) : config_(config) {}

    void step(const std::vector<ParamView>& params, const std::vector<GradView>& grads);

    long steps() const { return steps_; }
    const AdamConfig& config() const { return config_; }
    AdamConfig& config() { return config_; }

private:
    AdamConfig config_;
    long steps_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

bool all_finite(const std::vector<ParamView>& params);

// Raised when a training step leaves a NaN or Inf in the parameters.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Copies every parameter value into one flat vector (comparison/debugging).
std::vector<double> flatten(const std::vector<ParamView>& params);

}  // namespace rach::nn
