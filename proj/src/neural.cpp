#include "rach/neural.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rach::nn {

namespace {

void require(bool ok, const char* what) {
    if (!ok)
        throw std::invalid_argument(what);
}

double activate(Activation a, double x) {
    switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
    }
    return x;
}

// Derivative expressed through the activation's output y.
double activate_derivative(Activation a, double y) {
    switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: return 1.0 - y * y;
    }
    return 1.0;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

double loss_value(Loss loss, double prediction, double target) {
    const double e = prediction - target;
    if (loss == Loss::mse)
        return e * e;
    const double a = std::abs(e);
    return a <= 1.0 ? 0.5 * e * e : a - 0.5;
}

double loss_derivative(Loss loss, double prediction, double target) {
    const double e = prediction - target;
    if (loss == Loss::mse)
        return 2.0 * e;
    if (e > 1.0)
        return 1.0;
    if (e < -1.0)
        return -1.0;
    return e;
}

void xavier_uniform(Matrix& m, RngStream& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) = (2.0 * rng.uniform01() - 1.0) * a;
}

DenseLayer::DenseLayer(int inputs, int outputs, Activation act)
    : weights(Matrix::Zero(outputs, inputs)), bias(Vector::Zero(outputs)), activation(act) {
    require(inputs > 0 && outputs > 0, "DenseLayer: dimensions must be positive");
}

Vector dense_forward(const DenseLayer& layer, const Vector& input) {
    if (input.size() != layer.weights.cols())
        throw std::invalid_argument("dense_forward: input length " + std::to_string(input.size()) + " != " +
                                    std::to_string(layer.weights.cols()));
    Vector z = layer.weights * input + layer.bias;
    for (Eigen::Index i = 0; i < z.size(); ++i)
        z[i] = activate(layer.activation, z[i]);
    return z;
}

Mlp::Mlp(const std::vector<int>& sizes, Activation hidden, Activation output, RngStream& rng) {
    require(sizes.size() >= 2, "Mlp: need at least input and output sizes");
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
        const bool last = k + 2 == sizes.size();
        DenseLayer layer(sizes[k], sizes[k + 1], last ? output : hidden);
        xavier_uniform(layer.weights, rng);
        layers_.push_back(std::move(layer));
    }
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    require(!layers_.empty(), "Mlp: no layers");
    for (std::size_t k = 1; k < layers_.size(); ++k)
        require(layers_[k].inputs() == layers_[k - 1].outputs(), "Mlp: layer shapes do not chain");
}

Vector Mlp::forward(const Vector& input) const {
    Vector x = input;
    for (const auto& layer : layers_)
        x = dense_forward(layer, x);
    return x;
}

Vector Mlp::forward(const Vector& input, Tape& tape) const {
    tape.inputs.clear();
    tape.outputs.clear();
    Vector x = input;
    for (const auto& layer : layers_) {
        tape.inputs.push_back(x);
        x = dense_forward(layer, x);
        tape.outputs.push_back(x);
    }
    return x;
}

Vector Mlp::backward(const Tape& tape, const Vector& grad_output, std::vector<DenseGrad>& grads) const {
    Vector g = grad_output;
    for (std::size_t k = layers_.size(); k-- > 0;) {
        const DenseLayer& layer = layers_[k];
        const Vector& y = tape.outputs[k];
        for (Eigen::Index i = 0; i < g.size(); ++i)
            g[i] *= activate_derivative(layer.activation, y[i]);
        grads[k].weights.noalias() += g * tape.inputs[k].transpose();
        grads[k].bias += g;
        g = layer.weights.transpose() * g;
    }
    return g;
}

std::vector<DenseGrad> Mlp::zero_grads() const {
    std::vector<DenseGrad> grads;
    grads.reserve(layers_.size());
    for (const auto& layer : layers_)
        grads.push_back({Matrix::Zero(layer.outputs(), layer.inputs()), Vector::Zero(layer.outputs())});
    return grads;
}

std::vector<ParamView> Mlp::parameters() {
    std::vector<ParamView> out;
    for (auto& layer : layers_) {
        out.emplace_back(layer.weights.data(), static_cast<std::size_t>(layer.weights.size()));
        out.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
    }
    return out;
}

std::vector<GradView> views(const std::vector<DenseGrad>& grads) {
    std::vector<GradView> out;
    for (const auto& g : grads) {
        out.emplace_back(g.weights.data(), static_cast<std::size_t>(g.weights.size()));
        out.emplace_back(g.bias.data(), static_cast<std::size_t>(g.bias.size()));
    }
    return out;
}

namespace {

// dL/dy for one sample, and its loss, honoring the mask.
double output_gradient(Loss loss, const Vector& y, const Sample& s, Vector& grad) {
    if (s.target.size() != y.size())
        throw std::invalid_argument("backprop: target length does not match network output");
    const bool masked = s.mask.size() != 0;
    grad.resize(y.size());
    double total = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double w = masked ? s.mask[i] : 1.0;
        grad[i] = w == 0.0 ? 0.0 : w * loss_derivative(loss, y[i], s.target[i]);
        total += w == 0.0 ? 0.0 : w * loss_value(loss, y[i], s.target[i]);
    }
    return total;
}

}  // namespace

MlpGradients backprop(const Mlp& net, Loss loss, std::span<const Sample> batch) {
    MlpGradients out{net.zero_grads(), 0.0};
    if (batch.empty())
        return out;
    Mlp::Tape tape;
    Vector grad;
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const Sample& s : batch) {
        const Vector y = net.forward(s.input, tape);
        out.loss += output_gradient(loss, y, s, grad);
        grad *= scale;
        net.backward(tape, grad, out.layers);
    }
    out.loss *= scale;
    return out;
}

LstmCell::LstmCell(int input_size, int hidden_size)
    : weights(Matrix::Zero(4 * hidden_size, input_size + hidden_size)), bias(Vector::Zero(4 * hidden_size)) {
    require(input_size > 0 && hidden_size > 0, "LstmCell: dimensions must be positive");
}

namespace {

Vector join(const Vector& x, const Vector& h) {
    Vector z(x.size() + h.size());
    z << x, h;
    return z;
}

// Activates the stacked pre-activations in place: sigmoid on i, f, o and
// tanh on the candidate block.
void activate_gates(Vector& a, Eigen::Index hidden) {
    for (Eigen::Index k = 0; k < 3 * hidden; ++k)
        a[k] = sigmoid(a[k]);
    for (Eigen::Index k = 3 * hidden; k < 4 * hidden; ++k)
        a[k] = std::tanh(a[k]);
}

}  // namespace

LstmState lstm_step(const LstmCell& cell, const Vector& input, const LstmState& state) {
    const Eigen::Index hidden = cell.hidden_size();
    if (input.size() != cell.input_size() || state.h.size() != hidden || state.c.size() != hidden)
        throw std::invalid_argument("lstm_step: shape mismatch");
    Vector a = cell.weights * join(input, state.h) + cell.bias;
    activate_gates(a, hidden);
    LstmState next;
    next.c = a.segment(hidden, hidden).cwiseProduct(state.c) +
             a.segment(0, hidden).cwiseProduct(a.segment(3 * hidden, hidden));
    next.h = a.segment(2 * hidden, hidden).cwiseProduct(next.c.array().tanh().matrix());
    return next;
}

LstmState lstm_forward(const LstmCell& cell, const Matrix& sequence, LstmTape* tape) {
    const Eigen::Index hidden = cell.hidden_size();
    if (sequence.rows() != cell.input_size())
        throw std::invalid_argument("lstm_forward: feature count does not match cell input size");
    LstmState state = LstmState::zeros(static_cast<int>(hidden));
    if (tape) {
        tape->joined.clear();
        tape->gates.clear();
        tape->c_prev.clear();
        tape->tanh_c.clear();
    }
    for (Eigen::Index t = 0; t < sequence.cols(); ++t) {
        Vector z = join(sequence.col(t), state.h);
        Vector a = cell.weights * z + cell.bias;
        activate_gates(a, hidden);
        Vector c = a.segment(hidden, hidden).cwiseProduct(state.c) +
                   a.segment(0, hidden).cwiseProduct(a.segment(3 * hidden, hidden));
        Vector tc = c.array().tanh().matrix();
        Vector h = a.segment(2 * hidden, hidden).cwiseProduct(tc);
        if (tape) {
            tape->joined.push_back(std::move(z));
            tape->gates.push_back(std::move(a));
            tape->c_prev.push_back(state.c);
            tape->tanh_c.push_back(tc);
        }
        state.c = std::move(c);
        state.h = std::move(h);
    }
    return state;
}

void lstm_backward(const LstmCell& cell, const LstmTape& tape, const Vector& grad_h_last, LstmGrad& grads) {
    const Eigen::Index hidden = cell.hidden_size();
    const Eigen::Index inputs = cell.input_size();
    Vector dh = grad_h_last;
    Vector dc = Vector::Zero(hidden);
    Vector da(4 * hidden);
    for (std::size_t t = tape.gates.size(); t-- > 0;) {
        const Vector& g = tape.gates[t];
        const auto i = g.segment(0, hidden).array();
        const auto f = g.segment(hidden, hidden).array();
        const auto o = g.segment(2 * hidden, hidden).array();
        const auto cand = g.segment(3 * hidden, hidden).array();
        const auto tc = tape.tanh_c[t].array();

        dc.array() += dh.array() * o * (1.0 - tc * tc);
        da.segment(0, hidden) = (dc.array() * cand * i * (1.0 - i)).matrix();
        da.segment(hidden, hidden) = (dc.array() * tape.c_prev[t].array() * f * (1.0 - f)).matrix();
        da.segment(2 * hidden, hidden) = (dh.array() * tc * o * (1.0 - o)).matrix();
        da.segment(3 * hidden, hidden) = (dc.array() * i * (1.0 - cand * cand)).matrix();

        grads.weights.noalias() += da * tape.joined[t].transpose();
        grads.bias += da;
        const Vector dz = cell.weights.transpose() * da;
        dh = dz.segment(inputs, hidden);
        dc = (dc.array() * f).matrix();
    }
}

LstmRegressor::LstmRegressor(int input_size, int hidden_size, int outputs, RngStream& rng)
    : cell_(input_size, hidden_size), head_(hidden_size, outputs, Activation::identity) {
    // each gate block gets its own Xavier draw
    for (int k = 0; k < 4; ++k) {
        Matrix block(hidden_size, input_size + hidden_size);
        xavier_uniform(block, rng);
        cell_.weights.middleRows(k * hidden_size, hidden_size) = block;
    }
    // forget-gate bias of 1 keeps early gradients flowing through the cell
    cell_.bias.segment(hidden_size, hidden_size).setOnes();
    xavier_uniform(head_.weights, rng);
}

LstmRegressor::LstmRegressor(LstmCell cell, DenseLayer head) : cell_(std::move(cell)), head_(std::move(head)) {
    require(head_.inputs() == cell_.hidden_size(), "LstmRegressor: head input must equal hidden size");
}

Vector LstmRegressor::forward(const Matrix& sequence) const {
    return dense_forward(head_, lstm_forward(cell_, sequence, nullptr).h);
}

std::vector<ParamView> LstmRegressor::parameters() {
    return {
        {cell_.weights.data(), static_cast<std::size_t>(cell_.weights.size())},
        {cell_.bias.data(), static_cast<std::size_t>(cell_.bias.size())},
        {head_.weights.data(), static_cast<std::size_t>(head_.weights.size())},
        {head_.bias.data(), static_cast<std::size_t>(head_.bias.size())},
    };
}

std::vector<GradView> LstmRegressorGradients::views() const {
    return {
        {cell.weights.data(), static_cast<std::size_t>(cell.weights.size())},
        {cell.bias.data(), static_cast<std::size_t>(cell.bias.size())},
        {head.weights.data(), static_cast<std::size_t>(head.weights.size())},
        {head.bias.data(), static_cast<std::size_t>(head.bias.size())},
    };
}

LstmRegressorGradients backprop(const LstmRegressor& net, Loss loss, std::span<const SequenceSample> batch) {
    const LstmCell& cell = net.cell();
    const DenseLayer& head = net.head();
    LstmRegressorGradients out;
    out.cell = {Matrix::Zero(cell.weights.rows(), cell.weights.cols()), Vector::Zero(cell.bias.size())};
    out.head = {Matrix::Zero(head.outputs(), head.inputs()), Vector::Zero(head.outputs())};
    if (batch.empty())
        return out;
    const double scale = 1.0 / static_cast<double>(batch.size());
    LstmTape tape;
    for (const SequenceSample& s : batch) {
        const LstmState last = lstm_forward(cell, s.sequence, &tape);
        const Vector y = dense_forward(head, last.h);
        if (s.target.size() != y.size())
            throw std::invalid_argument("backprop: target length does not match network output");
        Vector g(y.size());
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            out.loss += loss_value(loss, y[i], s.target[i]);
            g[i] = scale * loss_derivative(loss, y[i], s.target[i]);
        }
        for (Eigen::Index i = 0; i < g.size(); ++i)
            g[i] *= activate_derivative(head.activation, y[i]);
        out.head.weights.noalias() += g * last.h.transpose();
        out.head.bias += g;
        const Vector dh = head.weights.transpose() * g;
        lstm_backward(cell, tape, dh, out.cell);
    }
    out.loss *= scale;
    return out;
}

void AdamState::step(const std::vector<ParamView>& params, const std::vector<GradView>& grads) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adam_step: parameter/gradient tensor count mismatch");
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }
    if (m_.size() != params.size())
        throw std::invalid_argument("adam_step: parameter layout changed");
    ++steps_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].size() != grads[k].size() || params[k].size() != m_[k].size())
            throw std::invalid_argument("adam_step: tensor shape mismatch");
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < params[k].size(); ++i) {
            const double g = grads[k][i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            params[k][i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
        }
    }
}

bool all_finite(const std::vector<ParamView>& params) {
    for (const auto& p : params)
        for (double v : p)
            if (!std::isfinite(v))
                return false;
    return true;
}

std::vector<double> flatten(const std::vector<ParamView>& params) {
    std::vector<double> out;
    for (const auto& p : params)
        out.insert(out.end(), p.begin(), p.end());
    return out;
}

}  // namespace rach::nn
