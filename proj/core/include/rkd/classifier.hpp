#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rkd/rng.hpp"

namespace rkd {

using LogitsVector = std::vector<double>;
using ProbVector = std::vector<double>;

// Feedforward classifier specification. Hidden layers use LeakyReLU with the
// given negative slope; dropout applies after each hidden activation in
// training mode only (inverted scaling). The final layer emits raw logits.
struct ClassifierConfig {
    int input_dim = 0;
    std::vector<int> hidden_layers;
    int num_classes = 0;
    double leaky_slope = 0.1;
    double dropout_rate = 0.3; // in [0, 1)
    std::uint64_t init_seed = 0;

    // layer widths including input and output: [F, hidden..., C]
    std::vector<int> layer_dims() const;
};

// Live-instance accounting for ClassifierParams. Every params object holding
// weight storage counts as one retained parameter set; the peak value is what
// the constant-memory recursion check reads.
long params_live();
long params_peak();
void reset_params_peak();

// One classifier's weights. weights[l] is row-major (out x in) for the l-th
// affine layer, biases[l] has length out. Value type; instances produced by
// init_params / load_checkpoint are registered as retained parameter sets,
// copies register too, moves transfer the registration. Hand-assembled test
// fixtures stay unregistered unless track() is called.
struct ClassifierParams {
    ClassifierConfig config;
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    ClassifierParams() = default;
    ClassifierParams(const ClassifierParams& other);
    ClassifierParams(ClassifierParams&& other) noexcept;
    ClassifierParams& operator=(const ClassifierParams& other);
    ClassifierParams& operator=(ClassifierParams&& other) noexcept;
    ~ClassifierParams();

    bool empty() const { return weights.empty(); }
    // releases storage and drops this instance from the live registry
    void clear();
    // registers this instance with the live counter (idempotent)
    void track();

    std::size_t num_layers() const { return weights.size(); }
    bool same_shape(const ClassifierParams& other) const;
    bool all_finite() const;

private:
    bool tracked_ = false;
};

bool operator==(const ClassifierParams& a, const ClassifierParams& b);

// Per-layer gradient buffers, same shapes as the params they refer to.
struct Gradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    void zero();
    void scale(double factor);
};

Gradients make_gradients(const ClassifierParams& params);

// Adam with bias correction. Hyperparameters default to lr 0.003,
// beta1 0.9, beta2 0.999, epsilon 1e-8, weight decay 0.
struct AdamConfig {
    double lr = 0.003;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
};

struct AdamState {
    AdamConfig config;
    std::vector<std::vector<double>> m_weights, v_weights;
    std::vector<std::vector<double>> m_biases, v_biases;
    long step = 0;
};

AdamState make_adam_state(const ClassifierParams& params, const AdamConfig& config = {});

// In-place Adam update; increments the step counter.
// Throws InvalidInputError on shape mismatch.
void adam_step(ClassifierParams& params, const Gradients& grads, AdamState& state);

// Deterministic init: weights ~ Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
// drawn from config.init_seed, biases zero.
ClassifierParams init_params(const ClassifierConfig& config);

// Forward pass to raw logits. In training mode dropout is applied after each
// hidden activation and rng must be non-null (unless dropout_rate == 0).
// Eval mode is a pure function of (params, features).
LogitsVector forward_logits(const ClassifierParams& params,
                            std::span<const double> features,
                            bool training = false, Rng* rng = nullptr);

// Cached activations from one forward pass, for backprop.
struct ForwardTrace {
    // layer_inputs[l]: vector entering affine layer l (post-dropout)
    std::vector<std::vector<double>> layer_inputs;
    // preacts[l]: affine output of hidden layer l, before LeakyReLU
    std::vector<std::vector<double>> preacts;
    // dropout_scale[l][u]: 0 (dropped) or 1/(1-rate); all-ones in eval mode
    std::vector<std::vector<double>> dropout_scale;
    LogitsVector logits;
};

ForwardTrace forward_trace(const ClassifierParams& params,
                           std::span<const double> features,
                           bool training = false, Rng* rng = nullptr);

// Accumulates dLoss/dparams into grads given dLoss/dlogits for the traced
// sample. Caller owns batch averaging (Gradients::scale).
void backward_accumulate(const ClassifierParams& params, const ForwardTrace& trace,
                         std::span<const double> dloss_dlogits, Gradients& grads);

// softmax(z / T), numerically stable via max subtraction.
// Throws InvalidInputError for T <= 0, empty or non-finite z.
ProbVector temp_softmax(std::span<const double> z, double temperature);

// Cross-entropy against a one-hot label at temperature 1.
// loss = -log softmax(z)[true_class], grad = softmax(z) - onehot(true_class).
struct HardLoss {
    double loss = 0.0;
    std::vector<double> grad;
};

HardLoss hard_loss_and_grad(std::span<const double> z, int true_class);

// Versioned little-endian binary checkpoint; round-trips bit-exact.
void save_checkpoint(const ClassifierParams& params, const std::string& path);
ClassifierParams load_checkpoint(const std::string& path);

} // namespace rkd
