#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cml/numeric.hpp"
#include "cml/rng.hpp"

namespace cml {

// Fully connected ReLU network. The last layer has no activation; its output
// is L2-normalized inside forward(), so every embedding leaving the encoder
// is unit norm.
struct MlpModel {
    std::vector<std::size_t> layer_dims;  // [d_in, hidden..., d_out]
    std::vector<Mat> weights;             // weights[l]: layer_dims[l+1] x layer_dims[l]
    std::vector<Vec> biases;              // biases[l]: layer_dims[l+1]

    std::size_t num_layers() const { return weights.size(); }
    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }
    std::size_t num_params() const;
};

// He-uniform weights from the seeded generator, zero biases.
MlpModel make_mlp(const std::vector<std::size_t>& layer_dims, Rng& rng);

// Activation record for one forward pass. inputs[l] is the input of layer l;
// preacts[l] its pre-activation output; prenorm/prenorm_norm describe the
// vector entering the final L2 normalization.
struct ForwardTape {
    std::vector<Vec> inputs;
    std::vector<Vec> preacts;
    Vec prenorm;
    double prenorm_norm = 0.0;
    Vec embedding;
};

// Returns the unit-norm embedding; fills the tape for backward.
// Throws DimensionMismatchError on bad input size, ZeroVectorError when the
// pre-normalization output collapses.
Vec forward(const MlpModel& model, std::span<const double> x, ForwardTape& tape);
Vec forward(const MlpModel& model, std::span<const double> x);

struct ParamGrads {
    std::vector<Mat> weights;
    std::vector<Vec> biases;

    void add_scaled(const ParamGrads& other, double factor);
};

ParamGrads zero_grads(const MlpModel& model);

// Backpropagates grad_embedding (gradient at the unit-norm output, the
// normalization Jacobian included) through the tape. Accumulates into grads.
// Returns the gradient with respect to the network input.
Vec backward(const MlpModel& model, const ForwardTape& tape,
             std::span<const double> grad_embedding, ParamGrads& grads);

// theta_m <- m_e * theta_m + (1 - m_e) * theta_f
void ema_update(MlpModel& momentum_model, const MlpModel& model, double m_e);

// Adam over a flat parameter vector; bias-corrected, beta1=0.9, beta2=0.999,
// eps=1e-8 unless overridden.
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step_count = 0;
    Vec m;
    Vec v;

    explicit AdamState(std::size_t size = 0, double learning_rate = 1e-3)
        : lr(learning_rate), m(size, 0.0), v(size, 0.0) {}
};

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

// Flat views used to drive a whole model through one AdamState.
Vec flatten_params(const MlpModel& model);
Vec flatten_grads(const ParamGrads& grads);
void unflatten_params(MlpModel& model, std::span<const double> flat);

// Piecewise-constant decay: base_lr * 0.1^(milestones passed).
double lr_schedule(std::size_t epoch, double base_lr, std::span<const std::size_t> milestones);

// Checkpoint format: magic "CMLM", version byte, u32 layer count, u32 dims,
// then f64 weights (row-major) and biases per layer. Little-endian.
void save_checkpoint(const MlpModel& model, const std::string& path);
MlpModel load_checkpoint(const std::string& path);

}  // namespace cml
