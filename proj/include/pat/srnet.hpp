#pragma once
// Three-branch convolutional update network for the unrolled joint
// reconstruction: feature extraction per input (current pressure image,
// negative fidelity gradient, current speed image), batch-normalized fusion,
// and two residual reconstruction heads with a final ReLU. Includes exact
// reverse-mode gradients, Adam updates, greedy stage-wise training, and the
// unrolled reconstruction loop.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pat/adjoint.hpp"
#include "pat/field.hpp"
#include "pat/phantom.hpp"
#include "pat/wave.hpp"

namespace pat {

// 3x3 kernels, stride 1, zero padding 1.
struct ConvParams {
    int in_ch = 0;
    int out_ch = 0;
    std::vector<double> kernel;  // out_ch * in_ch * 3 * 3
    std::vector<double> bias;    // out_ch
};

ConvParams make_conv(int in_ch, int out_ch);

struct BatchNormParams {
    int channels = 0;
    std::vector<double> gamma, beta;
    std::vector<double> running_mean, running_var;
    double momentum = 0.9;
    double eps = 1e-5;
};

BatchNormParams make_batch_norm(int channels);

// Channel plan: extraction 1->32->32 per branch, fusion BN(96) then
// 96->64->32, each head 32->16 -> BN(16) -> 16->1 plus its skip input.
struct SRNetParams {
    std::array<std::array<ConvParams, 2>, 3> extract;  // [branch][layer]
    BatchNormParams fuse_bn;
    ConvParams fuse1, fuse2;
    struct Head {
        ConvParams conv1;
        BatchNormParams bn;
        ConvParams conv2;
    };
    Head head_p0, head_c;
    double c_scale = 1.0;  // speed channel divided by this before extraction
};

// Zero parameters, identity batch norm; the network reduces to
// out = ReLU(skip) in inference mode.
SRNetParams make_zero_srnet_params();
// He-style fan-in uniform kernels, zero biases, identity batch norm.
SRNetParams make_srnet_params(std::uint64_t seed);

// Same-shaped container holding d(loss)/d(parameter); running statistics
// slots are unused.
using SRNetGrads = SRNetParams;

struct TensorEntry {
    std::string name;
    std::vector<double>* data;
    std::vector<std::size_t> dims;
};
std::vector<TensorEntry> all_tensors(SRNetParams& p);        // includes running stats
std::vector<TensorEntry> trainable_tensors(SRNetParams& p);  // kernels, biases, gamma, beta

enum class NetMode { train, infer };

// Per-layer batch statistics produced by a training-mode pass; fold into the
// running averages with update_running_stats.
struct BnBatchStats {
    std::vector<double> mean, var;
};
struct SrnetBatchStats {
    BnBatchStats fuse, head_p0, head_c;
};
void update_running_stats(SRNetParams& params, const SrnetBatchStats& stats);

// Batch forward pass; all three input batches share one grid and size.
// Training mode normalizes with batch statistics and requires batch >= 2;
// inference uses the stored running statistics and is batch-composition
// independent. Both outputs are elementwise >= 0.
std::pair<std::vector<ScalarField2D>, std::vector<ScalarField2D>> srnet_forward(
    const std::vector<ScalarField2D>& p0_k, const std::vector<ScalarField2D>& neg_grad,
    const std::vector<ScalarField2D>& c_k, const SRNetParams& params, NetMode mode,
    SrnetBatchStats* stats_out = nullptr);

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 16;
    int epochs = 5;
    double c_loss_weight = 1.0 / 1000.0;
    double c_scale = 1.0;

    void validate() const;
};

// mean|dp0| + c_loss_weight * mean|dc|, means over batch and pixels.
double srnet_loss(const std::vector<ScalarField2D>& pred_p0,
                  const std::vector<ScalarField2D>& pred_c,
                  const std::vector<ScalarField2D>& true_p0,
                  const std::vector<ScalarField2D>& true_c, const TrainConfig& cfg);

struct BackwardResult {
    double loss = 0.0;
    SRNetGrads grads;
    SrnetBatchStats stats;
};

// Training-mode forward plus exact reverse-mode gradients of srnet_loss with
// respect to every trainable parameter (through the batch statistics).
BackwardResult srnet_backward(const std::vector<ScalarField2D>& p0_k,
                              const std::vector<ScalarField2D>& neg_grad,
                              const std::vector<ScalarField2D>& c_k,
                              const std::vector<ScalarField2D>& true_p0,
                              const std::vector<ScalarField2D>& true_c,
                              const SRNetParams& params, const TrainConfig& cfg);

struct AdamState {
    SRNetGrads m, v;
};
AdamState make_adam_state(const SRNetParams& params);

// Standard bias-corrected Adam; t counts steps from 1.
void adam_step(SRNetParams& params, SRNetGrads& grads, AdamState& state, int t,
               const TrainConfig& cfg);

struct StageWeights {
    std::vector<SRNetParams> stages;

    int k_max() const { return static_cast<int>(stages.size()); }
};

// Inputs to stage k of the unrolled loop for one measurement: the iterate
// after the frozen prior stages plus the fresh fidelity gradient there.
struct StageInputs {
    ScalarField2D p0, neg_grad, c;
};
StageInputs compute_stage_inputs(const SensorData& g, const std::vector<SRNetParams>& prior,
                                 const SimConfig& sim, const SensorArray& sensors);

struct EpochLog {
    std::vector<double> epoch_mean_loss;
};

// Greedy stage-wise training: stage-k inputs come from running the frozen
// stages 0..k-1 from the standard start (p0 = 0, c = 1500 m/s); minimizes
// srnet_loss with Adam over minibatches for the configured epochs.
SRNetParams train_stage(int k, const DatasetManifest& dataset,
                        const StageWeights& prior_stages, const TrainConfig& cfg,
                        std::uint64_t seed, EpochLog* log = nullptr);

struct DlResult {
    ScalarField2D p0;
    ScalarField2D c;
    std::vector<std::pair<ScalarField2D, ScalarField2D>> iterates;  // after each stage
};

// Runs exactly k_max unrolled iterations from p0 = 0, c = 1500 m/s,
// recomputing the pressure-fidelity gradient at each stage's iterate. The
// speed gradient is never needed. Speeds are floored at 1 m/s when building
// each stage's forward operator.
DlResult reconstruct_dl(const SensorData& g, const StageWeights& weights, const SimConfig& sim,
                        const SensorArray& sensors);

// One file per stage: "PATW" magic, a text header with the architecture
// constants, then named little-endian binary64 records.
void write_stage_weights(const std::string& path, const SRNetParams& params);
SRNetParams read_stage_weights(const std::string& path);

// weights-manifest.txt in dir lists the per-stage files in order.
void write_stage_manifest(const std::string& dir, const StageWeights& weights);
StageWeights load_stage_weights(const std::string& dir);

}  // namespace pat
