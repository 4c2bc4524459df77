#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "densityscan/deform.hpp"
#include "densityscan/density.hpp"
#include "densityscan/tensor.hpp"

namespace densityscan::model {

using numerics::Tensor;

/// C1: conv, pool, conv, pool, conv, dense. C2: C1 plus a pool before dense.
/// C3: C1's stack trained with the tangent-propagation penalty.
enum class Variant : std::uint8_t { C1 = 1, C2 = 2, C3 = 3 };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct LayerSpec {
    enum class Kind : std::uint8_t { Conv = 0, Pool = 1 } kind = Kind::Conv;
    std::size_t filters = 0;  // conv only
    std::size_t kernel = 0;   // conv only, square
    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Architecture {
    Variant variant = Variant::C1;
    std::vector<LayerSpec> layers;  // followed by a dense layer to one scalar; ReLU after every conv

    /// Default filter counts 8/16/32 with 5x5, 3x3, 3x3 kernels.
    static Architecture make(Variant v, std::size_t f1 = 8, std::size_t f2 = 16, std::size_t f3 = 32);

    /// [C, H, W] after the conv/pool stack for a 32x32 input; throws ShapeError if a layer does not fit.
    std::vector<std::size_t> feature_dims() const;
    std::size_t dense_inputs() const;
    friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct Thresholds {
    double t_pos = 0.5;
    double t_neg = 0.1;
    friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

/// Parameters are ordered: per conv layer [kernels, bias], then dense weights [1, n], dense bias [1].
struct CnnModel {
    Architecture arch;
    std::vector<Tensor> params;
    double target_scale = density::kTargetScale;
    Thresholds thresholds;

    std::size_t parameter_count() const;
    std::vector<double> flat_params() const;
    void set_flat_params(std::span<const double> flat);
    friend bool operator==(const CnnModel&, const CnnModel&) = default;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
CnnModel init_model(const Architecture& arch, std::uint64_t rng_seed);
/// init_model with biases also drawn uniformly from +-bias_range. Zero biases leave units exactly on
/// the ReLU kink wherever their inputs are dead, which finite differences cannot resolve.
CnnModel random_model(const Architecture& arch, std::uint64_t rng_seed, double bias_range = 0.1);
/// Every parameter zero.
CnnModel zero_model(const Architecture& arch);

/// Raw scalar output for a [1, 32, 32] patch.
double forward(const CnnModel& model, const Tensor& patch);

/// Output and gradient of the output w.r.t. every parameter (same layout as CnnModel::params).
struct OutputGrad {
    double y = 0.0;
    std::vector<Tensor> grads;
};
OutputGrad forward_backward(const CnnModel& model, const Tensor& patch);

struct LossConfig {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double beta_ref = density::kCanonicalBeta;
    double fd_epsilon = 0.05;
    bool per_sample_beta = true;  // use each sample's stored d2f/d eps2^2; else -beta_ref * f

    bool tangent_enabled() const { return lambda1 != 0.0 || lambda2 != 0.0; }
    static LossConfig for_variant(Variant v);
};

/// (1/2) sum (y - f)^2.
double loss_e0(const CnnModel& model, std::span<const deform::TrainingSample> batch);

/// E0 + (l1/2) sum (dy/de1 - f)^2 + (l2/2) sum (d2y/de2^2 + beta f)^2, with the network-side
/// derivatives taken by central differences of the output under apply_scale / apply_shift.
double loss_tangent(const CnnModel& model, std::span<const deform::TrainingSample> batch,
                    const LossConfig& cfg);

struct LossAndGrad {
    double loss = 0.0;
    std::vector<Tensor> grads;
};
/// Loss and its exact gradient w.r.t. the parameters. With the penalty disabled this is E0.
LossAndGrad loss_and_grad(const CnnModel& model, std::span<const deform::TrainingSample> batch,
                          const LossConfig& cfg);

/// Fraction of non-confusing samples classified consistently: (target >= t_pos and y >= t_pos) or
/// (target <= t_neg and y <= t_neg). Samples with t_neg < target < t_pos are excluded.
double accuracy(const CnnModel& model, std::span<const deform::TrainingSample> samples, Thresholds t);
/// Same rule applied to precomputed outputs.
double accuracy_from_outputs(std::span<const double> outputs, std::span<const deform::TrainingSample> samples,
                             Thresholds t);

std::vector<double> predict(const CnnModel& model, std::span<const deform::TrainingSample> samples);

struct TrainOptions {
    double learning_rate = 0.01;
    std::size_t batch_size = 32;
    int iterations = 500;
    std::uint64_t rng_seed = 0;
    int eval_every = 100;
    Thresholds thresholds;
    bool trace_train_loss = false;  // mean E0 over the whole training set after every update
};

struct HistoryRecord {
    int iteration = 0;
    double loss = 0.0;       // mean per-sample E0 over the training set
    double train_acc = 0.0;
    double test_acc = 0.0;   // NaN when no test set was given
};

struct TrainHistory {
    std::vector<HistoryRecord> records;
    std::vector<double> loss_trace;  // minibatch objective per iteration, before the update
    std::vector<double> train_loss_trace;  // optional, see TrainOptions::trace_train_loss

    std::string to_csv() const;
    std::string trace_csv() const;
};

struct TrainResult {
    CnnModel model;
    TrainHistory history;
};

/// Minibatch SGD on the batch-mean objective. Epochs are reshuffled from rng_seed; throws
/// DivergenceError when the objective becomes non-finite.
TrainResult train(CnnModel model, std::span<const deform::TrainingSample> train_set,
                  std::span<const deform::TrainingSample> test_set, const LossConfig& cfg,
                  const TrainOptions& opt);

/// Trailing moving average.
std::vector<double> moving_average(std::span<const double> values, std::size_t window);

struct GradCheckReport {
    std::size_t parameters = 0;
    double max_rel_error_e0 = 0.0;
    double max_rel_error_tangent = 0.0;
    double max_abs_grad_e0 = 0.0;
    std::size_t kink_retries = 0;  // parameters re-probed at smaller steps
};

/// Analytic gradients of loss_e0 and loss_tangent against central finite differences of the
/// loss w.r.t. every parameter. Relative error uses max(|a|, |n|, abs_floor) as denominator.
/// Parameters above 1e-5 at step h are re-probed at h/10 and h/100 (kink crossings).
GradCheckReport grad_check(const CnnModel& model, std::span<const deform::TrainingSample> batch,
                           const LossConfig& cfg, double h = 1e-5, double abs_floor = 1e-7);

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const CnnModel& model);
CnnModel decode_checkpoint(const std::string& bytes, const std::string& source = "checkpoint");
void save_checkpoint(const std::string& path, const CnnModel& model);
CnnModel load_checkpoint(const std::string& path);

}  // namespace densityscan::model
