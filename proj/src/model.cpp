#include "densityscan/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "densityscan/errors.hpp"
#include "densityscan/finite_diff.hpp"
#include "densityscan/layers.hpp"
#include "densityscan/parallel.hpp"

namespace densityscan::model {

using deform::TrainingSample;

std::string to_string(Variant v) {
    switch (v) {
        case Variant::C1: return "C1";
        case Variant::C2: return "C2";
        case Variant::C3: return "C3";
    }
    return "?";
}

Variant parse_variant(const std::string& s) {
    if (s == "C1" || s == "c1") return Variant::C1;
    if (s == "C2" || s == "c2") return Variant::C2;
    if (s == "C3" || s == "c3") return Variant::C3;
    throw InvalidArgument("unknown architecture \"" + s + "\" (expected C1, C2 or C3)");
}

Architecture Architecture::make(Variant v, std::size_t f1, std::size_t f2, std::size_t f3) {
    using K = LayerSpec::Kind;
    Architecture a;
    a.variant = v;
    a.layers = {{K::Conv, f1, 5}, {K::Pool}, {K::Conv, f2, 3}, {K::Pool}, {K::Conv, f3, 3}};
    if (v == Variant::C2) a.layers.push_back({K::Pool});
    return a;
}

std::vector<std::size_t> Architecture::feature_dims() const {
    std::vector<std::size_t> d{1, deform::kPatchSize, deform::kPatchSize};
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const std::string where = "layer " + std::to_string(i);
        if (l.kind == LayerSpec::Kind::Conv) {
            if (l.filters == 0 || l.kernel == 0) throw ShapeError(where, "conv layer needs filters and kernel > 0");
            if (l.kernel > d[1]) throw ShapeError(where + ".H", "kernel larger than feature map");
            d = {l.filters, d[1] - l.kernel + 1, d[2] - l.kernel + 1};
        } else {
            if (d[1] % 2) throw ShapeError(where + ".H", "pool over odd height " + std::to_string(d[1]));
            if (d[2] % 2) throw ShapeError(where + ".W", "pool over odd width " + std::to_string(d[2]));
            d = {d[0], d[1] / 2, d[2] / 2};
        }
    }
    return d;
}

std::size_t Architecture::dense_inputs() const { return numerics::element_count(feature_dims()); }

std::size_t CnnModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.size();
    return n;
}

std::vector<double> CnnModel::flat_params() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& p : params) flat.insert(flat.end(), p.data().begin(), p.data().end());
    return flat;
}

void CnnModel::set_flat_params(std::span<const double> flat) {
    if (flat.size() != parameter_count())
        throw ShapeError("params", "expected " + std::to_string(parameter_count()) + " parameters, got " +
                                       std::to_string(flat.size()));
    std::size_t off = 0;
    for (auto& p : params) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), p.size(), p.data().begin());
        off += p.size();
    }
}

namespace {

std::vector<Tensor> zero_params(const Architecture& arch) {
    std::vector<Tensor> params;
    std::size_t channels = 1;
    for (const auto& l : arch.layers) {
        if (l.kind != LayerSpec::Kind::Conv) continue;
        params.emplace_back(std::vector<std::size_t>{l.filters, channels, l.kernel, l.kernel});
        params.emplace_back(std::vector<std::size_t>{l.filters});
        channels = l.filters;
    }
    params.emplace_back(std::vector<std::size_t>{1, arch.dense_inputs()});
    params.emplace_back(std::vector<std::size_t>{1});
    return params;
}

double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

CnnModel zero_model(const Architecture& arch) {
    CnnModel m;
    m.arch = arch;
    m.params = zero_params(arch);
    return m;
}

CnnModel init_model(const Architecture& arch, std::uint64_t rng_seed) {
    CnnModel m = zero_model(arch);
    std::mt19937_64 rng(rng_seed);
    for (std::size_t i = 0; i + 1 < m.params.size(); i += 2) {
        Tensor& w = m.params[i];
        double fan_in = 0.0, fan_out = 0.0;
        if (w.rank() == 4) {
            const double area = static_cast<double>(w.dim(2) * w.dim(3));
            fan_in = static_cast<double>(w.dim(1)) * area;
            fan_out = static_cast<double>(w.dim(0)) * area;
        } else {
            fan_in = static_cast<double>(w.dim(1));
            fan_out = static_cast<double>(w.dim(0));
        }
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& v : w.data()) v = limit * (2.0 * unit_draw(rng) - 1.0);
    }
    return m;
}

CnnModel random_model(const Architecture& arch, std::uint64_t rng_seed, double bias_range) {
    CnnModel m = init_model(arch, rng_seed);
    std::mt19937_64 rng(rng_seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t i = 1; i < m.params.size(); i += 2)
        for (double& v : m.params[i].data()) v = bias_range * (2.0 * unit_draw(rng) - 1.0);
    return m;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

struct Trace {
    std::vector<Tensor> inputs;                    // input of each layer
    std::vector<Tensor> pre;                       // conv pre-activations (empty for pools)
    std::vector<std::vector<std::size_t>> argmax;  // pool routing (empty for convs)
    Tensor features;
};

void check_input(const Tensor& patch) {
    const std::vector<std::size_t> want{1, deform::kPatchSize, deform::kPatchSize};
    if (patch.dims() != want)
        throw ShapeError("patch", "model input must be [1,32,32], got " + patch.shape_string());
}

double run_forward(const CnnModel& model, const Tensor& patch, Trace* trace) {
    check_input(patch);
    Tensor x = patch;
    std::size_t p = 0;
    for (const auto& l : model.arch.layers) {
        if (l.kind == LayerSpec::Kind::Conv) {
            Tensor pre = numerics::conv2d(x, model.params[p], model.params[p + 1].data());
            p += 2;
            Tensor act = numerics::relu(pre);
            if (trace) {
                trace->inputs.push_back(std::move(x));
                trace->pre.push_back(std::move(pre));
                trace->argmax.emplace_back();
            }
            x = std::move(act);
        } else {
            auto pooled = numerics::maxpool2(x);
            if (trace) {
                trace->inputs.push_back(std::move(x));
                trace->pre.emplace_back();
                trace->argmax.push_back(std::move(pooled.argmax));
            }
            x = std::move(pooled.output);
        }
    }
    const Tensor& w = model.params[p];
    if (w.size() != x.size())
        throw ShapeError("dense", "dense layer expects " + std::to_string(w.size()) + " inputs, got " +
                                      std::to_string(x.size()));
    double y = model.params[p + 1][0];
    for (std::size_t i = 0; i < x.size(); ++i) y += w[i] * x[i];
    if (trace) trace->features = std::move(x);
    return y;
}

}  // namespace

double forward(const CnnModel& model, const Tensor& patch) { return run_forward(model, patch, nullptr); }

OutputGrad forward_backward(const CnnModel& model, const Tensor& patch) {
    Trace tr;
    OutputGrad out;
    out.y = run_forward(model, patch, &tr);
    out.grads.reserve(model.params.size());
    for (const auto& p : model.params) out.grads.emplace_back(p.dims());

    const std::size_t dense = model.params.size() - 2;
    const Tensor& w = model.params[dense];
    for (std::size_t i = 0; i < tr.features.size(); ++i) out.grads[dense][i] = tr.features[i];
    out.grads[dense + 1][0] = 1.0;

    Tensor g(tr.features.dims());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = w[i];

    std::size_t p = dense;
    for (std::size_t li = model.arch.layers.size(); li-- > 0;) {
        if (model.arch.layers[li].kind == LayerSpec::Kind::Conv) {
            p -= 2;
            const Tensor gpre = numerics::relu_backward(tr.pre[li], g);
            auto cg = numerics::conv2d_backward(tr.inputs[li], model.params[p], gpre);
            out.grads[p] = std::move(cg.kernels);
            const std::size_t nb = cg.bias.size();
            out.grads[p + 1] = Tensor({nb}, std::move(cg.bias));
            g = std::move(cg.input);
        } else {
            g = numerics::maxpool2_backward(tr.inputs[li].dims(), tr.argmax[li], g);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Losses

LossConfig LossConfig::for_variant(Variant v) {
    LossConfig c;
    if (v == Variant::C3) {
        c.lambda1 = 0.1;
        c.lambda2 = 0.1;
    }
    return c;
}

namespace {

void require_nonempty(std::span<const TrainingSample> batch) {
    if (batch.empty()) throw InvalidArgument("loss requires a nonempty batch");
}

struct TangentTargets {
    double scale;
    double shift2;
};

TangentTargets tangent_targets_for(const TrainingSample& s, const LossConfig& cfg, std::size_t index) {
    if (!s.tangent_scale)
        throw InvalidArgument("sample " + std::to_string(index) + " lacks the scale tangent target");
    if (cfg.per_sample_beta) {
        if (!s.tangent_shift2)
            throw InvalidArgument("sample " + std::to_string(index) + " lacks the shift tangent target");
        return {*s.tangent_scale, *s.tangent_shift2};
    }
    return {*s.tangent_scale, -cfg.beta_ref * s.target};
}

// The four deformed copies used by the network-side derivative estimates.
struct Deformed {
    Tensor scale_up, scale_down, shift_up, shift_down;
};

Deformed deform_for_tangent(const Tensor& patch, double h) {
    return {deform::apply_scale(patch, h), deform::apply_scale(patch, -h),
            deform::apply_shift(patch, h, deform::Axis::X), deform::apply_shift(patch, -h, deform::Axis::X)};
}

void validate_cfg(const LossConfig& cfg) {
    if (!(cfg.fd_epsilon > 0.0)) throw InvalidArgument("fd_epsilon must be positive");
    if (cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0) throw InvalidArgument("lambda1 and lambda2 must be >= 0");
}

void accumulate(std::vector<Tensor>& into, const std::vector<Tensor>& g, double coeff) {
    for (std::size_t i = 0; i < into.size(); ++i) {
        auto dst = into[i].data();
        auto src = g[i].data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += coeff * src[k];
    }
}

}  // namespace

double loss_e0(const CnnModel& model, std::span<const TrainingSample> batch) {
    require_nonempty(batch);
    std::vector<double> y(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) { y[i] = forward(model, batch[i].patch); });
    double sum = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double r = y[i] - batch[i].target;
        sum += r * r;
    }
    return 0.5 * sum;
}

double loss_tangent(const CnnModel& model, std::span<const TrainingSample> batch, const LossConfig& cfg) {
    require_nonempty(batch);
    validate_cfg(cfg);
    if (!cfg.tangent_enabled()) return loss_e0(model, batch);
    std::vector<TangentTargets> targets;
    targets.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) targets.push_back(tangent_targets_for(batch[i], cfg, i));

    const double e0 = loss_e0(model, batch);
    const double h = cfg.fd_epsilon;
    std::vector<double> p1(batch.size()), p2(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) {
        const Tensor& x = batch[i].patch;
        const Deformed d = deform_for_tangent(x, h);
        const double y0 = forward(model, x);
        const double dy1 = (forward(model, d.scale_up) - forward(model, d.scale_down)) / (2.0 * h);
        const double d2y2 = (forward(model, d.shift_up) - 2.0 * y0 + forward(model, d.shift_down)) / (h * h);
        const double r1 = dy1 - targets[i].scale;
        const double r2 = d2y2 - targets[i].shift2;
        p1[i] = r1 * r1;
        p2[i] = r2 * r2;
    });
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        s1 += p1[i];
        s2 += p2[i];
    }
    return e0 + 0.5 * cfg.lambda1 * s1 + 0.5 * cfg.lambda2 * s2;
}

LossAndGrad loss_and_grad(const CnnModel& model, std::span<const TrainingSample> batch, const LossConfig& cfg) {
    require_nonempty(batch);
    validate_cfg(cfg);
    const bool tangent = cfg.tangent_enabled();
    std::vector<TangentTargets> targets;
    if (tangent) {
        targets.reserve(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) targets.push_back(tangent_targets_for(batch[i], cfg, i));
    }

    struct PerSample {
        double loss = 0.0;
        std::vector<Tensor> grads;
    };
    std::vector<PerSample> per(batch.size());
    const double h = cfg.fd_epsilon;
    parallel_for(batch.size(), [&](std::size_t i) {
        const TrainingSample& s = batch[i];
        OutputGrad g0 = forward_backward(model, s.patch);
        const double r0 = g0.y - s.target;
        PerSample& out = per[i];
        if (!tangent) {
            out.loss = 0.5 * r0 * r0;
            for (auto& t : g0.grads)
                for (double& v : t.data()) v *= r0;
            out.grads = std::move(g0.grads);
            return;
        }
        const Deformed d = deform_for_tangent(s.patch, h);
        const OutputGrad su = forward_backward(model, d.scale_up);
        const OutputGrad sd = forward_backward(model, d.scale_down);
        const OutputGrad tu = forward_backward(model, d.shift_up);
        const OutputGrad td = forward_backward(model, d.shift_down);
        const double r1 = (su.y - sd.y) / (2.0 * h) - targets[i].scale;
        const double r2 = (tu.y - 2.0 * g0.y + td.y) / (h * h) - targets[i].shift2;
        out.loss = 0.5 * r0 * r0 + 0.5 * cfg.lambda1 * r1 * r1 + 0.5 * cfg.lambda2 * r2 * r2;

        const double c1 = cfg.lambda1 * r1 / (2.0 * h);
        const double c2 = cfg.lambda2 * r2 / (h * h);
        out.grads.reserve(g0.grads.size());
        for (const auto& t : g0.grads) out.grads.emplace_back(t.dims());
        accumulate(out.grads, g0.grads, r0 - 2.0 * c2);
        accumulate(out.grads, su.grads, c1);
        accumulate(out.grads, sd.grads, -c1);
        accumulate(out.grads, tu.grads, c2);
        accumulate(out.grads, td.grads, c2);
    });

    LossAndGrad result;
    for (const auto& p : model.params) result.grads.emplace_back(p.dims());
    for (const auto& ps : per) {
        result.loss += ps.loss;
        accumulate(result.grads, ps.grads, 1.0);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<double> predict(const CnnModel& model, std::span<const TrainingSample> samples) {
    std::vector<double> y(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) { y[i] = forward(model, samples[i].patch); });
    return y;
}

double accuracy_from_outputs(std::span<const double> outputs, std::span<const TrainingSample> samples,
                             Thresholds t) {
    if (!(t.t_neg < t.t_pos)) throw InvalidArgument("accuracy thresholds require t_neg < t_pos");
    std::size_t evaluated = 0, correct = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = samples[i].target;
        const double y = outputs[i];
        if (f >= t.t_pos) {
            ++evaluated;
            if (y >= t.t_pos) ++correct;
        } else if (f <= t.t_neg) {
            ++evaluated;
            if (y <= t.t_neg) ++correct;
        }
    }
    if (evaluated == 0) throw InvalidArgument("accuracy undefined: every sample lies in the confusion band");
    return static_cast<double>(correct) / static_cast<double>(evaluated);
}

double accuracy(const CnnModel& model, std::span<const TrainingSample> samples, Thresholds t) {
    if (!(t.t_neg < t.t_pos)) throw InvalidArgument("accuracy thresholds require t_neg < t_pos");
    return accuracy_from_outputs(predict(model, samples), samples, t);
}

// ---------------------------------------------------------------------------
// Gradient check

namespace {

constexpr double kGradRetryThreshold = 1e-5;

std::vector<double> flatten(const std::vector<Tensor>& ts) {
    std::vector<double> flat;
    for (const auto& t : ts) flat.insert(flat.end(), t.data().begin(), t.data().end());
    return flat;
}

}  // namespace

GradCheckReport grad_check(const CnnModel& model, std::span<const TrainingSample> batch, const LossConfig& cfg,
                           double h, double abs_floor) {
    GradCheckReport report;
    report.parameters = model.parameter_count();
    const auto x0 = model.flat_params();
    CnnModel probe = model;

    // Central differences at h; a parameter whose step straddles a ReLU kink is retried at h/10 and
    // h/100 and keeps its smallest error.
    auto compare = [&](const std::vector<double>& analytic, const numerics::ScalarFn& f) {
        const auto numeric = numerics::finite_diff(f, x0, h);
        double worst = 0.0;
        std::vector<double> x(x0.begin(), x0.end());
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            auto err = [&](double n) {
                return std::abs(analytic[i] - n) / std::max({std::abs(analytic[i]), std::abs(n), abs_floor});
            };
            double e = err(numeric[i]);
            if (e > kGradRetryThreshold) {
                ++report.kink_retries;
                for (double hh : {h / 10.0, h / 100.0}) {
                    x[i] = x0[i] + hh;
                    const double fp = f(x);
                    x[i] = x0[i] - hh;
                    const double fm = f(x);
                    x[i] = x0[i];
                    e = std::min(e, err((fp - fm) / (2.0 * hh)));
                }
            }
            worst = std::max(worst, e);
        }
        return worst;
    };

    LossConfig plain = cfg;
    plain.lambda1 = plain.lambda2 = 0.0;
    const auto a0 = flatten(loss_and_grad(model, batch, plain).grads);
    report.max_rel_error_e0 = compare(a0, [&](std::span<const double> w) {
        probe.set_flat_params(w);
        return loss_e0(probe, batch);
    });
    for (double v : a0) report.max_abs_grad_e0 = std::max(report.max_abs_grad_e0, std::abs(v));

    if (cfg.tangent_enabled()) {
        const auto at = flatten(loss_and_grad(model, batch, cfg).grads);
        report.max_rel_error_tangent = compare(at, [&](std::span<const double> w) {
            probe.set_flat_params(w);
            return loss_tangent(probe, batch, cfg);
        });
    } else {
        report.max_rel_error_tangent = report.max_rel_error_e0;
    }
    return report;
}

}  // namespace densityscan::model
