#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

#include "densityscan/errors.hpp"
#include "densityscan/model.hpp"

namespace densityscan::model {

using deform::TrainingSample;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

double mean_e0(std::span<const double> y, std::span<const TrainingSample> samples) {
    double e0 = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - samples[i].target;
        e0 += 0.5 * r * r;
    }
    return e0 / static_cast<double>(samples.size());
}

HistoryRecord evaluate(const CnnModel& model, int iteration, std::span<const TrainingSample> train_set,
                       std::span<const TrainingSample> test_set, Thresholds t) {
    HistoryRecord rec;
    rec.iteration = iteration;
    const auto y = predict(model, train_set);
    rec.loss = mean_e0(y, train_set);
    rec.train_acc = accuracy_from_outputs(y, train_set, t);
    rec.test_acc = test_set.empty() ? std::numeric_limits<double>::quiet_NaN() : accuracy(model, test_set, t);
    return rec;
}

}  // namespace

std::string TrainHistory::to_csv() const {
    std::string out = "iteration,loss,train_acc,test_acc\n";
    for (const auto& r : records)
        out += std::to_string(r.iteration) + "," + fmt(r.loss) + "," + fmt(r.train_acc) + "," + fmt(r.test_acc) + "\n";
    return out;
}

std::string TrainHistory::trace_csv() const {
    const bool full = train_loss_trace.size() == loss_trace.size() && !loss_trace.empty();
    std::string out = full ? "iteration,batch_loss,train_loss\n" : "iteration,batch_loss\n";
    for (std::size_t i = 0; i < loss_trace.size(); ++i) {
        out += std::to_string(i + 1) + "," + fmt(loss_trace[i]);
        if (full) out += "," + fmt(train_loss_trace[i]);
        out += "\n";
    }
    return out;
}

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
    if (window == 0) throw InvalidArgument("moving_average window must be positive");
    std::vector<double> out;
    if (values.size() < window) return out;
    out.reserve(values.size() - window + 1);
    double sum = std::accumulate(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(window), 0.0);
    out.push_back(sum / static_cast<double>(window));
    for (std::size_t i = window; i < values.size(); ++i) {
        sum += values[i] - values[i - window];
        out.push_back(sum / static_cast<double>(window));
    }
    return out;
}

TrainResult train(CnnModel model, std::span<const TrainingSample> train_set,
                  std::span<const TrainingSample> test_set, const LossConfig& cfg, const TrainOptions& opt) {
    if (train_set.empty()) throw InvalidArgument("train requires a nonempty dataset");
    if (opt.batch_size == 0) throw InvalidArgument("batch_size must be positive");
    if (opt.iterations < 0) throw InvalidArgument("iterations must be >= 0");
    if (opt.learning_rate < 0.0) throw InvalidArgument("learning_rate must be >= 0");

    TrainResult result;
    std::mt19937_64 rng(opt.rng_seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();
    const std::size_t batch_size = std::min(opt.batch_size, train_set.size());
    std::vector<TrainingSample> batch;
    batch.reserve(batch_size);

    if (opt.eval_every > 0) result.history.records.push_back(evaluate(model, 0, train_set, test_set, opt.thresholds));

    for (int it = 1; it <= opt.iterations; ++it) {
        batch.clear();
        while (batch.size() < batch_size) {
            if (cursor == order.size()) {
                for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
                cursor = 0;
            }
            batch.push_back(train_set[order[cursor++]]);
        }

        LossAndGrad lg = loss_and_grad(model, batch, cfg);
        const double scale = 1.0 / static_cast<double>(batch.size());
        const double objective = lg.loss * scale;
        if (!std::isfinite(objective)) throw DivergenceError(it, objective);
        result.history.loss_trace.push_back(objective);

        const double step = opt.learning_rate * scale;
        for (std::size_t p = 0; p < model.params.size(); ++p) {
            auto w = model.params[p].data();
            auto g = lg.grads[p].data();
            for (std::size_t k = 0; k < w.size(); ++k) w[k] -= step * g[k];
        }

        if (opt.trace_train_loss) {
            const double full = mean_e0(predict(model, train_set), train_set);
            if (!std::isfinite(full)) throw DivergenceError(it, full);
            result.history.train_loss_trace.push_back(full);
        }

        if ((opt.eval_every > 0 && it % opt.eval_every == 0) || it == opt.iterations) {
            auto rec = evaluate(model, it, train_set, test_set, opt.thresholds);
            if (!std::isfinite(rec.loss)) throw DivergenceError(it, rec.loss);
            result.history.records.push_back(rec);
        }
    }
    model.thresholds = opt.thresholds;
    result.model = std::move(model);
    return result;
}

}  // namespace densityscan::model
