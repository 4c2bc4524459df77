#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>

#include <CLI11.hpp>
#include <json.hpp>

#include "binary_io.hpp"
#include "densityscan/cli.hpp"
#include "densityscan/dataio.hpp"
#include "densityscan/deform.hpp"
#include "densityscan/density.hpp"
#include "densityscan/detect.hpp"
#include "densityscan/errors.hpp"
#include "densityscan/model.hpp"
#include "densityscan/parallel.hpp"
#include "densityscan/search.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace densityscan {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

/// Bad flags or unusable inputs (exit 2).
class UsageError : public Error {
public:
    using Error::Error;
};

void require_dir(const std::string& dir, const char* what) {
    if (!fs::is_directory(dir)) throw UsageError(std::string(what) + " directory does not exist: " + dir);
}

void require_file(const std::string& path, const char* what) {
    if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path);
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

bool on_off(const std::string& v) { return v == "on"; }

class RunManifest {
public:
    explicit RunManifest(std::string command) : start_(std::chrono::steady_clock::now()) {
        doc_["command"] = std::move(command);
        doc_["parameters"] = json::object();
        doc_["seeds"] = json::object();
        doc_["inputs"] = json::object();
        doc_["outputs"] = json::array();
        doc_["formats"] = json::object();
    }

    json& params() { return doc_["parameters"]; }
    json& seeds() { return doc_["seeds"]; }
    json& inputs() { return doc_["inputs"]; }
    json& formats() { return doc_["formats"]; }
    void output(const std::string& path) { doc_["outputs"].push_back(path); }
    json& extra(const std::string& key) { return doc_[key]; }

    void write(const std::string& dir) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        doc_["threads"] = worker_count();
        doc_["duration_s"] = secs;
        detail::write_file(join(dir, "manifest.json"), doc_.dump(2) + "\n");
    }

private:
    json doc_;
    std::chrono::steady_clock::time_point start_;
};

void write_text(RunManifest& m, const std::string& path, const std::string& text) {
    detail::write_file(path, text);
    m.output(path);
}

// gen --------------------------------------------------------------------------------------

struct GenArgs {
    std::string mode = "synthetic";
    int count = 400;
    std::string out;
    std::uint64_t seed = 0;
    int scale_variants = 2;
    int axis_shifts = -1;
    int corner_shifts = -1;
    int negative_every = 4;
    double noise = 0.05;
    std::string tangents = "on";
    std::string seeds_dir;
    std::string emit_seeds;
};

std::vector<deform::Seed> load_seed_dir(const std::string& dir, int limit) {
    require_dir(dir, "seeds");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (limit >= 0 && static_cast<std::size_t>(limit) < files.size()) files.resize(static_cast<std::size_t>(limit));

    std::vector<deform::Seed> seeds;
    seeds.reserve(files.size());
    for (const auto& f : files) {
        const auto img = dataio::load_image(f.string());
        if (img.width != static_cast<int>(deform::kPatchSize) || img.height != static_cast<int>(deform::kPatchSize))
            throw UsageError(f.string() + ": seed patches must be 32x32");
        deform::Seed s;
        s.patch = dataio::to_tensor(img);
        auto objd = f;
        objd.replace_extension(".objdist");
        if (fs::exists(objd)) s.objects = density::load_objdist(objd.string());
        seeds.push_back(std::move(s));
    }
    return seeds;
}

void emit_seed_files(const std::string& dir, const std::vector<deform::Seed>& seeds) {
    require_dir(dir, "emit-seeds");
    char name[32];
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        const auto& p = seeds[i].patch;
        dataio::ImageGray img(static_cast<int>(p.dims()[2]), static_cast<int>(p.dims()[1]));
        std::copy(p.data().begin(), p.data().end(), img.pixels.begin());
        std::snprintf(name, sizeof name, "seed_%04zu", i);
        dataio::save_pgm(join(dir, std::string(name) + ".pgm"), img);
        if (!seeds[i].objects.empty()) density::save_objdist(join(dir, std::string(name) + ".objdist"), seeds[i].objects);
    }
}

int cmd_gen(const GenArgs& a) {
    require_dir(a.out, "output");
    RunManifest m("gen");

    std::vector<deform::Seed> seeds;
    if (a.mode == "synthetic") {
        if (a.count < 0) throw UsageError("--count must be >= 0");
        if (a.negative_every < 0) throw UsageError("--negative-every must be >= 0");
        seeds = deform::synth_seeds(static_cast<std::size_t>(a.count), a.seed,
                                    static_cast<std::size_t>(a.negative_every), a.noise);
        if (!a.emit_seeds.empty()) emit_seed_files(a.emit_seeds, seeds);
    } else {
        if (a.seeds_dir.empty()) throw UsageError("--mode from-seeds requires --seeds");
        seeds = load_seed_dir(a.seeds_dir, a.count);
        m.inputs()["seeds"] = a.seeds_dir;
    }

    deform::GenRecipe recipe;
    recipe.scale_variants = a.scale_variants;
    recipe.axis_shifts = a.axis_shifts >= 0 ? a.axis_shifts : static_cast<int>(seeds.size());
    recipe.corner_shifts = a.corner_shifts >= 0 ? a.corner_shifts : static_cast<int>(seeds.size());
    recipe.tangents = on_off(a.tangents);
    const auto samples = deform::generate_dataset(seeds, recipe, a.seed);

    const std::string samples_path = join(a.out, "samples.bin");
    deform::write_samples(samples_path, samples);
    m.output(samples_path);

    std::size_t positives = 0;
    for (const auto& s : seeds) positives += !s.objects.empty();
    deform::DatasetManifest dm;
    dm.set("format_version", std::to_string(deform::kDatasetFormatVersion));
    dm.set("mode", a.mode);
    dm.set("seeds", std::to_string(seeds.size()));
    dm.set("positive_seeds", std::to_string(positives));
    dm.set("samples", std::to_string(samples.size()));
    dm.set("scale_variants", std::to_string(recipe.scale_variants));
    dm.set("axis_shifts", std::to_string(recipe.axis_shifts));
    dm.set("corner_shifts", std::to_string(recipe.corner_shifts));
    dm.set("tangents", a.tangents);
    dm.set("rng_seed", std::to_string(a.seed));
    const std::string dm_path = join(a.out, "manifest.txt");
    deform::write_manifest(dm_path, dm);
    m.output(dm_path);

    m.params() = {{"mode", a.mode},
                  {"count", a.count},
                  {"scale_variants", recipe.scale_variants},
                  {"scale_eps", recipe.scale_eps},
                  {"axis_shifts", recipe.axis_shifts},
                  {"axis_magnitudes", recipe.axis_magnitudes},
                  {"corner_shifts", recipe.corner_shifts},
                  {"corner_offset", recipe.corner_offset},
                  {"negative_every", a.negative_every},
                  {"noise", a.noise},
                  {"tangents", a.tangents}};
    m.seeds()["rng_seed"] = a.seed;
    m.formats()["samples.bin"] = deform::kDatasetFormatVersion;
    m.extra("counts") = {{"seeds", seeds.size()}, {"samples", samples.size()}};
    m.write(a.out);
    std::cout << seeds.size() << " seeds -> " << samples.size() << " samples in " << a.out << "\n";
    return kExitOk;
}

// scenes -----------------------------------------------------------------------------------

struct ScenesArgs {
    int count = 10;
    std::uint64_t seed = 0;
    dataio::SceneSpec spec;
    std::string out;
};

int cmd_scenes(const ScenesArgs& a) {
    require_dir(a.out, "output");
    RunManifest m("scenes");
    if (a.count < 0) throw UsageError("--count must be >= 0");
    const auto n = static_cast<std::size_t>(a.count);
    std::vector<std::pair<dataio::ImageGray, density::ObjectDistribution>> scenes(n);
    parallel_for(n, [&](std::size_t i) {
        auto spec = a.spec;
        spec.rng_seed = a.seed + i;
        scenes[i] = dataio::synth_scene(spec);
    });
    char name[32];
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(name, sizeof name, "scene_%04zu", i);
        const std::string base = join(a.out, name);
        dataio::save_pgm(base + ".pgm", scenes[i].first);
        density::save_objdist(base + ".objdist", scenes[i].second);
        m.output(base + ".pgm");
        m.output(base + ".objdist");
    }
    m.params() = {{"count", a.count},
                  {"width", a.spec.width},
                  {"height", a.spec.height},
                  {"min_objects", a.spec.min_objects},
                  {"max_objects", a.spec.max_objects},
                  {"beta_min", a.spec.beta_min},
                  {"beta_max", a.spec.beta_max},
                  {"noise", a.spec.noise}};
    m.seeds()["base"] = a.seed;
    m.write(a.out);
    std::cout << n << " scenes in " << a.out << "\n";
    return kExitOk;
}

// train ------------------------------------------------------------------------------------

struct TrainArgs {
    std::string arch = "C1";
    std::string data;
    std::string test_data;
    int train_count = -1;
    int iters = 500;
    double lr = 0.01;
    int batch = 32;
    std::uint64_t seed = 0;
    std::uint64_t split_seed = 0;
    bool split_seed_set = false;
    double lambda1 = std::nan("");
    double lambda2 = std::nan("");
    double fd_eps = 0.05;
    int eval_every = 100;
    double t_pos = 0.5;
    double t_neg = 0.1;
    std::string trace_train_loss = "off";
    std::string out;
};

std::vector<deform::TrainingSample> load_data_dir(const std::string& dir) {
    require_dir(dir, "dataset");
    require_file(join(dir, "samples.bin"), "dataset samples");
    return deform::load_dataset(dir);
}

int cmd_train(const TrainArgs& a) {
    require_dir(a.out, "output");
    RunManifest m("train");
    const auto variant = model::parse_variant(a.arch);

    auto all = load_data_dir(a.data);
    std::vector<deform::TrainingSample> train_set, test_set;
    const std::uint64_t split_seed = a.split_seed_set ? a.split_seed : a.seed;
    if (!a.test_data.empty()) {
        train_set = std::move(all);
        test_set = load_data_dir(a.test_data);
    } else {
        const std::size_t n = all.size();
        const std::size_t k = a.train_count >= 0 ? static_cast<std::size_t>(a.train_count) : n * 85 / 100;
        if (k > n) throw UsageError("--train-count exceeds dataset size " + std::to_string(n));
        std::tie(train_set, test_set) = deform::split_dataset(std::move(all), k, split_seed);
    }

    model::LossConfig cfg = model::LossConfig::for_variant(variant);
    if (!std::isnan(a.lambda1)) cfg.lambda1 = a.lambda1;
    if (!std::isnan(a.lambda2)) cfg.lambda2 = a.lambda2;
    cfg.fd_epsilon = a.fd_eps;
    if (cfg.tangent_enabled() && variant != model::Variant::C3)
        throw UsageError("tangent penalties require --arch C3");

    model::TrainOptions opt;
    opt.learning_rate = a.lr;
    if (a.batch < 1) throw UsageError("--batch must be >= 1");
    opt.batch_size = static_cast<std::size_t>(a.batch);
    opt.iterations = a.iters;
    opt.rng_seed = a.seed;
    opt.eval_every = a.eval_every;
    opt.thresholds = {a.t_pos, a.t_neg};
    opt.trace_train_loss = on_off(a.trace_train_loss);

    const auto arch = model::Architecture::make(variant);
    auto init = model::init_model(arch, a.seed);
    init.thresholds = opt.thresholds;
    const auto result = model::train(std::move(init), train_set, test_set, cfg, opt);

    const std::string ckpt = join(a.out, "model.ckpt");
    model::save_checkpoint(ckpt, result.model);
    m.output(ckpt);
    write_text(m, join(a.out, "history.csv"), result.history.to_csv());
    write_text(m, join(a.out, "loss_trace.csv"), result.history.trace_csv());

    m.inputs()["data"] = a.data;
    if (!a.test_data.empty()) m.inputs()["test_data"] = a.test_data;
    m.params() = {{"arch", model::to_string(variant)},
                  {"iters", a.iters},
                  {"lr", a.lr},
                  {"batch", a.batch},
                  {"lambda1", cfg.lambda1},
                  {"lambda2", cfg.lambda2},
                  {"fd_epsilon", cfg.fd_epsilon},
                  {"per_sample_beta", cfg.per_sample_beta},
                  {"eval_every", a.eval_every},
                  {"t_pos", a.t_pos},
                  {"t_neg", a.t_neg},
                  {"trace_train_loss", a.trace_train_loss},
                  {"train_samples", train_set.size()},
                  {"test_samples", test_set.size()},
                  {"parameters", result.model.parameter_count()}};
    m.seeds()["init_and_shuffle"] = a.seed;
    m.seeds()["split"] = split_seed;
    m.formats()["model.ckpt"] = model::kCheckpointVersion;
    m.write(a.out);

    if (!result.history.records.empty()) {
        const auto& r = result.history.records.back();
        char buf[160];
        std::snprintf(buf, sizeof buf, "iteration %d: loss %.6g, train acc %.4f, test acc %.4f\n", r.iteration, r.loss,
                      r.train_acc, r.test_acc);
        std::cout << buf;
    }
    return kExitOk;
}

// detect -----------------------------------------------------------------------------------

struct DetectArgs {
    std::string model;
    std::string oracle;
    double band = 0.25;
    std::string image;
    std::string image_id;
    int s0 = 8;
    double alpha = 0.25;
    int s_max = 0;
    double stride_frac = 0.25;
    double threshold = 0.3;
    double min_sep = 8.0;
    std::string justify = "off";
    std::string heatmaps = "on";
    std::string out;
};

std::unique_ptr<detect::WindowScorer> make_scorer(const std::string& model_path, const std::string& oracle_path,
                                                  double band, RunManifest& m) {
    if (model_path.empty() == oracle_path.empty()) throw UsageError("give exactly one of --model or --oracle");
    if (!model_path.empty()) {
        require_file(model_path, "model");
        m.inputs()["model"] = model_path;
        return std::make_unique<detect::CnnScorer>(model::load_checkpoint(model_path));
    }
    require_file(oracle_path, "oracle");
    m.inputs()["oracle"] = oracle_path;
    return std::make_unique<detect::AnalyticScorer>(density::load_objdist(oracle_path), band);
}

int cmd_detect(const DetectArgs& a) {
    require_dir(a.out, "output");
    RunManifest m("detect");
    const auto scorer = make_scorer(a.model, a.oracle, a.band, m);
    require_file(a.image, "image");
    const auto image = dataio::load_image(a.image);
    m.inputs()["image"] = a.image;
    if (std::min(image.width, image.height) < a.s0)
        throw UsageError("image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                         " is smaller than s0 = " + std::to_string(a.s0));

    detect::DetectOptions opt;
    opt.schedule.s0 = a.s0;
    opt.schedule.alpha = a.alpha;
    if (a.s_max > 0) opt.schedule.s_max = a.s_max;
    opt.stride_fraction = a.stride_frac;
    if (!(a.threshold > 0.0)) throw UsageError("--threshold must be positive");
    opt.threshold = a.threshold;
    opt.min_separation = a.min_sep;
    opt.justify = on_off(a.justify);
    const auto res = detect::detect_objects(*scorer, image, opt);

    const std::string id = a.image_id.empty() ? fs::path(a.image).stem().string() : a.image_id;
    write_text(m, join(a.out, "detections.jsonl"), detect::detections_jsonl(id, res.detections));
    if (on_off(a.heatmaps)) {
        detect::write_heatmaps(a.out, res.field);
        m.output(join(a.out, "heatmaps.txt"));
    }

    std::vector<int> sizes;
    for (const auto& g : res.field.scales) sizes.push_back(g.size);
    m.params() = {{"s0", a.s0},
                  {"alpha", a.alpha},
                  {"s_max", a.s_max > 0 ? a.s_max : std::min(image.width, image.height)},
                  {"stride_frac", a.stride_frac},
                  {"threshold", a.threshold},
                  {"min_sep", a.min_sep},
                  {"justify", a.justify},
                  {"band", a.band},
                  {"image_id", id},
                  {"scales", sizes}};
    m.extra("counts") = {{"candidates", res.candidates.size()}, {"detections", res.detections.size()}};
    m.write(a.out);
    std::cout << res.detections.size() << " detections (" << res.candidates.size() << " candidates)\n";
    return kExitOk;
}

// search-demo ------------------------------------------------------------------------------

struct SearchArgs {
    std::string analytic;
    std::int64_t scene_seed = -1;
    std::string model;
    std::string image;
    double band = 0.25;
    int window_size = 0;
    int starts = 100;
    double start_radius = 40.0;
    std::uint64_t seed = 0;
    search::AutomatonParams params;
    std::string out;
};

int cmd_search_demo(SearchArgs a) {
    require_dir(a.out, "output");
    RunManifest m("search-demo");

    std::unique_ptr<detect::WindowScorer> scorer;
    dataio::ImageGray image;
    std::optional<density::ObjectDistribution> truth;
    const int sources = !a.analytic.empty() + (a.scene_seed >= 0) + !a.model.empty();
    if (sources != 1) throw UsageError("give exactly one of --analytic, --scene-seed or --model");
    if (!a.analytic.empty()) {
        require_file(a.analytic, "analytic field");
        truth = density::load_objdist(a.analytic);
        m.inputs()["analytic"] = a.analytic;
    } else if (a.scene_seed >= 0) {
        dataio::SceneSpec spec;
        spec.min_objects = 1;
        spec.max_objects = 1;
        spec.rng_seed = static_cast<std::uint64_t>(a.scene_seed);
        auto scene = dataio::synth_scene(spec);
        image = std::move(scene.first);
        truth = std::move(scene.second);
        m.seeds()["scene"] = a.scene_seed;
    } else {
        if (a.image.empty()) throw UsageError("--model requires --image");
        require_file(a.model, "model");
        require_file(a.image, "image");
        image = dataio::load_image(a.image);
        scorer = std::make_unique<detect::CnnScorer>(model::load_checkpoint(a.model));
        m.inputs()["model"] = a.model;
        m.inputs()["image"] = a.image;
    }
    if (truth) scorer = std::make_unique<detect::AnalyticScorer>(*truth, a.band);

    Vec2 centre{0.5 * image.width, 0.5 * image.height};
    if (truth && !truth->empty()) centre = truth->components.front().mu;
    int size = a.window_size;
    if (size <= 0)
        size = truth && !truth->empty()
                   ? static_cast<int>(std::lround(2.0 * dataio::matched_half_window(truth->components.front().beta)))
                   : 32;
    const auto field = detect::field_oracle(*scorer, image, size);

    std::mt19937_64 rng(a.seed);
    const auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    int converged = 0, near_truth = 0, monotone = 0;
    double total_steps = 0.0;
    std::string rows = "start,x0,y0,mode_x,mode_y,value,steps,converged\n";
    char buf[256];
    for (int i = 0; i < a.starts; ++i) {
        const double r = a.start_radius * std::sqrt(unit());
        const double t = 2.0 * 3.14159265358979323846 * unit();
        const Vec2 start{centre.x + r * std::cos(t), centre.y + r * std::sin(t)};
        auto p = a.params;
        p.rng_seed = a.seed + static_cast<std::uint64_t>(i) + 1;
        const auto res = search::heuristic_search(field, start, p);

        std::snprintf(buf, sizeof buf, "trajectory_%04d.csv", i);
        detail::write_file(join(a.out, buf), search::trajectory_csv(res));
        converged += res.converged;
        total_steps += res.steps;
        if (truth && !truth->empty() && res.converged && distance(res.mode, centre) <= 1.0) ++near_truth;
        monotone += std::is_sorted(res.values.begin(), res.values.end());
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%d\n", i, start.x, start.y, res.mode.x,
                      res.mode.y, res.value, res.steps, res.converged ? 1 : 0);
        rows += buf;
    }
    write_text(m, join(a.out, "starts.csv"), rows);
    std::string summary;
    summary += "starts " + std::to_string(a.starts) + "\n";
    summary += "converged " + std::to_string(converged) + "\n";
    if (truth && !truth->empty()) summary += "converged_within_1px " + std::to_string(near_truth) + "\n";
    summary += "monotone " + std::to_string(monotone) + "\n";
    std::snprintf(buf, sizeof buf, "mean_steps %.6g\n", a.starts > 0 ? total_steps / a.starts : 0.0);
    summary += buf;
    write_text(m, join(a.out, "summary.txt"), summary);

    m.params() = {{"window_size", size},
                  {"starts", a.starts},
                  {"start_radius", a.start_radius},
                  {"start_centre", {centre.x, centre.y}},
                  {"band", a.band},
                  {"probe_count", a.params.probe_count},
                  {"probe_radius", a.params.probe_radius},
                  {"step_gain", a.params.step_gain},
                  {"max_steps", a.params.max_steps},
                  {"tolerance", a.params.tolerance},
                  {"min_radius", a.params.min_radius}};
    m.seeds()["starts"] = a.seed;
    m.write(a.out);
    std::cout << summary;
    return kExitOk;
}

// eval -------------------------------------------------------------------------------------

struct EvalArgs {
    std::string detections;
    std::string annotations;
    std::string format = "auto";
    double iou = 0.5;
    std::string out;
};

int cmd_eval(const EvalArgs& a) {
    require_dir(a.out, "output");
    RunManifest m("eval");
    require_file(a.detections, "detections");
    require_file(a.annotations, "annotations");
    m.inputs()["detections"] = a.detections;
    m.inputs()["annotations"] = a.annotations;

    std::vector<std::string> ids;
    const auto dets = detect::parse_detections_jsonl(detail::read_file(a.detections), a.detections, &ids);

    std::string format = a.format;
    if (format == "auto") format = fs::path(a.annotations).extension() == ".objdist" ? "objdist" : "fddb";

    detect::Score total;
    const auto add = [&total](const detect::Score& s) {
        total.tp += s.tp;
        total.fp += s.fp;
        total.fn += s.fn;
        total.discrete_score += s.discrete_score;
    };
    if (format == "objdist") {
        const auto truth = density::load_objdist(a.annotations);
        std::vector<detect::Box> boxes;
        for (const auto& c : truth.components) boxes.push_back(detect::component_box(c));
        add(detect::score_detections(dets, boxes, a.iou));
    } else {
        const auto folds = dataio::parse_fddb(detail::read_file(a.annotations), a.annotations);
        std::map<std::string, std::vector<detect::Detection>> by_image;
        for (std::size_t i = 0; i < dets.size(); ++i) by_image[ids[i]].push_back(dets[i]);
        for (const auto& ann : folds) {
            auto it = by_image.find(ann.image_id);
            add(detect::score_detections(it == by_image.end() ? std::vector<detect::Detection>{} : it->second,
                                         ann.ellipses, a.iou));
            if (it != by_image.end()) by_image.erase(it);
        }
        for (const auto& [id, rest] : by_image) add(detect::score_detections(rest, std::vector<detect::Box>{}, a.iou));
    }

    char buf[256];
    std::snprintf(buf, sizeof buf, "tp %d\nfp %d\nfn %d\ndiscrete_score %d\n", total.tp, total.fp, total.fn,
                  total.discrete_score);
    write_text(m, join(a.out, "score.txt"), buf);
    const std::string text = buf;
    std::snprintf(buf, sizeof buf, "tp,fp,fn,discrete_score\n%d,%d,%d,%d\n", total.tp, total.fp, total.fn,
                  total.discrete_score);
    write_text(m, join(a.out, "score.csv"), buf);

    m.params() = {{"format", format}, {"iou", a.iou}};
    m.write(a.out);
    std::cout << text;
    return kExitOk;
}

// verify -----------------------------------------------------------------------------------

struct VerifyArgs {
    std::string arch = "C3";
    std::uint64_t seed = 0;
    int batch = 3;
    double tol = 1e-4;
    std::string out;
};

int cmd_verify(const VerifyArgs& a) {
    if (!a.out.empty()) require_dir(a.out, "output");
    RunManifest m("verify");
    const auto variant = model::parse_variant(a.arch);
    // Small filter counts keep the per-parameter finite differences cheap.
    const auto net = model::random_model(model::Architecture::make(variant, 2, 2, 2), a.seed);

    deform::GenRecipe recipe;
    recipe.axis_shifts = 1;
    recipe.corner_shifts = 1;
    auto samples = deform::generate_dataset(deform::synth_seeds(2, a.seed, 2), recipe, a.seed);
    if (a.batch < 1) throw UsageError("--batch must be >= 1");
    samples.resize(std::min(samples.size(), static_cast<std::size_t>(a.batch)));

    auto cfg = model::LossConfig::for_variant(variant);
    if (!cfg.tangent_enabled()) cfg.lambda1 = cfg.lambda2 = 0.1;
    const auto rep = model::grad_check(net, samples, cfg);
    const bool pass = rep.max_rel_error_e0 < a.tol && rep.max_rel_error_tangent < a.tol;
    char line[200];
    std::snprintf(line, sizeof line, "%s parameters %zu max_rel_error_e0 %.3g max_rel_error_tangent %.3g %s\n",
                  model::to_string(variant).c_str(), rep.parameters, rep.max_rel_error_e0, rep.max_rel_error_tangent,
                  pass ? "PASS" : "FAIL");
    std::cout << line;

    if (!a.out.empty()) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "parameters,max_rel_error_e0,max_rel_error_tangent\n%zu,%.9g,%.9g\n",
                      rep.parameters, rep.max_rel_error_e0, rep.max_rel_error_tangent);
        write_text(m, join(a.out, "gradcheck.csv"), buf);
        m.params() = {{"arch", model::to_string(variant)}, {"batch", samples.size()}, {"tol", a.tol}};
        m.seeds()["model_and_data"] = a.seed;
        m.write(a.out);
    }
    return pass ? kExitOk : kExitRuntime;
}

}  // namespace
}  // namespace densityscan

int run_cli(int argc, char** argv) {
    using namespace densityscan;
    CLI::App app{"densityscan: density-regression object detection"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate a training dataset");
    g->add_option("--mode", gen.mode)->check(CLI::IsMember({"synthetic", "from-seeds"}))->capture_default_str();
    g->add_option("--count", gen.count, "Seeds (synthetic) or maximum seeds read (from-seeds)")->capture_default_str();
    g->add_option("--out", gen.out, "Existing output directory")->required();
    g->add_option("--seed", gen.seed)->capture_default_str();
    g->add_option("--scale-variants", gen.scale_variants)->capture_default_str();
    g->add_option("--axis-shifts", gen.axis_shifts, "Total axis shifts (default: one per seed)");
    g->add_option("--corner-shifts", gen.corner_shifts, "Total corner shifts (default: one per seed)");
    g->add_option("--negative-every", gen.negative_every)->capture_default_str();
    g->add_option("--noise", gen.noise)->capture_default_str();
    g->add_option("--tangents", gen.tangents)->check(CLI::IsMember({"on", "off"}))->capture_default_str();
    g->add_option("--seeds", gen.seeds_dir, "Directory of 32x32 seed PGMs with optional .objdist");
    g->add_option("--emit-seeds", gen.emit_seeds, "Also write synthetic seeds to this directory");

    ScenesArgs sc;
    auto* sn = app.add_subcommand("scenes", "Render synthetic test scenes with ground truth");
    sn->add_option("--count", sc.count)->capture_default_str();
    sn->add_option("--seed", sc.seed, "Scene i uses seed + i")->capture_default_str();
    sn->add_option("--width", sc.spec.width)->capture_default_str();
    sn->add_option("--height", sc.spec.height)->capture_default_str();
    sn->add_option("--min-objects", sc.spec.min_objects)->capture_default_str();
    sn->add_option("--max-objects", sc.spec.max_objects)->capture_default_str();
    sn->add_option("--beta-min", sc.spec.beta_min)->capture_default_str();
    sn->add_option("--beta-max", sc.spec.beta_max)->capture_default_str();
    sn->add_option("--noise", sc.spec.noise)->capture_default_str();
    sn->add_option("--out", sc.out)->required();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a CNN regressor");
    t->add_option("--arch", tr.arch)->check(CLI::IsMember({"C1", "C2", "C3"}))->capture_default_str();
    t->add_option("--data", tr.data, "Dataset directory")->required();
    t->add_option("--test-data", tr.test_data, "Held-out dataset directory (default: split --data)");
    t->add_option("--train-count", tr.train_count, "Training samples kept from the split (default 85%)");
    t->add_option("--iters", tr.iters)->capture_default_str();
    t->add_option("--lr", tr.lr)->capture_default_str();
    t->add_option("--batch", tr.batch)->capture_default_str();
    t->add_option("--seed", tr.seed)->capture_default_str();
    t->add_option("--split-seed", tr.split_seed, "Default: --seed");
    t->add_option("--lambda1", tr.lambda1, "Default 0.1 for C3, 0 otherwise");
    t->add_option("--lambda2", tr.lambda2, "Default 0.1 for C3, 0 otherwise");
    t->add_option("--fd-eps", tr.fd_eps)->capture_default_str();
    t->add_option("--eval-every", tr.eval_every)->capture_default_str();
    t->add_option("--t-pos", tr.t_pos)->capture_default_str();
    t->add_option("--t-neg", tr.t_neg)->capture_default_str();
    t->add_option("--trace-train-loss", tr.trace_train_loss, "Record the full training-set loss every iteration")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    t->add_option("--out", tr.out)->required();

    DetectArgs de;
    auto* d = app.add_subcommand("detect", "Detect objects in a PGM image");
    d->add_option("--model", de.model, "Checkpoint");
    d->add_option("--oracle", de.oracle, "Ground-truth objdist used as an analytic detector");
    d->add_option("--band", de.band, "Oracle scale band")->capture_default_str();
    d->add_option("--image", de.image)->required();
    d->add_option("--image-id", de.image_id, "Default: image file stem");
    d->add_option("--s0", de.s0)->capture_default_str();
    d->add_option("--alpha", de.alpha)->capture_default_str();
    d->add_option("--s-max", de.s_max, "Largest window (default: image size)");
    d->add_option("--stride-frac", de.stride_frac)->capture_default_str();
    d->add_option("--threshold", de.threshold)->capture_default_str();
    d->add_option("--min-sep", de.min_sep)->capture_default_str();
    d->add_option("--justify", de.justify)->check(CLI::IsMember({"on", "off"}))->capture_default_str();
    d->add_option("--heatmaps", de.heatmaps)->check(CLI::IsMember({"on", "off"}))->capture_default_str();
    d->add_option("--out", de.out)->required();

    SearchArgs sa;
    auto* s = app.add_subcommand("search-demo", "Run the heuristic automaton from random starts");
    s->add_option("--analytic", sa.analytic, "objdist file defining an analytic field");
    s->add_option("--scene-seed", sa.scene_seed, "Synthetic single-object scene, analytic field");
    s->add_option("--model", sa.model);
    s->add_option("--image", sa.image);
    s->add_option("--band", sa.band)->capture_default_str();
    s->add_option("--window-size", sa.window_size, "Default: matched size of the first object, else 32");
    s->add_option("--starts", sa.starts)->capture_default_str();
    s->add_option("--start-radius", sa.start_radius)->capture_default_str();
    s->add_option("--seed", sa.seed)->capture_default_str();
    s->add_option("--probe-count", sa.params.probe_count)->capture_default_str();
    s->add_option("--probe-radius", sa.params.probe_radius)->capture_default_str();
    s->add_option("--step-gain", sa.params.step_gain)->capture_default_str();
    s->add_option("--max-steps", sa.params.max_steps)->capture_default_str();
    s->add_option("--tolerance", sa.params.tolerance)->capture_default_str();
    s->add_option("--min-radius", sa.params.min_radius)->capture_default_str();
    s->add_option("--out", sa.out)->required();

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Score detections against annotations");
    e->add_option("--detections", ev.detections)->required();
    e->add_option("--annotations", ev.annotations, "FDDB fold file or objdist")->required();
    e->add_option("--format", ev.format)->check(CLI::IsMember({"auto", "fddb", "objdist"}))->capture_default_str();
    e->add_option("--iou", ev.iou)->capture_default_str();
    e->add_option("--out", ev.out)->required();

    VerifyArgs ve;
    auto* v = app.add_subcommand("verify", "Gradient check of a small random network");
    v->add_option("--arch", ve.arch)->check(CLI::IsMember({"C1", "C2", "C3"}))->capture_default_str();
    v->add_option("--seed", ve.seed)->capture_default_str();
    v->add_option("--batch", ve.batch)->capture_default_str();
    v->add_option("--tol", ve.tol)->capture_default_str();
    v->add_option("--out", ve.out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return kExitUsage;
    }
    tr.split_seed_set = t->count("--split-seed") > 0;

    try {
        if (*g) return cmd_gen(gen);
        if (*sn) return cmd_scenes(sc);
        if (*t) return cmd_train(tr);
        if (*d) return cmd_detect(de);
        if (*s) return cmd_search_demo(sa);
        if (*e) return cmd_eval(ev);
        if (*v) return cmd_verify(ve);
    } catch (const DivergenceError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitRuntime;
    } catch (const UsageError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const InvalidArgument& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const ParseError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
