#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "densityscan/dataio.hpp"
#include "densityscan/density.hpp"
#include "densityscan/detection.hpp"
#include "densityscan/model.hpp"
#include "densityscan/search.hpp"

namespace densityscan::detect {

/// Maps a window of an image to a predicted density in renormalized units.
class WindowScorer {
public:
    virtual ~WindowScorer() = default;
    virtual double score(const dataio::ImageGray& image, const Window& window) const = 0;
    /// Score of a window of side `size` centred at an arbitrary point. The default snaps to the
    /// nearest integer window clamped inside the image.
    virtual double score_at(const dataio::ImageGray& image, Vec2 center, int size) const;
};

/// Resizes the window to 32x32 and runs the CNN.
class CnnScorer final : public WindowScorer {
public:
    explicit CnnScorer(model::CnnModel model) : model_(std::move(model)) {}
    double score(const dataio::ImageGray& image, const Window& window) const override;
    const model::CnnModel& model() const { return model_; }

private:
    model::CnnModel model_;
};

/// Stand-in for an ideal detector: the renormalized ground-truth density at the window centre,
/// attenuated for components whose canonical size falls outside the detector's sensitivity band.
/// Each component contributes exp(-beta |c - mu|^2 / 2) * exp(-ln(r)^2 / (2 tau^2)) with
/// r = canonical_beta / kCanonicalBeta and tau = 2 ln(1 + band), so a centred object seen in
/// its matched window scores 1.0.
class AnalyticScorer final : public WindowScorer {
public:
    explicit AnalyticScorer(density::ObjectDistribution truth, double band = 0.25);
    double score(const dataio::ImageGray& image, const Window& window) const override;
    double score_at(const dataio::ImageGray& image, Vec2 center, int size) const override;
    double response(Vec2 center, double size) const;

private:
    density::ObjectDistribution truth_;
    double tau_;
};

/// Predicted densities of one window size on a regular grid. Cell (row, col) holds the window
/// centred at origin + stride * (col, row).
struct ScaleGrid {
    int size = 0;
    int stride = 1;
    Vec2 origin;
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    double at(int row, int col) const { return values[static_cast<std::size_t>(row) * cols + col]; }
    double& at(int row, int col) { return values[static_cast<std::size_t>(row) * cols + col]; }
    Vec2 center(int row, int col) const { return {origin.x + stride * col, origin.y + stride * row}; }
};

struct DensityField {
    int image_width = 0;
    int image_height = 0;
    std::vector<ScaleGrid> scales;  // ascending window size
};

/// Scores every window and stores it at its grid cell. Windows of one size must lie on a common
/// grid. Throws InvalidArgument for a window outside the image.
DensityField assemble_field(const WindowScorer& scorer, const dataio::ImageGray& image,
                            const std::vector<Window>& windows);
DensityField assemble_field(const model::CnnModel& model, const dataio::ImageGray& image,
                            const std::vector<Window>& windows);

/// Local maxima over position and scale (8 spatial neighbours plus the bracketing cells of the
/// adjacent scales), thresholded, then greedily thinned so survivors are >= min_separation apart.
/// beta_px = kCanonicalBeta * (32 / s)^2 for the winning size s.
std::vector<Detection> extract_modes(const DensityField& field, double threshold, double min_separation);

/// kCanonicalBeta * (32 / window_size)^2: the inverse variance of an object that fills a window
/// of this size the way the canonical object fills 32x32.
double beta_for_window(int window_size);

struct Box {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
    double area() const { return std::max(0.0, x1 - x0) * std::max(0.0, y1 - y0); }
};

double iou(const Box& a, const Box& b);
/// Side 4 / sqrt(beta_px), i.e. +-2 sigma.
Box detection_box(const Detection& d);
Box component_box(const density::GaussianComponent& c);
/// Axis-aligned bounding box of the rotated ellipse.
Box ellipse_box(const dataio::Ellipse& e);

struct Score {
    int tp = 0;
    int fp = 0;
    int fn = 0;
    int discrete_score = 0;
};

/// Greedy one-to-one matching in descending detection score; a match counts when IoU >= iou_threshold.
Score score_detections(const std::vector<Detection>& detections, const std::vector<Box>& groundtruth,
                       double iou_threshold = 0.5);
Score score_detections(const std::vector<Detection>& detections, const std::vector<dataio::Ellipse>& groundtruth,
                       double iou_threshold = 0.5);

struct DetectOptions {
    search::ScaleSchedule schedule;
    double stride_fraction = 0.25;
    double threshold = 0.3;
    double min_separation = 8.0;
    bool justify = false;  // Model B: filter through the evidence justifier
    search::JustifyParams justify_params;
};

struct DetectResult {
    DensityField field;
    std::vector<Detection> candidates;  // before justification
    std::vector<Detection> detections;
};

/// Geometric window scan, mode extraction and (optionally) evidence justification.
DetectResult detect_objects(const WindowScorer& scorer, const dataio::ImageGray& image, const DetectOptions& opt);

/// Field at a fixed window size as a function of the centre, for the automaton and the justifier.
search::FieldOracle field_oracle(const WindowScorer& scorer, const dataio::ImageGray& image, int window_size);

// Exports ----------------------------------------------------------------------------------

/// One JSON object per line: {"image", "cx", "cy", "beta_px", "score"}.
std::string detections_jsonl(const std::string& image_id, const std::vector<Detection>& detections);
/// Throws ParseError (line-numbered) on malformed input. The "image" field of each line goes to
/// image_ids when given.
std::vector<Detection> parse_detections_jsonl(const std::string& text, const std::string& source = "detections",
                                              std::vector<std::string>* image_ids = nullptr);

/// Min-max normalized grayscale rendering of one scale grid.
dataio::ImageGray heatmap_image(const ScaleGrid& grid);
/// Writes heatmap_s%04d.pgm per scale plus heatmaps.txt with the normalization constants.
void write_heatmaps(const std::string& dir, const DensityField& field);

}  // namespace densityscan::detect
