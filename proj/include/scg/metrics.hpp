#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "scg/image.hpp"

namespace scg {

/// c×c pixel counts; rows are ground truth, columns are predictions.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes = 0) : classes_(classes), counts_(classes * classes, 0) {}

    std::size_t classes() const { return classes_; }
    std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * classes_ + pred]; }
    std::uint64_t total() const;

    /// Adds one pixel per position. Pixels whose label equals `ignore_index`
    /// are skipped; any other index ≥ c raises DataError naming (x, y).
    void update(const LabelMap& pred, const LabelMap& truth, std::optional<std::uint8_t> ignore_index = std::nullopt);
    void add(std::size_t truth, std::size_t pred, std::uint64_t count = 1);
    void merge(const ConfusionMatrix& other);

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::size_t classes_;
    std::vector<std::uint64_t> counts_;
};

struct Metrics {
    std::vector<double> f1;  // per class; NaN when the class has no gt or pred pixels
    std::vector<double> iou;
    std::vector<std::uint64_t> support; // ground-truth pixels per class
    double overall_accuracy = 0;
    double mean_f1 = 0;
    double mean_iou = 0;
    std::vector<std::size_t> averaged; // classes that entered the means
};

/// Means run over `reported` (all classes by default) restricted to classes
/// with ground-truth support. DataError on an empty matrix.
Metrics compute_metrics(const ConfusionMatrix& cm, const std::vector<std::size_t>& reported = {});

/// CSV with header `name,f1,iou,support`: one row per class, then `mean`,
/// then the scalar rows `OA`, `mF1`, `mIoU` (value in the f1 column).
void write_metrics_csv(std::ostream& out, const Metrics& m, const std::vector<std::string>& class_names);

} // namespace scg
