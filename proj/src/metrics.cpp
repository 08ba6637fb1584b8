#include "scg/metrics.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "scg/error.hpp"

namespace scg {

std::uint64_t ConfusionMatrix::total() const
{
    return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::add(std::size_t truth, std::size_t pred, std::uint64_t count)
{
    if (truth >= classes_ || pred >= classes_)
        throw RangeError("confusion index out of range");
    counts_[truth * classes_ + pred] += count;
}

void ConfusionMatrix::update(const LabelMap& pred, const LabelMap& truth, std::optional<std::uint8_t> ignore_index)
{
    if (pred.height != truth.height || pred.width != truth.width)
        throw DimensionError("prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                             " vs ground truth " + std::to_string(truth.height) + "x" + std::to_string(truth.width));
    auto fail = [&](const char* what, std::size_t i, std::uint8_t v) {
        throw DataError(std::string(what) + " class " + std::to_string(v) + " at pixel (" +
                        std::to_string(i % truth.width) + "," + std::to_string(i / truth.width) +
                        ") exceeds max index " + std::to_string(classes_ - 1));
    };
    for (std::size_t i = 0; i < truth.labels.size(); ++i) {
        const auto t = truth.labels[i];
        if (ignore_index && t == *ignore_index)
            continue;
        const auto p = pred.labels[i];
        if (t >= classes_)
            fail("ground-truth", i, t);
        if (p >= classes_)
            fail("predicted", i, p);
        ++counts_[t * classes_ + p];
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other)
{
    if (other.classes_ != classes_)
        throw DimensionError("cannot merge confusion matrices of different class counts");
    for (std::size_t i = 0; i < counts_.size(); ++i)
        counts_[i] += other.counts_[i];
}

Metrics compute_metrics(const ConfusionMatrix& cm, const std::vector<std::size_t>& reported)
{
    const std::size_t c = cm.classes();
    const auto total = cm.total();
    if (total == 0)
        throw DataError("compute_metrics: confusion matrix is empty");
    const double nan = std::numeric_limits<double>::quiet_NaN();

    Metrics m;
    m.f1.assign(c, nan);
    m.iou.assign(c, nan);
    m.support.assign(c, 0);
    std::uint64_t trace = 0;
    for (std::size_t j = 0; j < c; ++j) {
        std::uint64_t row = 0, col = 0;
        for (std::size_t k = 0; k < c; ++k) {
            row += cm.at(j, k);
            col += cm.at(k, j);
        }
        const auto tp = cm.at(j, j);
        const auto fn = row - tp;
        const auto fp = col - tp;
        trace += tp;
        m.support[j] = row;
        if (tp + fp + fn > 0) {
            m.f1[j] = 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
            m.iou[j] = tp / static_cast<double>(tp + fp + fn);
        }
    }
    m.overall_accuracy = static_cast<double>(trace) / static_cast<double>(total);

    std::vector<std::size_t> candidates = reported;
    if (candidates.empty()) {
        candidates.resize(c);
        std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    }
    double f1_sum = 0, iou_sum = 0;
    for (auto j : candidates) {
        if (j >= c)
            throw RangeError("reported class " + std::to_string(j) + " out of range");
        if (m.support[j] == 0)
            continue;
        m.averaged.push_back(j);
        f1_sum += m.f1[j];
        iou_sum += m.iou[j];
    }
    if (!m.averaged.empty()) {
        m.mean_f1 = f1_sum / static_cast<double>(m.averaged.size());
        m.mean_iou = iou_sum / static_cast<double>(m.averaged.size());
    } else {
        m.mean_f1 = m.mean_iou = nan;
    }
    return m;
}

namespace {

void put(std::ostream& out, double v)
{
    if (!std::isnan(v))
        out << v;
}

} // namespace

void write_metrics_csv(std::ostream& out, const Metrics& m, const std::vector<std::string>& class_names)
{
    const auto flags = out.flags();
    const auto precision = out.precision();
    out.setf(std::ios::fixed);
    out.precision(6);
    out << "name,f1,iou,support\n";
    std::uint64_t total = 0;
    for (std::size_t j = 0; j < m.f1.size(); ++j) {
        out << (j < class_names.size() ? class_names[j] : "class_" + std::to_string(j)) << ',';
        put(out, m.f1[j]);
        out << ',';
        put(out, m.iou[j]);
        out << ',' << m.support[j] << '\n';
        total += m.support[j];
    }
    out << "mean,";
    put(out, m.mean_f1);
    out << ',';
    put(out, m.mean_iou);
    out << ',' << total << '\n';
    out << "OA,";
    put(out, m.overall_accuracy);
    out << ",,\nmF1,";
    put(out, m.mean_f1);
    out << ",,\nmIoU,";
    put(out, m.mean_iou);
    out << ",,\n";
    out.flags(flags);
    out.precision(precision);
}

} // namespace scg
