#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "scg/data.hpp"
#include "scg/infer.hpp"
#include "scg/optim.hpp"

namespace scg {

template <typename T>
struct Batch {
    Tensor<T> images;                 // [N, 3, H, W] in [0, 1]
    std::vector<std::uint8_t> labels; // N·H·W, row-major
};

template <typename T>
Batch<T> make_batch(const std::vector<Patch>& patches);

struct StepResult {
    double loss = 0;
    double dice = 0;
    double kl = 0; // 0 when disabled or absent
    double dl = 0;
    double lr = 0; // base learning rate used for the update
};

/// Owns the optimizer state and iteration counter for one model.
template <typename T>
class Trainer {
public:
    Trainer(ScgNet<T>& model, const RunConfig& config);

    /// Forward in train mode, total loss, backward, one AMSGrad update at the
    /// scheduled learning rate. NumericError with every loss component in the
    /// message if the loss is not finite; parameters and batch-norm
    /// statistics are left untouched then.
    StepResult step(const Batch<T>& batch, std::size_t epoch);

    std::size_t iteration() const { return iteration_; }
    const AmsGrad<T>& optimizer() const { return optimizer_; }

private:
    ScgNet<T>& model_;
    RunConfig config_;
    AmsGrad<T> optimizer_;
    Rng noise_rng_;
    std::size_t iteration_ = 0;
};

struct EpochRecord {
    std::size_t epoch = 0; // 1-based
    std::size_t iteration = 0;
    double lr = 0;
    double loss = 0; // means over the epoch's steps
    double dice = 0;
    double kl = 0;
    double dl = 0;
    std::optional<Metrics> validation;
};

struct TrainOptions {
    /// Checkpoint, train_log.csv and metrics.csv go here when set.
    std::optional<std::filesystem::path> out_dir;
    std::ostream* log = nullptr;
    /// Called after each epoch; returning false stops training.
    std::function<bool(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::optional<Metrics> final_metrics;
};

/// Fills one batch for `step` of `epoch` from per-patch streams, so the batch
/// depends only on the seed and position.
Batch<float> sample_batch(const TileDataset& data, const PatchSampler& sampler, const TrainConfig& config,
                          std::size_t epoch, std::size_t step);

/// Full training loop: train.epochs epochs of ⌈patches_per_epoch/batch_size⌉
/// steps, validation after every epoch when `val` has labeled tiles.
TrainResult train(ScgNet<float>& model, const RunConfig& config, const TileDataset& train_data,
                  const TileDataset* val, const TrainOptions& options = {});

void write_train_log_csv(std::ostream& out, const std::vector<EpochRecord>& history);

extern template class Trainer<float>;
extern template class Trainer<double>;

} // namespace scg
