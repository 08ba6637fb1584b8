#include "scg/train.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "scg/checkpoint.hpp"
#include "scg/error.hpp"
#include "scg/losses.hpp"
#include "scg/outputs.hpp"

namespace scg {

template <typename T>
Batch<T> make_batch(const std::vector<Patch>& patches)
{
    if (patches.empty())
        throw DataError("make_batch: no patches");
    Batch<T> b;
    std::vector<const Image*> images;
    for (const auto& p : patches) {
        images.push_back(&p.image);
        b.labels.insert(b.labels.end(), p.label.labels.begin(), p.label.labels.end());
    }
    b.images = to_tensor<T>(images);
    return b;
}

template <typename T>
Trainer<T>::Trainer(ScgNet<T>& model, const RunConfig& config)
    : model_(model), config_(config), optimizer_(model.registry(), config.train),
      noise_rng_(derive_rng(config.train.seed, 0x6e6f697365ull))
{
    config_.validate();
}

template <typename T>
StepResult Trainer<T>::step(const Batch<T>& batch, std::size_t epoch)
{
    auto reg = model_.registry();
    reg.zero_grad();
    std::vector<std::vector<T>> saved;
    for (const auto& b : reg.buffers())
        saved.emplace_back(b.tensor.values().begin(), b.tensor.values().end());
    const auto out = model_.forward(batch.images, Mode::train, noise_rng_);
    const auto dice = dice_loss_from_logits(out.logits, batch.labels, config_.train.ignore_index);
    const LossToggles toggles{config_.train.kl_loss, config_.train.dl_loss};
    auto loss = total_loss(dice, out.scg.kl_loss, out.scg.dl_loss, toggles);

    StepResult r;
    r.loss = static_cast<double>(loss.item());
    r.dice = static_cast<double>(dice.item());
    if (toggles.kl && out.scg.kl_loss.defined())
        r.kl = static_cast<double>(out.scg.kl_loss.item());
    if (toggles.dl && out.scg.dl_loss.defined())
        r.dl = static_cast<double>(out.scg.dl_loss.item());
    r.lr = learning_rate_at(config_.train, iteration_, epoch);
    if (!std::isfinite(r.loss)) {
        for (std::size_t i = 0; i < saved.size(); ++i) {
            auto t = reg.buffers()[i].tensor;
            std::copy(saved[i].begin(), saved[i].end(), t.values().begin());
        }
        std::ostringstream msg;
        msg << "non-finite loss at iteration " << iteration_ << " (epoch " << epoch << "): total=" << r.loss
            << " dice=" << r.dice << " kl=" << r.kl << " dl=" << r.dl << " lr=" << r.lr;
        throw NumericError(msg.str());
    }
    loss.backward();
    optimizer_.step(r.lr);
    ++iteration_;
    return r;
}

Batch<float> sample_batch(const TileDataset& data, const PatchSampler& sampler, const TrainConfig& config,
                          std::size_t epoch, std::size_t step)
{
    const auto order = sampler.epoch_order(epoch);
    const std::size_t first = step * config.batch_size;
    const std::size_t count = std::min(config.batch_size, order.size() - first);
    std::vector<Patch> patches(count);
    std::vector<std::exception_ptr> errors(count);
    // Each patch has its own stream, so the fill order does not matter.
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < count; ++i) {
        try {
            const std::size_t index = order[first + i];
            patches[i] = sampler.sample_at(data, epoch, index);
            if (config.augment) {
                auto rng = derive_rng(config.seed ^ 0x617567ull, epoch, index);
                augment(patches[i].image, patches[i].label, rng);
            }
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return make_batch<float>(patches);
}

void write_train_log_csv(std::ostream& out, const std::vector<EpochRecord>& history)
{
    out << "epoch,iteration,lr,loss,dice,kl,dl,val_oa,val_mf1,val_miou\n";
    out << std::setprecision(9);
    for (const auto& r : history) {
        out << r.epoch << ',' << r.iteration << ',' << r.lr << ',' << r.loss << ',' << r.dice << ',' << r.kl << ','
            << r.dl;
        if (r.validation)
            out << ',' << r.validation->overall_accuracy << ',' << r.validation->mean_f1 << ','
                << r.validation->mean_iou;
        else
            out << ",,,";
        out << '\n';
    }
}

TrainResult train(ScgNet<float>& model, const RunConfig& config, const TileDataset& train_data,
                  const TileDataset* val, const TrainOptions& options)
{
    config.validate();
    const auto& tc = config.train;
    if (train_data.empty())
        throw DataError("training split under " + train_data.root.string() + " has no tiles");
    PatchSampler sampler(config.model.input_size, tc.patches_per_epoch, tc.seed);
    Trainer<float> trainer(model, config);
    const std::size_t steps = (tc.patches_per_epoch + tc.batch_size - 1) / tc.batch_size;
    const bool validate = val && !val->empty();

    TrainResult result;
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch + 1;
        for (std::size_t s = 0; s < steps; ++s) {
            const auto r = trainer.step(sample_batch(train_data, sampler, tc, epoch, s), epoch);
            rec.loss += r.loss;
            rec.dice += r.dice;
            rec.kl += r.kl;
            rec.dl += r.dl;
            rec.lr = r.lr;
        }
        const double inv = 1.0 / static_cast<double>(steps);
        rec.loss *= inv;
        rec.dice *= inv;
        rec.kl *= inv;
        rec.dl *= inv;
        rec.iteration = trainer.iteration();
        if (validate)
            rec.validation = compute_metrics(evaluate(model, *val, config.infer, tc.ignore_index), tc.reported_classes);
        if (options.log) {
            *options.log << "epoch " << rec.epoch << " it " << rec.iteration << " lr " << rec.lr << " loss "
                         << rec.loss << " dice " << rec.dice << " kl " << rec.kl << " dl " << rec.dl;
            if (rec.validation)
                *options.log << " val OA " << rec.validation->overall_accuracy << " mF1 "
                             << rec.validation->mean_f1 << " mIoU " << rec.validation->mean_iou;
            *options.log << std::endl;
        }
        result.history.push_back(rec);
        if (rec.validation)
            result.final_metrics = rec.validation;
        if (options.out_dir) {
            std::filesystem::create_directories(*options.out_dir);
            save_model(*options.out_dir / "model.ckpt", model, config);
            std::ofstream f(*options.out_dir / "train_log.csv");
            if (!f)
                throw IoError("cannot write " + (*options.out_dir / "train_log.csv").string());
            write_train_log_csv(f, result.history);
        }
        if (options.on_epoch && !options.on_epoch(rec))
            break;
    }
    if (options.out_dir && result.final_metrics)
        write_metrics_csv(*options.out_dir / "metrics.csv", *result.final_metrics, val->palette);
    return result;
}

template Batch<float> make_batch(const std::vector<Patch>&);
template Batch<double> make_batch(const std::vector<Patch>&);
template class Trainer<float>;
template class Trainer<double>;

} // namespace scg
