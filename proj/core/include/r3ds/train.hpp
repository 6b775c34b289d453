#pragma once
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "r3ds/checkpoint.hpp"
#include "r3ds/config.hpp"
#include "r3ds/io.hpp"
#include "r3ds/model.hpp"
#include "r3ds/synth.hpp"

// Training/evaluation harness. One optimizer step runs on one thread;
// evaluation fans samples out across threads and reduces in id order, so
// results do not depend on the thread count. Every stochastic input to
// training derives from (seed, config, dataset): epoch shuffles key off
// (seed, epoch), drop-path noise off (seed, step), so resuming from a
// checkpoint replays the exact trajectory of an uninterrupted run.

namespace r3ds {

struct DatasetInMemory {
    struct Item {
        std::string id;
        Image image;
        VoxelGrid voxels;
        std::string split;
    };
    std::vector<Item> items;
    std::vector<int> train_ids, val_ids, test_ids;

    static DatasetInMemory load(const std::string& dir) {
        namespace fs = std::filesystem;
        DatasetInMemory d;
        std::vector<ManifestEntry> manifest = read_manifest((fs::path(dir) / "manifest.txt").string());
        for (const ManifestEntry& e : manifest) {
            Item it;
            it.id = e.id;
            it.split = e.split;
            it.image = load_image((fs::path(dir) / e.image_path).string());
            it.voxels = load_voxels((fs::path(dir) / e.voxel_path).string());
            int idx = int(d.items.size());
            if (e.split == "train") d.train_ids.push_back(idx);
            else if (e.split == "val") d.val_ids.push_back(idx);
            else d.test_ids.push_back(idx);
            d.items.push_back(std::move(it));
        }
        if (d.items.empty()) throw IoError("empty dataset at " + dir);
        return d;
    }

    const std::vector<int>& split_ids(const std::string& split) const {
        if (split == "train") return train_ids;
        if (split == "val") return val_ids;
        if (split == "test") return test_ids;
        throw ConfigError("unknown split: " + split);
    }

    int image_side() const { return items.front().image.side; }
    int grid_side() const { return items.front().voxels.side; }
};

template <typename S>
class TrainHarness {
public:
    explicit TrainHarness(const FullConfig& cfg)
        : cfg_(cfg),
          model_(Model<S>::build(cfg.encoder, cfg.decoder, cfg.train.seed)),
          adam_(init_adam_states(model_.params)),
          fingerprint_(config_fingerprint(cfg)) {
        hyper_.lr = cfg.train.lr;
        hyper_.beta1 = cfg.train.beta1;
        hyper_.beta2 = cfg.train.beta2;
        hyper_.weight_decay = cfg.train.weight_decay;
    }

    Model<S>& model() { return model_; }
    const FullConfig& config() const { return cfg_; }
    uint64_t fingerprint() const { return fingerprint_; }
    int64_t global_step() const { return global_step_; }
    int64_t epoch() const { return epoch_; }

    void save(const std::string& path) const {
        CheckpointMeta meta{fingerprint_, epoch_, global_step_, cfg_.train.seed, true};
        save_checkpoint(path, model_.params, &adam_, meta);
    }

    void resume(const std::string& path) {
        CheckpointMeta meta = load_checkpoint(path, model_.params, &adam_);
        if (meta.fingerprint != fingerprint_)
            throw ConfigError("checkpoint fingerprint " + fingerprint_hex(meta.fingerprint) +
                              " does not match config fingerprint " + fingerprint_hex(fingerprint_) +
                              "; refusing");
        epoch_ = meta.epoch;
        global_step_ = meta.step;
    }

    // Load weights for inference without optimizer state.
    void load_weights(const std::string& path) {
        CheckpointMeta meta = load_checkpoint<S>(path, model_.params, nullptr);
        if (meta.fingerprint != fingerprint_)
            throw ConfigError("checkpoint fingerprint " + fingerprint_hex(meta.fingerprint) +
                              " does not match config fingerprint " + fingerprint_hex(fingerprint_) +
                              "; refusing");
        epoch_ = meta.epoch;
        global_step_ = meta.step;
    }

    double train_step(const TensorT<S>& images, const TensorT<S>& targets) {
        Tape<S> tape;
        model_.params.watch_all(tape);
        Rng dp = Rng::stream(cfg_.train.seed, "droppath", uint64_t(global_step_));
        TensorT<S> loss = model_.loss(&tape, images, targets, true, &dp);
        tape.backward(loss);
        auto& entries = model_.params.entries();
        for (size_t i = 0; i < entries.size(); ++i) {
            if (!entries[i].trainable) continue;
            TensorT<S> grad = tape.grad(entries[i].value);
            adamw_step(entries[i].value, grad, adam_[i], hyper_);
        }
        ++global_step_;
        return double(loss.data[0]);
    }

    // Deterministic batch order for one epoch.
    std::vector<int> epoch_order(const DatasetInMemory& data, int64_t epoch) const {
        std::vector<int> order = data.train_ids;
        Rng rng = Rng::stream(cfg_.train.seed, "shuffle", uint64_t(epoch));
        for (int i = int(order.size()) - 1; i > 0; --i)
            std::swap(order[size_t(i)], order[size_t(rng.next_below(uint64_t(i) + 1))]);
        return order;
    }

    void build_batch(const DatasetInMemory& data, const std::vector<int>& ids, size_t begin,
                     size_t count, TensorT<S>& images, TensorT<S>& targets) const {
        int side = data.image_side();
        int64_t vox = int64_t(data.grid_side()) * data.grid_side() * data.grid_side();
        images = TensorT<S>::zeros({int64_t(count), 3, side, side});
        targets = TensorT<S>::zeros({int64_t(count), vox});
        for (size_t k = 0; k < count; ++k) {
            const auto& item = data.items[size_t(ids[begin + k])];
            for (size_t i = 0; i < item.image.values.size(); ++i)
                images.data[k * item.image.values.size() + i] = S(item.image.values[i]);
            for (size_t i = 0; i < item.voxels.values.size(); ++i)
                targets.data[k * size_t(vox) + i] = S(item.voxels.values[i]);
        }
    }

    // Full training run per the config; writes loss curve and checkpoints
    // under out_dir, logs one line per epoch.
    std::vector<LossRecord> run(const DatasetInMemory& data, const std::string& out_dir,
                                std::ostream& log) {
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);
        if (data.train_ids.empty()) throw ConfigError("dataset has no train split");
        const int B = cfg_.train.batch_size;
        const int64_t spe = steps_per_epoch(data);
        std::vector<LossRecord> curve;
        auto t0 = std::chrono::steady_clock::now();
        while (epoch_ < cfg_.train.epochs) {
            std::vector<int> order = epoch_order(data, epoch_);
            int64_t step_in_epoch = global_step_ - epoch_ * spe;
            for (size_t off = size_t(step_in_epoch) * size_t(B); off < order.size();
                 off += size_t(B)) {
                size_t count = std::min(size_t(B), order.size() - off);
                TensorT<S> images, targets;
                build_batch(data, order, off, count, images, targets);
                double loss;
                try {
                    loss = train_step(images, targets);
                } catch (const NumericsError& e) {
                    throw NumericsError(std::string(e.what()) + " at step " +
                                        std::to_string(global_step_));
                }
                double ms = std::chrono::duration<double, std::milli>(
                                std::chrono::steady_clock::now() - t0)
                                .count();
                curve.push_back({global_step_ - 1, loss, ms});
                if (cfg_.train.checkpoint_every > 0 &&
                    global_step_ % cfg_.train.checkpoint_every == 0)
                    save((fs::path(out_dir) / ("ckpt_step" + std::to_string(global_step_) + ".r3dc"))
                             .string());
            }
            ++epoch_;
            double val_iou = -1, val_f = -1;
            if (!data.val_ids.empty()) {
                MetricReport rep = evaluate(data, "val", 0.3, 0.01, 1);
                val_iou = rep.mean_iou();
                val_f = rep.mean_fscore();
            }
            log << "epoch " << epoch_ << "/" << cfg_.train.epochs << " step " << global_step_
                << " loss " << (curve.empty() ? 0.0 : curve.back().loss);
            if (val_iou >= 0) log << " val_iou " << val_iou << " val_fscore " << val_f;
            log << "\n";
        }
        save((fs::path(out_dir) / "final.r3dc").string());
        write_loss_curve((fs::path(out_dir) / "loss.txt").string(), curve);
        return curve;
    }

    // Bounded-step training for overfit experiments: stops early once the
    // train-split IoU reaches stop_iou (checked every eval_every steps).
    struct StepsResult {
        int64_t steps = 0;
        double last_loss = 0;
        double train_iou = 0;
    };
    StepsResult run_steps(const DatasetInMemory& data, int64_t max_steps, int64_t eval_every,
                          double stop_iou, std::ostream* log) {
        const int B = cfg_.train.batch_size;
        StepsResult res;
        while (global_step_ < max_steps) {
            std::vector<int> order = epoch_order(data, epoch_);
            for (size_t off = 0; off < order.size() && global_step_ < max_steps; off += size_t(B)) {
                size_t count = std::min(size_t(B), order.size() - off);
                TensorT<S> images, targets;
                build_batch(data, order, off, count, images, targets);
                res.last_loss = train_step(images, targets);
                res.steps = global_step_;
                if (eval_every > 0 && global_step_ % eval_every == 0) {
                    res.train_iou = evaluate(data, "train", 0.3, 0.01, 1).mean_iou();
                    if (log)
                        *log << "step " << global_step_ << " loss " << res.last_loss
                             << " train_iou " << res.train_iou << "\n";
                    if (res.train_iou >= stop_iou) return res;
                }
            }
            ++epoch_;
        }
        res.train_iou = evaluate(data, "train", 0.3, 0.01, 1).mean_iou();
        return res;
    }

    int64_t steps_per_epoch(const DatasetInMemory& data) const {
        return int64_t((data.train_ids.size() + size_t(cfg_.train.batch_size) - 1) /
                       size_t(cfg_.train.batch_size));
    }

    // Eval-mode metrics over a split; parallel over samples, reduced in order.
    MetricReport evaluate(const DatasetInMemory& data, const std::string& split, double t, double d,
                          int threads) {
        const std::vector<int>& ids = data.split_ids(split);
        MetricReport rep;
        rep.threshold_t = t;
        rep.distance_d = d;
        rep.samples.resize(ids.size());
        int nthreads = std::max(1, threads);
        auto worker = [&](size_t t0) {
            for (size_t k = t0; k < ids.size(); k += size_t(nthreads)) {
                const auto& item = data.items[size_t(ids[k])];
                VoxelGrid probs = infer(item.image);
                rep.samples[k] = {item.id, voxel_iou(probs, item.voxels, t),
                                  fscore(probs, item.voxels, t, d)};
            }
        };
        if (nthreads == 1) {
            worker(0);
        } else {
            std::vector<std::thread> pool;
            for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker, size_t(i));
            for (auto& th : pool) th.join();
        }
        return rep;
    }

    // Probability grid for one image (eval mode).
    VoxelGrid infer(const Image& img) {
        TensorT<S> input = TensorT<S>::zeros({1, 3, img.side, img.side});
        for (size_t i = 0; i < img.values.size(); ++i) input.data[i] = S(img.values[i]);
        TensorT<S> probs = model_.forward(nullptr, input, false);
        return grid_from_tensor(probs, 0, int(probs.shape[1]));
    }

private:
    FullConfig cfg_;
    Model<S> model_;
    AdamStates<S> adam_;
    AdamWHyper hyper_;
    uint64_t fingerprint_ = 0;
    int64_t epoch_ = 0;
    int64_t global_step_ = 0;
};

}  // namespace r3ds
