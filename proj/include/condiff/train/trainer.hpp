#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "condiff/data/dataset.hpp"
#include "condiff/data/procedural.hpp"
#include "condiff/diffusion/process.hpp"
#include "condiff/diffusion/sampler.hpp"
#include "condiff/networks/predictor.hpp"
#include "condiff/networks/unet.hpp"
#include "condiff/tensor/autograd.hpp"
#include "condiff/tiling/sampler.hpp"
#include "condiff/train/checkpoint.hpp"
#include "condiff/train/metrics.hpp"
#include "condiff/train/run_config.hpp"

namespace condiff::train {

enum class TrainMode { predictor, diffusion, regression };

inline std::string to_string(TrainMode m) {
    switch (m) {
    case TrainMode::predictor: return "predictor";
    case TrainMode::diffusion: return "diffusion";
    case TrainMode::regression: return "regression";
    }
    return "?";
}

inline TrainMode parse_train_mode(const std::string& s) {
    if (s == "predictor") return TrainMode::predictor;
    if (s == "diffusion") return TrainMode::diffusion;
    if (s == "regression") return TrainMode::regression;
    throw FormatError("unknown checkpoint kind '" + s + "'");
}

/// Raised when a loss or gradient turns non-finite; the last periodic checkpoint is left intact.
class TrainingDiverged : public NumericError {
public:
    using NumericError::NumericError;
};

/// Training pairs in model space ([-1, 1]).
struct TrainingSet {
    std::vector<Tensor<float>> x;
    std::vector<Tensor<float>> y;
    std::vector<std::vector<float>> task;
    std::vector<Tensor<float>> u; ///< initial predictions (diffusion mode only)

    std::size_t size() const { return y.size(); }
};

/// Source images named by the config: a procedural corpus or a manifest of PNGs.
inline data::PairedDataset load_pairs(const RunConfig& cfg, std::size_t divisor) {
    if (cfg.data_source == "procedural") {
        const auto sources = data::procedural_corpus(cfg.data_images, cfg.data_image_size, cfg.data_image_size,
                                                     cfg.data_seed);
        return data::build_dataset(sources, cfg.degradation, cfg.data_crop, cfg.data_count,
                                   Rng::mix(cfg.data_seed, 1), divisor);
    }
    return data::build_dataset_from_manifest(cfg.data_source, cfg.data_crop, cfg.data_count,
                                             Rng::mix(cfg.data_seed, 1), divisor);
}

inline TrainingSet to_training_set(const data::PairedDataset& ds) {
    TrainingSet t;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        t.x.push_back(data::to_model_space(ds.x[i]));
        t.y.push_back(data::to_model_space(ds.y[i]));
        t.task.push_back(ds.specs[i].encode());
    }
    return t;
}

/// Runs the frozen predictor over [B,3,H,W] in chunks.
inline Tensor<float> run_predictor(const Tensor<float>& x, const networks::PredictorConfig& cfg,
                                   const nn::ParamStore<float>& p, std::size_t chunk = 16) {
    std::vector<Tensor<float>> parts;
    for (std::size_t b = 0; b < x.dim(0); b += chunk) {
        const std::size_t e = std::min(x.dim(0), b + chunk);
        parts.push_back(networks::initial_predictor_forward(slice(x, 0, b, e).detach(), cfg, p).detach());
    }
    return data::stack(parts);
}

/// Guidance image for the diffusion/regression UNet.
inline Tensor<float> guidance_image(const networks::UNetConfig& m, const Tensor<float>& x, const Tensor<float>& u) {
    switch (m.guidance) {
    case networks::GuidanceSource::initial_predictor: return u.defined() ? u : x;
    case networks::GuidanceSource::degraded_image: return x;
    default: return {};
    }
}

inline nn::ParamStore<float> prefixed_frozen(const nn::ParamStore<float>& p, const std::string& prefix) {
    nn::ParamStore<float> out;
    for (const auto& e : p.entries()) out.add(prefix + e.name, e.tensor.detach(), false);
    return out;
}

/// Config keys that may change between a run and its resumption.
inline std::string resumable_config_text(const RunConfig& cfg) {
    RunConfig c = cfg;
    c.iterations = 0;
    c.log_every = 0;
    c.checkpoint_every = 0;
    c.target_loss = 0;
    c.output_dir.clear();
    c.tile_size = 0;
    c.tile_overlap = 0;
    c.tile_workers = 0;
    return run_config_text(c);
}

struct TrainOptions {
    std::string predictor_checkpoint; ///< required for diffusion mode
    std::string resume_from;          ///< optional checkpoint to continue
    std::size_t stop_after = 0;       ///< stop at this iteration (0: run to the configured count)
    bool write_files = true;          ///< loss log and checkpoints under output.dir
    std::ostream* log = nullptr;      ///< progress lines
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<double> losses;   ///< raw per-iteration losses of this invocation
    std::vector<double> smoothed; ///< smoothed loss after each iteration
    bool early_stopped = false;
    std::string checkpoint_path;
};

inline std::string checkpoint_file(const RunConfig& cfg, TrainMode mode) {
    return (std::filesystem::path(cfg.output_dir) / (to_string(mode) + ".ckpt")).string();
}

/// Parameter store of a fresh model for `mode`.
inline nn::ParamStore<float> init_model(const RunConfig& cfg, TrainMode mode) {
    if (mode == TrainMode::predictor) {
        return nn::init_params<float>(networks::predictor_specs(cfg.predictor), Rng::mix(cfg.seed, 3), true);
    }
    cfg.model.validate();
    return nn::init_params<float>(networks::unet_specs(cfg.model), Rng::mix(cfg.seed, 1), true);
}

/// sample batch -> loss -> backward -> AdamW -> EMA, with a smoothed-loss log and
/// periodic checkpoints.
inline TrainResult train(const RunConfig& cfg, TrainMode mode, const TrainOptions& opt = {}) {
    require(cfg.batch >= 1, "train: batch must be positive");
    require(cfg.loss_smoothing >= 0.0 && cfg.loss_smoothing < 1.0, "train: loss_smoothing outside [0, 1)");
    const std::string cfg_text = run_config_text(cfg);
    const std::size_t divisor = mode == TrainMode::predictor ? cfg.predictor.divisor() : cfg.model.divisor();

    Checkpoint ck;
    Rng rng(Rng::mix(cfg.seed, 2));
    if (!opt.resume_from.empty()) {
        ck = load_checkpoint(opt.resume_from);
        require(ck.kind == to_string(mode), "train: ", opt.resume_from, " is a ", ck.kind, " checkpoint, not ",
                to_string(mode));
        require(resumable_config_text(parse_run_config(ck.config_text)) == resumable_config_text(cfg),
                "train: ", opt.resume_from, " was produced by a different configuration");
        rng.set_state(ck.rng_state);
        ck.params = ck.params.copy(true);
    } else {
        ck.kind = to_string(mode);
        ck.params = init_model(cfg, mode);
        if (mode == TrainMode::diffusion) {
            require(!opt.predictor_checkpoint.empty(), "train: diffusion mode needs a pretrained predictor checkpoint");
            const auto pc = load_checkpoint(opt.predictor_checkpoint);
            require(pc.kind == "predictor", "train: ", opt.predictor_checkpoint, " is not a predictor checkpoint");
            const auto pcfg = parse_run_config(pc.config_text);
            require(pcfg.predictor.base_channels == cfg.predictor.base_channels &&
                        pcfg.predictor.num_stages == cfg.predictor.num_stages &&
                        pcfg.predictor.blocks_per_stage == cfg.predictor.blocks_per_stage,
                    "train: predictor checkpoint architecture differs from predictor.* settings");
            const auto weights = with_ema_weights(pc.params, pc.ema);
            ck.params.merge(prefixed_frozen(weights, ""), "predictor.", false);
        }
        ck.ema = EMAState<float>::create(ck.params, cfg.ema_decay);
        const AdamWConfig adam =
            mode == TrainMode::predictor ? AdamWConfig{cfg.predictor_lr, cfg.adam.beta1, cfg.adam.beta2, cfg.adam.eps,
                                                       cfg.adam.weight_decay}
                                         : cfg.adam;
        ck.optim = OptimState<float>::create(ck.params, adam);
    }
    ck.config_text = cfg_text;

    auto ts = to_training_set(load_pairs(cfg, divisor));
    if (mode == TrainMode::diffusion) {
        const auto pred = ck.params.subset("predictor.");
        const auto u = run_predictor(data::stack(ts.x), cfg.predictor, pred);
        for (std::size_t i = 0; i < ts.size(); ++i) ts.u.push_back(data::unstack(u, i));
    }

    const std::size_t total = mode == TrainMode::predictor ? cfg.predictor_iterations : cfg.iterations;
    const std::size_t stop = opt.stop_after ? std::min(opt.stop_after, total) : total;
    const auto schedule = cfg.diffusion.train_schedule();
    const float rscale = static_cast<float>(cfg.diffusion.residual_scale);

    TrainResult res;
    res.checkpoint_path = checkpoint_file(cfg, mode);
    std::ofstream loss_log;
    if (opt.write_files) {
        std::filesystem::create_directories(cfg.output_dir);
        const auto path = std::filesystem::path(cfg.output_dir) / (to_string(mode) + "_loss.tsv");
        const bool fresh = opt.resume_from.empty();
        loss_log.open(path, fresh ? std::ios::trunc : std::ios::app);
        if (!loss_log) throw FormatError("cannot write " + path.string());
        if (fresh) loss_log << "iteration\tloss\tsmoothed\n";
    }
    auto save = [&] {
        ck.rng_state = rng.state();
        if (opt.write_files) save_checkpoint(ck, res.checkpoint_path);
    };

    while (ck.iteration < stop) {
        std::vector<std::size_t> idx(cfg.batch);
        for (auto& i : idx) i = rng.below(ts.size());
        auto gather = [&](const std::vector<Tensor<float>>& v) {
            std::vector<Tensor<float>> rows;
            for (auto i : idx) rows.push_back(v[i]);
            return data::stack(rows);
        };
        std::vector<std::vector<float>> task;
        for (auto i : idx) task.push_back(ts.task[i]);
        const auto x = gather(ts.x), y = gather(ts.y);

        Tensor<float> loss;
        try {
            switch (mode) {
            case TrainMode::predictor: {
                const auto d = sub(networks::initial_predictor_forward(x, cfg.predictor, ck.params), y);
                loss = mean(square(d));
                break;
            }
            case TrainMode::diffusion: {
                const auto u = gather(ts.u);
                const auto r0 = scale(sub(y, u), rscale).detach();
                const auto g = guidance_image(cfg.model, x, u);
                const diffusion::EpsModel<float> model = [&](const Tensor<float>& z, const std::vector<double>& gam,
                                                             std::size_t b, std::size_t e) {
                    const bool all = b == 0 && e == x.dim(0);
                    const auto xs = all ? x : slice(x, 0, b, e);
                    const auto gs = !g.defined() || all ? g : slice(g, 0, b, e);
                    const std::vector<std::vector<float>> ts_rows(task.begin() + b, task.begin() + e);
                    return networks::diffusion_unet_forward(z, xs, gs, networks::scalar_condition<float>(gam, ts_rows),
                                                            cfg.model, ck.params);
                };
                loss = diffusion::training_loss(r0, model, schedule, rng, cfg.diffusion.loss_norm).loss;
                break;
            }
            case TrainMode::regression: {
                const auto z = Tensor<float>::zeros(x.shape());
                const std::vector<double> ones(cfg.batch, 1.0);
                const auto out = networks::diffusion_unet_forward(z, x, guidance_image(cfg.model, x, {}),
                                                                  networks::scalar_condition<float>(ones, task),
                                                                  cfg.model, ck.params);
                loss = mean(square(sub(out, y)));
                break;
            }
            }
            const double lv = loss.item();
            if (!std::isfinite(lv)) throw NumericError("loss is " + std::to_string(lv));
            const auto grads = backward(loss);
            adamw_step(ck.params, grads, ck.optim);
        } catch (const NumericError& e) {
            throw TrainingDiverged("training diverged at iteration " + std::to_string(ck.iteration + 1) + ": " +
                                   e.what() + "; last good checkpoint: " +
                                   (opt.write_files && std::filesystem::exists(res.checkpoint_path) ? res.checkpoint_path
                                                                                                   : "none"));
        }
        ema_update(ck.ema, ck.params);

        const double lv = loss.item();
        ck.smoothed_loss = ck.has_smoothed ? cfg.loss_smoothing * ck.smoothed_loss + (1.0 - cfg.loss_smoothing) * lv : lv;
        ck.has_smoothed = true;
        ck.iteration += 1;
        res.losses.push_back(lv);
        res.smoothed.push_back(ck.smoothed_loss);
        if (loss_log.is_open()) loss_log << ck.iteration << '\t' << lv << '\t' << ck.smoothed_loss << '\n';
        if (opt.log && cfg.log_every && (ck.iteration % cfg.log_every == 0 || ck.iteration == 1)) {
            *opt.log << to_string(mode) << " iter " << ck.iteration << " loss " << lv << " smoothed "
                     << ck.smoothed_loss << std::endl;
        }
        if (cfg.checkpoint_every && ck.iteration % cfg.checkpoint_every == 0) save();
        if (cfg.target_loss > 0.0 && ck.smoothed_loss < cfg.target_loss) {
            res.early_stopped = true;
            break;
        }
    }
    save();
    ck.params = ck.params.copy(false);
    res.checkpoint = std::move(ck);
    return res;
}

enum class SampleMode { direct, tiled, naive };

/// Restoration from a trained checkpoint. EMA weights by default.
class Restorer {
public:
    Restorer(const Checkpoint& ck, bool use_ema = true)
        : cfg_(parse_run_config(ck.config_text)), mode_(parse_train_mode(ck.kind)) {
        const auto weights = use_ema ? with_ema_weights(ck.params, ck.ema) : ck.params.copy(false);
        if (mode_ == TrainMode::predictor) {
            predictor_ = weights;
        } else {
            for (const auto& e : weights.entries()) {
                if (e.name.rfind("predictor.", 0) == 0) {
                    predictor_.add(e.name.substr(10), e.tensor, false);
                } else {
                    unet_.add(e.name, e.tensor, false);
                }
            }
        }
    }

    const RunConfig& config() const { return cfg_; }
    TrainMode mode() const { return mode_; }

    /// Restores [B,3,H,W] degraded images in [0, 1]; returns [0, 1] estimates.
    Tensor<float> restore(const Tensor<float>& x01, const std::vector<data::DegradationSpec>& specs, Rng& rng,
                          SampleMode sm = SampleMode::direct, const tiling::TilePlan* plan = nullptr,
                          std::size_t workers = 1) const {
        require(x01.rank() == 4 && x01.dim(1) == 3, "restore: expected [B,3,H,W], got ", shape_str(x01.shape()));
        require(specs.size() == x01.dim(0), "restore: ", x01.dim(0), " images but ", specs.size(), " specs");
        const auto x = data::to_model_space(x01);
        std::vector<std::vector<float>> task;
        for (const auto& s : specs) task.push_back(s.encode());

        if (mode_ == TrainMode::predictor) return finish(run_predictor(x, cfg_.predictor, predictor_));
        if (mode_ == TrainMode::regression) {
            const std::vector<double> ones(x.dim(0), 1.0);
            const auto out = networks::diffusion_unet_forward(Tensor<float>::zeros(x.shape()), x,
                                                              guidance_image(cfg_.model, x, {}),
                                                              networks::scalar_condition<float>(ones, task),
                                                              cfg_.model, unet_);
            return finish(out);
        }

        const auto u = run_predictor(x, cfg_.predictor, predictor_);
        const auto g = guidance_image(cfg_.model, x, u);
        const tiling::RegionDenoiser f = [&](const Tensor<float>& z, double gamma, const tiling::TileRect& r) {
            const bool whole = r.top == 0 && r.left == 0 && r.height == x.dim(2) && r.width == x.dim(3);
            auto cut = [&](const Tensor<float>& t) {
                return !t.defined() || whole ? t : crop(t, r.top, r.left, r.height, r.width).detach();
            };
            const std::vector<double> gam(z.dim(0), gamma);
            return networks::diffusion_unet_forward(z, cut(x), cut(g), networks::scalar_condition<float>(gam, task),
                                                    cfg_.model, unet_)
                .detach();
        };
        const auto sched = diffusion::build_inference_schedule(cfg_.diffusion.train_schedule(), cfg_.diffusion.infer_steps);
        Tensor<float> r;
        switch (sm) {
        case SampleMode::direct: r = tiling::sample_residual_full(x.shape(), f, sched, rng); break;
        case SampleMode::tiled:
            require(plan != nullptr, "restore: tiled sampling needs a tile plan");
            r = tiling::sample_residual_tiled(x.shape(), f, sched, *plan, rng, workers);
            break;
        case SampleMode::naive:
            require(plan != nullptr, "restore: naive tiled sampling needs a tile plan");
            r = tiling::sample_residual_naive_tiled(x.shape(), f, sched, *plan, rng);
            break;
        }
        return finish(add(u, scale(r, static_cast<float>(1.0 / cfg_.diffusion.residual_scale))));
    }

    Tensor<float> restore(const Tensor<float>& x01, const data::DegradationSpec& spec, Rng& rng,
                          SampleMode sm = SampleMode::direct, const tiling::TilePlan* plan = nullptr,
                          std::size_t workers = 1) const {
        return restore(x01, std::vector<data::DegradationSpec>(x01.dim(0), spec), rng, sm, plan, workers);
    }

private:
    static Tensor<float> finish(const Tensor<float>& y) {
        std::vector<float> v(y.vec());
        for (auto& e : v) e = std::clamp(0.5f * (e + 1.0f), 0.0f, 1.0f);
        return Tensor<float>(y.shape(), std::move(v));
    }

    RunConfig cfg_;
    TrainMode mode_;
    nn::ParamStore<float> predictor_;
    nn::ParamStore<float> unet_;
};

} // namespace condiff::train
