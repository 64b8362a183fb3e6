// condiff command-line tool. Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "condiff/condiff.hpp"

using namespace condiff;
using train::RunConfig;
using train::TrainMode;
namespace fs = std::filesystem;

namespace {

/// Bad flags or config content.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    bool full_scale = false;
};

RunConfig build_config(const Common& c) {
    try {
        RunConfig cfg = c.full_scale ? RunConfig::full_scale() : RunConfig{};
        if (!c.config.empty()) cfg = train::load_run_config(c.config, cfg);
        for (const auto& s : c.sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
            train::set_config_value(cfg, train::detail::trim(s.substr(0, eq)), train::detail::trim(s.substr(eq + 1)));
        }
        return cfg;
    } catch (const PreconditionError& e) {
        throw UsageError(e.what());
    }
}

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "run configuration file (key = value lines)");
    sub->add_option("--set", c.sets, "override one key, key=value (repeatable)");
    sub->add_flag("--full-scale", c.full_scale, "start from the full-scale settings instead of the desk defaults");
}

void add_seed(CLI::App* sub, Common& c) {
    sub->add_option("--seed", c.seed, "sampling seed (default: the config seed)");
}

std::uint64_t sample_seed(const Common& c, const RunConfig& cfg) { return c.seed.value_or(cfg.seed); }

std::string stem(const std::string& p) { return fs::path(p).stem().string(); }

std::string or_default(const std::string& v, const std::string& d) { return v.empty() ? d : v; }

/// One row of the metrics table; absent values print as "-".
void metric_row(std::ostream& os, const std::string& image, const Tensor<float>* out, const Tensor<float>* ref,
                const tiling::SeamReport* seam) {
    os << image << '\t';
    if (out && ref) {
        os << train::psnr_capped(*out, *ref) << '\t' << train::ssim(*out, *ref);
    } else {
        os << "-\t-";
    }
    os << '\t';
    if (seam) {
        os << seam->ratio;
    } else {
        os << '-';
    }
    os << '\n';
}

constexpr const char* kMetricHeader = "image\tpsnr\tssim\tseam_ratio\n";

int run_train(const Common& c, TrainMode mode, const std::string& predictor, const std::string& resume,
              std::size_t stop_after) {
    const RunConfig cfg = build_config(c);
    train::TrainOptions o;
    o.log = &std::cerr;
    o.resume_from = resume;
    o.stop_after = stop_after;
    if (mode == TrainMode::diffusion) {
        o.predictor_checkpoint = or_default(predictor, train::checkpoint_file(cfg, TrainMode::predictor));
    }
    const auto r = train::train(cfg, mode, o);
    std::cout << train::to_string(mode) << "\titerations\t" << r.checkpoint.iteration << "\tsmoothed_loss\t"
              << std::setprecision(6) << r.checkpoint.smoothed_loss << "\tcheckpoint\t" << r.checkpoint_path << '\n';
    return 0;
}

struct SampleArgs {
    std::string checkpoint;
    std::vector<std::string> inputs;
    std::vector<std::string> references;
    std::string output;
    bool raw = false;
};

int run_sample(const Common& c, const SampleArgs& a, bool tiled) {
    const RunConfig cli_cfg = build_config(c);
    const auto ck_path = or_default(a.checkpoint, train::checkpoint_file(cli_cfg, TrainMode::diffusion));
    const train::Restorer model(train::load_checkpoint(ck_path), !a.raw);
    if (a.inputs.empty()) throw UsageError("sample: at least one --input image is required");
    if (!a.references.empty() && a.references.size() != a.inputs.size()) {
        throw UsageError("sample: --reference count must match --input count");
    }
    const auto out_dir = or_default(a.output, (fs::path(cli_cfg.output_dir) / "samples").string());
    fs::create_directories(out_dir);
    const auto seed = sample_seed(c, cli_cfg);

    std::ofstream tsv(fs::path(out_dir) / "metrics.tsv");
    std::cout << kMetricHeader;
    tsv << kMetricHeader;
    for (std::size_t i = 0; i < a.inputs.size(); ++i) {
        const auto x = data::to_rgb(data::load_png(a.inputs[i]));
        Rng rng(Rng::mix(seed, i));
        Tensor<float> out;
        std::optional<tiling::SeamReport> seam;
        if (tiled) {
            const auto plan = tiling::plan_tiles(x.dim(2), x.dim(3), cli_cfg.tile_size, cli_cfg.tile_overlap,
                                                 model.config().model.divisor());
            out = model.restore(x, cli_cfg.degradation, rng, train::SampleMode::tiled, &plan, cli_cfg.tile_workers);
            seam = tiling::seam_metric(out, plan);
        } else {
            out = model.restore(x, cli_cfg.degradation, rng);
        }
        const auto path = (fs::path(out_dir) / (stem(a.inputs[i]) + "_restored.png")).string();
        data::save_png(out, path);
        std::optional<Tensor<float>> ref;
        if (!a.references.empty()) ref = data::to_rgb(data::load_png(a.references[i]));
        for (std::ostream* os : {static_cast<std::ostream*>(&std::cout), static_cast<std::ostream*>(&tsv)}) {
            metric_row(*os, stem(a.inputs[i]), &out, ref ? &*ref : nullptr, seam ? &*seam : nullptr);
        }
    }
    return 0;
}

/// Clean images from --input, or a held-out procedural set when none are given.
std::vector<std::pair<std::string, Tensor<float>>> clean_images(const std::vector<std::string>& inputs,
                                                                 std::size_t count, std::size_t size) {
    std::vector<std::pair<std::string, Tensor<float>>> out;
    for (const auto& p : inputs) out.emplace_back(stem(p), data::to_rgb(data::load_png(p)));
    if (inputs.empty()) {
        const auto imgs = data::procedural_corpus(count, size, size, 9001);
        for (std::size_t i = 0; i < imgs.size(); ++i) out.emplace_back("procedural_" + std::to_string(i), imgs[i]);
    }
    return out;
}

int run_eval(const Common& c, const SampleArgs& a, std::size_t count, std::size_t size) {
    const RunConfig cli_cfg = build_config(c);
    const auto ck_path = or_default(a.checkpoint, train::checkpoint_file(cli_cfg, TrainMode::diffusion));
    const train::Restorer model(train::load_checkpoint(ck_path), !a.raw);
    const auto seed = sample_seed(c, cli_cfg);
    std::cout << kMetricHeader;
    double gain = 0.0;
    const auto imgs = clean_images(a.inputs, count, size);
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        const auto& [name, y] = imgs[i];
        Rng drng(Rng::mix(seed, 2 * i));
        const auto x = data::apply_degradation(y, cli_cfg.degradation, drng);
        Rng rng(Rng::mix(seed, 2 * i + 1));
        const auto out = model.restore(x, cli_cfg.degradation, rng);
        metric_row(std::cout, name + ":degraded", &x, &y, nullptr);
        metric_row(std::cout, name, &out, &y, nullptr);
        gain += train::psnr_capped(out, y) - train::psnr_capped(x, y);
    }
    std::cerr << "mean psnr gain " << gain / static_cast<double>(imgs.size()) << " dB over " << imgs.size()
              << " images\n";
    return 0;
}

/// Side by side: inter-step | naive, separated by a white column.
Tensor<float> side_by_side(const Tensor<float>& a, const Tensor<float>& b) {
    return concat<float>({a, Tensor<float>::full({1, 3, a.dim(2), 2}, 1.0f), b}, 3).detach();
}

int run_seam_demo(const Common& c, const SampleArgs& a, std::size_t count, std::size_t size) {
    const RunConfig cli_cfg = build_config(c);
    const auto ck_path = or_default(a.checkpoint, train::checkpoint_file(cli_cfg, TrainMode::diffusion));
    const train::Restorer model(train::load_checkpoint(ck_path), !a.raw);
    const auto out_dir = or_default(a.output, (fs::path(cli_cfg.output_dir) / "seam_demo").string());
    fs::create_directories(out_dir);
    const auto seed = sample_seed(c, cli_cfg);

    std::ofstream seams(fs::path(out_dir) / "seams.tsv");
    seams << "image\tmode\tboundary\tinterior\tratio\n";
    std::cout << kMetricHeader;
    const auto imgs = clean_images(a.inputs, count, size);
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        const auto& [name, y] = imgs[i];
        Rng drng(Rng::mix(seed, 2 * i));
        const auto x = data::apply_degradation(y, cli_cfg.degradation, drng);
        const auto plan = tiling::plan_tiles(x.dim(2), x.dim(3), cli_cfg.tile_size, cli_cfg.tile_overlap,
                                             model.config().model.divisor());
        Rng r1(Rng::mix(seed, 2 * i + 1)), r2(Rng::mix(seed, 2 * i + 1));
        const auto inter = model.restore(x, cli_cfg.degradation, r1, train::SampleMode::tiled, &plan, cli_cfg.tile_workers);
        const auto naive = model.restore(x, cli_cfg.degradation, r2, train::SampleMode::naive, &plan);
        const auto si = tiling::seam_metric(inter, plan), sn = tiling::seam_metric(naive, plan);
        metric_row(std::cout, name + ":inter-step", &inter, &y, &si);
        metric_row(std::cout, name + ":naive", &naive, &y, &sn);
        for (const auto& [mode, s] : {std::pair{"inter-step", si}, std::pair{"naive", sn}}) {
            seams << name << '\t' << mode << '\t' << s.boundary << '\t' << s.interior << '\t' << s.ratio << '\n';
        }
        data::save_png(side_by_side(inter, naive), (fs::path(out_dir) / (name + "_seams.png")).string());
    }
    return 0;
}

int run_macs(const Common& c, std::size_t H, std::size_t W) {
    const RunConfig cfg = build_config(c);
    const std::size_t h = H ? H : cfg.data_crop, w = W ? W : cfg.data_crop;
    const auto rep = train::macs_report(cfg.model, h, w);
    train::write_macs_report(std::cout, rep);
    bool exact = true;
    for (const auto& b : rep.blocks) exact = exact && b.matches_closed_form();
    std::cerr << "parameters " << nn::count_params(networks::unet_specs(cfg.model)) << " (closed form "
              << networks::unet_param_count_closed_form(cfg.model) << "); block overheads "
              << (exact ? "match" : "DO NOT match") << " 1 + 1/(HW)\n";
    return exact ? 0 : 1;
}

int run_gradcheck() {
    const auto results = train::run_gradcheck_suite();
    double worst = 0.0;
    std::cout << "case\tmax_rel_error\n";
    for (const auto& r : results) {
        std::cout << r.name << '\t' << r.result.max_rel_error << '\n';
        worst = std::max(worst, r.result.max_rel_error);
    }
    std::cout << "max\t" << worst << '\n';
    return worst < train::kGradTolerance ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conditional residual diffusion for image restoration"};
    app.require_subcommand(1);
    Common common;
    SampleArgs sa;
    std::string predictor, resume;
    std::size_t stop_after = 0, count = 5, size = 64, mh = 0, mw = 0;

    auto* pre = app.add_subcommand("pretrain-predictor", "train the initial predictor");
    auto* tr = app.add_subcommand("train", "train the diffusion model (needs a predictor checkpoint)");
    auto* reg = app.add_subcommand("train-regression", "train the regression baseline");
    for (auto* s : {pre, tr, reg}) {
        add_common(s, common);
        s->add_option("--resume", resume, "continue from this checkpoint");
        s->add_option("--stop-after", stop_after, "stop at this iteration");
    }
    tr->add_option("--predictor", predictor, "predictor checkpoint (default: <output.dir>/predictor.ckpt)");

    auto* smp = app.add_subcommand("sample", "restore degraded PNGs");
    auto* smt = app.add_subcommand("sample-tiled", "restore degraded PNGs with inter-step tiling");
    auto* ev = app.add_subcommand("eval", "degrade clean images, restore, and report metrics");
    auto* sd = app.add_subcommand("seam-demo", "inter-step vs naive tiling on the same images and seeds");
    for (auto* s : {smp, smt, ev, sd}) {
        add_common(s, common);
        add_seed(s, common);
        s->add_option("--checkpoint", sa.checkpoint, "diffusion checkpoint (default: <output.dir>/diffusion.ckpt)");
        s->add_option("--input", sa.inputs, "input PNG files");
        s->add_flag("--raw-weights", sa.raw, "use raw instead of EMA weights");
    }
    for (auto* s : {smp, smt}) {
        s->add_option("--reference", sa.references, "clean PNGs for metrics, in input order");
        s->add_option("--output", sa.output, "output directory");
    }
    sd->add_option("--output", sa.output, "output directory");
    for (auto* s : {ev, sd}) {
        s->add_option("--count", count, "procedural images when no --input is given");
        s->add_option("--size", size, "procedural image side");
    }

    auto* mc = app.add_subcommand("macs", "per-layer multiply-accumulate table");
    add_common(mc, common);
    mc->add_option("--height", mh, "input height (default: data.crop)");
    mc->add_option("--width", mw, "input width (default: data.crop)");
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite in 64-bit mode");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (pre->parsed()) return run_train(common, TrainMode::predictor, "", resume, stop_after);
        if (tr->parsed()) return run_train(common, TrainMode::diffusion, predictor, resume, stop_after);
        if (reg->parsed()) return run_train(common, TrainMode::regression, "", resume, stop_after);
        if (smp->parsed()) return run_sample(common, sa, false);
        if (smt->parsed()) return run_sample(common, sa, true);
        if (ev->parsed()) return run_eval(common, sa, count, size);
        if (sd->parsed()) return run_seam_demo(common, sa, count, size);
        if (mc->parsed()) return run_macs(common, mh, mw);
        if (gc->parsed()) return run_gradcheck();
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
