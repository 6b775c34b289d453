// r3ds: procedural-data single-view voxel reconstruction harness.
// Subcommands: gen-data, train, eval, reconstruct, export-obj, param-count,
// gradcheck, plot-loss. Reports go to stdout, progress to stderr; any
// contract violation exits nonzero.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "r3ds/gradcheck.hpp"
#include "r3ds/io.hpp"
#include "r3ds/plan.hpp"
#include "r3ds/train.hpp"

using namespace r3ds;
namespace fs = std::filesystem;

namespace {

FullConfig load_cfg(const std::string& path, const std::string& data_override) {
    FullConfig cfg = load_config(path);
    if (const char* env = std::getenv("R3DS_SEED")) cfg.train.seed = std::strtoull(env, nullptr, 10);
    if (!data_override.empty()) cfg.train.dataset = data_override;
    return cfg;
}

template <typename S>
int cmd_train(const FullConfig& cfg, const std::string& out_dir, const std::string& resume) {
    if (cfg.train.dataset.empty())
        throw ConfigError("no dataset: set [train] dataset or pass --data");
    DatasetInMemory data = DatasetInMemory::load(cfg.train.dataset);
    if (data.image_side() != cfg.encoder.image_size)
        throw ConfigError("dataset image side " + std::to_string(data.image_side()) +
                          " does not match encoder image_size " +
                          std::to_string(cfg.encoder.image_size));
    TrainHarness<S> harness(cfg);
    if (!resume.empty()) harness.resume(resume);
    std::cerr << "training: " << data.train_ids.size() << " train / " << data.val_ids.size()
              << " val samples, fingerprint " << fingerprint_hex(harness.fingerprint()) << "\n";
    harness.run(data, out_dir, std::cerr);
    std::cout << "final checkpoint: " << (fs::path(out_dir) / "final.r3dc").string() << "\n";
    std::cout << "loss curve: " << (fs::path(out_dir) / "loss.txt").string() << "\n";
    return 0;
}

template <typename S>
int cmd_eval(const FullConfig& cfg, const std::string& ckpt, const std::string& split, double t,
             double d, const std::string& records_path, int threads) {
    if (cfg.train.dataset.empty())
        throw ConfigError("no dataset: set [train] dataset or pass --data");
    DatasetInMemory data = DatasetInMemory::load(cfg.train.dataset);
    TrainHarness<S> harness(cfg);
    harness.load_weights(ckpt);
    MetricReport rep = harness.evaluate(data, split, t, d, threads);
    std::cout << rep.table();
    if (!records_path.empty()) {
        std::ofstream f(records_path);
        if (!f) throw IoError("cannot open for writing: " + records_path);
        f << rep.records();
    }
    return 0;
}

template <typename S>
int cmd_reconstruct(const FullConfig& cfg, const std::string& ckpt, const std::string& image_path,
                    const std::string& out_prefix, double t, bool obj, bool dedup) {
    Image img = load_image(image_path);
    if (img.side != cfg.encoder.image_size)
        throw ConfigError("image resolution " + std::to_string(img.side) +
                          " does not match encoder image_size " +
                          std::to_string(cfg.encoder.image_size));
    TrainHarness<S> harness(cfg);
    harness.load_weights(ckpt);
    VoxelGrid probs = harness.infer(img);
    save_voxels(out_prefix + ".prob.rvox", probs);
    VoxelGrid bin = probs.binarized(float(t));
    save_voxels(out_prefix + ".bin.rvox", bin);
    std::cout << "probability grid: " << out_prefix << ".prob.rvox\n";
    std::cout << "binary grid (t=" << t << "): " << out_prefix << ".bin.rvox, "
              << bin.count_occupied() << " occupied\n";
    if (obj) {
        export_obj(out_prefix + ".obj", bin, dedup);
        std::cout << "mesh: " << out_prefix << ".obj\n";
    }
    return 0;
}

int cmd_param_count(const FullConfig& cfg) {
    std::vector<PlanEntry> plan = model_param_plan(cfg.encoder, cfg.decoder);
    char buf[96];
    std::printf("%-20s %14s\n", "group", "parameters");
    for (const GroupCount& g : count_by_group(plan)) {
        std::snprintf(buf, sizeof buf, "%-20s %14lld\n", g.group.c_str(),
                      static_cast<long long>(g.count));
        std::fputs(buf, stdout);
    }
    std::vector<PlanEntry> enc = encoder_param_plan(cfg.encoder);
    std::vector<PlanEntry> dec = decoder_param_plan(cfg.decoder, cfg.encoder.out_features());
    std::printf("%-20s %14lld\n", "encoder total", static_cast<long long>(count_total(enc)));
    std::printf("%-20s %14lld\n", "decoder total", static_cast<long long>(count_total(dec)));
    std::printf("%-20s %14lld\n", "decoder conv ladder",
                static_cast<long long>(decoder_cnn_param_count(cfg.decoder)));
    std::printf("%-20s %14lld\n", "total", static_cast<long long>(count_total(plan)));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"r3ds: shifted-window single-view voxel reconstruction"};
    app.require_subcommand(1);
    bool f64 = false;
    app.add_flag("--f64", f64, "run with 64-bit scalars");

    auto* gen = app.add_subcommand("gen-data", "generate a procedural dataset");
    std::string gen_out = "data";
    int gen_n = 100, gen_side = 64, gen_threads = 1;
    uint64_t gen_seed = 1;
    std::vector<double> gen_ratios{0.8, 0.1, 0.1};
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--n", gen_n, "sample count (>= 10)");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--image-side", gen_side, "rendered image side (32/64/128)");
    gen->add_option("--ratios", gen_ratios, "train/val/test ratios")->expected(3);
    gen->add_option("--threads", gen_threads, "generation threads");

    auto* train = app.add_subcommand("train", "train a model");
    std::string tr_config, tr_out = "runs/run0", tr_resume, tr_data;
    train->add_option("--config", tr_config, "config file")->required();
    train->add_option("--out", tr_out, "output directory");
    train->add_option("--resume", tr_resume, "checkpoint to resume from");
    train->add_option("--data", tr_data, "dataset directory (overrides config)");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    std::string ev_config, ev_ckpt, ev_split = "test", ev_records, ev_data;
    double ev_t = 0.3, ev_d = 0.01;
    int ev_threads = 1;
    ev->add_option("--config", ev_config, "config file")->required();
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--split", ev_split, "train|val|test");
    ev->add_option("--t", ev_t, "voxelization threshold");
    ev->add_option("--d", ev_d, "f-score distance threshold (unit-cube fraction)");
    ev->add_option("--records", ev_records, "write per-sample records to this file");
    ev->add_option("--data", ev_data, "dataset directory (overrides config)");
    ev->add_option("--threads", ev_threads, "evaluation threads");

    auto* rec = app.add_subcommand("reconstruct", "reconstruct a voxel grid from one image");
    std::string rc_config, rc_ckpt, rc_image, rc_out = "recon";
    double rc_t = 0.3;
    bool rc_obj = false, rc_dedup = false;
    rec->add_option("--config", rc_config, "config file")->required();
    rec->add_option("--checkpoint", rc_ckpt, "checkpoint file")->required();
    rec->add_option("--image", rc_image, "input image (PPM)")->required();
    rec->add_option("--out", rc_out, "output path prefix");
    rec->add_option("--t", rc_t, "voxelization threshold");
    rec->add_flag("--obj", rc_obj, "also export an OBJ mesh");
    rec->add_flag("--dedup", rc_dedup, "deduplicate OBJ vertices");

    auto* exo = app.add_subcommand("export-obj", "convert a voxel file to OBJ");
    std::string ex_vox, ex_out = "mesh.obj";
    double ex_t = 0.3;
    bool ex_dedup = false;
    exo->add_option("--voxels", ex_vox, "voxel file (RVOX1 or RVOXF)")->required();
    exo->add_option("--out", ex_out, "output OBJ path");
    exo->add_option("--t", ex_t, "threshold for probability grids");
    exo->add_flag("--dedup", ex_dedup, "deduplicate vertices");

    auto* pc = app.add_subcommand("param-count", "per-module parameter counts");
    std::string pc_config;
    pc->add_option("--config", pc_config, "config file")->required();

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check (64-bit)");
    std::string gc_config;
    uint64_t gc_seed = 0;
    int gc_coords = 50;
    double gc_h = 1e-4, gc_threshold = 1e-3;
    gc->add_option("--config", gc_config, "config file")->required();
    gc->add_option("--seed", gc_seed, "override seed (default: config seed)");
    gc->add_option("--max-coords", gc_coords, "max sampled parameter coordinates");
    gc->add_option("--step", gc_h, "central-difference step");
    gc->add_option("--threshold", gc_threshold, "failure threshold on max relative error");

    auto* pl = app.add_subcommand("plot-loss", "render a loss curve to SVG");
    std::string pl_curve, pl_out = "loss.svg";
    pl->add_option("--curve", pl_curve, "loss curve file")->required();
    pl->add_option("--out", pl_out, "output SVG path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            DatasetOptions opt;
            opt.n = gen_n;
            opt.seed = gen_seed;
            if (const char* env = std::getenv("R3DS_SEED"))
                opt.seed = std::strtoull(env, nullptr, 10);
            opt.image_side = gen_side;
            opt.train_ratio = gen_ratios[0];
            opt.val_ratio = gen_ratios[1];
            opt.test_ratio = gen_ratios[2];
            opt.threads = gen_threads;
            std::vector<ManifestEntry> m = make_dataset(gen_out, opt);
            std::cout << "wrote " << m.size() << " samples under " << gen_out << "\n";
            return 0;
        }
        if (train->parsed()) {
            FullConfig cfg = load_cfg(tr_config, tr_data);
            return f64 ? cmd_train<double>(cfg, tr_out, tr_resume)
                       : cmd_train<float>(cfg, tr_out, tr_resume);
        }
        if (ev->parsed()) {
            FullConfig cfg = load_cfg(ev_config, ev_data);
            return f64 ? cmd_eval<double>(cfg, ev_ckpt, ev_split, ev_t, ev_d, ev_records, ev_threads)
                       : cmd_eval<float>(cfg, ev_ckpt, ev_split, ev_t, ev_d, ev_records, ev_threads);
        }
        if (rec->parsed()) {
            FullConfig cfg = load_cfg(rc_config, "");
            return f64 ? cmd_reconstruct<double>(cfg, rc_ckpt, rc_image, rc_out, rc_t, rc_obj,
                                                 rc_dedup)
                       : cmd_reconstruct<float>(cfg, rc_ckpt, rc_image, rc_out, rc_t, rc_obj,
                                                rc_dedup);
        }
        if (exo->parsed()) {
            VoxelGrid v = load_voxels(ex_vox);
            VoxelGrid bin = v.kind == VoxelGrid::Kind::Binary ? v : v.binarized(float(ex_t));
            export_obj(ex_out, bin, ex_dedup);
            ObjStats st = obj_stats(ex_out);
            std::cout << ex_out << ": " << st.vertices << " vertices, " << st.faces << " faces\n";
            return 0;
        }
        if (pc->parsed()) {
            return cmd_param_count(load_cfg(pc_config, ""));
        }
        if (gc->parsed()) {
            FullConfig cfg = load_cfg(gc_config, "");
            uint64_t seed = gc_seed ? gc_seed : cfg.train.seed;
            GradcheckReport rep = run_gradcheck(cfg, seed, gc_coords, gc_h);
            std::cout << rep.summary();
            if (!rep.pass(gc_threshold)) {
                std::cerr << "gradcheck FAILED: max relative error " << rep.max_rel_err
                          << " exceeds " << gc_threshold << "\n";
                return 2;
            }
            return 0;
        }
        if (pl->parsed()) {
            write_loss_svg(pl_out, read_loss_curve(pl_curve));
            std::cout << "wrote " << pl_out << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
