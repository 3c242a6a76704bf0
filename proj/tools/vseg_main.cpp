#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "vseg/checkpoint.hpp"
#include "vseg/gradcheck.hpp"
#include "vseg/metrics.hpp"
#include "vseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace vseg;

namespace {

std::optional<uint64_t> env_seed_override() {
    const char* v = std::getenv("VF_SEED");
    if (!v || !*v) return std::nullopt;
    try {
        return std::stoull(v);
    } catch (...) {
        throw UsageError("VF_SEED must be an unsigned integer, got '" + std::string(v) + "'");
    }
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

int cmd_phantom_gen(const std::string& spec_path, int64_t count, const std::string& out_dir) {
    RunConfig cfg = load_config_file(spec_path);
    if (auto seed = env_seed_override()) cfg.phantom.seed = *seed;
    fs::create_directories(out_dir);

    nlohmann::ordered_json manifest;
    manifest["command"] = "phantom-gen";
    manifest["spec"] = dump_config(cfg);
    manifest["seed"] = cfg.phantom.seed;
    manifest["count"] = count;
    manifest["cases"] = nlohmann::ordered_json::array();

    for (int64_t i = 0; i < count; ++i) {
        PhantomSpec spec = cfg.phantom;
        spec.seed = Rng::derive(cfg.phantom.seed, static_cast<uint64_t>(i) + 1);
        auto [img, lbl] = generate_phantom(spec);
        const std::string img_path = case_file(out_dir, i, true);
        const std::string lbl_path = case_file(out_dir, i, false);
        save_volume(img, img_path);
        save_volume(lbl, lbl_path);
        nlohmann::ordered_json c;
        c["index"] = i;
        c["seed"] = spec.seed;
        c["image"] = img_path;
        c["labels"] = lbl_path;
        c["image_hash"] = file_hash(img_path);
        c["labels_hash"] = file_hash(lbl_path);
        c["foreground_voxels"] = lbl.foreground_count();
        manifest["cases"].push_back(c);
    }
    std::ofstream mf(fs::path(out_dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
    std::cout << "wrote " << 2 * count << " volumes + manifest to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& ablation,
              const std::string& out_override) {
    RunConfig cfg = load_config_file(config_path);
    if (!ablation.empty()) cfg.model.ablation = ablation_from_name(ablation);
    if (!out_override.empty()) cfg.train.out_dir = out_override;
    if (auto seed = env_seed_override()) cfg.train.seed = *seed;
    cfg.model.crop = cfg.train.crop;
    cfg.model.validate();
    cfg.train.validate();

    Trainer trainer(cfg);
    const auto outcome = trainer.run();
    std::cout << "training done: best val DSC " << fmt(outcome.best_val_dsc) << " at epoch "
              << outcome.best_epoch << "\n"
              << "checkpoint: " << outcome.best_checkpoint << "\n";
    return 0;
}

struct LoadedModel {
    RunConfig cfg;
    std::unique_ptr<Network<float>> net;
};

LoadedModel load_model(const std::string& ckpt_path) {
    auto ckpt = load_checkpoint(ckpt_path);
    LoadedModel m;
    m.cfg = parse_config_text(ckpt.config_echo, ckpt_path + "(embedded config)");
    m.cfg.model.crop = m.cfg.train.crop;
    m.net = std::make_unique<Network<float>>(m.cfg.model, Rng::derive(m.cfg.train.seed, 0));
    restore_params(m.net->params(), ckpt);
    return m;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, const std::string& out_csv,
             const std::string& subset) {
    auto m = load_model(ckpt_path);
    const auto& tc = m.cfg.train;
    const std::string dir = data_dir.empty() ? tc.data_dir : data_dir;
    auto cases = load_dataset(dir, tc.n_train + tc.n_val + tc.n_test);

    int64_t lo = 0, hi = static_cast<int64_t>(cases.size());
    if (subset == "train") hi = tc.n_train;
    else if (subset == "val") { lo = tc.n_train; hi = tc.n_train + tc.n_val; }
    else if (subset == "test") lo = tc.n_train + tc.n_val;
    else if (subset != "all") throw UsageError("unknown case subset '" + subset + "'");

    std::ofstream csv(out_csv);
    if (!csv) throw ConfigError("cannot open " + out_csv + " for writing");
    csv << "case,dsc,assd_mm,n_pred_surface,n_gt_surface\n";
    std::vector<double> dscs, assds;
    for (int64_t i = lo; i < hi; ++i) {
        const auto& c = cases[static_cast<size_t>(i)];
        auto inf = sliding_window_infer(*m.net, c.image, tc.crop);
        auto mask = argmax_mask(inf, c.labels.spacing);
        const double d = dsc(mask, c.labels);
        dscs.push_back(d);
        const auto sp = surface_voxels(mask);
        const auto sg = surface_voxels(c.labels);
        std::string assd_cell = "undefined";
        try {
            const double a = assd(mask, c.labels);
            assds.push_back(a);
            assd_cell = fmt(a);
        } catch (const UndefinedMetricError&) {
        }
        csv << c.id << "," << fmt(d) << "," << assd_cell << "," << sp.size() << "," << sg.size()
            << "\n";
    }
    auto mean_of = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    auto std_of = [&](const std::vector<double>& v) {
        if (v.size() < 2) return 0.0;
        const double m2 = mean_of(v);
        double s = 0;
        for (double x : v) s += (x - m2) * (x - m2);
        return std::sqrt(s / static_cast<double>(v.size() - 1));
    };
    csv << "mean," << fmt(mean_of(dscs)) << ","
        << (assds.empty() ? "undefined" : fmt(mean_of(assds))) << ",,\n";
    csv << "std," << fmt(std_of(dscs)) << "," << (assds.empty() ? "undefined" : fmt(std_of(assds)))
        << ",,\n";
    std::cout << "eval: " << (hi - lo) << " cases, mean DSC " << fmt(mean_of(dscs)) << "\n";
    return 0;
}

int cmd_infer(const std::string& ckpt_path, const std::string& input_path,
              const std::string& out_prefix) {
    auto m = load_model(ckpt_path);
    auto vol = load_volume(input_path);
    auto inf = sliding_window_infer(*m.net, vol, m.cfg.train.crop);
    save_volume(foreground_prob_volume(inf, vol.spacing), out_prefix + "_prob.vvf");
    save_volume(argmax_mask(inf, vol.spacing), out_prefix + "_mask.vvf");
    save_volume(uncertainty_volume(inf, vol.spacing), out_prefix + "_unc.vvf");
    std::cout << "wrote " << out_prefix << "_{prob,mask,unc}.vvf\n";
    return 0;
}

int cmd_gradcheck() {
    const auto t0 = std::chrono::steady_clock::now();
    auto suite = standard_gradcheck_suite();
    bool all_pass = true;
    std::printf("%-22s %-14s %-9s %s\n", "op", "max_rel_err", "tol", "status");
    for (auto& c : suite) {
        const auto rep = c.run();
        all_pass = all_pass && rep.passed;
        std::printf("%-22s %-14.3e %-9.0e %s%s%s\n", rep.op_name.c_str(), rep.max_relative_error,
                    rep.tolerance, rep.passed ? "PASS" : "FAIL",
                    rep.diagnostic.empty() ? "" : "  ", rep.diagnostic.c_str());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%zu checks in %.1f s: %s\n", suite.size(), secs, all_pass ? "all passed" : "FAILURES");
    return all_pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"parallel ViT-CNN vessel segmentation on synthetic phantoms"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("phantom-gen", "generate a synthetic phantom dataset");
    std::string gen_spec, gen_out = "data";
    int64_t gen_count = 30;
    gen->add_option("--spec", gen_spec, "config file with a [phantom] section")->required();
    gen->add_option("--count", gen_count, "number of cases");
    gen->add_option("--out", gen_out, "output directory");

    auto* train = app.add_subcommand("train", "train a model");
    std::string train_cfg, train_ablation, train_out;
    train->add_option("--config", train_cfg, "run configuration file")->required();
    train->add_option("--ablation", train_ablation, "net1|net2|net3|net4|ours (overrides config)");
    train->add_option("--out", train_out, "output directory (overrides config)");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string eval_ckpt, eval_data, eval_out = "report.csv", eval_cases = "test";
    eval->add_option("--checkpoint", eval_ckpt)->required();
    eval->add_option("--data", eval_data, "dataset directory (default: from config echo)");
    eval->add_option("--out", eval_out, "report CSV path");
    eval->add_option("--cases", eval_cases, "train|val|test|all");

    auto* infer = app.add_subcommand("infer", "segment one volume");
    std::string inf_ckpt, inf_input, inf_prefix = "out";
    infer->add_option("--checkpoint", inf_ckpt)->required();
    infer->add_option("--input", inf_input, "input VVF1 volume")->required();
    infer->add_option("--out-prefix", inf_prefix);

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every registered op");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_phantom_gen(gen_spec, gen_count, gen_out);
        if (train->parsed()) return cmd_train(train_cfg, train_ablation, train_out);
        if (eval->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_out, eval_cases);
        if (infer->parsed()) return cmd_infer(inf_ckpt, inf_input, inf_prefix);
        if (gc->parsed()) return cmd_gradcheck();
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
