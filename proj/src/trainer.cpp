#include "vseg/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "vseg/checkpoint.hpp"
#include "vseg/metrics.hpp"

namespace vseg {

namespace fs = std::filesystem;

std::string case_file(const std::string& dir, int64_t index, bool image) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "case_%04lld_%s.vvf", static_cast<long long>(index),
                  image ? "img" : "lbl");
    return (fs::path(dir) / buf).string();
}

std::vector<DatasetCase> load_dataset(const std::string& dir, int64_t count) {
    std::vector<std::string> missing;
    for (int64_t i = 0; i < count; ++i) {
        for (bool img : {true, false}) {
            const std::string p = case_file(dir, i, img);
            if (!fs::exists(p)) missing.push_back(p);
        }
    }
    if (!missing.empty()) {
        std::string msg = "dataset incomplete, missing files:";
        for (const auto& m : missing) msg += "\n  " + m;
        throw ConfigError(msg);
    }
    std::vector<DatasetCase> cases;
    cases.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        DatasetCase c;
        char id[16];
        std::snprintf(id, sizeof(id), "case_%04lld", static_cast<long long>(i));
        c.id = id;
        c.image = load_volume(case_file(dir, i, true));
        c.labels = load_label_volume(case_file(dir, i, false));
        if (c.image.dims != c.labels.dims) {
            throw FormatError(c.id + ": image/label dims mismatch");
        }
        cases.push_back(std::move(c));
    }
    return cases;
}

Tensor<float> batch_images(const std::vector<Volume>& crops) {
    const auto& d = crops[0].dims;
    const int64_t b = static_cast<int64_t>(crops.size());
    std::vector<float> data;
    data.reserve(static_cast<size_t>(b * crops[0].numel()));
    for (const auto& c : crops) data.insert(data.end(), c.voxels.begin(), c.voxels.end());
    return Tensor<float>::from_data({b, 1, d[0], d[1], d[2]}, std::move(data));
}

Tensor<float> onehot_labels(const std::vector<LabelVolume>& crops, int64_t num_classes) {
    const auto& d = crops[0].dims;
    const int64_t b = static_cast<int64_t>(crops.size());
    const int64_t sp = crops[0].numel();
    std::vector<float> data(static_cast<size_t>(b * num_classes * sp), 0.f);
    for (int64_t i = 0; i < b; ++i) {
        const auto& lbl = crops[static_cast<size_t>(i)].labels;
        for (int64_t s = 0; s < sp; ++s) {
            const int64_t cls = lbl[static_cast<size_t>(s)];
            data[static_cast<size_t>((i * num_classes + cls) * sp + s)] = 1.f;
        }
    }
    return Tensor<float>::from_data({b, num_classes, d[0], d[1], d[2]}, std::move(data));
}

WindowInference infer_case(const Network<float>& net, const Volume& vol,
                           const std::array<int64_t, 3>& window, const Tensor<float>* prefix_cache) {
    if (window != vol.dims || !prefix_cache) return sliding_window_infer(net, vol, window);

    NoGradGuard ng;
    auto input = Tensor<float>::from_data({1, 1, vol.dims[0], vol.dims[1], vol.dims[2]}, vol.voxels);
    ForwardOptions<float> opts;
    opts.vit_prefix_cache = prefix_cache;
    auto fw = net.forward(input, opts);
    WindowInference out;
    out.dims = vol.dims;
    out.num_classes = net.config().num_classes;
    out.probs = fw.probs.data();
    out.uncertainty = fw.belief.uncertainty.data();
    return out;
}

namespace {

std::string iso_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

Trainer::Trainer(const RunConfig& cfg) : cfg_(cfg) {
    cfg_.train.validate();
    cfg_.model.crop = cfg_.train.crop;
    net_ = std::make_unique<Network<float>>(cfg_.model, Rng::derive(cfg_.train.seed, 0));
}

TrainOutcome Trainer::run() {
    const auto& tc = cfg_.train;
    fs::create_directories(tc.out_dir);

    const int64_t total_cases = tc.n_train + tc.n_val + tc.n_test;
    auto cases = load_dataset(tc.data_dir, total_cases);

    TrainOutcome outcome;
    outcome.best_checkpoint = (fs::path(tc.out_dir) / "best.ckpt").string();
    outcome.final_checkpoint = (fs::path(tc.out_dir) / "final.ckpt").string();
    outcome.metrics_csv = (fs::path(tc.out_dir) / "metrics.csv").string();
    outcome.steps_csv = (fs::path(tc.out_dir) / "steps.csv").string();
    const std::string config_echo = dump_config(cfg_);

    {
        nlohmann::ordered_json manifest;
        manifest["command"] = "train";
        manifest["code_version"] = "vseg 0.1.0";
        manifest["seed"] = tc.seed;
        manifest["ablation"] = ablation_name(cfg_.model.ablation);
        manifest["start_time"] = iso_now();
        manifest["config"] = config_echo;
        manifest["outputs"] = {{"best_checkpoint", outcome.best_checkpoint},
                               {"final_checkpoint", outcome.final_checkpoint},
                               {"metrics_csv", outcome.metrics_csv},
                               {"steps_csv", outcome.steps_csv}};
        std::ofstream mf(fs::path(tc.out_dir) / "manifest.json");
        mf << manifest.dump(2) << "\n";
    }

    std::ofstream steps(outcome.steps_csv);
    std::ofstream metrics(outcome.metrics_csv);
    steps << "epoch,step,dice,wce,kl,total\n";
    metrics << "epoch,train_dice,train_wce,train_kl,train_total,val_dsc,val_assd_mm\n";

    Rng rng_shuffle(Rng::derive(tc.seed, 1));
    Rng rng_crop(Rng::derive(tc.seed, 2));
    Rng rng_noise(Rng::derive(tc.seed, 3));

    Adam<float> opt(net_->params().trainable(), tc.lr, tc.adam_beta1, tc.adam_beta2, tc.adam_eps);

    // The ViT prefix (patch embed + positions + frozen blocks) never changes;
    // with whole-volume crops its output per case is a constant worth caching.
    const bool vit_on = cfg_.model.ablation.enhanced_vit;
    std::vector<Tensor<float>> prefix_cache(cases.size());
    auto cacheable = [&](const DatasetCase& c) { return vit_on && c.image.dims == tc.crop; };
    {
        NoGradGuard ng;
        for (size_t i = 0; i < cases.size(); ++i) {
            if (!cacheable(cases[i])) continue;
            auto input = Tensor<float>::from_data(
                {1, 1, tc.crop[0], tc.crop[1], tc.crop[2]}, cases[i].image.voxels);
            prefix_cache[i] = net_->vit_prefix(input);
        }
    }

    std::vector<int64_t> train_idx(static_cast<size_t>(tc.n_train));
    for (int64_t i = 0; i < tc.n_train; ++i) train_idx[static_cast<size_t>(i)] = i;

    const bool use_evidence = cfg_.model.ablation.eur;

    for (int64_t epoch = 0; epoch < tc.epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng_shuffle.engine());
        double ep_dice = 0, ep_wce = 0, ep_kl = 0, ep_total = 0;
        int64_t steps_done = 0;

        for (int64_t b0 = 0; b0 < tc.n_train; b0 += tc.batch) {
            const int64_t bsz = std::min<int64_t>(tc.batch, tc.n_train - b0);
            std::vector<Volume> imgs;
            std::vector<LabelVolume> lbls;
            std::vector<const Tensor<float>*> caches;
            bool all_cached = true;
            for (int64_t j = 0; j < bsz; ++j) {
                const auto& c = cases[static_cast<size_t>(train_idx[static_cast<size_t>(b0 + j)])];
                auto [ci, cl] = random_crop(c.image, c.labels, tc.crop, rng_crop);
                imgs.push_back(std::move(ci));
                lbls.push_back(std::move(cl));
                const auto& cache = prefix_cache[static_cast<size_t>(
                    train_idx[static_cast<size_t>(b0 + j)])];
                if (cacheable(c) && cache.defined()) caches.push_back(&cache);
                else all_cached = false;
            }
            auto input = batch_images(imgs);
            auto target = onehot_labels(lbls, cfg_.model.num_classes);

            Tensor<float> batch_cache;
            ForwardOptions<float> opts;
            opts.want_uncertainty = use_evidence;
            if (vit_on && all_cached) {
                std::vector<Tensor<float>> parts;
                parts.reserve(caches.size());
                for (const auto* c : caches) parts.push_back(*c);
                NoGradGuard ng;
                batch_cache = bsz == 1 ? parts[0] : concat(parts, 0);
                opts.vit_prefix_cache = &batch_cache;
            }
            CvfNoise<float> noise;
            if (cfg_.model.ablation.cvf) {
                const int64_t div = int64_t{1} << (cfg_.model.cnn.num_scales - 1);
                noise = net_->sample_noise(
                    {bsz, cfg_.model.deepest_channels(), tc.crop[0] / div, tc.crop[1] / div,
                     tc.crop[2] / div},
                    rng_noise);
                opts.noise = &noise;
            }

            auto fw = net_->forward(input, opts);
            LossParts<float> parts;
            try {
                parts = total_loss(fw.probs, use_evidence ? fw.belief.alpha : Tensor<float>(),
                                   target, epoch, cfg_.loss);
            } catch (const NumericsError&) {
                std::ofstream abort_marker(fs::path(tc.out_dir) / "abort.json");
                abort_marker << "{\"epoch\": " << epoch << ", \"reason\": \"non-finite loss\"}\n";
                throw;
            }
            net_->params().zero_grad();
            parts.total.backward();
            opt.step();

            const double total_v = static_cast<double>(parts.total.item());
            steps << epoch << "," << steps_done << "," << fmt(parts.dice) << "," << fmt(parts.wce)
                  << "," << fmt(parts.kl) << "," << fmt(total_v) << "\n";
            ep_dice += parts.dice;
            ep_wce += parts.wce;
            ep_kl += parts.kl;
            ep_total += total_v;
            ++steps_done;
        }

        // validation pass
        double val_dsc_sum = 0;
        double val_assd_sum = 0;
        int64_t val_assd_defined = 0;
        for (int64_t vi = tc.n_train; vi < tc.n_train + tc.n_val; ++vi) {
            const auto& c = cases[static_cast<size_t>(vi)];
            const auto* cache =
                cacheable(c) && prefix_cache[static_cast<size_t>(vi)].defined()
                    ? &prefix_cache[static_cast<size_t>(vi)]
                    : nullptr;
            auto inf = infer_case(*net_, c.image, tc.crop, cache);
            auto mask = argmax_mask(inf, c.labels.spacing);
            val_dsc_sum += dsc(mask, c.labels);
            try {
                val_assd_sum += assd(mask, c.labels);
                ++val_assd_defined;
            } catch (const UndefinedMetricError&) {
            }
        }
        const double val_dsc = tc.n_val > 0 ? val_dsc_sum / static_cast<double>(tc.n_val) : 0.0;
        const std::string val_assd =
            val_assd_defined > 0 ? fmt(val_assd_sum / static_cast<double>(val_assd_defined))
                                 : "undefined";

        const double inv_steps = steps_done > 0 ? 1.0 / static_cast<double>(steps_done) : 0.0;
        metrics << epoch << "," << fmt(ep_dice * inv_steps) << "," << fmt(ep_wce * inv_steps) << ","
                << fmt(ep_kl * inv_steps) << "," << fmt(ep_total * inv_steps) << "," << fmt(val_dsc)
                << "," << val_assd << "\n";
        metrics.flush();

        if (val_dsc > outcome.best_val_dsc) {
            outcome.best_val_dsc = val_dsc;
            outcome.best_epoch = epoch;
            save_checkpoint(outcome.best_checkpoint, net_->params(), config_echo);
        }
    }

    save_checkpoint(outcome.final_checkpoint, net_->params(), config_echo);
    {
        nlohmann::ordered_json done;
        done["end_time"] = iso_now();
        done["best_val_dsc"] = outcome.best_val_dsc;
        done["best_epoch"] = outcome.best_epoch;
        std::ofstream cf(fs::path(tc.out_dir) / "completion.json");
        cf << done.dump(2) << "\n";
    }
    return outcome;
}

}  // namespace vseg
