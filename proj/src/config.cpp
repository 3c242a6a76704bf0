#include "vseg/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace vseg {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

struct KeyContext {
    std::string source, section, key;
    int line;
    std::string where() const {
        return "'" + key + "' in [" + section + "] at " + source + ":" + std::to_string(line);
    }
};

int64_t parse_int(const std::string& v, const KeyContext& ctx) {
    try {
        size_t pos = 0;
        const int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw ConfigError("expected integer for " + ctx.where() + ", got '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& v, const KeyContext& ctx) {
    try {
        size_t pos = 0;
        const uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw ConfigError("expected unsigned integer for " + ctx.where() + ", got '" + v + "'");
    }
}

double parse_f64(const std::string& v, const KeyContext& ctx) {
    try {
        size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw ConfigError("expected number for " + ctx.where() + ", got '" + v + "'");
    }
}

std::array<int64_t, 3> parse_dims(const std::string& v, const KeyContext& ctx) {
    std::istringstream is(v);
    std::array<int64_t, 3> out{};
    for (int i = 0; i < 3; ++i) {
        if (!(is >> out[static_cast<size_t>(i)])) {
            throw ConfigError("expected three extents for " + ctx.where() + ", got '" + v + "'");
        }
    }
    std::string rest;
    if (is >> rest) throw ConfigError("trailing tokens for " + ctx.where());
    return out;
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& source_name) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("unterminated section header at " + source_name + ":" +
                                  std::to_string(line_no));
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section != "model" && section != "train" && section != "loss" &&
                section != "phantom") {
                throw ConfigError("unknown section [" + section + "] at " + source_name + ":" +
                                  std::to_string(line_no));
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("expected 'key = value' at " + source_name + ":" +
                              std::to_string(line_no));
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const KeyContext ctx{source_name, section, key, line_no};

        if (section == "model") {
            if (key == "patch_size") cfg.model.vit.patch_size = parse_int(value, ctx);
            else if (key == "embed_dim") cfg.model.vit.embed_dim = parse_int(value, ctx);
            else if (key == "depth") cfg.model.vit.depth = parse_int(value, ctx);
            else if (key == "heads") cfg.model.vit.heads = parse_int(value, ctx);
            else if (key == "trainable_tail") cfg.model.vit.trainable_tail = parse_int(value, ctx);
            else if (key == "base_channels") cfg.model.cnn.base_channels = parse_int(value, ctx);
            else if (key == "fusion_width") cfg.model.fusion_width = parse_int(value, ctx);
            else if (key == "num_classes") cfg.model.num_classes = parse_int(value, ctx);
            else if (key == "ablation") cfg.model.ablation = ablation_from_name(value);
            else throw ConfigError("unknown key " + ctx.where());
        } else if (section == "train") {
            if (key == "epochs") cfg.train.epochs = parse_int(value, ctx);
            else if (key == "lr") cfg.train.lr = parse_f64(value, ctx);
            else if (key == "batch") cfg.train.batch = parse_int(value, ctx);
            else if (key == "crop") cfg.train.crop = parse_dims(value, ctx);
            else if (key == "seed") cfg.train.seed = parse_u64(value, ctx);
            else if (key == "data_dir") cfg.train.data_dir = value;
            else if (key == "out_dir") cfg.train.out_dir = value;
            else if (key == "n_train") cfg.train.n_train = parse_int(value, ctx);
            else if (key == "n_val") cfg.train.n_val = parse_int(value, ctx);
            else if (key == "n_test") cfg.train.n_test = parse_int(value, ctx);
            else if (key == "adam_beta1") cfg.train.adam_beta1 = parse_f64(value, ctx);
            else if (key == "adam_beta2") cfg.train.adam_beta2 = parse_f64(value, ctx);
            else if (key == "adam_eps") cfg.train.adam_eps = parse_f64(value, ctx);
            else throw ConfigError("unknown key " + ctx.where());
        } else if (section == "loss") {
            if (key == "gamma") cfg.loss.gamma = parse_f64(value, ctx);
            else if (key == "anneal_epochs") cfg.loss.anneal_epochs = parse_int(value, ctx);
            else if (key == "smooth") cfg.loss.smooth = parse_f64(value, ctx);
            else if (key == "class_weights") {
                if (value == "inverse-frequency") cfg.loss.class_weight_mode = ClassWeightMode::InverseFrequency;
                else if (value == "uniform") cfg.loss.class_weight_mode = ClassWeightMode::Uniform;
                else throw ConfigError("unknown class_weights mode '" + value + "' for " + ctx.where());
            } else throw ConfigError("unknown key " + ctx.where());
        } else if (section == "phantom") {
            if (key == "dims") cfg.phantom.dims = parse_dims(value, ctx);
            else if (key == "num_trees") cfg.phantom.num_trees = parse_int(value, ctx);
            else if (key == "branch_depth") cfg.phantom.branch_depth = parse_int(value, ctx);
            else if (key == "radius_root") cfg.phantom.radius_root = parse_f64(value, ctx);
            else if (key == "radius_decay") cfg.phantom.radius_decay = parse_f64(value, ctx);
            else if (key == "tortuosity") cfg.phantom.tortuosity = parse_f64(value, ctx);
            else if (key == "vessel_contrast") cfg.phantom.vessel_contrast = parse_f64(value, ctx);
            else if (key == "noise_sigma") cfg.phantom.noise_sigma = parse_f64(value, ctx);
            else if (key == "background_texture") cfg.phantom.background_texture = parse_f64(value, ctx);
            else if (key == "seed") cfg.phantom.seed = parse_u64(value, ctx);
            else throw ConfigError("unknown key " + ctx.where());
        } else {
            throw ConfigError("key outside any section at " + source_name + ":" +
                              std::to_string(line_no));
        }
    }
    if (cfg.loss.gamma < 0.0 || cfg.loss.gamma > 1.0) throw ConfigError("gamma must be in [0,1]");
    if (cfg.loss.smooth <= 0.0) throw ConfigError("smooth must be positive");
    cfg.model.crop = cfg.train.crop;
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_config_text(buf.str(), path);
}

std::string dump_config(const RunConfig& cfg) {
    char buf[4096];
    std::snprintf(
        buf, sizeof(buf),
        "[model]\n"
        "patch_size = %lld\nembed_dim = %lld\ndepth = %lld\nheads = %lld\n"
        "trainable_tail = %lld\nbase_channels = %lld\nfusion_width = %lld\n"
        "num_classes = %lld\nablation = %s\n"
        "\n[train]\n"
        "epochs = %lld\nlr = %.17g\nbatch = %lld\ncrop = %lld %lld %lld\nseed = %llu\n"
        "data_dir = %s\nout_dir = %s\nn_train = %lld\nn_val = %lld\nn_test = %lld\n"
        "adam_beta1 = %.17g\nadam_beta2 = %.17g\nadam_eps = %.17g\n"
        "\n[loss]\n"
        "gamma = %.17g\nanneal_epochs = %lld\nsmooth = %.17g\nclass_weights = %s\n"
        "\n[phantom]\n"
        "dims = %lld %lld %lld\nnum_trees = %lld\nbranch_depth = %lld\nradius_root = %.17g\n"
        "radius_decay = %.17g\ntortuosity = %.17g\nvessel_contrast = %.17g\n"
        "noise_sigma = %.17g\nbackground_texture = %.17g\nseed = %llu\n",
        static_cast<long long>(cfg.model.vit.patch_size),
        static_cast<long long>(cfg.model.vit.embed_dim),
        static_cast<long long>(cfg.model.vit.depth), static_cast<long long>(cfg.model.vit.heads),
        static_cast<long long>(cfg.model.vit.trainable_tail),
        static_cast<long long>(cfg.model.cnn.base_channels),
        static_cast<long long>(cfg.model.fusion_width),
        static_cast<long long>(cfg.model.num_classes), ablation_name(cfg.model.ablation).c_str(),
        static_cast<long long>(cfg.train.epochs), cfg.train.lr,
        static_cast<long long>(cfg.train.batch), static_cast<long long>(cfg.train.crop[0]),
        static_cast<long long>(cfg.train.crop[1]), static_cast<long long>(cfg.train.crop[2]),
        static_cast<unsigned long long>(cfg.train.seed), cfg.train.data_dir.c_str(),
        cfg.train.out_dir.c_str(), static_cast<long long>(cfg.train.n_train),
        static_cast<long long>(cfg.train.n_val), static_cast<long long>(cfg.train.n_test),
        cfg.train.adam_beta1, cfg.train.adam_beta2, cfg.train.adam_eps, cfg.loss.gamma,
        static_cast<long long>(cfg.loss.anneal_epochs), cfg.loss.smooth,
        cfg.loss.class_weight_mode == ClassWeightMode::InverseFrequency ? "inverse-frequency"
                                                                        : "uniform",
        static_cast<long long>(cfg.phantom.dims[0]), static_cast<long long>(cfg.phantom.dims[1]),
        static_cast<long long>(cfg.phantom.dims[2]), static_cast<long long>(cfg.phantom.num_trees),
        static_cast<long long>(cfg.phantom.branch_depth), cfg.phantom.radius_root,
        cfg.phantom.radius_decay, cfg.phantom.tortuosity, cfg.phantom.vessel_contrast,
        cfg.phantom.noise_sigma, cfg.phantom.background_texture,
        static_cast<unsigned long long>(cfg.phantom.seed));
    return std::string(buf);
}

}  // namespace vseg
