#pragma once

#include "vseg/losses.hpp"
#include "vseg/model_config.hpp"
#include "vseg/phantom.hpp"

namespace vseg {

struct TrainConfig {
    int64_t epochs = 150;
    double lr = 1e-4;
    int64_t batch = 2;
    std::array<int64_t, 3> crop{64, 64, 64};
    uint64_t seed = 1;
    std::string data_dir = "data";
    std::string out_dir = "run";
    int64_t n_train = 20;
    int64_t n_val = 5;
    int64_t n_test = 5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const {
        if (epochs < 1 || batch < 1) throw ConfigError("epochs and batch must be >= 1");
        if (n_train < 1 || n_val < 0 || n_test < 0) throw ConfigError("bad dataset split sizes");
        for (int64_t c : crop)
            if (c < 8) throw ConfigError("crop extents must be >= 8");
    }
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    LossConfig loss;
    PhantomSpec phantom;
};

// Flat sectioned key = value file; '#' or ';' start comments. Unknown keys
// and malformed values are reported with the key name and line number.
RunConfig parse_config_text(const std::string& text, const std::string& source_name);
RunConfig load_config_file(const std::string& path);

// Canonical echo: parseable by parse_config_text, deterministic field order.
std::string dump_config(const RunConfig& cfg);

}  // namespace vseg
