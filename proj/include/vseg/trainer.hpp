#pragma once

#include "vseg/config.hpp"
#include "vseg/network.hpp"
#include "vseg/sliding_window.hpp"

namespace vseg {

struct DatasetCase {
    std::string id;
    Volume image;
    LabelVolume labels;
};

// Loads case_{i:04}_{img,lbl}.vvf pairs; every missing file is listed in the
// startup error.
std::vector<DatasetCase> load_dataset(const std::string& dir, int64_t count);

std::string case_file(const std::string& dir, int64_t index, bool image);

// One-hot label tensor [B, K, d, h, w] from crops.
Tensor<float> onehot_labels(const std::vector<LabelVolume>& crops, int64_t num_classes);
Tensor<float> batch_images(const std::vector<Volume>& crops);

// Whole-volume forward when the window covers the volume (reusing the frozen
// ViT prefix cache when given), sliding window otherwise.
WindowInference infer_case(const Network<float>& net, const Volume& vol,
                           const std::array<int64_t, 3>& window,
                           const Tensor<float>* prefix_cache = nullptr);

struct TrainOutcome {
    double best_val_dsc = -1.0;
    int64_t best_epoch = -1;
    std::string best_checkpoint;
    std::string final_checkpoint;
    std::string metrics_csv;
    std::string steps_csv;
};

// Full training harness: deterministic given (config, seed). Writes
// manifest.json before the first step, per-step and per-epoch CSVs, the
// best-validation checkpoint, and a completion marker. A non-finite loss
// aborts with the last best checkpoint preserved.
class Trainer {
  public:
    explicit Trainer(const RunConfig& cfg);

    TrainOutcome run();

    Network<float>& network() { return *net_; }

  private:
    RunConfig cfg_;
    std::unique_ptr<Network<float>> net_;
};

}  // namespace vseg
