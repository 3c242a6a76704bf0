#pragma once

#include "vseg/tensor.hpp"

namespace vseg {

enum class ClassWeightMode { InverseFrequency, Uniform };

struct LossConfig {
    double gamma = 0.6;  // Dice share of the segmentation loss
    int64_t anneal_epochs = 15;
    double smooth = 1e-5;
    ClassWeightMode class_weight_mode = ClassWeightMode::InverseFrequency;
};

// 1 - mean over classes of (2*sum(P*Y) + smooth) / (sum P + sum Y + smooth).
// Foreground and background both count.
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& probs, const Tensor<T>& onehot, T smooth);

// -mean over voxels of sum_k w_k * Y_k * ln(clamp(P_k, 1e-7, 1)). Weights are
// normalized to mean 1, so uniform scaling of raw weights is a no-op.
template <typename T>
Tensor<T> wce_loss(const Tensor<T>& probs, const Tensor<T>& onehot,
                   const std::vector<double>& class_weights);

// Per-batch inverse-frequency weights clamped to [0.1, 10], normalized to
// mean 1 (uniform mode returns all ones).
template <typename T>
std::vector<double> class_weights_for(const Tensor<T>& onehot, ClassWeightMode mode);

// gamma * dice + (1 - gamma) * wce.
template <typename T>
Tensor<T> seg_loss(const Tensor<T>& probs, const Tensor<T>& onehot, const LossConfig& cfg);

// Annealed KL(Dir(alpha~) || Dir(1)) with the true-class evidence removed:
// alpha~ = Y + (1 - Y) * alpha; scale min(1, epoch / anneal_epochs).
template <typename T>
Tensor<T> evidential_kl_loss(const Tensor<T>& alpha, const Tensor<T>& onehot, int64_t epoch,
                             const LossConfig& cfg);

template <typename T>
struct LossParts {
    Tensor<T> total;
    double dice = 0.0, wce = 0.0, kl = 0.0;
};

// seg + evidential KL; pass an undefined alpha to skip the evidential term
// (variants without the refinement module). Non-finite components abort.
template <typename T>
LossParts<T> total_loss(const Tensor<T>& probs, const Tensor<T>& alpha, const Tensor<T>& onehot,
                        int64_t epoch, const LossConfig& cfg);

}  // namespace vseg
