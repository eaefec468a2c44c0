#pragma once

#include <vector>

#include "pneumoseg/rle.hpp"
#include "pneumoseg/tensor.hpp"

namespace pneumoseg {

// Mean binary cross-entropy over all elements. Probabilities are clamped to
// [eps, 1-eps] before the logs; the gradient uses the clamped value too.
template <typename T>
Tensor<T> bce_loss(Tape<T>* tape, const Tensor<T>& pred, const Tensor<T>& target, T eps = static_cast<T>(1e-7));

// Soft Dice loss over the whole tensor: 1 - (2*sum(p*t)+smooth)/(sum(p)+sum(t)+smooth).
template <typename T>
Tensor<T> dice_loss(Tape<T>* tape, const Tensor<T>& pred, const Tensor<T>& target, T smooth = static_cast<T>(1));

// Training objective: BCE + Dice.
template <typename T>
Tensor<T> bce_dice_loss(Tape<T>* tape, const Tensor<T>& pred, const Tensor<T>& target);

// Set-overlap metrics on binary masks. Two empty masks score 1.0.
double mask_iou(const BinaryMask& a, const BinaryMask& b);
double mask_dsc(const BinaryMask& a, const BinaryMask& b);

// Per-image DSC averaged over a dataset (the leaderboard-style aggregate).
double mean_dsc(const std::vector<BinaryMask>& predictions, const std::vector<BinaryMask>& targets);

}  // namespace pneumoseg
