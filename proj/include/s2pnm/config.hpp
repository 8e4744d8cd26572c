#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "s2pnm/estimator.hpp"
#include "s2pnm/model.hpp"
#include "s2pnm/tensor.hpp"

namespace s2pnm {

enum class Precision { kF32, kF64 };

/// Every training hyperparameter. Config files use these field names as
/// keys, one `key = value` per line, `#` starting a comment.
struct TrainConfig {
  std::size_t d_user = 300;
  std::size_t d_gru = 256;
  std::size_t d_dict = 1024;
  std::size_t d_embed = 0;  // 0 follows d_gru

  double lr = 0.001;
  double lr_decay = 0.9;
  std::size_t decay_every_epochs = 5;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  double lambda = 0.01;
  double p_drop = 0.02;

  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  std::size_t window = 64;
  double val_fraction = 0.1;
  std::size_t val_k = 5;

  std::size_t n_neg = 4;
  double w_pos = 1.0;
  double w_neg = 0.2;

  Task task = Task::kRating;
  Activation psi = Activation::kRelu;
  Variant variant = Variant::kFull;
  std::uint64_t seed = 1;
  Precision precision = Precision::kF64;
  bool clip_predictions = true;

  std::size_t embed_dim() const { return d_embed == 0 ? d_gru : d_embed; }
  AdamConfig adam() const { return {lr, beta1, beta2, epsilon}; }
  NegativeSampling negatives() const { return {n_neg, w_pos, w_neg}; }

  /// Throws ConfigError on out-of-range values.
  void validate() const;

  /// Applies one key/value pair; unknown keys are a ConfigError.
  void set(const std::string& key, const std::string& value);
  std::string to_text() const;

  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
};

}  // namespace s2pnm
