#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ufd/augment.h"
#include "ufd/feature_bank.h"

namespace ufd {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 0;
  /// Epochs without validation improvement before stopping; 0 disables.
  std::size_t early_stop_patience = 10;
  double val_fraction = 0.1;
  /// Recorded only: features in a bank were augmented before extraction.
  std::optional<AugmentPolicy> augment;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Single linear layer with sigmoid on top of frozen features.
struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  TrainConfig train_config;
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t dim() const noexcept { return weights.size(); }

  static LinearModel zeros(std::size_t dim);

  /// w.x + b
  double logit(std::span<const float> x) const;
  /// sigmoid(w.x + b)
  double probability(std::span<const float> x) const;
};

/// A feature vector with its label (real = 0, fake = 1).
struct Sample {
  std::span<const float> x;
  Label y = Label::kReal;
};

/// Clamp applied to sigmoid outputs before taking logs.
inline constexpr double kProbabilityClamp = 1e-12;

double sigmoid(double z);

/// Summed binary cross entropy:
///   -sum_fake log p(x) - sum_real log(1 - p(x)),  p clamped to [1e-12, 1-1e-12].
double bce_loss(const LinearModel& model, std::span<const Sample> batch);

struct Gradient {
  std::vector<double> weights;
  double bias = 0.0;
};

/// dL/dw = sum (p(x) - y) x,  dL/db = sum (p(x) - y).
Gradient bce_gradient(const LinearModel& model, std::span<const Sample> batch);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainReport {
  double initial_train_loss = 0.0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  bool stopped_early = false;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  /// Hyperparameters that are defaults of this toolkit rather than values
  /// from a published protocol.
  std::vector<std::string> non_paper_defaults;
};

void to_json(nlohmann::json& j, const TrainReport& r);

/// Mini-batch gradient descent from a zero model on the bank's raw vectors.
///
/// A stratified validation split is held out. After every epoch the model is
/// checkpointed if validation accuracy (threshold 0.5) improved, or stayed
/// equal with lower validation loss. The best checkpoint is returned.
/// Deterministic for a given seed.
std::pair<LinearModel, TrainReport> train_linear(const FeatureBank& bank, const TrainConfig& config);

struct LinearPrediction {
  double score = 0.5;
  Label decision = Label::kReal;
};

/// score = sigmoid(w.x + b), fake iff score > threshold.
std::vector<LinearPrediction> predict_linear(const LinearModel& model,
                                             std::span<const std::vector<float>> queries,
                                             double threshold = 0.5);
std::vector<LinearPrediction> predict_linear(const LinearModel& model, const FeatureBank& queries,
                                             double threshold = 0.5);

/// Model JSON: dim, weights, bias, train_config, metadata, content_hash.
nlohmann::json model_to_json(const LinearModel& model);
/// Verifies the content hash.
LinearModel model_from_json(const nlohmann::json& j);
void save_model(const LinearModel& model, const std::filesystem::path& path);
LinearModel load_model(const std::filesystem::path& path);

}  // namespace ufd
