#include "ufd/linear_probe.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "ufd/error.h"
#include "ufd/hash.h"
#include "ufd/random.h"

namespace ufd {
namespace {

void check_dim(const LinearModel& model, std::size_t n, const char* what) {
  check(n == model.dim(), ErrorCode::kDimensionMismatch,
        std::string(what) + " has length " + std::to_string(n) + ", model dim is " +
            std::to_string(model.dim()));
}

double target(Label y) { return y == Label::kFake ? 1.0 : 0.0; }

double clamped(double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); }

std::vector<Sample> samples_of(const FeatureBank& bank, std::span<const std::size_t> idx) {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back({bank.raw(i), bank.label(i)});
  return out;
}

double accuracy_at_half(const LinearModel& model, std::span<const Sample> samples) {
  std::size_t ok = 0;
  for (const auto& s : samples) {
    const bool fake = model.probability(s.x) > 0.5;
    ok += fake == (s.y == Label::kFake);
  }
  return static_cast<double>(ok) / static_cast<double>(samples.size());
}

// Canonical JSON of everything the content hash covers.
nlohmann::json hashed_fields(const LinearModel& m) {
  return nlohmann::json{{"dim", m.dim()},
                        {"weights", m.weights},
                        {"bias", m.bias},
                        {"train_config", m.train_config},
                        {"metadata", m.metadata}};
}

}  // namespace

void TrainConfig::validate() const {
  check(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorCode::kInvalidArgument,
        "learning_rate must be positive");
  check(batch_size > 0, ErrorCode::kInvalidArgument, "batch_size must be positive");
  check(max_epochs > 0, ErrorCode::kInvalidArgument, "max_epochs must be positive");
  check(val_fraction > 0.0 && val_fraction < 1.0, ErrorCode::kInvalidArgument,
        "val_fraction must be in (0, 1)");
  if (augment) augment->validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},
                     {"batch_size", c.batch_size},
                     {"max_epochs", c.max_epochs},
                     {"seed", c.seed},
                     {"early_stop_patience", c.early_stop_patience},
                     {"val_fraction", c.val_fraction}};
  j["augment"] = c.augment ? nlohmann::json(*c.augment) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.early_stop_patience = j.at("early_stop_patience").get<std::size_t>();
  c.val_fraction = j.at("val_fraction").get<double>();
  if (auto it = j.find("augment"); it != j.end() && !it->is_null())
    c.augment = it->get<AugmentPolicy>();
  else
    c.augment.reset();
}

LinearModel LinearModel::zeros(std::size_t dim) {
  LinearModel m;
  m.weights.assign(dim, 0.0);
  return m;
}

double LinearModel::logit(std::span<const float> x) const {
  check_dim(*this, x.size(), "feature vector");
  double z = bias;
  for (std::size_t j = 0; j < x.size(); ++j) z += weights[j] * x[j];
  return z;
}

double LinearModel::probability(std::span<const float> x) const { return sigmoid(logit(x)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_loss(const LinearModel& model, std::span<const Sample> batch) {
  check(!batch.empty(), ErrorCode::kEmptyInput, "empty batch");
  double loss = 0.0;
  for (const auto& s : batch) {
    const double p = clamped(model.probability(s.x));
    loss -= s.y == Label::kFake ? std::log(p) : std::log(1.0 - p);
  }
  return loss;
}

Gradient bce_gradient(const LinearModel& model, std::span<const Sample> batch) {
  check(!batch.empty(), ErrorCode::kEmptyInput, "empty batch");
  Gradient g;
  g.weights.assign(model.dim(), 0.0);
  for (const auto& s : batch) {
    const double r = model.probability(s.x) - target(s.y);
    for (std::size_t j = 0; j < s.x.size(); ++j) g.weights[j] += r * s.x[j];
    g.bias += r;
  }
  return g;
}

void to_json(nlohmann::json& j, const TrainReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"val_accuracy", e.val_accuracy}});
  j = nlohmann::json{{"initial_train_loss", r.initial_train_loss},
                     {"epochs", std::move(epochs)},
                     {"best_epoch", r.best_epoch},
                     {"best_val_accuracy", r.best_val_accuracy},
                     {"stopped_early", r.stopped_early},
                     {"n_train", r.n_train},
                     {"n_val", r.n_val},
                     {"non_paper_defaults", r.non_paper_defaults}};
}

std::pair<LinearModel, TrainReport> train_linear(const FeatureBank& bank, const TrainConfig& config) {
  config.validate();
  const std::size_t n_real = bank.count(Label::kReal);
  const std::size_t n_fake = bank.count(Label::kFake);
  check(n_real > 0 && n_fake > 0, ErrorCode::kSingleClassBank,
        "training bank must contain both labels");
  check(n_real >= 2 && n_fake >= 2, ErrorCode::kInvalidArgument,
        "each label needs at least two entries to leave one in each split");

  // Stratified hold-out.
  Rng split_rng(config.seed, 1);
  std::vector<std::size_t> train_idx, val_idx;
  for (Label side : {Label::kReal, Label::kFake}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < bank.size(); ++i)
      if (bank.label(i) == side) idx.push_back(i);
    split_rng.shuffle(idx);
    const auto n = idx.size();
    const auto n_val = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(config.val_fraction * static_cast<double>(n))), 1, n - 1);
    val_idx.insert(val_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  const auto train = samples_of(bank, train_idx);
  const auto val = samples_of(bank, val_idx);

  LinearModel model = LinearModel::zeros(bank.dim());
  model.train_config = config;
  model.metadata = {{"encoder_id", bank.encoder_id()}, {"layer_id", bank.layer_id()}};

  TrainReport report;
  report.n_train = train.size();
  report.n_val = val.size();
  report.initial_train_loss = bce_loss(model, train);
  report.non_paper_defaults = {"learning_rate", "batch_size", "max_epochs", "early_stop_patience",
                               "val_fraction", "optimizer=minibatch_gd", "init=zeros"};

  LinearModel best = model;
  double best_acc = -1.0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  Rng order_rng(config.seed, 2);
  std::vector<std::size_t> order(train.size());
  std::vector<Sample> batch;
  batch.reserve(config.batch_size);
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);
      const auto g = bce_gradient(model, batch);
      for (std::size_t j = 0; j < model.weights.size(); ++j)
        model.weights[j] -= config.learning_rate * g.weights[j];
      model.bias -= config.learning_rate * g.bias;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = bce_loss(model, train);
    rec.val_loss = bce_loss(model, val);
    check(std::isfinite(rec.train_loss) && std::isfinite(rec.val_loss), ErrorCode::kNonFiniteLoss,
          "loss diverged at epoch " + std::to_string(epoch));
    for (double w : model.weights)
      check(std::isfinite(w), ErrorCode::kNonFiniteLoss, "weights diverged at epoch " + std::to_string(epoch));
    rec.val_accuracy = accuracy_at_half(model, val);
    report.epochs.push_back(rec);

    if (rec.val_accuracy > best_acc || (rec.val_accuracy == best_acc && rec.val_loss < best_val_loss)) {
      best = model;
      best_acc = rec.val_accuracy;
      best_val_loss = rec.val_loss;
      report.best_epoch = epoch;
      since_best = 0;
    } else if (config.early_stop_patience > 0 && ++since_best >= config.early_stop_patience) {
      report.stopped_early = true;
      break;
    }
  }
  report.best_val_accuracy = best_acc;
  return {std::move(best), std::move(report)};
}

std::vector<LinearPrediction> predict_linear(const LinearModel& model,
                                             std::span<const std::vector<float>> queries,
                                             double threshold) {
  std::vector<LinearPrediction> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    const double s = model.probability(q);
    out.push_back({s, s > threshold ? Label::kFake : Label::kReal});
  }
  return out;
}

std::vector<LinearPrediction> predict_linear(const LinearModel& model, const FeatureBank& queries,
                                             double threshold) {
  std::vector<LinearPrediction> out;
  out.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const double s = model.probability(queries.raw(i));
    out.push_back({s, s > threshold ? Label::kFake : Label::kReal});
  }
  return out;
}

nlohmann::json model_to_json(const LinearModel& model) {
  auto j = hashed_fields(model);
  j["content_hash"] = sha256_hex(j.dump());
  return j;
}

LinearModel model_from_json(const nlohmann::json& j) {
  LinearModel m;
  try {
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.train_config = j.at("train_config").get<TrainConfig>();
    m.metadata = j.value("metadata", nlohmann::json::object());
    check(j.at("dim").get<std::size_t>() == m.weights.size(), ErrorCode::kDimensionMismatch,
          "model dim does not match weight count");
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::kCorruptData, std::string("malformed model JSON: ") + e.what());
  }
  for (double w : m.weights) check(std::isfinite(w), ErrorCode::kNonFiniteValue, "non-finite weight");
  if (auto it = j.find("content_hash"); it != j.end()) {
    check(it->get<std::string>() == sha256_hex(hashed_fields(m).dump()), ErrorCode::kChecksumMismatch,
          "model content hash mismatch");
  }
  return m;
}

void save_model(const LinearModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  check(static_cast<bool>(out), ErrorCode::kIoFailure, "cannot open " + path.string());
  out << model_to_json(model).dump(2) << '\n';
  check(static_cast<bool>(out), ErrorCode::kIoFailure, "write failed for " + path.string());
}

LinearModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  check(static_cast<bool>(in), ErrorCode::kIoFailure, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::kCorruptData, path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace ufd
