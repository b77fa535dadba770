#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedccrl/tensor.hpp"

namespace fedccrl {

/// Architecture of f = g ∘ h: an MLP encoder h (flatten, hidden ReLU layers,
/// linear projection to the representation) and a linear softmax classifier g.
struct ModelConfig {
  std::size_t channels = 3;
  std::size_t height = 8;
  std::size_t width = 8;
  std::vector<std::size_t> hidden_sizes = {64};
  std::size_t representation_dim = 32;
  std::size_t num_classes = 5;
  std::uint64_t seed = 1;

  std::size_t input_size() const { return channels * height * width; }
  void validate() const;
};

/// Flat ordered collection of named parameter tensors; the unit of federated
/// aggregation. Names and order are stable across serialization.
struct ModelParameters {
  std::vector<std::pair<std::string, Tensor>> entries;
  std::uint64_t version = 0;

  const Tensor& find(std::string_view name) const;
  ModelParameters clone() const;
  ModelParameters& set_requires_grad(bool v);
  void zero_grads();
  std::size_t total_elements() const;
};

/// Seeded initialization: uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per
/// layer for both weights and biases. Pure function of the config.
ModelParameters init_parameters(const ModelConfig& cfg);

/// h: [B,C,H,W] -> [B,V]. Gradient flows to the parameters.
Tensor encode(const ModelConfig& cfg, const ModelParameters& params, const Tensor& x);

/// g: [B,V] -> [B,num_classes], rows are post-softmax probabilities.
Tensor classify(const ModelConfig& cfg, const ModelParameters& params, const Tensor& z);

std::vector<std::size_t> predict_labels(const Tensor& probabilities);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m;  // parallel to ModelParameters::entries
  std::vector<std::vector<double>> v;
};

AdamState make_adam_state(const ModelParameters& params);

/// One standard Adam update with bias correction. Gradients are left in place
/// for the caller to zero.
void adam_step(ModelParameters& params, AdamState& state, double lr);

struct ScheduleConfig {
  double lr_init = 0.001;
  std::size_t rounds = 10;        // T
  std::size_t local_epochs = 3;   // E
};

/// Cosine decay over the global horizon of T*E local epochs:
/// lr_init * 0.5 * (1 + cos(pi * (round*E + epoch) / (T*E))).
double cosine_lr(std::size_t round, std::size_t epoch, const ScheduleConfig& cfg);

// Checkpoint format: magic, format version, then ordered
// (name, shape, float64 little-endian data) records.
std::vector<std::uint8_t> serialize_parameters(const ModelParameters& params);
ModelParameters deserialize_parameters(std::span<const std::uint8_t> bytes);
void save_parameters(const ModelParameters& params, const std::string& path);
ModelParameters load_parameters(const std::string& path);

}  // namespace fedccrl
