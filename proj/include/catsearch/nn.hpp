#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "catsearch/rng.hpp"

namespace catsearch::nn {

enum class Head { kIdentity, kSoftmax };

std::string to_string(Head head);
Head head_from_string(const std::string& name);

class Mlp;

/// Activations recorded by Mlp::forward, consumed by Mlp::backward.
struct ForwardCache {
  std::vector<std::vector<double>> inputs;  // input to each layer
  std::vector<std::vector<double>> pre;     // affine output of each layer
  std::vector<double> output;               // after the head
  const Mlp* owner = nullptr;
  std::uint64_t version = 0;
};

/// Dense feed-forward network: affine layers with ReLU between them and an
/// identity or softmax head. Parameters live in one flat buffer laid out
/// layer by layer as [W (row-major, out x in), b].
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<std::size_t> layer_sizes, Head head);

  /// Glorot-uniform weights, zero biases.
  static Mlp glorot(std::vector<std::size_t> layer_sizes, Head head, RngStream& rng);

  const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
  Head head() const noexcept { return head_; }
  std::size_t num_layers() const noexcept { return sizes_.empty() ? 0 : sizes_.size() - 1; }
  std::size_t input_size() const noexcept { return sizes_.front(); }
  std::size_t output_size() const noexcept { return sizes_.back(); }
  std::size_t param_count() const noexcept { return params_.size(); }

  std::span<const double> params() const noexcept { return params_; }
  /// Mutable access invalidates every outstanding ForwardCache.
  std::span<double> mutable_params() noexcept {
    ++version_;
    return params_;
  }

  std::span<const double> weights(std::size_t layer) const;
  std::span<const double> biases(std::size_t layer) const;
  /// Offset and length of a layer's block (weights followed by biases).
  std::pair<std::size_t, std::size_t> layer_block(std::size_t layer) const;

  std::uint64_t version() const noexcept { return version_; }

  ForwardCache forward(std::span<const double> x) const;
  std::vector<double> predict(std::span<const double> x) const { return forward(x).output; }

  /// Gradient of a scalar loss w.r.t. every parameter (flat, same layout as
  /// params()), given dLoss/dOutput. For the softmax head the output is the
  /// probability vector. Throws StaleCache if the cache does not belong to
  /// this network's current parameters.
  std::vector<double> backward(const ForwardCache& cache, std::span<const double> grad_output) const;

  friend bool operator==(const Mlp& a, const Mlp& b) {
    return a.sizes_ == b.sizes_ && a.head_ == b.head_ && a.params_ == b.params_;
  }

 private:
  std::vector<std::size_t> sizes_;
  Head head_ = Head::kIdentity;
  std::vector<double> params_;
  std::vector<std::size_t> offsets_;
  std::uint64_t version_ = 1;
};

void softmax_inplace(std::span<double> z);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double lr_) : m(n, 0.0), v(n, 0.0), lr(lr_) {}
};

/// Bias-corrected Adam update in place. Throws ShapeMismatch on size
/// disagreement and TrainingDiverged on a non-finite gradient (parameters are
/// left untouched in both cases).
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);
void adam_step(Mlp& net, std::span<const double> grads, AdamState& state);

// Checkpoints: {"format_version", "layer_sizes", "head", "layers": [{"weights", "biases"}],
// "optimizer"?}. Doubles are written in shortest round-trip form, so a
// save/load cycle reproduces every stored value bit for bit.
inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::json to_json(const Mlp& net, const AdamState* optimizer = nullptr);
Mlp mlp_from_json(const nlohmann::json& doc);
std::optional<AdamState> adam_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const Mlp& net, const AdamState* optimizer = nullptr);
Mlp load_checkpoint(const std::filesystem::path& path);

}  // namespace catsearch::nn
