#pragma once

// Embedding function: MLP (ReLU between layers) followed by batch
// normalization. Two tap points are exposed: `raw` (MLP output, used for
// the metric losses and training-time centroids) and `normalized` (after
// batch norm, used for classification and for retrieval).
//
// Checkpoint format (little-endian):
//     "CTLW" | version u16 | layer_count u32
//     per layer : in u32 | out u32 | weight out*in f32 (row-major) | bias out f32
//     batchnorm : dim u32 | eps f32 | momentum f32 |
//                 gamma, beta, running_mean, running_var (dim f32 each)

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "ctl/io.hpp"
#include "ctl/matrix.hpp"

namespace ctl {

enum class Mode { train, eval };

struct EncoderConfig {
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden = {64};
  std::size_t embedding_dim = 16;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
};

struct LinearLayer {
  Matrix weight;  // out x in
  std::vector<double> bias;
};

struct BatchNormLayer {
  std::vector<double> gamma, beta;
  std::vector<double> running_mean, running_var;
  double eps = 1e-5;
  double momentum = 0.1;
};

struct EncoderOutput {
  Matrix raw;
  Matrix normalized;
};

struct EncoderGradients {
  std::vector<Matrix> weight;
  std::vector<std::vector<double>> bias;
  std::vector<double> gamma, beta;
  Matrix inputs;

  /// Blocks in the same order as MlpEncoder::parameters().
  std::vector<std::span<double>> blocks();
};

/// Anything that maps input rows to (raw, normalized) embedding pairs.
class EmbeddingFunction {
 public:
  virtual ~EmbeddingFunction() = default;
  virtual EncoderOutput embed(const Matrix& inputs) const = 0;
};

/// Pre-computed embeddings: raw and normalized are both the input.
class IdentityEmbedding final : public EmbeddingFunction {
 public:
  EncoderOutput embed(const Matrix& inputs) const override { return {inputs, inputs}; }
};

class MlpEncoder final : public EmbeddingFunction {
 public:
  MlpEncoder() = default;
  MlpEncoder(std::vector<LinearLayer> layers, BatchNormLayer bn);

  /// He-style uniform init, U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero biases;
  /// gamma = 1, beta = 0, running mean 0, running variance 1.
  static MlpEncoder initialize(const EncoderConfig& cfg, std::uint64_t seed);

  std::size_t input_dim() const;
  std::size_t embedding_dim() const;
  const std::vector<LinearLayer>& layers() const { return layers_; }
  const BatchNormLayer& batch_norm() const { return bn_; }

  /// Train mode normalizes with batch statistics (needs >= 2 rows) and
  /// updates running statistics; eval mode uses running statistics.
  /// Both cache intermediates for backward().
  EncoderOutput forward(const Matrix& inputs, Mode mode);

  /// Pure eval-mode forward.
  EncoderOutput forward_eval(const Matrix& inputs) const;
  EncoderOutput embed(const Matrix& inputs) const override { return forward_eval(inputs); }

  /// Gradients of sum(grad_raw * raw) + sum(grad_normalized * normalized)
  /// w.r.t. every parameter and the inputs of the last forward(). Throws
  /// std::logic_error without a matching forward.
  EncoderGradients backward(const Matrix& grad_raw, const Matrix& grad_normalized) const;

  /// Hidden-layer pre-activations from the last forward() (ReLU inputs).
  std::vector<Matrix> hidden_preactivations() const;

  /// Mutable views: W_0, b_0, W_1, b_1, ..., gamma, beta.
  std::vector<std::span<double>> parameters();

  bool operator==(const MlpEncoder& o) const;

 private:
  struct Cache {
    Mode mode = Mode::eval;
    std::vector<Matrix> activations;     // input of each linear layer
    std::vector<Matrix> preactivations;  // output of each linear layer
    Matrix x_hat;
    std::vector<double> inv_std;
  };

  EncoderOutput run(const Matrix& inputs, Mode mode, Cache* cache,
                    std::vector<double>* batch_mean, std::vector<double>* batch_var) const;

  std::vector<LinearLayer> layers_;
  BatchNormLayer bn_;
  std::optional<Cache> cache_;
};

std::vector<std::uint8_t> encode_checkpoint(const MlpEncoder& enc);
MlpEncoder decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const MlpEncoder& enc, const std::filesystem::path& path);
MlpEncoder load_checkpoint(const std::filesystem::path& path);

/// Dataset rows as a matrix (one record per row, dataset order).
Matrix to_matrix(const Dataset& ds);

/// Runs `fn` over every record (eval) and returns a dataset with the same
/// metadata and the normalized embeddings as vectors.
Dataset embed_dataset(const Dataset& ds, const EmbeddingFunction& fn);

}  // namespace ctl
