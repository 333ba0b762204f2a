#include "ctl/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <stdexcept>

#include "ctl/binary.hpp"

namespace ctl {

namespace {

constexpr char kCheckpointMagic[4] = {'C', 'T', 'L', 'W'};
constexpr std::uint16_t kCheckpointVersion = 1;

// out = in * W^T + b
Matrix affine(const Matrix& in, const LinearLayer& layer) {
  const std::size_t out_dim = layer.weight.rows();
  Matrix out(in.rows(), out_dim);
  for (std::size_t r = 0; r < in.rows(); ++r) {
    const auto x = in.row(r);
    for (std::size_t o = 0; o < out_dim; ++o) {
      const auto w = layer.weight.row(o);
      double acc = layer.bias[o];
      for (std::size_t i = 0; i < x.size(); ++i) acc += w[i] * x[i];
      out(r, o) = acc;
    }
  }
  return out;
}

}  // namespace

std::vector<std::span<double>> EncoderGradients::blocks() {
  std::vector<std::span<double>> out;
  for (std::size_t l = 0; l < weight.size(); ++l) {
    out.push_back(weight[l].flat());
    out.push_back(bias[l]);
  }
  out.push_back(gamma);
  out.push_back(beta);
  return out;
}

MlpEncoder::MlpEncoder(std::vector<LinearLayer> layers, BatchNormLayer bn)
    : layers_(std::move(layers)), bn_(std::move(bn)) {
  if (layers_.empty()) throw std::invalid_argument("encoder needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.size() != layer.weight.rows()) {
      throw DimensionMismatch(layer.bias.size(), layer.weight.rows());
    }
    if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows()) {
      throw DimensionMismatch(layer.weight.cols(), layers_[l - 1].weight.rows());
    }
  }
  const std::size_t d = layers_.back().weight.rows();
  for (const auto* v : {&bn_.gamma, &bn_.beta, &bn_.running_mean, &bn_.running_var}) {
    if (v->size() != d) throw DimensionMismatch(v->size(), d);
  }
  for (double v : bn_.running_var) {
    if (!(v > 0.0)) throw std::invalid_argument("batch-norm running variance must be > 0");
  }
}

MlpEncoder MlpEncoder::initialize(const EncoderConfig& cfg, std::uint64_t seed) {
  if (cfg.input_dim == 0 || cfg.embedding_dim == 0) {
    throw std::invalid_argument("encoder dimensions must be >= 1");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> widths{cfg.input_dim};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(cfg.embedding_dim);

  std::vector<LinearLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    if (in == 0 || out == 0) throw std::invalid_argument("layer widths must be >= 1");
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    LinearLayer layer{Matrix(out, in), std::vector<double>(out, 0.0)};
    for (auto& w : layer.weight.flat()) w = u(rng);
    layers.push_back(std::move(layer));
  }
  const std::size_t d = cfg.embedding_dim;
  BatchNormLayer bn{std::vector<double>(d, 1.0), std::vector<double>(d, 0.0),
                    std::vector<double>(d, 0.0), std::vector<double>(d, 1.0), cfg.bn_eps,
                    cfg.bn_momentum};
  return MlpEncoder(std::move(layers), std::move(bn));
}

std::size_t MlpEncoder::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().weight.cols();
}

std::size_t MlpEncoder::embedding_dim() const {
  return layers_.empty() ? 0 : layers_.back().weight.rows();
}

EncoderOutput MlpEncoder::run(const Matrix& inputs, Mode mode, Cache* cache,
                              std::vector<double>* batch_mean,
                              std::vector<double>* batch_var) const {
  if (layers_.empty()) throw std::logic_error("encoder is not initialized");
  if (inputs.cols() != input_dim()) throw DimensionMismatch(inputs.cols(), input_dim());
  const std::size_t n = inputs.rows();
  if (mode == Mode::train && n < 2) {
    throw std::invalid_argument("train-mode forward needs a batch of at least 2");
  }

  Matrix a = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = affine(a, layers_[l]);
    if (cache) {
      cache->activations.push_back(std::move(a));
      cache->preactivations.push_back(z);
    }
    if (l + 1 < layers_.size()) {
      for (auto& v : z.flat()) v = v > 0.0 ? v : 0.0;
    }
    a = std::move(z);
  }

  EncoderOutput out;
  out.raw = std::move(a);
  const std::size_t d = out.raw.cols();
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  if (mode == Mode::train) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) mean[j] += out.raw(r, j);
    for (auto& m : mean) m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) {
        const double c = out.raw(r, j) - mean[j];
        var[j] += c * c;
      }
    for (auto& v : var) v /= static_cast<double>(n);
  } else {
    mean = bn_.running_mean;
    var = bn_.running_var;
  }

  std::vector<double> inv_std(d);
  for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + bn_.eps);
  Matrix x_hat(n, d);
  out.normalized = Matrix(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      x_hat(r, j) = (out.raw(r, j) - mean[j]) * inv_std[j];
      out.normalized(r, j) = bn_.gamma[j] * x_hat(r, j) + bn_.beta[j];
    }

  if (cache) {
    cache->mode = mode;
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
  }
  if (batch_mean) *batch_mean = std::move(mean);
  if (batch_var) *batch_var = std::move(var);
  return out;
}

EncoderOutput MlpEncoder::forward(const Matrix& inputs, Mode mode) {
  Cache cache;
  std::vector<double> mean, var;
  auto out = run(inputs, mode, &cache, &mean, &var);
  if (mode == Mode::train) {
    const double n = static_cast<double>(inputs.rows());
    const double m = bn_.momentum;
    for (std::size_t j = 0; j < mean.size(); ++j) {
      bn_.running_mean[j] = (1.0 - m) * bn_.running_mean[j] + m * mean[j];
      // running variance tracks the unbiased estimate
      bn_.running_var[j] = (1.0 - m) * bn_.running_var[j] + m * var[j] * n / (n - 1.0);
    }
  }
  cache_ = std::move(cache);
  return out;
}

EncoderOutput MlpEncoder::forward_eval(const Matrix& inputs) const {
  return run(inputs, Mode::eval, nullptr, nullptr, nullptr);
}

EncoderGradients MlpEncoder::backward(const Matrix& grad_raw,
                                      const Matrix& grad_normalized) const {
  if (!cache_) throw std::logic_error("backward() called without a matching forward()");
  const auto& c = *cache_;
  const std::size_t n = c.x_hat.rows();
  const std::size_t d = c.x_hat.cols();
  for (const auto* g : {&grad_raw, &grad_normalized}) {
    if (g->rows() != n || g->cols() != d) {
      throw std::logic_error("backward() gradient shape does not match the last forward()");
    }
  }

  EncoderGradients grads;
  grads.gamma.assign(d, 0.0);
  grads.beta.assign(d, 0.0);

  // batch norm
  Matrix g = grad_raw;
  std::vector<double> sum_dxhat(d, 0.0), sum_dxhat_xhat(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const double dy = grad_normalized(r, j);
      grads.gamma[j] += dy * c.x_hat(r, j);
      grads.beta[j] += dy;
      const double dxhat = dy * bn_.gamma[j];
      sum_dxhat[j] += dxhat;
      sum_dxhat_xhat[j] += dxhat * c.x_hat(r, j);
    }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const double dxhat = grad_normalized(r, j) * bn_.gamma[j];
      if (c.mode == Mode::train) {
        g(r, j) += c.inv_std[j] * inv_n *
                   (static_cast<double>(n) * dxhat - sum_dxhat[j] - c.x_hat(r, j) * sum_dxhat_xhat[j]);
      } else {
        g(r, j) += dxhat * c.inv_std[j];
      }
    }

  // linear layers, last to first
  const std::size_t L = layers_.size();
  grads.weight.resize(L);
  grads.bias.resize(L);
  for (std::size_t li = L; li-- > 0;) {
    const auto& layer = layers_[li];
    const auto& a = c.activations[li];
    const std::size_t out_dim = layer.weight.rows();
    const std::size_t in_dim = layer.weight.cols();
    Matrix dw(out_dim, in_dim);
    std::vector<double> db(out_dim, 0.0);
    Matrix gin(n, in_dim);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double go = g(r, o);
        if (go == 0.0) continue;
        db[o] += go;
        for (std::size_t i = 0; i < in_dim; ++i) {
          dw(o, i) += go * a(r, i);
          gin(r, i) += go * layer.weight(o, i);
        }
      }
    grads.weight[li] = std::move(dw);
    grads.bias[li] = std::move(db);
    if (li > 0) {
      const auto& z_prev = c.preactivations[li - 1];
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < in_dim; ++i)
          if (z_prev(r, i) <= 0.0) gin(r, i) = 0.0;
    }
    g = std::move(gin);
  }
  grads.inputs = std::move(g);
  return grads;
}

std::vector<Matrix> MlpEncoder::hidden_preactivations() const {
  if (!cache_) return {};
  return {cache_->preactivations.begin(), cache_->preactivations.end() - 1};
}

std::vector<std::span<double>> MlpEncoder::parameters() {
  std::vector<std::span<double>> out;
  for (auto& layer : layers_) {
    out.push_back(layer.weight.flat());
    out.push_back(layer.bias);
  }
  out.push_back(bn_.gamma);
  out.push_back(bn_.beta);
  return out;
}

bool MlpEncoder::operator==(const MlpEncoder& o) const {
  if (layers_.size() != o.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (!(layers_[l].weight == o.layers_[l].weight) || layers_[l].bias != o.layers_[l].bias) {
      return false;
    }
  }
  return bn_.gamma == o.bn_.gamma && bn_.beta == o.bn_.beta &&
         bn_.running_mean == o.bn_.running_mean && bn_.running_var == o.bn_.running_var &&
         bn_.eps == o.bn_.eps && bn_.momentum == o.bn_.momentum;
}

// ----------------------------------------------------------- checkpoints

std::vector<std::uint8_t> encode_checkpoint(const MlpEncoder& enc) {
  ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(enc.layers().size()));
  for (const auto& layer : enc.layers()) {
    w.u32(static_cast<std::uint32_t>(layer.weight.cols()));
    w.u32(static_cast<std::uint32_t>(layer.weight.rows()));
    for (double v : layer.weight.flat()) w.f32(static_cast<float>(v));
    for (double v : layer.bias) w.f32(static_cast<float>(v));
  }
  const auto& bn = enc.batch_norm();
  w.u32(static_cast<std::uint32_t>(bn.gamma.size()));
  w.f32(static_cast<float>(bn.eps));
  w.f32(static_cast<float>(bn.momentum));
  for (const auto* v : {&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var}) {
    for (double x : *v) w.f32(static_cast<float>(x));
  }
  return w.take();
}

MlpEncoder decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw DataError("not a CTLW checkpoint");
  const auto version = r.u16();
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  if (count == 0 || count > 64) throw DataError("bad checkpoint layer count");
  auto read_vec = [&](std::size_t n) {
    if (r.remaining() < 4 * n) throw DataError("truncated checkpoint");
    std::vector<double> v(n);
    for (auto& x : v) x = r.f32();
    return v;
  };
  std::vector<LinearLayer> layers;
  for (std::uint32_t l = 0; l < count; ++l) {
    const std::size_t in = r.u32();
    const std::size_t out = r.u32();
    LinearLayer layer{Matrix(out, in), {}};
    const auto w = read_vec(in * out);
    std::copy(w.begin(), w.end(), layer.weight.flat().begin());
    layer.bias = read_vec(out);
    layers.push_back(std::move(layer));
  }
  BatchNormLayer bn;
  const std::size_t d = r.u32();
  bn.eps = r.f32();
  bn.momentum = r.f32();
  bn.gamma = read_vec(d);
  bn.beta = read_vec(d);
  bn.running_mean = read_vec(d);
  bn.running_var = read_vec(d);
  if (r.remaining() != 0) throw DataError("trailing bytes in checkpoint");
  try {
    return MlpEncoder(std::move(layers), std::move(bn));
  } catch (const std::exception& e) {
    throw DataError(std::string("inconsistent checkpoint: ") + e.what());
  }
}

void save_checkpoint(const MlpEncoder& enc, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(enc);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

MlpEncoder load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

// ------------------------------------------------------------- datasets

Matrix to_matrix(const Dataset& ds) {
  Matrix m(ds.size(), ds.dim());
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const auto& v = ds[r].vector;
    for (std::size_t j = 0; j < v.size(); ++j) m(r, j) = v[j];
  }
  return m;
}

Dataset embed_dataset(const Dataset& ds, const EmbeddingFunction& fn) {
  const auto out = fn.embed(to_matrix(ds));
  std::vector<EmbeddingRecord> records = ds.records();
  for (std::size_t r = 0; r < records.size(); ++r) {
    auto& v = records[r].vector;
    v.resize(out.normalized.cols());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = static_cast<float>(out.normalized(r, j));
  }
  return Dataset(out.normalized.cols(), std::move(records));
}

}  // namespace ctl
