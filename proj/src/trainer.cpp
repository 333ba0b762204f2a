#include "ctl/trainer.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

namespace ctl {

void TrainConfig::validate() const {
  if (!(base_lr > 0.0) || !(center_lr > 0.0) || !(decay_factor > 0.0)) {
    throw std::invalid_argument("learning rates and decay factor must be > 0");
  }
  for (std::size_t i = 1; i < lr_decay_epochs.size(); ++i) {
    if (lr_decay_epochs[i] <= lr_decay_epochs[i - 1]) {
      throw std::invalid_argument("lr decay epochs must be strictly increasing");
    }
  }
  if (margins.alpha < 0.0 || margins.alpha_c < 0.0) {
    throw std::invalid_argument("margins must be >= 0");
  }
  if (batch.classes_per_batch < 2 || batch.samples_per_class < 2) {
    throw std::invalid_argument("batch needs P >= 2 and M >= 2");
  }
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  int steps = 0;
  for (std::size_t e : cfg.lr_decay_epochs) {
    if (e <= epoch) ++steps;
  }
  // Dividing by the integral reciprocal keeps 1e-4 -> 1e-5 -> 1e-6 exact
  // for the usual factor of 0.1.
  const double inv = 1.0 / cfg.decay_factor;
  if (std::abs(inv - std::round(inv)) < 1e-9) return cfg.base_lr / std::pow(std::round(inv), steps);
  return cfg.base_lr * std::pow(cfg.decay_factor, steps);
}

// -------------------------------------------------------------- config

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

double to_double(std::string_view v, const std::string& key) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw DataError("config key '" + key + "': bad number '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t to_uint(std::string_view v, const std::string& key) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw DataError("config key '" + key + "': bad integer '" + std::string(v) + "'");
  }
  return out;
}

std::vector<std::size_t> to_list(std::string_view v, const std::string& key) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  std::size_t start = 0;
  while (start <= v.size()) {
    auto comma = v.find(',', start);
    if (comma == std::string_view::npos) comma = v.size();
    out.push_back(to_uint(trim(v.substr(start, comma - start)), key));
    start = comma + 1;
  }
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

TrainConfig parse_train_config(std::string_view text) {
  TrainConfig cfg;
  using Setter = std::function<void(std::string_view, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"base_lr", [&](auto v, auto& k) { cfg.base_lr = to_double(v, k); }},
      {"lr_decay_epochs", [&](auto v, auto& k) { cfg.lr_decay_epochs = to_list(v, k); }},
      {"decay_factor", [&](auto v, auto& k) { cfg.decay_factor = to_double(v, k); }},
      {"epochs", [&](auto v, auto& k) { cfg.epochs = to_uint(v, k); }},
      {"center_lr", [&](auto v, auto& k) { cfg.center_lr = to_double(v, k); }},
      {"alpha", [&](auto v, auto& k) { cfg.margins.alpha = to_double(v, k); }},
      {"alpha_c", [&](auto v, auto& k) { cfg.margins.alpha_c = to_double(v, k); }},
      {"weight_triplet", [&](auto v, auto& k) { cfg.weights.triplet = to_double(v, k); }},
      {"weight_ctl", [&](auto v, auto& k) { cfg.weights.ctl = to_double(v, k); }},
      {"weight_center", [&](auto v, auto& k) { cfg.weights.center = to_double(v, k); }},
      {"weight_classification",
       [&](auto v, auto& k) { cfg.weights.classification = to_double(v, k); }},
      {"classes_per_batch", [&](auto v, auto& k) { cfg.batch.classes_per_batch = to_uint(v, k); }},
      {"samples_per_class", [&](auto v, auto& k) { cfg.batch.samples_per_class = to_uint(v, k); }},
      {"optimizer",
       [&](auto v, auto& k) {
         if (v == "adam") cfg.optimizer = OptimizerKind::adam;
         else if (v == "sgd") cfg.optimizer = OptimizerKind::sgd;
         else throw DataError("config key '" + k + "': expected adam|sgd");
       }},
      {"adam_beta1", [&](auto v, auto& k) { cfg.adam_beta1 = to_double(v, k); }},
      {"adam_beta2", [&](auto v, auto& k) { cfg.adam_beta2 = to_double(v, k); }},
      {"adam_eps", [&](auto v, auto& k) { cfg.adam_eps = to_double(v, k); }},
      {"mining",
       [&](auto v, auto& k) {
         if (v == "batch_hard") cfg.mining = TripletMining::batch_hard;
         else if (v == "all") cfg.mining = TripletMining::all_valid;
         else throw DataError("config key '" + k + "': expected batch_hard|all");
       }},
      {"ctl_negatives",
       [&](auto v, auto& k) {
         if (v == "average") cfg.ctl_negatives = CentroidNegatives::average;
         else if (v == "hardest") cfg.ctl_negatives = CentroidNegatives::hardest;
         else throw DataError("config key '" + k + "': expected average|hardest");
       }},
      {"hidden", [&](auto v, auto& k) { cfg.hidden = to_list(v, k); }},
      {"embedding_dim", [&](auto v, auto& k) { cfg.embedding_dim = to_uint(v, k); }},
      {"seed", [&](auto v, auto& k) { cfg.seed = to_uint(v, k); }},
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw DataError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key(trim(line.substr(0, eq)));
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw DataError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    it->second(trim(line.substr(eq + 1)), key);
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid config: ") + e.what());
  }
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_train_config(text);
}

std::string format_train_config(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "base_lr=" << fmt_double(cfg.base_lr) << '\n'
     << "lr_decay_epochs=" << join(cfg.lr_decay_epochs) << '\n'
     << "decay_factor=" << fmt_double(cfg.decay_factor) << '\n'
     << "epochs=" << cfg.epochs << '\n'
     << "center_lr=" << fmt_double(cfg.center_lr) << '\n'
     << "alpha=" << fmt_double(cfg.margins.alpha) << '\n'
     << "alpha_c=" << fmt_double(cfg.margins.alpha_c) << '\n'
     << "weight_triplet=" << fmt_double(cfg.weights.triplet) << '\n'
     << "weight_ctl=" << fmt_double(cfg.weights.ctl) << '\n'
     << "weight_center=" << fmt_double(cfg.weights.center) << '\n'
     << "weight_classification=" << fmt_double(cfg.weights.classification) << '\n'
     << "classes_per_batch=" << cfg.batch.classes_per_batch << '\n'
     << "samples_per_class=" << cfg.batch.samples_per_class << '\n'
     << "optimizer=" << (cfg.optimizer == OptimizerKind::adam ? "adam" : "sgd") << '\n'
     << "adam_beta1=" << fmt_double(cfg.adam_beta1) << '\n'
     << "adam_beta2=" << fmt_double(cfg.adam_beta2) << '\n'
     << "adam_eps=" << fmt_double(cfg.adam_eps) << '\n'
     << "mining=" << (cfg.mining == TripletMining::batch_hard ? "batch_hard" : "all") << '\n'
     << "ctl_negatives="
     << (cfg.ctl_negatives == CentroidNegatives::average ? "average" : "hardest") << '\n'
     << "hidden=" << join(cfg.hidden) << '\n'
     << "embedding_dim=" << cfg.embedding_dim << '\n'
     << "seed=" << cfg.seed << '\n';
  return os.str();
}

// ------------------------------------------------------------ training

namespace {

class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}

  void step(const std::vector<std::span<double>>& params,
            const std::vector<std::span<double>>& grads, double lr) {
    if (cfg_.optimizer == OptimizerKind::sgd) {
      for (std::size_t b = 0; b < params.size(); ++b)
        for (std::size_t i = 0; i < params[b].size(); ++i) params[b][i] -= lr * grads[b][i];
      return;
    }
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
      }
    }
    ++t_;
    const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t b = 0; b < params.size(); ++b) {
      for (std::size_t i = 0; i < params[b].size(); ++i) {
        const double g = grads[b][i];
        m_[b][i] = b1 * m_[b][i] + (1.0 - b1) * g;
        v_[b][i] = b2 * v_[b][i] + (1.0 - b2) * g * g;
        const double m_hat = m_[b][i] / c1;
        const double v_hat = v_[b][i] / c2;
        params[b][i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.adam_eps);
      }
    }
  }

 private:
  const TrainConfig& cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace

TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  const Split split = ds.count(Split::train) > 0 ? Split::train : Split::gallery;

  TrainResult result;
  std::map<std::uint32_t, std::size_t> dense;
  for (const auto& [cls, members] : ds.class_index(split)) {
    dense.emplace(cls, result.class_ids.size());
    result.class_ids.push_back(cls);
  }

  std::mt19937_64 master(cfg.seed);
  EncoderConfig ecfg;
  ecfg.input_dim = ds.dim();
  ecfg.hidden = cfg.hidden;
  ecfg.embedding_dim = cfg.embedding_dim == 0 ? ds.dim() : cfg.embedding_dim;
  result.encoder = MlpEncoder::initialize(ecfg, master());
  const std::size_t d = ecfg.embedding_dim;
  const std::size_t num_classes = result.class_ids.size();

  {
    std::mt19937_64 rng(master());
    std::normal_distribution<double> gauss(0.0, 1.0);
    result.centers.centers = Matrix(num_classes, d);
    for (auto& c : result.centers.centers.flat()) c = gauss(rng);

    const double bound = std::sqrt(6.0 / static_cast<double>(d));
    std::uniform_real_distribution<double> u(-bound, bound);
    result.head.weight = Matrix(num_classes, d);
    for (auto& w : result.head.weight.flat()) w = u(rng);
    result.head.bias.assign(num_classes, 0.0);
  }

  Optimizer opt(cfg);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    BatchSpec spec = cfg.batch;
    spec.seed = master();
    const auto batches = sample_batches(ds, spec, split);

    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.lr = lr;
    for (const auto& batch : batches) {
      const auto positions = batch.positions();
      const auto labels = batch.labels();
      Matrix inputs(positions.size(), ds.dim());
      std::vector<std::size_t> dense_labels(positions.size());
      for (std::size_t r = 0; r < positions.size(); ++r) {
        const auto& v = ds[positions[r]].vector;
        for (std::size_t j = 0; j < v.size(); ++j) inputs(r, j) = v[j];
        dense_labels[r] = dense.at(labels[r]);
      }

      const auto out = result.encoder.forward(inputs, Mode::train);
      const auto trip = batch_triplet_loss(out.raw, labels, cfg.margins.alpha, cfg.mining);
      const auto cent = batch_ctl_loss(batch, out.raw, cfg.margins.alpha_c, cfg.ctl_negatives);
      const auto ctr = center_loss(out.raw, dense_labels, result.centers);
      const auto cls = classification_loss(out.normalized, dense_labels, result.head);
      const auto bundle = combine(trip, cent, {ctr.value, ctr.grad_embeddings},
                                  {cls.value, cls.grad_inputs}, cfg.weights);

      auto grads = result.encoder.backward(bundle.grad_raw, bundle.grad_normalized);
      Matrix head_w_grad = cls.grad_weight;
      std::vector<double> head_b_grad = cls.grad_bias;
      for (auto& g : head_w_grad.flat()) g *= cfg.weights.classification;
      for (auto& g : head_b_grad) g *= cfg.weights.classification;

      auto params = result.encoder.parameters();
      params.push_back(result.head.weight.flat());
      params.push_back(result.head.bias);
      auto grad_blocks = grads.blocks();
      grad_blocks.push_back(head_w_grad.flat());
      grad_blocks.push_back(head_b_grad);
      opt.step(params, grad_blocks, lr);

      result.centers.centers.add_scaled(ctr.center_delta, -cfg.center_lr);

      entry.triplet += bundle.triplet;
      entry.ctl += bundle.ctl;
      entry.center += bundle.center;
      entry.classification += bundle.classification;
      entry.total += bundle.total;
    }
    const double inv = batches.empty() ? 0.0 : 1.0 / static_cast<double>(batches.size());
    entry.triplet *= inv;
    entry.ctl *= inv;
    entry.center *= inv;
    entry.classification *= inv;
    entry.total *= inv;
    result.log.push_back(entry);
  }
  return result;
}

std::string format_loss_log(const std::vector<EpochLog>& log) {
  std::string out = "epoch,lr,triplet,ctl,center,classification,total\n";
  char buf[256];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.lr,
                  e.triplet, e.ctl, e.center, e.classification, e.total);
    out += buf;
  }
  return out;
}

}  // namespace ctl
