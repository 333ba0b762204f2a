#include "ctl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ctl/core.hpp"

namespace ctl {

namespace {

double hinge_inner(std::span<const double> a, std::span<const double> p,
                   std::span<const double> n, double margin) {
  detail::check_same_size(a.size(), p.size());
  detail::check_same_size(a.size(), n.size());
  return squared_l2_distance(a, p) - squared_l2_distance(a, n) + margin;
}

HingeGrad hinge_grad(std::span<const double> a, std::span<const double> p,
                     std::span<const double> n, double margin) {
  const double inner = hinge_inner(a, p, n, margin);
  const std::size_t d = a.size();
  HingeGrad g{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0),
              std::vector<double>(d, 0.0)};
  if (inner <= 0.0) return g;
  for (std::size_t i = 0; i < d; ++i) {
    const double ap = a[i] - p[i];
    const double an = a[i] - n[i];
    g.anchor[i] = 2.0 * ap - 2.0 * an;
    g.positive[i] = -2.0 * ap;
    g.negative[i] = 2.0 * an;
  }
  return g;
}

void add_to_row(Matrix& m, std::size_t row, std::span<const double> v, double scale) {
  auto r = m.row(row);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += scale * v[i];
}

void check_labels(const Matrix& m, std::size_t n_labels) {
  if (m.rows() != n_labels) throw DimensionMismatch(m.rows(), n_labels);
}

}  // namespace

double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double alpha) {
  return std::max(hinge_inner(anchor, positive, negative, alpha), 0.0);
}

double ctl_loss(std::span<const double> anchor, std::span<const double> positive_centroid,
                std::span<const double> negative_centroid, double alpha_c) {
  return std::max(hinge_inner(anchor, positive_centroid, negative_centroid, alpha_c), 0.0);
}

HingeGrad ctl_grad(std::span<const double> anchor, std::span<const double> positive_centroid,
                   std::span<const double> negative_centroid, double alpha_c) {
  return hinge_grad(anchor, positive_centroid, negative_centroid, alpha_c);
}

HingeGrad triplet_grad(std::span<const double> anchor, std::span<const double> positive,
                       std::span<const double> negative, double alpha) {
  return hinge_grad(anchor, positive, negative, alpha);
}

TermResult batch_triplet_loss(const Matrix& x, std::span<const std::uint32_t> labels,
                              double alpha, TripletMining mining) {
  check_labels(x, labels.size());
  const std::size_t n = x.rows();
  TermResult out{0.0, Matrix(n, x.cols())};

  Matrix dist(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      dist(i, j) = dist(j, i) = squared_l2_distance(x.row(i), x.row(j));
    }
  }

  auto accumulate = [&](std::size_t a, std::size_t p, std::size_t ng, double weight) {
    const double inner = dist(a, p) - dist(a, ng) + alpha;
    if (inner <= 0.0) return;
    out.value += weight * inner;
    const auto g = hinge_grad(x.row(a), x.row(p), x.row(ng), alpha);
    add_to_row(out.grad, a, g.anchor, weight);
    add_to_row(out.grad, p, g.positive, weight);
    add_to_row(out.grad, ng, g.negative, weight);
  };

  if (mining == TripletMining::batch_hard) {
    struct Hard {
      std::size_t anchor, pos, neg;
    };
    std::vector<Hard> picks;
    for (std::size_t a = 0; a < n; ++a) {
      std::size_t pos = n, neg = n;
      double far = -1.0, near = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        if (j == a) continue;
        if (labels[j] == labels[a]) {
          if (dist(a, j) > far) far = dist(a, j), pos = j;
        } else if (dist(a, j) < near) {
          near = dist(a, j), neg = j;
        }
      }
      if (pos < n && neg < n) picks.push_back({a, pos, neg});
    }
    if (picks.empty()) return out;
    const double w = 1.0 / static_cast<double>(picks.size());
    for (const auto& h : picks) accumulate(h.anchor, h.pos, h.neg, w);
  } else {
    std::size_t count = 0;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t p = 0; p < n; ++p)
        if (p != a && labels[p] == labels[a])
          for (std::size_t ng = 0; ng < n; ++ng)
            if (labels[ng] != labels[a]) ++count;
    if (count == 0) return out;
    const double w = 1.0 / static_cast<double>(count);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t p = 0; p < n; ++p)
        if (p != a && labels[p] == labels[a])
          for (std::size_t ng = 0; ng < n; ++ng)
            if (labels[ng] != labels[a]) accumulate(a, p, ng, w);
  }
  return out;
}

TermResult batch_ctl_loss(const Batch& batch, const Matrix& x, double alpha_c,
                          CentroidNegatives negatives) {
  const auto pairs = enumerate_query_prototype_pairs(batch, x);
  TermResult out{0.0, Matrix(x.rows(), x.cols())};
  if (pairs.empty()) return out;
  const double per_query = 1.0 / static_cast<double>(pairs.size());

  for (const auto& pair : pairs) {
    if (pair.negatives.empty()) continue;
    const auto anchor = x.row(pair.query_row);

    std::vector<const NegativeCentroid*> used;
    if (negatives == CentroidNegatives::hardest) {
      const NegativeCentroid* best = nullptr;
      double best_d = std::numeric_limits<double>::infinity();
      for (const auto& neg : pair.negatives) {
        const double d = squared_l2_distance(anchor, std::span<const double>(neg.centroid));
        if (d < best_d) best_d = d, best = &neg;
      }
      used.push_back(best);
    } else {
      for (const auto& neg : pair.negatives) used.push_back(&neg);
    }

    const double w = per_query / static_cast<double>(used.size());
    const double pos_share = 1.0 / static_cast<double>(pair.positive_rows.size());
    for (const auto* neg : used) {
      const double loss = ctl_loss(anchor, pair.positive, neg->centroid, alpha_c);
      if (loss <= 0.0) continue;
      out.value += w * loss;
      const auto g = ctl_grad(anchor, pair.positive, neg->centroid, alpha_c);
      add_to_row(out.grad, pair.query_row, g.anchor, w);
      for (std::size_t r : pair.positive_rows) add_to_row(out.grad, r, g.positive, w * pos_share);
      const double neg_share = 1.0 / static_cast<double>(neg->rows.size());
      for (std::size_t r : neg->rows) add_to_row(out.grad, r, g.negative, w * neg_share);
    }
  }
  return out;
}

CenterLossResult center_loss(const Matrix& x, std::span<const std::size_t> labels,
                             const ClassCenters& centers) {
  check_labels(x, labels.size());
  const auto& c = centers.centers;
  if (!x.empty() && c.cols() != x.cols()) throw DimensionMismatch(x.cols(), c.cols());

  CenterLossResult out;
  out.grad_embeddings = Matrix(x.rows(), x.cols());
  out.grad_centers = Matrix(c.rows(), c.cols());
  out.center_delta = Matrix(c.rows(), c.cols());
  std::vector<std::size_t> counts(c.rows(), 0);

  for (std::size_t i = 0; i < x.rows(); ++i) {
    const std::size_t y = labels[i];
    if (y >= c.rows()) {
      throw std::out_of_range("no center for class label " + std::to_string(y));
    }
    ++counts[y];
    for (std::size_t d = 0; d < x.cols(); ++d) {
      const double diff = x(i, d) - c(y, d);
      out.value += 0.5 * diff * diff;
      out.grad_embeddings(i, d) = diff;
      out.grad_centers(y, d) -= diff;
    }
  }
  for (std::size_t j = 0; j < c.rows(); ++j) {
    if (counts[j] == 0) continue;
    const double inv = 1.0 / (1.0 + static_cast<double>(counts[j]));
    for (std::size_t d = 0; d < c.cols(); ++d) {
      out.center_delta(j, d) = out.grad_centers(j, d) * inv;
    }
  }
  return out;
}

ClassificationResult classification_loss(const Matrix& x, std::span<const std::size_t> labels,
                                         const ClassifierHead& head) {
  check_labels(x, labels.size());
  const std::size_t n = x.rows();
  const std::size_t classes = head.num_classes();
  if (head.bias.size() != classes) throw DimensionMismatch(head.bias.size(), classes);
  if (n > 0 && head.weight.cols() != x.cols()) throw DimensionMismatch(x.cols(), head.weight.cols());

  ClassificationResult out;
  out.grad_inputs = Matrix(n, x.cols());
  out.grad_weight = Matrix(classes, head.weight.cols());
  out.grad_bias.assign(classes, 0.0);
  if (n == 0) return out;

  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> logits(classes), prob(classes);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = labels[i];
    if (y >= classes) {
      throw std::out_of_range("class label " + std::to_string(y) + " >= " +
                              std::to_string(classes) + " classifier outputs");
    }
    for (std::size_t k = 0; k < classes; ++k) {
      logits[k] = head.bias[k] + dot(head.weight.row(k), x.row(i));
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t k = 0; k < classes; ++k) z += std::exp(logits[k] - mx);
    const double log_z = mx + std::log(z);
    out.value += (log_z - logits[y]) * inv_n;

    for (std::size_t k = 0; k < classes; ++k) {
      prob[k] = std::exp(logits[k] - log_z);
      const double dlogit = (prob[k] - (k == y ? 1.0 : 0.0)) * inv_n;
      out.grad_bias[k] += dlogit;
      for (std::size_t d = 0; d < x.cols(); ++d) {
        out.grad_weight(k, d) += dlogit * x(i, d);
        out.grad_inputs(i, d) += dlogit * head.weight(k, d);
      }
    }
  }
  return out;
}

LossBundle combine(const TermResult& triplet, const TermResult& ctl, const TermResult& center,
                   const TermResult& classification, const LossWeights& w) {
  LossBundle b;
  b.triplet = triplet.value;
  b.ctl = ctl.value;
  b.center = center.value;
  b.classification = classification.value;
  b.total = w.triplet * triplet.value + w.ctl * ctl.value + w.center * center.value +
            w.classification * classification.value;

  const Matrix* shape = nullptr;
  for (const auto* t : {&triplet, &ctl, &center, &classification}) {
    if (!t->grad.empty()) {
      shape = &t->grad;
      break;
    }
  }
  if (shape == nullptr) return b;
  b.grad_raw = Matrix(shape->rows(), shape->cols());
  b.grad_normalized = Matrix(shape->rows(), shape->cols());
  auto add = [](Matrix& dst, const TermResult& t, double weight) {
    if (t.grad.empty() || weight == 0.0) return;
    if (t.grad.rows() != dst.rows() || t.grad.cols() != dst.cols()) {
      throw DimensionMismatch(t.grad.rows() * t.grad.cols(), dst.rows() * dst.cols());
    }
    dst.add_scaled(t.grad, weight);
  };
  add(b.grad_raw, triplet, w.triplet);
  add(b.grad_raw, ctl, w.ctl);
  add(b.grad_raw, center, w.center);
  add(b.grad_normalized, classification, w.classification);
  return b;
}

}  // namespace ctl
