#pragma once

// Training losses with analytic gradients:
//   instance triplet  [|a-p|^2 - |a-n|^2 + alpha]_+
//   centroid triplet  [|a-c_p|^2 - |a-c_n|^2 + alpha_c]_+
//   center loss       1/2 sum_i |x_i - c_{y_i}|^2
//   classification    mean softmax cross-entropy on normalized embeddings
// The total is a weighted sum; center loss carries weight 5e-4, the rest 1.

#include <cstdint>
#include <span>
#include <vector>

#include "ctl/batching.hpp"
#include "ctl/matrix.hpp"

namespace ctl {

struct Margins {
  double alpha = 0.3;    // instance triplet
  double alpha_c = 0.3;  // centroid triplet
};

struct LossWeights {
  double triplet = 1.0;
  double ctl = 1.0;
  double center = 5e-4;
  double classification = 1.0;
};

enum class TripletMining { batch_hard, all_valid };
enum class CentroidNegatives { average, hardest };

// ------------------------------------------------------- single-triple forms

double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double alpha);

double ctl_loss(std::span<const double> anchor, std::span<const double> positive_centroid,
                std::span<const double> negative_centroid, double alpha_c);

struct HingeGrad {
  std::vector<double> anchor;
  std::vector<double> positive;
  std::vector<double> negative;
};

/// Subgradient of the centroid triplet hinge. Zero when the inner term is
/// <= 0 (the boundary takes the zero branch).
HingeGrad ctl_grad(std::span<const double> anchor, std::span<const double> positive_centroid,
                   std::span<const double> negative_centroid, double alpha_c);

/// Same hinge applied to instances.
HingeGrad triplet_grad(std::span<const double> anchor, std::span<const double> positive,
                       std::span<const double> negative, double alpha);

// ------------------------------------------------------------ batch forms

/// Value plus gradient w.r.t. each batch row.
struct TermResult {
  double value = 0.0;
  Matrix grad;
};

/// Batch-hard: each anchor pairs with its farthest positive and nearest
/// negative, averaged over anchors that have both. All-valid: mean over
/// every (a, p, n) triple.
TermResult batch_triplet_loss(const Matrix& embeddings, std::span<const std::uint32_t> labels,
                              double alpha, TripletMining mining = TripletMining::batch_hard);

/// Each batch member is a query against its leave-one-out class prototype
/// and the full centroids of the other batch classes. Average mode takes the
/// mean hinge over negative classes; hardest mode uses the nearest negative
/// centroid. Result is averaged over queries. Gradients flow through the
/// centroids back to their member rows.
TermResult batch_ctl_loss(const Batch& batch, const Matrix& embeddings, double alpha_c,
                          CentroidNegatives negatives = CentroidNegatives::average);

/// Learnable per-class centers, rows indexed by dense label.
struct ClassCenters {
  Matrix centers;
  std::size_t num_classes() const { return centers.rows(); }
};

struct CenterLossResult {
  double value = 0.0;
  Matrix grad_embeddings;  // x_i - c_{y_i}
  Matrix grad_centers;     // exact dL/dc_j = sum_{y_i=j} (c_j - x_i)
  /// Batch-averaged center update of the center-loss method:
  /// delta_j = sum_{y_i=j} (c_j - x_i) / (1 + #{i : y_i = j}).
  Matrix center_delta;
};

/// Labels are dense indexes into `centers`; an out-of-range label throws
/// std::out_of_range (no center for that class).
CenterLossResult center_loss(const Matrix& embeddings, std::span<const std::size_t> labels,
                             const ClassCenters& centers);

struct ClassifierHead {
  Matrix weight;             // num_classes x D
  std::vector<double> bias;  // num_classes
  std::size_t num_classes() const { return weight.rows(); }
};

struct ClassificationResult {
  double value = 0.0;
  Matrix grad_inputs;
  Matrix grad_weight;
  std::vector<double> grad_bias;
};

ClassificationResult classification_loss(const Matrix& normalized,
                                         std::span<const std::size_t> labels,
                                         const ClassifierHead& head);

struct LossBundle {
  double triplet = 0.0;
  double ctl = 0.0;
  double center = 0.0;
  double classification = 0.0;
  double total = 0.0;
  /// d total / d raw embedding, one row per batch member.
  Matrix grad_raw;
  /// d total / d normalized embedding (classification term only).
  Matrix grad_normalized;
};

/// Weighted sum of the four terms. Terms with an empty gradient matrix
/// contribute zero gradient. Triplet, centroid and center terms act on raw
/// embeddings; classification acts on normalized ones.
LossBundle combine(const TermResult& triplet, const TermResult& ctl, const TermResult& center,
                   const TermResult& classification, const LossWeights& weights = {});

}  // namespace ctl
