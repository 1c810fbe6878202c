// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "layoutgen/assignment.hpp"
#include "layoutgen/error.hpp"
#include "layoutgen/kernels.hpp"
#include "layoutgen/matcher.hpp"

namespace layoutgen {

double intersection_area(const Box& a, const Box& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  return (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  // Areas from the same extent arithmetic as the intersection, so iou(a, a) is exactly 1.
  const double area_a = std::max(0.0, a.right() - a.x) * std::max(0.0, a.bottom() - a.y);
  const double area_b = std::max(0.0, b.right() - b.x) * std::max(0.0, b.bottom() - b.y);
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double layout_overlap(const Layout& layout, bool same_category_only, int* skipped) {
  double sum = 0.0;
  const auto& els = layout.elements;
  for (std::size_t i = 0; i < els.size(); ++i) {
    const Box bi = els[i].box();
    const double ai = bi.area();
    for (std::size_t j = 0; j < els.size(); ++j) {
      if (i == j) continue;
      if (same_category_only && els[i].category != els[j].category) continue;
      if (ai <= 0.0) {
        if (skipped) ++*skipped;
        continue;
      }
      sum += intersection_area(bi, els[j].box()) / ai;
    }
  }
  return sum;
}

double layout_alignment(const Layout& layout) {
  const int n = layout.size();
  if (n < 2) return 0.0;
  constexpr double kEps = 1e-6;
  auto anchors = [](const Element& e) {
    return std::array<double, 6>{e.x, e.x + 0.5 * e.w, e.x + e.w, e.y, e.y + 0.5 * e.h, e.y + e.h};
  };
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto ai = anchors(layout.elements[static_cast<std::size_t>(i)]);
    double d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto aj = anchors(layout.elements[static_cast<std::size_t>(j)]);
      for (std::size_t k = 0; k < 6; ++k) d = std::min(d, std::abs(ai[k] - aj[k]));
    }
    total += -std::log(1.0 - std::min(d, 1.0 - kEps));
  }
  return total / n;
}

double layout_pair_max_iou(const Layout& gen, const Layout& ref) {
  require(gen.size() == ref.size(), ErrorKind::Precondition, "max IoU needs equal element counts");
  const int n = gen.size();
  if (n == 0) return 0.0;
  // Category mismatch must never be chosen; IoU terms live in [-1, 0].
  constexpr double kForbidden = 1e6;
  CostMatrix cost(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto& g = gen.elements[static_cast<std::size_t>(i)];
      const auto& r = ref.elements[static_cast<std::size_t>(j)];
      cost(i, j) = g.category == r.category ? -iou(g.box(), r.box()) : kForbidden;
    }
  }
  const Assignment a = solve_assignment(cost);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto& g = gen.elements[static_cast<std::size_t>(i)];
    const auto& r = ref.elements[static_cast<std::size_t>(a.row_to_col[static_cast<std::size_t>(i)])];
    require(g.category == r.category, ErrorKind::Precondition, "max IoU needs equal category multisets");
    sum += iou(g.box(), r.box());
  }
  return sum / n;
}

OverlapResult overlap(std::span<const Layout> layouts, bool same_category_only) {
  OverlapResult out;
  if (layouts.empty()) return out;
  const auto terms = kernels::overlap_per_layout(layouts, same_category_only, kernels::Exec::Parallel);
  out.value = 100.0 * std::accumulate(terms.per_layout.begin(), terms.per_layout.end(), 0.0) /
              static_cast<double>(layouts.size());
  out.skipped_zero_area = terms.skipped_zero_area;
  return out;
}

double alignment(std::span<const Layout> layouts) {
  if (layouts.empty()) return 0.0;
  const auto per = kernels::alignment_per_layout(layouts, kernels::Exec::Parallel);
  return 100.0 * std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(layouts.size());
}

double max_iou(std::span<const Layout> generated, std::span<const Layout> references) {
  if (generated.empty()) return 0.0;
  const CorpusIndex index(references);
  const auto per = kernels::max_iou_per_layout(generated, index, kernels::Exec::Parallel);
  return std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(generated.size());
}

Gaussian fit_gaussian(const Eigen::MatrixXd& features) {
  require(features.rows() >= 2, ErrorKind::Data, "need at least two samples to fit a Gaussian");
  Gaussian g;
  g.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - g.mean.transpose();
  g.cov = (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
  return g;
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  require(es.info() == Eigen::Success, ErrorKind::Invariant, "eigen-decomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    require(ev[i] >= -1e-6, ErrorKind::Invariant, "covariance has a significantly negative eigenvalue");
    ev[i] = std::sqrt(std::max(ev[i], 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& sigma1, const Eigen::VectorXd& mu2,
                        const Eigen::MatrixXd& sigma2) {
  const auto d = mu1.size();
  require(mu2.size() == d && sigma1.rows() == d && sigma1.cols() == d && sigma2.rows() == d && sigma2.cols() == d,
          ErrorKind::Precondition, "Frechet distance inputs have mismatched dimensions");
  const Eigen::MatrixXd s1 = 0.5 * (sigma1 + sigma1.transpose());
  const Eigen::MatrixXd s2 = 0.5 * (sigma2 + sigma2.transpose());
  const Eigen::MatrixXd root1 = psd_sqrt(s1);
  const Eigen::MatrixXd inner = root1 * s2 * root1;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  require(es.info() == Eigen::Success, ErrorKind::Invariant, "eigen-decomposition failed");
  double tr_sqrt = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double ev = es.eigenvalues()[i];
    require(ev >= -1e-6, ErrorKind::Invariant, "covariance product has a significantly negative eigenvalue");
    tr_sqrt += std::sqrt(std::max(ev, 0.0));
  }
  const double mean_term = (mu1 - mu2).squaredNorm();
  return mean_term + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
}

double frechet_distance(const Gaussian& a, const Gaussian& b) {
  return frechet_distance(a.mean, a.cov, b.mean, b.cov);
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["overlap_all"] = overlap_all;
  j["overlap_same_category"] = overlap_same_category;
  j["alignment"] = alignment;
  j["max_iou"] = max_iou;
  j["seq_fid"] = seq_fid;
  j["pixel_fid"] = pixel_fid;
  j["num_generated"] = num_generated;
  j["num_real"] = num_real;
  j["skipped_zero_area"] = skipped_zero_area;
  j["fid_low_sample_warning"] = fid_low_sample_warning;
  j["config_hash"] = config_hash;
  return j;
}

}  // namespace layoutgen
