#ifndef LOOPSPACE_STATE_SPACE_HPP
#define LOOPSPACE_STATE_SPACE_HPP

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdio>
#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "loopspace/error.hpp"

namespace loopspace {

/// Index of a label in a finite state space.
struct LabelId {
  std::size_t index = 0;
  auto operator<=>(const LabelId &) const = default;
};

using Point = std::vector<double>;

/// A point of a state space: a label of a finite alphabet or a Euclidean point.
/// The variant order is the ordering used by canonical forms.
using State = std::variant<LabelId, Point>;

/**
 * The metric space (S, d_S) that loops live in.
 *
 * Two models are supported: a finite alphabet with an explicit distance
 * matrix, and R^dim with the Euclidean distance. Instances are immutable and
 * shared between loops through `std::shared_ptr<const StateSpace>`.
 */
class StateSpace {
public:
  enum class Kind { finite, euclidean };

  /// Finite alphabet with a distance matrix. The matrix must be symmetric,
  /// zero exactly on the diagonal and satisfy the triangle inequality.
  static std::shared_ptr<const StateSpace>
  finite(std::vector<std::string> labels,
         std::vector<std::vector<double>> dist) {
    validate_finite(labels, dist);
    return std::shared_ptr<const StateSpace>(
        new StateSpace(Kind::finite, std::move(labels), std::move(dist), 0));
  }

  /// Finite alphabet under the discrete metric (distance 1 between distinct
  /// labels).
  static std::shared_ptr<const StateSpace>
  discrete(std::vector<std::string> labels) {
    const std::size_t n = labels.size();
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 1.0));
    for (std::size_t i = 0; i < n; ++i)
      dist[i][i] = 0.0;
    return finite(std::move(labels), std::move(dist));
  }

  static std::shared_ptr<const StateSpace> euclidean(std::size_t dim) {
    if (dim == 0)
      throw validation_error("euclidean space: dim must be >= 1");
    return std::shared_ptr<const StateSpace>(
        new StateSpace(Kind::euclidean, {}, {}, dim));
  }

  Kind kind() const noexcept { return kind_; }
  bool is_finite() const noexcept { return kind_ == Kind::finite; }

  /// Number of labels (finite kind only; 0 otherwise).
  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string> &labels() const noexcept { return labels_; }
  const std::vector<std::vector<double>> &distances() const noexcept {
    return dist_;
  }
  /// Dimension of the Euclidean model (0 for finite spaces).
  std::size_t dim() const noexcept { return dim_; }

  bool contains(const State &s) const {
    if (is_finite()) {
      const auto *id = std::get_if<LabelId>(&s);
      return id != nullptr && id->index < labels_.size();
    }
    const auto *p = std::get_if<Point>(&s);
    return p != nullptr && p->size() == dim_ &&
           std::all_of(p->begin(), p->end(),
                       [](double c) { return std::isfinite(c); });
  }

  double distance(const State &a, const State &b) const {
    if (is_finite())
      return dist_[std::get<LabelId>(a).index][std::get<LabelId>(b).index];
    const auto &p = std::get<Point>(a);
    const auto &q = std::get<Point>(b);
    double sum = 0.0;
    for (std::size_t k = 0; k < dim_; ++k)
      sum += (p[k] - q[k]) * (p[k] - q[k]);
    return std::sqrt(sum);
  }

  LabelId label(std::string_view name) const {
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == name)
        return LabelId{i};
    throw domain_error("unknown state label '" + std::string(name) + "'");
  }

  /// Human-readable name of a state (label, or "(x, y, ...)").
  std::string name(const State &s) const {
    if (const auto *id = std::get_if<LabelId>(&s))
      return id->index < labels_.size() ? labels_[id->index]
                                        : "#" + std::to_string(id->index);
    std::string out = "(";
    const auto &p = std::get<Point>(s);
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (k)
        out += ", ";
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.9g", p[k]);
      out += buf;
    }
    return out + ")";
  }

  bool operator==(const StateSpace &other) const {
    return kind_ == other.kind_ && labels_ == other.labels_ &&
           dist_ == other.dist_ && dim_ == other.dim_;
  }

private:
  StateSpace(Kind kind, std::vector<std::string> labels,
             std::vector<std::vector<double>> dist, std::size_t dim)
      : kind_(kind), labels_(std::move(labels)), dist_(std::move(dist)),
        dim_(dim) {}

  static void validate_finite(const std::vector<std::string> &labels,
                              const std::vector<std::vector<double>> &dist) {
    const std::size_t n = labels.size();
    if (n == 0)
      throw validation_error("finite space: labels must be nonempty");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (labels[i] == labels[j])
          throw validation_error("finite space: duplicate label '" +
                                 labels[i] + "'");
    if (dist.size() != n)
      throw validation_error("finite space: dist must be " +
                             std::to_string(n) + "x" + std::to_string(n));
    for (std::size_t i = 0; i < n; ++i) {
      if (dist[i].size() != n)
        throw validation_error("finite space: dist[" + std::to_string(i) +
                               "] must have " + std::to_string(n) +
                               " entries");
      for (std::size_t j = 0; j < n; ++j) {
        const double d = dist[i][j];
        const std::string at =
            "dist[" + std::to_string(i) + "][" + std::to_string(j) + "]";
        if (!std::isfinite(d) || d < 0.0)
          throw validation_error("finite space: " + at +
                                 " must be a nonnegative real");
        if ((i == j) != (d == 0.0))
          throw validation_error("finite space: " + at +
                                 " must be zero exactly on the diagonal");
        if (d != dist[j][i])
          throw validation_error("finite space: " + at + " is not symmetric");
      }
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) {
          const double rhs = dist[i][k] + dist[k][j];
          if (dist[i][j] > rhs * (1.0 + 1e-12))
            throw validation_error(
                "finite space: triangle inequality fails for (" + labels[i] +
                ", " + labels[k] + ", " + labels[j] + ")");
        }
  }

  Kind kind_;
  std::vector<std::string> labels_;
  std::vector<std::vector<double>> dist_;
  std::size_t dim_;
};

using SpacePtr = std::shared_ptr<const StateSpace>;

inline bool same_space(const SpacePtr &a, const SpacePtr &b) {
  return a == b || (a && b && *a == *b);
}

} // namespace loopspace

#endif // LOOPSPACE_STATE_SPACE_HPP
