#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace odgn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Error families. The CLI maps them onto exit codes (usage 1, data 2, numeric 3).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Region {
  std::string id;
  double lon = 0.0;
  double lat = 0.0;
  std::vector<double> attributes;
};

/// Symmetric boolean adjacencies with self-loops, one per transport mode.
/// All three share the region ordering of the owning City.
struct TransportGraphSet {
  BoolMatrix ngb;
  BoolMatrix bus;
  BoolMatrix rail;

  std::size_t size() const { return static_cast<std::size_t>(ngb.rows()); }

  /// Builds a graph set from raw adjacencies: symmetrizes (a OR a^T) and sets the diagonal.
  static TransportGraphSet from_raw(BoolMatrix ngb, BoolMatrix bus, BoolMatrix rail);
};

/// Directed weighted OD network. Row = origin, column = destination.
/// The diagonal holds intra-region flow; it is stored but ignored by walks and metrics.
class ODNetwork {
 public:
  ODNetwork() = default;
  explicit ODNetwork(Matrix flows);

  const Matrix& flows() const { return flows_; }
  std::size_t size() const { return static_cast<std::size_t>(flows_.rows()); }
  double operator()(std::size_t i, std::size_t j) const { return flows_(i, j); }

  double total_off_diagonal() const;

  friend bool operator==(const ODNetwork& a, const ODNetwork& b) { return a.flows_ == b.flows_; }

 private:
  Matrix flows_;
};

struct City {
  std::string name;
  std::vector<Region> regions;
  TransportGraphSet transport;
  std::optional<ODNetwork> od;

  std::size_t size() const { return regions.size(); }
  std::size_t attr_dim() const { return regions.empty() ? 0 : regions.front().attributes.size(); }

  /// N x A attribute matrix in region order.
  Matrix attribute_matrix() const;

  /// Throws DataError when component sizes, attribute dimensions or ids are inconsistent.
  void validate() const;
};

/// Off-diagonal row sum of origin i.
double out_flow(const ODNetwork& net, std::size_t i);

/// Off-diagonal cells divided by their total, diagonal mapped to zero; row-major N*N vector.
Vector flow_distribution(const ODNetwork& net);

Matrix off_diagonal_mask(std::size_t n);

}  // namespace odgn
