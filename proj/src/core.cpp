#include "odgn/core.hpp"

#include <cmath>
#include <unordered_set>

namespace odgn {

TransportGraphSet TransportGraphSet::from_raw(BoolMatrix ngb, BoolMatrix bus, BoolMatrix rail)
{
  auto close = [](BoolMatrix a) {
    if (a.rows() != a.cols()) throw DataError("transport adjacency must be square");
    BoolMatrix s = a;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) s(i, j) = a(i, j) || a(j, i);
      s(i, i) = true;
    }
    return s;
  };
  TransportGraphSet t{close(std::move(ngb)), close(std::move(bus)), close(std::move(rail))};
  if (t.bus.rows() != t.ngb.rows() || t.rail.rows() != t.ngb.rows())
    throw DataError("transport graphs disagree on the number of regions");
  return t;
}

ODNetwork::ODNetwork(Matrix flows) : flows_(std::move(flows))
{
  if (flows_.rows() != flows_.cols()) throw DataError("OD matrix must be square");
  for (Eigen::Index i = 0; i < flows_.size(); ++i) {
    const double v = flows_.data()[i];
    if (!std::isfinite(v)) throw DataError("OD flows must be finite");
    if (v < 0.0) throw DataError("OD flows must be non-negative");
  }
}

double ODNetwork::total_off_diagonal() const
{
  return flows_.sum() - flows_.diagonal().sum();
}

Matrix City::attribute_matrix() const
{
  Matrix x(regions.size(), attr_dim());
  for (std::size_t i = 0; i < regions.size(); ++i)
    for (std::size_t a = 0; a < regions[i].attributes.size(); ++a) x(i, a) = regions[i].attributes[a];
  return x;
}

void City::validate() const
{
  const std::size_t n = regions.size();
  const std::size_t a = attr_dim();
  std::unordered_set<std::string> ids;
  for (const auto& r : regions) {
    if (!ids.insert(r.id).second) throw DataError("duplicate region id '" + r.id + "'");
    if (r.attributes.size() != a)
      throw DataError("region '" + r.id + "' has " + std::to_string(r.attributes.size()) +
                      " attributes, expected " + std::to_string(a));
    for (double v : r.attributes)
      if (!std::isfinite(v)) throw DataError("region '" + r.id + "' has a non-finite attribute");
  }
  for (const BoolMatrix* m : {&transport.ngb, &transport.bus, &transport.rail}) {
    if (static_cast<std::size_t>(m->rows()) != n || static_cast<std::size_t>(m->cols()) != n)
      throw DataError("transport graph size does not match region count");
  }
  if (od && od->size() != n) throw DataError("OD network size does not match region count");
}

double out_flow(const ODNetwork& net, std::size_t i)
{
  if (i >= net.size()) throw std::out_of_range("region index " + std::to_string(i) + " out of range");
  return net.flows().row(static_cast<Eigen::Index>(i)).sum() - net(i, i);
}

Vector flow_distribution(const ODNetwork& net)
{
  const auto n = static_cast<Eigen::Index>(net.size());
  const double total = net.total_off_diagonal();
  if (!(total > 0.0)) throw DataError("degenerate OD network");
  Vector p(n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) p(i * n + j) = (i == j) ? 0.0 : net.flows()(i, j) / total;
  return p;
}

Matrix off_diagonal_mask(std::size_t n)
{
  Matrix m = Matrix::Ones(n, n);
  m.diagonal().setZero();
  return m;
}

}  // namespace odgn
