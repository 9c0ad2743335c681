#include "odgn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace odgn {

void zero_grad(const ParamList& params)
{
  for (auto* p : params) p->zero_grad();
}

void clip_parameters(const ParamList& params, double c)
{
  if (!(c > 0.0)) throw std::invalid_argument("clip threshold must be positive");
  for (auto* p : params) p->mutable_value() = p->value().cwiseMax(-c).cwiseMin(c);
}

double max_abs_value(const ParamList& params)
{
  double m = 0.0;
  for (auto* p : params)
    if (p->value().size() > 0) m = std::max(m, p->value().cwiseAbs().maxCoeff());
  return m;
}

double gradient_norm(const ParamList& params)
{
  double s = 0.0;
  for (auto* p : params)
    if (p->has_grad()) s += p->grad().squaredNorm();
  return std::sqrt(s);
}

double parameter_norm(const ParamList& params)
{
  double s = 0.0;
  for (auto* p : params) s += p->value().squaredNorm();
  return std::sqrt(s);
}

void RmsProp::step(const ParamList& params)
{
  if (mean_square.empty())
    for (auto* p : params) mean_square.push_back(Matrix::Zero(p->rows(), p->cols()));
  if (mean_square.size() != params.size()) throw std::logic_error("RmsProp: parameter list changed");
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    if (!p->has_grad()) continue;
    const Matrix g = p->grad();
    auto& s = mean_square[k];
    s = rho * s + (1.0 - rho) * g.cwiseAbs2();
    p->mutable_value().array() -= lr * g.array() / (s.array().sqrt() + eps);
  }
}

void Adam::step(const ParamList& params)
{
  if (m.empty())
    for (auto* p : params) {
      m.push_back(Matrix::Zero(p->rows(), p->cols()));
      v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  if (m.size() != params.size()) throw std::logic_error("Adam: parameter list changed");
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    if (!p->has_grad()) continue;
    const Matrix g = p->grad();
    m[k] = beta1 * m[k] + (1.0 - beta1) * g;
    v[k] = beta2 * v[k] + (1.0 - beta2) * g.cwiseAbs2();
    p->mutable_value().array() -= lr * (m[k].array() / c1) / ((v[k].array() / c2).sqrt() + eps);
  }
}

}  // namespace odgn
