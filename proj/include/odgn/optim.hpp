#pragma once

#include "odgn/autograd.hpp"

#include <span>
#include <vector>

namespace odgn {

using ParamList = std::vector<ad::Var*>;

void zero_grad(const ParamList& params);

/// Clamps every parameter entry into [-c, c].
void clip_parameters(const ParamList& params, double c);

double max_abs_value(const ParamList& params);
double gradient_norm(const ParamList& params);
double parameter_norm(const ParamList& params);

/// RMSProp: s <- rho s + (1 - rho) g^2;  w <- w - lr g / (sqrt(s) + eps).
struct RmsProp {
  double lr = 5e-5;
  double rho = 0.99;
  double eps = 1e-8;
  std::vector<Matrix> mean_square;

  void step(const ParamList& params);
};

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long t = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;

  void step(const ParamList& params);
};

}  // namespace odgn
