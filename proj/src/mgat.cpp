#include "odgn/mgat.hpp"

#include <cmath>
#include <stdexcept>

namespace odgn {

GatLayerParams GatLayerParams::init(Eigen::Index in_dim, Eigen::Index head_dim, std::size_t heads, Rng& rng)
{
  if (heads == 0) throw std::invalid_argument("GAT layer needs at least one head");
  GatLayerParams p;
  const double w_sd = std::sqrt(2.0 / static_cast<double>(in_dim + head_dim));
  const double a_sd = std::sqrt(2.0 / static_cast<double>(2 * head_dim + 1));
  for (std::size_t k = 0; k < heads; ++k) {
    p.weights.push_back(ad::Var::parameter(rng.normal_matrix(in_dim, head_dim, w_sd)));
    p.attention.push_back(ad::Var::parameter(rng.normal_matrix(head_dim, 2, a_sd)));
  }
  return p;
}

GatOutput gat_layer_full(const ad::Var& h, const BoolMatrix& adj, const GatLayerParams& params, bool activate)
{
  if (h.cols() != params.in_dim())
    throw std::invalid_argument("gat_layer: input has " + std::to_string(h.cols()) + " features, layer expects " +
                                std::to_string(params.in_dim()));
  if (adj.rows() != h.rows() || adj.cols() != h.rows()) throw std::invalid_argument("gat_layer: adjacency shape");
  for (Eigen::Index i = 0; i < adj.rows(); ++i)
    if (!adj.row(i).any()) throw std::domain_error("gat_layer: node " + std::to_string(i) + " has no neighbours");

  GatOutput out;
  std::vector<ad::Var> heads;
  heads.reserve(params.heads());
  for (std::size_t k = 0; k < params.heads(); ++k) {
    ad::Var wh = ad::matmul(h, params.weights[k]);
    ad::Var st = ad::matmul(wh, params.attention[k]);
    ad::Var scores = ad::leaky_relu(ad::outer_sum(ad::slice_cols(st, 0, 1), ad::slice_cols(st, 1, 1)), kLeakySlope);
    ad::Var alpha = ad::masked_row_softmax(scores, adj);
    ad::Var agg = ad::matmul(alpha, wh);
    heads.push_back(activate ? ad::elu(agg) : agg);
    out.attention.push_back(std::move(alpha));
  }
  out.features = heads.size() == 1 ? heads.front() : ad::concat_cols(heads);
  return out;
}

FeatureScaler FeatureScaler::fit(const std::vector<Matrix>& attribute_matrices)
{
  if (attribute_matrices.empty()) throw std::invalid_argument("FeatureScaler::fit: no data");
  const Eigen::Index a = attribute_matrices.front().cols();
  Vector sum = Vector::Zero(a);
  Vector sq = Vector::Zero(a);
  double count = 0.0;
  for (const auto& m : attribute_matrices) {
    if (m.cols() != a) throw DataError("attribute dimension differs between cities");
    const Matrix z = m.unaryExpr([](double v) { return std::copysign(std::log1p(std::abs(v)), v); });
    sum += z.colwise().sum().transpose();
    sq += z.array().square().colwise().sum().matrix().transpose();
    count += static_cast<double>(m.rows());
  }
  FeatureScaler s;
  s.mean = sum / count;
  s.scale = (sq / count - s.mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
  for (Eigen::Index c = 0; c < a; ++c)
    if (s.scale(c) < 1e-12) s.scale(c) = 1.0;
  return s;
}

Matrix FeatureScaler::transform(const Matrix& attributes) const
{
  Matrix z = attributes.unaryExpr([](double v) { return std::copysign(std::log1p(std::abs(v)), v); });
  if (!fitted()) return z;
  if (z.cols() != mean.size()) throw DataError("attribute dimension does not match the fitted scaler");
  return ((z.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix();
}

MgatParams MgatParams::init(const MgatConfig& cfg, Rng& rng)
{
  if (cfg.heads == 0 || cfg.layers == 0) throw std::invalid_argument("MGAT needs at least one head and one layer");
  if (cfg.embed_dim % static_cast<Eigen::Index>(cfg.heads) != 0)
    throw std::invalid_argument("embed_dim must be divisible by the number of heads");
  MgatParams p;
  p.config = cfg;
  const Eigen::Index head_dim = cfg.embed_dim / static_cast<Eigen::Index>(cfg.heads);
  for (auto& stack : p.stacks) {
    Eigen::Index in = cfg.attr_dim + cfg.noise_dim;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      stack.push_back(GatLayerParams::init(in, head_dim, cfg.heads, rng));
      in = cfg.embed_dim;
    }
  }
  const double sd = std::sqrt(2.0 / static_cast<double>(4 * cfg.embed_dim));
  p.fuse = ad::Var::parameter(rng.normal_matrix(3 * cfg.embed_dim, cfg.embed_dim, sd));
  return p;
}

std::vector<ad::Var*> MgatParams::parameters()
{
  std::vector<ad::Var*> out;
  for (auto& stack : stacks)
    for (auto& layer : stack) {
      for (auto& w : layer.weights) out.push_back(&w);
      for (auto& a : layer.attention) out.push_back(&a);
    }
  out.push_back(&fuse);
  return out;
}

ad::Var encode(const Matrix& scaled_attributes, const TransportGraphSet& transport, const Matrix& noise,
               const MgatParams& params)
{
  const auto& cfg = params.config;
  if (scaled_attributes.cols() != cfg.attr_dim)
    throw DataError("city has " + std::to_string(scaled_attributes.cols()) + " attributes, model expects " +
                    std::to_string(cfg.attr_dim));
  if (noise.rows() != scaled_attributes.rows() || noise.cols() != cfg.noise_dim)
    throw std::invalid_argument("encode: noise must be N x " + std::to_string(cfg.noise_dim));
  if (static_cast<Eigen::Index>(transport.size()) != scaled_attributes.rows())
    throw DataError("encode: transport graphs do not match region count");

  Matrix input(scaled_attributes.rows(), cfg.attr_dim + cfg.noise_dim);
  input << scaled_attributes, noise;
  const ad::Var x = ad::Var::constant(std::move(input));

  const std::array<const BoolMatrix*, 3> graphs{&transport.ngb, &transport.bus, &transport.rail};
  std::array<ad::Var, 3> views;
  for (std::size_t v = 0; v < 3; ++v) {
    ad::Var h = x;
    const auto& stack = params.stacks[v];
    for (std::size_t l = 0; l < stack.size(); ++l) h = gat_layer(h, *graphs[v], stack[l], l + 1 < stack.size());
    views[v] = h;
  }
  return ad::matmul(ad::concat_cols(views), params.fuse);
}

ad::Var encode(const City& city, const Matrix& noise, const MgatParams& params)
{
  return encode(params.scaler.transform(city.attribute_matrix()), city.transport, noise, params);
}

}  // namespace odgn
