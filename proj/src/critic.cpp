#include "odgn/critic.hpp"

#include <numeric>
#include <stdexcept>

namespace odgn {

namespace {

CausalConv make_conv(Eigen::Index in, Eigen::Index out, Eigen::Index kernel, Eigen::Index dilation, Rng& rng)
{
  CausalConv c;
  Matrix v = rng.normal_matrix(kernel * in, out, 0.01);
  Matrix g = v.colwise().norm();
  c.direction = ad::Var::parameter(std::move(v));
  c.gain = ad::Var::parameter(std::move(g));
  c.bias = ad::Var::parameter(Matrix::Zero(1, out));
  c.kernel = kernel;
  c.dilation = dilation;
  return c;
}

}  // namespace

Eigen::Index TcnConfig::receptive_field() const
{
  return 1 + 2 * (kernel - 1) * std::accumulate(dilations.begin(), dilations.end(), Eigen::Index{0});
}

TcnParams TcnParams::init(const TcnConfig& cfg, Rng& rng)
{
  if (cfg.dilations.empty() || cfg.kernel < 1 || cfg.channels < 1) throw std::invalid_argument("bad TCN config");
  TcnParams p;
  p.config = cfg;
  Eigen::Index in = cfg.input_dim;
  for (Eigen::Index d : cfg.dilations) {
    TcnBlock b;
    b.conv1 = make_conv(in, cfg.channels, cfg.kernel, d, rng);
    b.conv2 = make_conv(cfg.channels, cfg.channels, cfg.kernel, d, rng);
    if (in != cfg.channels) {
      b.skip_weight = ad::Var::parameter(rng.normal_matrix(in, cfg.channels, 0.01));
      b.skip_bias = ad::Var::parameter(Matrix::Zero(1, cfg.channels));
    }
    p.blocks.push_back(std::move(b));
    in = cfg.channels;
  }
  p.fc_weight = ad::Var::parameter(rng.normal_matrix(cfg.channels, 1, 0.01));
  p.fc_bias = ad::Var::parameter(Matrix::Zero(1, 1));
  return p;
}

std::vector<ad::Var*> TcnParams::parameters()
{
  std::vector<ad::Var*> out;
  for (auto& b : blocks) {
    for (CausalConv* c : {&b.conv1, &b.conv2}) {
      out.push_back(&c->direction);
      out.push_back(&c->gain);
      out.push_back(&c->bias);
    }
    if (b.skip_weight) {
      out.push_back(&*b.skip_weight);
      out.push_back(&*b.skip_bias);
    }
  }
  out.push_back(&fc_weight);
  out.push_back(&fc_bias);
  return out;
}

ad::Var causal_conv(const ad::Var& x, Eigen::Index batch, Eigen::Index length, const CausalConv& conv)
{
  const Eigen::Index in = conv.direction.rows() / conv.kernel;
  if (x.cols() != in) throw std::invalid_argument("causal_conv: input has " + std::to_string(x.cols()) +
                                                  " channels, expected " + std::to_string(in));
  std::vector<ad::Var> taps;
  taps.reserve(static_cast<std::size_t>(conv.kernel));
  for (Eigen::Index s = 0; s < conv.kernel; ++s)
    taps.push_back(ad::shift_time(x, batch, length, (conv.kernel - 1 - s) * conv.dilation));
  ad::Var stacked = taps.size() == 1 ? taps.front() : ad::concat_cols(taps);
  ad::Var w = ad::weight_norm(conv.direction, conv.gain);
  return ad::add_row(ad::matmul(stacked, w), conv.bias);
}

ad::Var tcn_hidden(const ad::Var& sequences, Eigen::Index batch, Eigen::Index length, const TcnParams& params)
{
  if (sequences.rows() != batch * length) throw std::invalid_argument("score: rows != batch * length");
  if (sequences.cols() != params.config.input_dim)
    throw std::invalid_argument("score: sequence feature width " + std::to_string(sequences.cols()) +
                                " does not match critic input " + std::to_string(params.config.input_dim));
  ad::Var h = sequences;
  for (const auto& b : params.blocks) {
    ad::Var y = ad::relu(causal_conv(h, batch, length, b.conv1));
    y = ad::relu(causal_conv(y, batch, length, b.conv2));
    ad::Var res = b.skip_weight ? ad::add_row(ad::matmul(h, *b.skip_weight), *b.skip_bias) : h;
    h = ad::relu(ad::add(y, res));
  }
  return h;
}

ad::Var score(const ad::Var& sequences, Eigen::Index batch, Eigen::Index length, const TcnParams& params)
{
  ad::Var h = tcn_hidden(sequences, batch, length, params);
  std::vector<Eigen::Index> last(static_cast<std::size_t>(batch));
  for (Eigen::Index b = 0; b < batch; ++b) last[static_cast<std::size_t>(b)] = b * length + length - 1;
  return ad::add_row(ad::matmul(ad::select_rows(h, last), params.fc_weight), params.fc_bias);
}

}  // namespace odgn
