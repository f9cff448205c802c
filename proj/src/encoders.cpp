#include "amsps/encoders.hpp"

namespace amsps {

namespace {

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Vector uniform_vector(Eigen::Index n, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

GruGate init_gate(Eigen::Index hidden, Eigen::Index embed, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  GruGate g;
  g.input = uniform_matrix(hidden, embed, 1.0 / std::sqrt(static_cast<double>(embed)), rng);
  g.recurrent = uniform_matrix(hidden, hidden, bound, rng);
  g.bias = uniform_vector(hidden, bound, rng);
  return g;
}

GruParams init_gru(Eigen::Index hidden, Eigen::Index embed, std::mt19937_64& rng) {
  GruParams p;
  p.update = init_gate(hidden, embed, rng);
  p.reset = init_gate(hidden, embed, rng);
  p.candidate = init_gate(hidden, embed, rng);
  return p;
}

GruGate zeros_like(const GruGate& g) {
  return {Matrix::Zero(g.input.rows(), g.input.cols()), Matrix::Zero(g.recurrent.rows(), g.recurrent.cols()),
          Vector::Zero(g.bias.size())};
}

void validate_gate(const GruGate& g, Eigen::Index hidden, Eigen::Index embed, const char* name) {
  if (g.input.rows() != hidden || g.input.cols() != embed || g.recurrent.rows() != hidden ||
      g.recurrent.cols() != hidden || g.bias.size() != hidden) {
    throw Error(ErrorCategory::Shape, std::string("GRU gate '") + name + "' has inconsistent shapes");
  }
}

Vector gate_preactivation(const GruGate& g, const Vector& x, const Vector& h) {
  return g.input * x + g.recurrent * h + g.bias;
}

}  // namespace

ImageEncoderParams init_image_encoder(Eigen::Index input_dim, Eigen::Index output_dim, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  ImageEncoderParams p;
  p.weight = uniform_matrix(input_dim, output_dim, bound, rng);
  p.bias = uniform_vector(output_dim, bound, rng);
  return p;
}

TextEncoderParams init_text_encoder(Eigen::Index vocab_size, Eigen::Index embed_dim, Eigen::Index hidden_dim,
                                    std::mt19937_64& rng) {
  TextEncoderParams p;
  p.embedding = uniform_matrix(vocab_size, embed_dim, 1.0 / std::sqrt(static_cast<double>(embed_dim)), rng);
  p.forward = init_gru(hidden_dim, embed_dim, rng);
  p.backward = init_gru(hidden_dim, embed_dim, rng);
  return p;
}

ImageEncoderParams zeros_like(const ImageEncoderParams& p) {
  return {Matrix::Zero(p.weight.rows(), p.weight.cols()), Vector::Zero(p.bias.size())};
}

GruParams zeros_like(const GruParams& p) {
  return {zeros_like(p.update), zeros_like(p.reset), zeros_like(p.candidate)};
}

TextEncoderParams zeros_like(const TextEncoderParams& p) {
  return {Matrix::Zero(p.embedding.rows(), p.embedding.cols()), zeros_like(p.forward), zeros_like(p.backward)};
}

void validate(const ImageEncoderParams& p) {
  if (p.bias.size() != p.weight.cols()) {
    throw Error(ErrorCategory::Shape, "image encoder: bias size " + std::to_string(p.bias.size()) +
                                          " does not match output dim " + std::to_string(p.weight.cols()));
  }
  ensure_finite(p.weight, "image encoder weight");
  ensure_finite(p.bias, "image encoder bias");
}

void validate(const GruParams& p) {
  const auto hidden = p.update.recurrent.rows();
  const auto embed = p.update.input.cols();
  validate_gate(p.update, hidden, embed, "update");
  validate_gate(p.reset, hidden, embed, "reset");
  validate_gate(p.candidate, hidden, embed, "candidate");
}

void validate(const TextEncoderParams& p) {
  validate(p.forward);
  validate(p.backward);
  if (p.forward.input_dim() != p.embed_dim() || p.backward.input_dim() != p.embed_dim() ||
      p.forward.hidden_dim() != p.backward.hidden_dim()) {
    throw Error(ErrorCategory::Shape, "text encoder: GRU blocks inconsistent with embedding dim");
  }
}

Matrix encode_image(const Matrix& regions, const ImageEncoderParams& params) {
  return encode_image_cached(regions, params).output;
}

ImageEncoding encode_image_cached(const Matrix& regions, const ImageEncoderParams& params) {
  if (regions.rows() < 1) throw Error(ErrorCategory::Data, "encode_image: no regions");
  if (regions.cols() != params.input_dim()) {
    throw Error(ErrorCategory::Shape, "encode_image: regions " + shape_string(regions) +
                                          " incompatible with weight " + shape_string(params.weight));
  }
  ImageEncoding enc;
  enc.projected = regions * params.weight;
  enc.projected.rowwise() += params.bias.transpose();
  enc.row_norms = enc.projected.rowwise().norm();
  enc.output = normalize_rows(enc.projected);
  return enc;
}

void encode_image_backward(const Matrix& regions, const ImageEncoding& enc, const Matrix& d_output,
                           ImageEncoderParams& grads) {
  require_same_shape(enc.output, d_output, "encode_image_backward");
  Matrix d_proj(d_output.rows(), d_output.cols());
  for (Eigen::Index i = 0; i < d_output.rows(); ++i) {
    const Vector y = enc.output.row(i).transpose();
    d_proj.row(i) = l2_normalize_backward(y, enc.row_norms[i], Vector(d_output.row(i).transpose())).transpose();
  }
  grads.weight.noalias() += regions.transpose() * d_proj;
  grads.bias += d_proj.colwise().sum().transpose();
}

Vector gru_step(const Vector& x, const Vector& h_prev, const GruParams& gates) {
  return gru_step_cached(x, h_prev, gates).h;
}

GruStepCache gru_step_cached(const Vector& x, const Vector& h_prev, const GruParams& gates) {
  if (x.size() != gates.input_dim() || h_prev.size() != gates.hidden_dim()) {
    throw Error(ErrorCategory::Shape, "gru_step: input " + std::to_string(x.size()) + " / state " +
                                          std::to_string(h_prev.size()) + " inconsistent with gates (" +
                                          std::to_string(gates.input_dim()) + ", " +
                                          std::to_string(gates.hidden_dim()) + ")");
  }
  GruStepCache c;
  c.x = x;
  c.h_prev = h_prev;
  c.update = gate_preactivation(gates.update, x, h_prev).unaryExpr([](double v) { return sigmoid(v); });
  c.reset = gate_preactivation(gates.reset, x, h_prev).unaryExpr([](double v) { return sigmoid(v); });
  const Vector gated = c.reset.cwiseProduct(h_prev);
  c.candidate = gate_preactivation(gates.candidate, x, gated).array().tanh();
  c.h = (1.0 - c.update.array()) * h_prev.array() + c.update.array() * c.candidate.array();
  return c;
}

GruStepGrad gru_step_backward(const GruStepCache& c, const Vector& dh, const GruParams& gates, GruParams& grads) {
  const Vector gated = c.reset.cwiseProduct(c.h_prev);

  const Vector d_update = dh.cwiseProduct(c.candidate - c.h_prev);
  const Vector d_candidate = dh.cwiseProduct(c.update);
  Vector dh_prev = dh.cwiseProduct((1.0 - c.update.array()).matrix());

  const Vector a_cand = d_candidate.array() * (1.0 - c.candidate.array().square());
  grads.candidate.input.noalias() += a_cand * c.x.transpose();
  grads.candidate.recurrent.noalias() += a_cand * gated.transpose();
  grads.candidate.bias += a_cand;
  const Vector d_gated = gates.candidate.recurrent.transpose() * a_cand;
  const Vector d_reset = d_gated.cwiseProduct(c.h_prev);
  dh_prev += d_gated.cwiseProduct(c.reset);

  const Vector a_update = d_update.array() * c.update.array() * (1.0 - c.update.array());
  grads.update.input.noalias() += a_update * c.x.transpose();
  grads.update.recurrent.noalias() += a_update * c.h_prev.transpose();
  grads.update.bias += a_update;

  const Vector a_reset = d_reset.array() * c.reset.array() * (1.0 - c.reset.array());
  grads.reset.input.noalias() += a_reset * c.x.transpose();
  grads.reset.recurrent.noalias() += a_reset * c.h_prev.transpose();
  grads.reset.bias += a_reset;

  GruStepGrad out;
  out.dx = gates.candidate.input.transpose() * a_cand + gates.update.input.transpose() * a_update +
           gates.reset.input.transpose() * a_reset;
  dh_prev.noalias() += gates.update.recurrent.transpose() * a_update;
  dh_prev.noalias() += gates.reset.recurrent.transpose() * a_reset;
  out.dh_prev = std::move(dh_prev);
  return out;
}

Matrix encode_text(const std::vector<int>& tokens, const TextEncoderParams& params) {
  return encode_text_cached(tokens, params).output;
}

TextEncoding encode_text_cached(const std::vector<int>& tokens, const TextEncoderParams& params) {
  if (tokens.empty()) throw Error(ErrorCategory::Data, "encode_text: empty token sequence");
  for (int t : tokens) {
    if (t < 0 || t >= params.vocab_size()) {
      throw Error(ErrorCategory::Data, "encode_text: token index " + std::to_string(t) + " outside vocabulary of " +
                                           std::to_string(params.vocab_size()));
    }
  }
  const auto s = static_cast<Eigen::Index>(tokens.size());
  const auto hidden = params.hidden_dim();
  TextEncoding enc;
  enc.tokens = tokens;
  enc.forward_steps.reserve(tokens.size());
  enc.backward_steps.resize(tokens.size());

  Vector h = Vector::Zero(hidden);
  for (Eigen::Index j = 0; j < s; ++j) {
    enc.forward_steps.push_back(gru_step_cached(params.embedding.row(tokens[j]).transpose(), h, params.forward));
    h = enc.forward_steps.back().h;
  }
  h.setZero();
  for (Eigen::Index j = s - 1; j >= 0; --j) {
    enc.backward_steps[j] = gru_step_cached(params.embedding.row(tokens[j]).transpose(), h, params.backward);
    h = enc.backward_steps[j].h;
  }

  enc.averaged.resize(s, hidden);
  for (Eigen::Index j = 0; j < s; ++j) {
    enc.averaged.row(j) = ((enc.forward_steps[j].h + enc.backward_steps[j].h) / 2.0).transpose();
  }
  enc.row_norms = enc.averaged.rowwise().norm();
  enc.output = normalize_rows(enc.averaged);
  return enc;
}

void encode_text_backward(const TextEncoding& enc, const Matrix& d_output, const TextEncoderParams& params,
                          TextEncoderParams& grads) {
  require_same_shape(enc.output, d_output, "encode_text_backward");
  const auto s = static_cast<Eigen::Index>(enc.tokens.size());
  Matrix d_avg(s, d_output.cols());
  for (Eigen::Index j = 0; j < s; ++j) {
    const Vector y = enc.output.row(j).transpose();
    d_avg.row(j) = l2_normalize_backward(y, enc.row_norms[j], Vector(d_output.row(j).transpose())).transpose();
  }
  d_avg /= 2.0;

  Vector carry = Vector::Zero(params.hidden_dim());
  for (Eigen::Index j = s - 1; j >= 0; --j) {
    const Vector dh = d_avg.row(j).transpose() + carry;
    auto g = gru_step_backward(enc.forward_steps[j], dh, params.forward, grads.forward);
    grads.embedding.row(enc.tokens[j]) += g.dx.transpose();
    carry = std::move(g.dh_prev);
  }
  carry.setZero();
  for (Eigen::Index j = 0; j < s; ++j) {
    const Vector dh = d_avg.row(j).transpose() + carry;
    auto g = gru_step_backward(enc.backward_steps[j], dh, params.backward, grads.backward);
    grads.embedding.row(enc.tokens[j]) += g.dx.transpose();
    carry = std::move(g.dh_prev);
  }
}

}  // namespace amsps
