#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "spannorm/config.hpp"
#include "spannorm/tensor.hpp"

namespace spannorm {

template <typename Scalar>
struct BasicNormParams {
  VectorX<Scalar> gain;
  VectorX<Scalar> bias;

  static BasicNormParams unit(Index size) {
    return BasicNormParams{VectorX<Scalar>::Ones(size), VectorX<Scalar>::Zero(size)};
  }
  bool empty() const { return gain.size() == 0; }
};

/// Weights of one block. Projections act on row vectors (x * W). Norms that a
/// wiring does not use stay empty.
template <typename Scalar>
struct BasicBlockParams {
  MatrixX<Scalar> wq, wk, wv, wo;  // d x d
  MatrixX<Scalar> w1;              // d x f
  MatrixX<Scalar> w2;              // f x d
  BasicNormParams<Scalar> ln1, ln2;
  BasicNormParams<Scalar> ln_embed;                 // SpanNorm layer 1: LN(E) on the MHA input path
  BasicNormParams<Scalar> ln_q, ln_k, ln_v;         // HybridNorm QKV-Norm over the head dimension
  BasicNormParams<Scalar> ln_attn_out, ln_ffn_out;  // Peri-LN output norms
};

template <typename Scalar>
struct BasicModelParams {
  MatrixX<Scalar> tok_emb;  // vocab x d, tied with the output head
  MatrixX<Scalar> pos_emb;  // seq x d
  std::vector<BasicBlockParams<Scalar>> blocks;
  BasicNormParams<Scalar> final_ln;
};

using NormParams = BasicNormParams<double>;
using BlockParams = BasicBlockParams<double>;
using ModelParams = BasicModelParams<double>;

enum class ParamKind { Weight, Norm, Embedding };

/// Flat view of one parameter tensor. Storage is contiguous so optimizers and
/// finite differences can walk `data[0..size)`.
template <typename T>
struct BasicParamView {
  std::string name;
  T* data;
  Index size;
  ParamKind kind;
};

using ParamView = BasicParamView<double>;
using ConstParamView = BasicParamView<const double>;

/// Applies `fn(name, tensor, kind)` to every non-empty tensor of a block in
/// manifest order. Works for const and non-const params and for tuples of
/// identically shaped structures via the lambda's captures.
template <typename Block, typename Fn>
void for_each_tensor(Block& b, const std::string& prefix, Fn&& fn) {
  auto norm = [&](const std::string& name, auto& n) {
    fn(prefix + name + ".gain", n.gain, ParamKind::Norm);
    fn(prefix + name + ".bias", n.bias, ParamKind::Norm);
  };
  fn(prefix + "wq", b.wq, ParamKind::Weight);
  fn(prefix + "wk", b.wk, ParamKind::Weight);
  fn(prefix + "wv", b.wv, ParamKind::Weight);
  fn(prefix + "wo", b.wo, ParamKind::Weight);
  fn(prefix + "w1", b.w1, ParamKind::Weight);
  fn(prefix + "w2", b.w2, ParamKind::Weight);
  norm("ln1", b.ln1);
  norm("ln2", b.ln2);
  norm("ln_embed", b.ln_embed);
  norm("ln_q", b.ln_q);
  norm("ln_k", b.ln_k);
  norm("ln_v", b.ln_v);
  norm("ln_attn_out", b.ln_attn_out);
  norm("ln_ffn_out", b.ln_ffn_out);
}

template <typename Model, typename Fn>
void for_each_tensor(Model& p, Fn&& fn) {
  fn(std::string("tok_emb"), p.tok_emb, ParamKind::Embedding);
  fn(std::string("pos_emb"), p.pos_emb, ParamKind::Embedding);
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    for_each_tensor(p.blocks[l], "block" + std::to_string(l + 1) + ".", fn);
  }
  fn(std::string("final_ln.gain"), p.final_ln.gain, ParamKind::Norm);
  fn(std::string("final_ln.bias"), p.final_ln.bias, ParamKind::Norm);
}

/// Every non-empty parameter in a fixed manifest order.
template <typename Scalar>
std::vector<BasicParamView<Scalar>> param_views(BasicModelParams<Scalar>& params) {
  std::vector<BasicParamView<Scalar>> out;
  for_each_tensor(params, [&out](const std::string& name, auto& t, ParamKind kind) {
    if (t.size() > 0) out.push_back({name, t.data(), t.size(), kind});
  });
  return out;
}

template <typename Scalar>
std::vector<BasicParamView<const Scalar>> param_views(const BasicModelParams<Scalar>& params) {
  std::vector<BasicParamView<const Scalar>> out;
  for_each_tensor(params, [&out](const std::string& name, const auto& t, ParamKind kind) {
    if (t.size() > 0) out.push_back({name, t.data(), t.size(), kind});
  });
  return out;
}

template <typename Scalar>
Index parameter_count(const BasicModelParams<Scalar>& params) {
  Index n = 0;
  for (const auto& v : param_views(params)) n += v.size;
  return n;
}

template <typename Scalar>
VectorX<Scalar> flatten(const BasicModelParams<Scalar>& params) {
  VectorX<Scalar> out(parameter_count(params));
  Index offset = 0;
  for (const auto& v : param_views(params)) {
    std::copy_n(v.data, v.size, out.data() + offset);
    offset += v.size;
  }
  return out;
}

template <typename Scalar>
void unflatten(const VectorX<Scalar>& values, BasicModelParams<Scalar>& params) {
  if (values.size() != parameter_count(params)) {
    throw DimensionError("unflatten: " + std::to_string(values.size()) + " values for " +
                         std::to_string(parameter_count(params)) + " parameters");
  }
  Index offset = 0;
  for (auto& v : param_views(params)) {
    std::copy_n(values.data() + offset, v.size, v.data);
    offset += v.size;
  }
}

template <typename To, typename From>
BasicBlockParams<To> cast_block(const BasicBlockParams<From>& b) {
  auto n = [](const BasicNormParams<From>& x) {
    return BasicNormParams<To>{x.gain.template cast<To>(), x.bias.template cast<To>()};
  };
  return BasicBlockParams<To>{b.wq.template cast<To>(), b.wk.template cast<To>(),
                              b.wv.template cast<To>(), b.wo.template cast<To>(),
                              b.w1.template cast<To>(), b.w2.template cast<To>(),
                              n(b.ln1), n(b.ln2), n(b.ln_embed), n(b.ln_q), n(b.ln_k), n(b.ln_v),
                              n(b.ln_attn_out), n(b.ln_ffn_out)};
}

template <typename To, typename From>
BasicModelParams<To> cast_params(const BasicModelParams<From>& p) {
  BasicModelParams<To> out;
  out.tok_emb = p.tok_emb.template cast<To>();
  out.pos_emb = p.pos_emb.template cast<To>();
  for (const auto& b : p.blocks) out.blocks.push_back(cast_block<To>(b));
  out.final_ln = {p.final_ln.gain.template cast<To>(), p.final_ln.bias.template cast<To>()};
  return out;
}

template <typename Scalar>
BasicModelParams<Scalar> zeros_like(const BasicModelParams<Scalar>& params) {
  BasicModelParams<Scalar> z = params;
  for_each_tensor(z, [](const std::string&, auto& t, ParamKind) { t.setZero(); });
  return z;
}

template <typename Scalar>
BasicBlockParams<Scalar> zeros_like(const BasicBlockParams<Scalar>& params) {
  BasicBlockParams<Scalar> z = params;
  for_each_tensor(z, "", [](const std::string&, auto& t, ParamKind) { t.setZero(); });
  return z;
}

ModelParams init_model(const ModelConfig& config);

// Sum of squares over every parameter.
double squared_norm(const ModelParams& params);

}  // namespace spannorm
