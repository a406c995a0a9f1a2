#pragma once

#include "t2v/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

namespace t2v {

template <typename Scalar> class Tape;

/// Handle to a value recorded on a Tape.
template <typename Scalar> struct Var
{
  Tape<Scalar> *tape = nullptr;
  int id = -1;

  Tensor<Scalar> const &value() const { return tape->value(id); }
  Shape const &shape() const { return tape->value(id).shape(); }
  bool requires_grad() const { return tape->requires_grad(id); }
};

/// Reverse-mode tape. Operations append nodes in execution order, so the node
/// list is already topologically sorted; backward() walks it in reverse.
///
/// With recording disabled no backward closures or saved activations are kept,
/// which is the mode used for sampling.
template <typename Scalar> class Tape
{
public:
  using Backward = std::function<void(Tape &, int self)>;

  explicit Tape(bool recording = true)
    : recording_(recording)
  {
  }
  Tape(Tape const &) = delete;
  Tape &operator=(Tape const &) = delete;

  bool recording() const { return recording_; }

  Var<Scalar> leaf(Tensor<Scalar> value, bool requires_grad = false)
  {
    nodes_.push_back(Node{std::move(value), {}, requires_grad && recording_, {}});
    return Var<Scalar>{this, static_cast<int>(nodes_.size()) - 1};
  }

  /// Appends an op result. `inputs_need_grad` decides whether the closure is kept.
  Var<Scalar> push(Tensor<Scalar> value, bool inputs_need_grad, Backward backward)
  {
    bool const track = recording_ && inputs_need_grad;
    nodes_.push_back(Node{std::move(value), {}, track, track ? std::move(backward) : Backward{}});
    return Var<Scalar>{this, static_cast<int>(nodes_.size()) - 1};
  }

  Tensor<Scalar> const &value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  bool has_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad.size() > 0; }

  /// Gradient slot, zero-allocated on first access.
  Tensor<Scalar> &grad(int id)
  {
    Node &node = nodes_[static_cast<std::size_t>(id)];
    if (node.grad.size() == 0) { node.grad = Tensor<Scalar>(node.value.shape()); }
    return node.grad;
  }
  Tensor<Scalar> grad_or_zero(int id) const
  {
    Node const &node = nodes_[static_cast<std::size_t>(id)];
    return node.grad.size() ? node.grad : Tensor<Scalar>(node.value.shape());
  }

  std::size_t size() const { return nodes_.size(); }

  void backward(Var<Scalar> loss)
  {
    if (loss.value().size() != 1) { throw ShapeError("backward: loss must be a scalar, got " + loss.shape().str()); }
    grad(loss.id).data().setOnes();
    for (int id = loss.id; id >= 0; --id) {
      Node &node = nodes_[static_cast<std::size_t>(id)];
      if (!node.requires_grad || !node.backward || node.grad.size() == 0) { continue; }
      node.backward(*this, id);
    }
  }

private:
  struct Node
  {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool requires_grad = false;
    Backward backward;
  };

  bool recording_;
  std::vector<Node> nodes_;
};

namespace detail {

template <typename Scalar> void check_same(Var<Scalar> a, Var<Scalar> b, char const *what)
{
  if (a.tape != b.tape) { throw Error(std::string(what) + ": operands live on different tapes"); }
  require_same_shape(a.value(), b.value(), what);
}

template <typename Scalar> void accumulate(Tape<Scalar> &tape, Var<Scalar> v, typename Tensor<Scalar>::Array const &g)
{
  if (v.requires_grad()) { tape.grad(v.id).data() += g; }
}

template <typename Scalar> Scalar sigmoid(Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); }

} // namespace detail

template <typename Scalar> Var<Scalar> add(Var<Scalar> a, Var<Scalar> b)
{
  detail::check_same(a, b, "add");
  Tensor<Scalar> out(a.shape(), a.value().data() + b.value().data());
  return a.tape->push(std::move(out), a.requires_grad() || b.requires_grad(), [a, b](Tape<Scalar> &t, int self) {
    auto const &g = t.grad(self).data();
    detail::accumulate(t, a, g);
    detail::accumulate(t, b, g);
  });
}

template <typename Scalar> Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) { return add(a, b); }

template <typename Scalar> Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b)
{
  detail::check_same(a, b, "mul");
  Tensor<Scalar> out(a.shape(), a.value().data() * b.value().data());
  return a.tape->push(std::move(out), a.requires_grad() || b.requires_grad(), [a, b](Tape<Scalar> &t, int self) {
    auto const g = t.grad(self).data();
    if (a.requires_grad()) { t.grad(a.id).data() += g * b.value().data(); }
    if (b.requires_grad()) { t.grad(b.id).data() += g * a.value().data(); }
  });
}

template <typename Scalar> Var<Scalar> operator*(Var<Scalar> a, Var<Scalar> b) { return mul(a, b); }

template <typename Scalar> Var<Scalar> scale(Var<Scalar> a, Scalar s)
{
  Tensor<Scalar> out(a.shape(), a.value().data() * s);
  return a.tape->push(std::move(out), a.requires_grad(), [a, s](Tape<Scalar> &t, int self) {
    t.grad(a.id).data() += t.grad(self).data() * s;
  });
}

template <typename Scalar> Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) { return add(a, scale(b, Scalar(-1))); }

/// x * sigmoid(x)
template <typename Scalar> Var<Scalar> silu(Var<Scalar> a)
{
  auto const &x = a.value().data();
  Tensor<Scalar> out(a.shape(), x * x.unaryExpr(&detail::sigmoid<Scalar>));
  return a.tape->push(std::move(out), a.requires_grad(), [a](Tape<Scalar> &t, int self) {
    auto const &x = a.value().data();
    typename Tensor<Scalar>::Array const s = x.unaryExpr(&detail::sigmoid<Scalar>);
    t.grad(a.id).data() += t.grad(self).data() * (s * (Scalar(1) + x * (Scalar(1) - s)));
  });
}

/// Sum of all elements, as a [1,1,1,1] tensor.
template <typename Scalar> Var<Scalar> sum(Var<Scalar> a)
{
  Tensor<Scalar> out = Tensor<Scalar>::constant(Shape{}, a.value().data().sum());
  return a.tape->push(std::move(out), a.requires_grad(), [a](Tape<Scalar> &t, int self) {
    t.grad(a.id).data() += t.grad(self)[0];
  });
}

/// Mean of squared differences over every element.
template <typename Scalar> Var<Scalar> mse_loss(Var<Scalar> pred, Var<Scalar> target)
{
  detail::check_same(pred, target, "mse_loss");
  auto const n = static_cast<Scalar>(pred.value().size());
  Scalar const loss = (pred.value().data() - target.value().data()).square().sum() / n;
  return pred.tape->push(Tensor<Scalar>::constant(Shape{}, loss), pred.requires_grad() || target.requires_grad(),
    [pred, target, n](Tape<Scalar> &t, int self) {
      Scalar const g = t.grad(self)[0];
      typename Tensor<Scalar>::Array const d = (pred.value().data() - target.value().data()) * (Scalar(2) * g / n);
      if (pred.requires_grad()) { t.grad(pred.id).data() += d; }
      if (target.requires_grad()) { t.grad(target.id).data() -= d; }
    });
}

/// Concatenates along the channel axis.
template <typename Scalar> Var<Scalar> concat_channels(Var<Scalar> a, Var<Scalar> b)
{
  Shape const sa = a.shape();
  Shape const sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: incompatible " + sa.str() + " and " + sb.str());
  }
  Shape const so{sa.n, sa.c + sb.c, sa.h, sa.w};
  Tensor<Scalar> out(so);
  Eigen::Index const la = a.value().per_sample();
  Eigen::Index const lb = b.value().per_sample();
  for (int n = 0; n < so.n; ++n) {
    out.sample_block(n).head(la) = a.value().sample_block(n);
    out.sample_block(n).tail(lb) = b.value().sample_block(n);
  }
  return a.tape->push(std::move(out), a.requires_grad() || b.requires_grad(), [a, b, la, lb](Tape<Scalar> &t, int self) {
    auto const &g = t.grad(self);
    for (int n = 0; n < g.shape().n; ++n) {
      if (a.requires_grad()) { t.grad(a.id).sample_block(n) += g.sample_block(n).head(la); }
      if (b.requires_grad()) { t.grad(b.id).sample_block(n) += g.sample_block(n).tail(lb); }
    }
  });
}

/// Adds a per-sample, per-channel offset: x[B,C,H,W] + bias[B,C].
template <typename Scalar> Var<Scalar> add_channel_bias(Var<Scalar> x, Var<Scalar> bias)
{
  Shape const s = x.shape();
  Shape const sb = bias.shape();
  if (sb.n != s.n || sb.c != s.c || sb.h != 1 || sb.w != 1) {
    throw ShapeError("add_channel_bias: bias " + sb.str() + " does not match " + s.str());
  }
  Tensor<Scalar> out = x.value();
  Eigen::Index const hw = s.pixels();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) { out.data().segment((Eigen::Index(n) * s.c + c) * hw, hw) += bias.value()[n * s.c + c]; }
  }
  return x.tape->push(std::move(out), x.requires_grad() || bias.requires_grad(), [x, bias, hw](Tape<Scalar> &t, int self) {
    auto const &g = t.grad(self);
    if (x.requires_grad()) { t.grad(x.id).data() += g.data(); }
    if (bias.requires_grad()) {
      auto &gb = t.grad(bias.id);
      for (Eigen::Index i = 0; i < gb.size(); ++i) { gb[i] += g.data().segment(i * hw, hw).sum(); }
    }
  });
}

/// Fully connected layer: x[B,In] * weight[Out,In]^T + bias[Out].
template <typename Scalar> Var<Scalar> linear(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias)
{
  using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  int const batch = x.shape().n;
  int const in = static_cast<int>(x.value().per_sample());
  int const out_dim = weight.shape().n;
  if (weight.value().per_sample() != in || bias.value().size() != out_dim) {
    throw ShapeError("linear: weight " + weight.shape().str() + " incompatible with input " + x.shape().str());
  }
  Tensor<Scalar> out(Shape{batch, out_dim, 1, 1});
  Eigen::Map<RowMat const> X(x.value().ptr(), batch, in);
  Eigen::Map<RowMat const> W(weight.value().ptr(), out_dim, in);
  Eigen::Map<Vec const> b(bias.value().ptr(), out_dim);
  Eigen::Map<RowMat> Y(out.ptr(), batch, out_dim);
  Y.noalias() = X * W.transpose();
  Y.rowwise() += b.transpose();
  bool const need = x.requires_grad() || weight.requires_grad() || bias.requires_grad();
  return x.tape->push(std::move(out), need, [x, weight, bias, batch, in, out_dim](Tape<Scalar> &t, int self) {
    Eigen::Map<RowMat const> G(t.grad(self).ptr(), batch, out_dim);
    if (x.requires_grad()) {
      Eigen::Map<RowMat> GX(t.grad(x.id).ptr(), batch, in);
      Eigen::Map<RowMat const> W(weight.value().ptr(), out_dim, in);
      GX.noalias() += G * W;
    }
    if (weight.requires_grad()) {
      Eigen::Map<RowMat> GW(t.grad(weight.id).ptr(), out_dim, in);
      Eigen::Map<RowMat const> X(x.value().ptr(), batch, in);
      GW.noalias() += G.transpose() * X;
    }
    if (bias.requires_grad()) {
      Eigen::Map<Vec> GB(t.grad(bias.id).ptr(), out_dim);
      GB += G.colwise().sum().transpose();
    }
  });
}

/// 2-D cross-correlation, input [B,Cin,H,W], kernel [Cout,Cin,k,k], bias [Cout].
///
/// Lowered to one GEMM per sample over an im2col buffer; 1x1 unit-stride
/// kernels skip the buffer and multiply the input directly.
template <typename Scalar> Var<Scalar> conv2d(Var<Scalar> input, Var<Scalar> kernel, Var<Scalar> bias, int stride = 1, int padding = 0)
{
  using ColMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Shape const si = input.shape();
  Shape const sk = kernel.shape();
  if (sk.c != si.c || sk.h != sk.w) {
    throw ShapeError("conv2d: kernel " + sk.str() + " incompatible with input " + si.str());
  }
  if (bias.value().size() != sk.n) { throw ShapeError("conv2d: bias length must equal output channels"); }
  if (stride < 1 || padding < 0) { throw ShapeError("conv2d: invalid stride/padding"); }
  int const k = sk.h;
  int const cin = si.c;
  int const cout = sk.n;
  int const ho = (si.h + 2 * padding - k) / stride + 1;
  int const wo = (si.w + 2 * padding - k) / stride + 1;
  if (ho < 1 || wo < 1) { throw ShapeError("conv2d: kernel larger than padded input"); }
  Eigen::Index const rows = Eigen::Index(cin) * k * k;
  Eigen::Index const pout = Eigen::Index(ho) * wo;
  Eigen::Index const pin = si.pixels();
  bool const pointwise = (k == 1 && stride == 1 && padding == 0);

  // cols(r, b * pout + p) with r = (ci * k + ky) * k + kx
  auto columns = std::make_shared<ColMat>();
  if (!pointwise) {
    columns->setZero(rows, Eigen::Index(si.n) * pout);
    Scalar const *src = input.value().ptr();
    for (int b = 0; b < si.n; ++b) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          Scalar *col = columns->data() + (Eigen::Index(b) * pout + Eigen::Index(oy) * wo + ox) * rows;
          for (int ci = 0; ci < cin; ++ci) {
            Scalar const *plane = src + (Eigen::Index(b) * cin + ci) * pin;
            for (int ky = 0; ky < k; ++ky) {
              int const iy = oy * stride - padding + ky;
              if (iy < 0 || iy >= si.h) {
                col += k;
                continue;
              }
              for (int kx = 0; kx < k; ++kx, ++col) {
                int const ix = ox * stride - padding + kx;
                if (ix >= 0 && ix < si.w) { *col = plane[Eigen::Index(iy) * si.w + ix]; }
              }
            }
          }
        }
      }
    }
  }

  Tensor<Scalar> out(Shape{si.n, cout, ho, wo});
  Eigen::Map<RowMat const> W(kernel.value().ptr(), cout, rows);
  Eigen::Map<Vec const> bvec(bias.value().ptr(), cout);
  for (int b = 0; b < si.n; ++b) {
    Eigen::Map<ColMat> Y(out.ptr() + Eigen::Index(b) * cout * pout, pout, cout);
    if (pointwise) {
      Eigen::Map<ColMat const> X(input.value().ptr() + Eigen::Index(b) * cin * pin, pin, cin);
      Y.noalias() = X * W.transpose();
    } else {
      Y.noalias() = columns->middleCols(Eigen::Index(b) * pout, pout).transpose() * W.transpose();
    }
    Y.rowwise() += bvec.transpose();
  }

  bool const need = input.requires_grad() || kernel.requires_grad() || bias.requires_grad();
  if (!need || !input.tape->recording()) { columns.reset(); }
  return input.tape->push(std::move(out), need,
    [=](Tape<Scalar> &t, int self) {
      Tensor<Scalar> const &g = t.grad(self);
      Eigen::Map<RowMat const> W(kernel.value().ptr(), cout, rows);
      ColMat dcols;
      for (int b = 0; b < si.n; ++b) {
        Eigen::Map<ColMat const> G(g.ptr() + Eigen::Index(b) * cout * pout, pout, cout);
        if (bias.requires_grad()) {
          Eigen::Map<Vec> GB(t.grad(bias.id).ptr(), cout);
          GB += G.colwise().sum().transpose();
        }
        if (kernel.requires_grad()) {
          Eigen::Map<RowMat> GW(t.grad(kernel.id).ptr(), cout, rows);
          if (pointwise) {
            Eigen::Map<ColMat const> X(input.value().ptr() + Eigen::Index(b) * cin * pin, pin, cin);
            GW.noalias() += G.transpose() * X;
          } else {
            GW.noalias() += G.transpose() * columns->middleCols(Eigen::Index(b) * pout, pout).transpose();
          }
        }
        if (!input.requires_grad()) { continue; }
        Scalar *dst = t.grad(input.id).ptr() + Eigen::Index(b) * cin * pin;
        if (pointwise) {
          Eigen::Map<ColMat> GX(dst, pin, cin);
          GX.noalias() += G * W;
          continue;
        }
        dcols.noalias() = W.transpose() * G.transpose();
        for (int oy = 0; oy < ho; ++oy) {
          for (int ox = 0; ox < wo; ++ox) {
            Scalar const *col = dcols.data() + (Eigen::Index(oy) * wo + ox) * rows;
            for (int ci = 0; ci < cin; ++ci) {
              Scalar *plane = dst + Eigen::Index(ci) * pin;
              for (int ky = 0; ky < k; ++ky) {
                int const iy = oy * stride - padding + ky;
                if (iy < 0 || iy >= si.h) {
                  col += k;
                  continue;
                }
                for (int kx = 0; kx < k; ++kx, ++col) {
                  int const ix = ox * stride - padding + kx;
                  if (ix >= 0 && ix < si.w) { plane[Eigen::Index(iy) * si.w + ix] += *col; }
                }
              }
            }
          }
        }
      }
    });
}

/// Normalizes each (sample, channel group) to zero mean and unit variance, then
/// applies per-channel scale and shift.
template <typename Scalar>
Var<Scalar> group_normalize(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, int groups, Scalar eps = Scalar(1e-6))
{
  using Array = typename Tensor<Scalar>::Array;
  Shape const s = x.shape();
  if (groups < 1 || s.c % groups != 0) {
    throw ShapeError("group_normalize: " + std::to_string(s.c) + " channels not divisible into " + std::to_string(groups) + " groups");
  }
  if (gamma.value().size() != s.c || beta.value().size() != s.c) {
    throw ShapeError("group_normalize: scale/shift length must equal channel count");
  }
  Eigen::Index const hw = s.pixels();
  Eigen::Index const group_len = Eigen::Index(s.c / groups) * hw;
  int const count = s.n * groups;

  auto normalized = std::make_shared<Array>(x.value().size());
  auto inv_std = std::make_shared<Array>(count);
  Tensor<Scalar> out(s);
  for (int i = 0; i < count; ++i) {
    auto const seg = x.value().data().segment(Eigen::Index(i) * group_len, group_len);
    Scalar const mean = seg.mean();
    Scalar const var = (seg - mean).square().mean();
    Scalar const inv = Scalar(1) / std::sqrt(var + eps);
    (*inv_std)[i] = inv;
    normalized->segment(Eigen::Index(i) * group_len, group_len) = (seg - mean) * inv;
  }
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      Eigen::Index const at = (Eigen::Index(n) * s.c + c) * hw;
      out.data().segment(at, hw) = normalized->segment(at, hw) * gamma.value()[c] + beta.value()[c];
    }
  }
  bool const need = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  return x.tape->push(std::move(out), need, [=](Tape<Scalar> &t, int self) {
    Array const &g = t.grad(self).data();
    Array dnorm(g.size());
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        Eigen::Index const at = (Eigen::Index(n) * s.c + c) * hw;
        auto const gs = g.segment(at, hw);
        if (gamma.requires_grad()) { t.grad(gamma.id)[c] += (gs * normalized->segment(at, hw)).sum(); }
        if (beta.requires_grad()) { t.grad(beta.id)[c] += gs.sum(); }
        dnorm.segment(at, hw) = gs * gamma.value()[c];
      }
    }
    if (!x.requires_grad()) { return; }
    Array &gx = t.grad(x.id).data();
    for (int i = 0; i < count; ++i) {
      Eigen::Index const at = Eigen::Index(i) * group_len;
      auto const dn = dnorm.segment(at, group_len);
      auto const xn = normalized->segment(at, group_len);
      Scalar const mean_dn = dn.mean();
      Scalar const mean_dn_xn = (dn * xn).mean();
      gx.segment(at, group_len) += (dn - mean_dn - xn * mean_dn_xn) * (*inv_std)[i];
    }
  });
}

/// Nearest-neighbour upsampling by an integer factor.
template <typename Scalar> Var<Scalar> nearest_upsample(Var<Scalar> x, int factor = 2)
{
  Shape const s = x.shape();
  Shape const so{s.n, s.c, s.h * factor, s.w * factor};
  Tensor<Scalar> out(so);
  Tensor<Scalar> const &in = x.value();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < so.h; ++y)
        for (int xx = 0; xx < so.w; ++xx) out(n, c, y, xx) = in(n, c, y / factor, xx / factor);
  return x.tape->push(std::move(out), x.requires_grad(), [x, s, so, factor](Tape<Scalar> &t, int self) {
    Tensor<Scalar> const &g = t.grad(self);
    Tensor<Scalar> &gx = t.grad(x.id);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < so.h; ++y)
          for (int xx = 0; xx < so.w; ++xx) gx(n, c, y / factor, xx / factor) += g(n, c, y, xx);
  });
}

/// Mean pooling over non-overlapping factor x factor blocks.
template <typename Scalar> Var<Scalar> average_downsample(Var<Scalar> x, int factor = 2)
{
  Shape const s = x.shape();
  if (s.h % factor != 0 || s.w % factor != 0) {
    throw ShapeError("average_downsample: " + s.str() + " not divisible by " + std::to_string(factor));
  }
  Shape const so{s.n, s.c, s.h / factor, s.w / factor};
  Scalar const w = Scalar(1) / Scalar(factor * factor);
  Tensor<Scalar> out(so);
  Tensor<Scalar> const &in = x.value();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int xx = 0; xx < s.w; ++xx) out(n, c, y / factor, xx / factor) += in(n, c, y, xx) * w;
  return x.tape->push(std::move(out), x.requires_grad(), [x, s, factor, w](Tape<Scalar> &t, int self) {
    Tensor<Scalar> const &g = t.grad(self);
    Tensor<Scalar> &gx = t.grad(x.id);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y)
          for (int xx = 0; xx < s.w; ++xx) gx(n, c, y, xx) += g(n, c, y / factor, xx / factor) * w;
  });
}

} // namespace t2v
