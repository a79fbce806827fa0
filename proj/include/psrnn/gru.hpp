#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "psrnn/tensor.hpp"

namespace psrnn {

enum class GateActivation { Sigmoid, Tanh };

inline const char* to_string(GateActivation g) { return g == GateActivation::Sigmoid ? "sigmoid" : "tanh"; }

/// Weights of one gated recurrent cell:
///   z = g(Wz x + Uz h)          update gate
///   r = g(Wr x + Ur h)          reset gate
///   h' = z * h + (1 - z) * tanh(W x + U (r * h) + b)
template <class T>
struct GruParams {
  BasicTensor<T> Wz, Uz, Wr, Ur, W, U, b;

  GruParams() = default;

  GruParams(std::size_t input_dim, std::size_t hidden)
      : Wz(Shape{hidden, input_dim}),
        Uz(Shape{hidden, hidden}),
        Wr(Shape{hidden, input_dim}),
        Ur(Shape{hidden, hidden}),
        W(Shape{hidden, input_dim}),
        U(Shape{hidden, hidden}),
        b(Shape{hidden}) {}

  std::size_t input_dim() const { return Wz.dim(1); }
  std::size_t hidden() const { return Wz.dim(0); }

  void validate() const {
    const std::size_t h = hidden(), in = input_dim();
    const Shape wi{h, in}, uh{h, h};
    if (!(Wz.shape() == wi && Wr.shape() == wi && W.shape() == wi))
      throw ShapeError("GruParams: input matrices must share shape " + wi.str());
    if (!(Uz.shape() == uh && Ur.shape() == uh && U.shape() == uh))
      throw ShapeError("GruParams: recurrent matrices must share shape " + uh.str());
    if (!(b.shape() == Shape{h})) throw ShapeError("GruParams: bias must have hidden entries");
  }

  template <class F>
  void for_each(F&& f) {
    f("Wz", Wz), f("Uz", Uz), f("Wr", Wr), f("Ur", Ur), f("W", W), f("U", U), f("b", b);
  }
  template <class F>
  void for_each(F&& f) const {
    f("Wz", Wz), f("Uz", Uz), f("Wr", Wr), f("Ur", Ur), f("W", W), f("U", U), f("b", b);
  }
};

/// One recorded time step. Tensors are (batch, dim), or (dim) when the step was
/// computed from unbatched vectors.
template <class T>
struct GruStep {
  BasicTensor<T> x, h_prev, z, r, candidate, h;
};

template <class T>
struct GruGrads {
  GruParams<T> params;
  BasicTensor<T> h0;
  std::vector<BasicTensor<T>> x;
};

namespace detail {

struct GruMats {
  DMat Wz, Uz, Wr, Ur, W, U;
  Eigen::RowVectorXd b;
  GateActivation gate;

  template <class T>
  GruMats(const GruParams<T>& p, GateActivation g)
      : Wz(to_dmat(p.Wz)), Uz(to_dmat(p.Uz)), Wr(to_dmat(p.Wr)), Ur(to_dmat(p.Ur)), W(to_dmat(p.W)),
        U(to_dmat(p.U)), b(to_dmat(p.b.data(), 1, p.b.size())), gate(g) {}
};

inline double gate_value(GateActivation g, double a) { return g == GateActivation::Sigmoid ? sigmoid(a) : std::tanh(a); }
inline double gate_slope(GateActivation g, double s) { return g == GateActivation::Sigmoid ? s * (1.0 - s) : 1.0 - s * s; }

template <class T>
DMat as_rows(const BasicTensor<T>& t) {
  return t.rank() == 1 ? to_dmat(t.data(), 1, t.size()) : to_dmat(t);
}

template <class T>
BasicTensor<T> like(const DMat& m, bool vector) {
  return vector ? from_dmat<T>(m, Shape{static_cast<std::size_t>(m.cols())}) : from_dmat<T>(m);
}

template <class T>
GruStep<T> gru_step(const GruMats& m, const BasicTensor<T>& x, const BasicTensor<T>& h_prev) {
  const bool vec = x.rank() == 1;
  if ((x.rank() != 1 && x.rank() != 2) || h_prev.rank() != x.rank())
    throw ShapeError("gru_forward: x and h_prev must both be rank 1 or both rank 2");
  const DMat X = as_rows(x), H = as_rows(h_prev);
  if (X.cols() != m.Wz.cols() || H.cols() != m.Wz.rows() || X.rows() != H.rows())
    throw ShapeError("gru_forward: dimensions " + x.shape().str() + ", " + h_prev.shape().str() +
                     " inconsistent with params");

  DMat z = X * m.Wz.transpose() + H * m.Uz.transpose();
  DMat r = X * m.Wr.transpose() + H * m.Ur.transpose();
  z = z.unaryExpr([g = m.gate](double a) { return gate_value(g, a); });
  r = r.unaryExpr([g = m.gate](double a) { return gate_value(g, a); });
  const DMat rh = r.cwiseProduct(H);
  DMat c = X * m.W.transpose() + rh * m.U.transpose();
  c.rowwise() += m.b;
  c = c.array().tanh().matrix();
  const DMat h = z.cwiseProduct(H) + (DMat::Ones(z.rows(), z.cols()) - z).cwiseProduct(c);

  return {x, h_prev, like<T>(z, vec), like<T>(r, vec), like<T>(c, vec), like<T>(h, vec)};
}

}  // namespace detail

template <class T>
GruStep<T> gru_forward(const GruParams<T>& params, const BasicTensor<T>& x_t, const BasicTensor<T>& h_prev,
                       GateActivation gate = GateActivation::Sigmoid) {
  params.validate();
  return detail::gru_step(detail::GruMats(params, gate), x_t, h_prev);
}

/// Runs the cell over a whole sequence starting from h0.
template <class T>
std::vector<GruStep<T>> gru_sequence_forward(const GruParams<T>& params, std::span<const BasicTensor<T>> xs,
                                             const BasicTensor<T>& h0,
                                             GateActivation gate = GateActivation::Sigmoid) {
  params.validate();
  const detail::GruMats m(params, gate);
  std::vector<GruStep<T>> steps;
  steps.reserve(xs.size());
  const BasicTensor<T>* h = &h0;
  for (const auto& x : xs) {
    steps.push_back(detail::gru_step(m, x, *h));
    h = &steps.back().h;
  }
  return steps;
}

/// Backpropagation through time over recorded steps. `grads_h_per_step` holds
/// the loss gradient arriving directly at each step's output (may be empty);
/// `grad_h_final` is added on top of the last step's.
template <class T>
GruGrads<T> gru_backward(std::span<const GruStep<T>> steps, const GruParams<T>& params,
                         const BasicTensor<T>& grad_h_final, std::span<const BasicTensor<T>> grads_h_per_step,
                         GateActivation gate = GateActivation::Sigmoid) {
  using detail::DMat;
  if (steps.empty()) throw UsageError("gru_backward: empty step sequence");
  if (!grads_h_per_step.empty() && grads_h_per_step.size() != steps.size())
    throw UsageError("gru_backward: per-step gradient count does not match steps");
  params.validate();
  const detail::GruMats m(params, gate);
  const bool vec = steps.front().x.rank() == 1;
  const Eigen::Index hid = m.Wz.rows(), in = m.Wz.cols();

  DMat gWz = DMat::Zero(hid, in), gWr = DMat::Zero(hid, in), gW = DMat::Zero(hid, in);
  DMat gUz = DMat::Zero(hid, hid), gUr = DMat::Zero(hid, hid), gU = DMat::Zero(hid, hid);
  Eigen::RowVectorXd gb = Eigen::RowVectorXd::Zero(hid);

  DMat dh = detail::as_rows(grad_h_final);
  if (dh.cols() != hid) throw ShapeError("gru_backward: grad_h_final has wrong width");
  std::vector<BasicTensor<T>> gx(steps.size());

  for (std::size_t t = steps.size(); t-- > 0;) {
    const auto& s = steps[t];
    if (!grads_h_per_step.empty()) dh += detail::as_rows(grads_h_per_step[t]);
    const DMat X = detail::as_rows(s.x), H = detail::as_rows(s.h_prev);
    const DMat z = detail::as_rows(s.z), r = detail::as_rows(s.r), c = detail::as_rows(s.candidate);

    const DMat dz = dh.cwiseProduct(H - c);
    const DMat dc = dh.cwiseProduct(DMat::Ones(z.rows(), z.cols()) - z);
    DMat dH = dh.cwiseProduct(z);

    const DMat dac = dc.cwiseProduct((1.0 - c.array().square()).matrix());
    const DMat rh = r.cwiseProduct(H);
    gW.noalias() += dac.transpose() * X;
    gU.noalias() += dac.transpose() * rh;
    gb += dac.colwise().sum();
    const DMat drh = dac * m.U;
    const DMat dr = drh.cwiseProduct(H);
    dH += drh.cwiseProduct(r);

    const DMat daz = dz.cwiseProduct(z.unaryExpr([gate](double v) { return detail::gate_slope(gate, v); }));
    const DMat dar = dr.cwiseProduct(r.unaryExpr([gate](double v) { return detail::gate_slope(gate, v); }));
    gWz.noalias() += daz.transpose() * X;
    gUz.noalias() += daz.transpose() * H;
    gWr.noalias() += dar.transpose() * X;
    gUr.noalias() += dar.transpose() * H;

    const DMat dX = daz * m.Wz + dar * m.Wr + dac * m.W;
    dH.noalias() += daz * m.Uz;
    dH.noalias() += dar * m.Ur;
    gx[t] = detail::like<T>(dX, vec);
    dh = dH;
  }

  GruGrads<T> out;
  out.params.Wz = detail::from_dmat<T>(gWz);
  out.params.Uz = detail::from_dmat<T>(gUz);
  out.params.Wr = detail::from_dmat<T>(gWr);
  out.params.Ur = detail::from_dmat<T>(gUr);
  out.params.W = detail::from_dmat<T>(gW);
  out.params.U = detail::from_dmat<T>(gU);
  out.params.b = detail::from_dmat<T>(DMat(gb), Shape{static_cast<std::size_t>(hid)});
  out.h0 = detail::like<T>(dh, vec);
  out.x = std::move(gx);
  return out;
}

template <class T>
GruGrads<T> gru_backward(const std::vector<GruStep<T>>& steps, const GruParams<T>& params,
                         const BasicTensor<T>& grad_h_final, const std::vector<BasicTensor<T>>& grads_h_per_step,
                         GateActivation gate = GateActivation::Sigmoid) {
  return gru_backward(std::span<const GruStep<T>>(steps), params, grad_h_final,
                      std::span<const BasicTensor<T>>(grads_h_per_step), gate);
}

}  // namespace psrnn
