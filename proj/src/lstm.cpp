// Fused LSTM sequence op. The whole unrolled recurrence is a single graph node
// whose backward rule is hand-written backpropagation through time.
//
// Internally every buffer is step-major: row block s holds the batch at the
// s-th processed step, which is time T-1-s for the reverse direction.

#include <Eigen/Core>

#include "ser/ops.hpp"

namespace ser::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using Index = Eigen::Index;

template <typename Block>
void sigmoid_inplace(Block&& a) {
  a = (1.0 + (-a).exp()).inverse();
}

}  // namespace

Tensor lstm(const Tensor& input, const Tensor& wx, const Tensor& wh, const Tensor& b, bool reverse) {
  if (input.rank() == 2) {
    Tensor out = lstm(reshape(input, {1, input.dim(0), input.dim(1)}), wx, wh, b, reverse);
    return reshape(out, {out.dim(1), out.dim(2)});
  }
  if (input.rank() != 3) throw ShapeError("lstm: expected [batch, time, in], got " + shape_str(input.shape()));
  const std::size_t batch = input.dim(0), time = input.dim(1), in = input.dim(2);
  if (wh.rank() != 2 || wh.dim(1) != 4 * wh.dim(0)) throw ShapeError("lstm: recurrent weights must be [u, 4u], got " + shape_str(wh.shape()));
  const std::size_t units = wh.dim(0);
  if (wx.rank() != 2 || wx.dim(0) != in || wx.dim(1) != 4 * units) {
    throw ShapeError("lstm: input weights " + shape_str(wx.shape()) + " do not match input " + shape_str(input.shape()) +
                     " and " + std::to_string(units) + " units");
  }
  if (b.rank() != 1 || b.dim(0) != 4 * units) throw ShapeError("lstm: bias must be [4u], got " + shape_str(b.shape()));

  const auto B = static_cast<Index>(batch);
  const auto T = static_cast<Index>(time);
  const auto D = static_cast<Index>(in);
  const auto U = static_cast<Index>(units);
  const Index G = 4 * U;
  // Row of the [batch, time, .] layout that step s of sample bi maps to.
  const auto src_row = [=](Index s, Index bi) { return bi * T + (reverse ? T - 1 - s : s); };

  RowMat xs(T * B, D);
  const double* xv = input.data().data();
  for (Index s = 0; s < T; ++s) {
    for (Index bi = 0; bi < B; ++bi) xs.row(s * B + bi) = ConstMapMat(xv + src_row(s, bi) * D, 1, D);
  }

  // Pre-activations, overwritten in place by gate activations (i, f, g, o).
  RowMat acts(T * B, G);
  acts.noalias() = xs * ConstMapMat(wx.data().data(), D, G);
  acts.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), G);

  RowMat cells(T * B, U), tanh_cells(T * B, U), hidden(T * B, U);
  ConstMapMat wh_m(wh.data().data(), U, G);
  for (Index s = 0; s < T; ++s) {
    auto gates = acts.middleRows(s * B, B);
    if (s > 0) gates.noalias() += hidden.middleRows((s - 1) * B, B) * wh_m;
    // tanh(v) = 2 sigmoid(2v) - 1 keeps the candidate gate on the same vector path.
    gates.middleCols(2 * U, U) *= 2.0;
    sigmoid_inplace(gates.array());
    gates.middleCols(2 * U, U).array() = 2.0 * gates.middleCols(2 * U, U).array() - 1.0;

    auto c = cells.middleRows(s * B, B).array();
    c = gates.middleCols(0, U).array() * gates.middleCols(2 * U, U).array();
    if (s > 0) c += gates.middleCols(U, U).array() * cells.middleRows((s - 1) * B, B).array();
    auto tc = tanh_cells.middleRows(s * B, B).array();
    tc = 2.0 * (1.0 + (-2.0 * c).exp()).inverse() - 1.0;
    hidden.middleRows(s * B, B).array() = gates.middleCols(3 * U, U).array() * tc;
  }

  Buffer out(batch * time * units);
  for (Index s = 0; s < T; ++s) {
    for (Index bi = 0; bi < B; ++bi) MapMat(out.data() + src_row(s, bi) * U, 1, U) = hidden.row(s * B + bi);
  }

  return make_result(
      {batch, time, units}, std::move(out), {input, wx, wh, b},
      [=, xs = std::move(xs), acts = std::move(acts), cells = std::move(cells), tanh_cells = std::move(tanh_cells),
       hidden = std::move(hidden)](Node& self) {
        RowMat dh_out(T * B, U);
        for (Index s = 0; s < T; ++s) {
          for (Index bi = 0; bi < B; ++bi) dh_out.row(s * B + bi) = ConstMapMat(self.grad.data() + src_row(s, bi) * U, 1, U);
        }
        const double* wh_v = self.inputs[2]->value.data();
        ConstMapMat wh_back(wh_v, U, G);

        RowMat dpre(T * B, G);
        RowMat dh_next = RowMat::Zero(B, U);
        Eigen::ArrayXXd dc_next = Eigen::ArrayXXd::Zero(B, U);
        Eigen::ArrayXXd dh(B, U), dc(B, U);
        for (Index s = T - 1; s >= 0; --s) {
          const auto g = acts.middleRows(s * B, B);
          const auto ig = g.middleCols(0, U).array();
          const auto fg = g.middleCols(U, U).array();
          const auto gg = g.middleCols(2 * U, U).array();
          const auto og = g.middleCols(3 * U, U).array();
          const auto tc = tanh_cells.middleRows(s * B, B).array();
          auto dp = dpre.middleRows(s * B, B);

          dh = dh_out.middleRows(s * B, B).array() + dh_next.array();
          dc = dc_next + dh * og * (1.0 - tc * tc);
          dp.middleCols(0, U).array() = dc * gg * ig * (1.0 - ig);
          if (s > 0) {
            dp.middleCols(U, U).array() = dc * cells.middleRows((s - 1) * B, B).array() * fg * (1.0 - fg);
          } else {
            dp.middleCols(U, U).setZero();
          }
          dp.middleCols(2 * U, U).array() = dc * ig * (1.0 - gg * gg);
          dp.middleCols(3 * U, U).array() = dh * tc * og * (1.0 - og);
          dc_next = dc * fg;
          if (s > 0) dh_next.noalias() = dp * wh_back.transpose();
        }

        if (Node* nwh = self.inputs[2]->requires_grad ? self.inputs[2].get() : nullptr; nwh && T > 1) {
          // The state entering step s is the hidden output of step s-1.
          MapMat(nwh->grad.data(), U, G).noalias() +=
              hidden.topRows((T - 1) * B).transpose() * dpre.bottomRows((T - 1) * B);
        }
        if (Node* nwx = self.inputs[1]->requires_grad ? self.inputs[1].get() : nullptr) {
          MapMat(nwx->grad.data(), D, G).noalias() += xs.transpose() * dpre;
        }
        if (Node* nb = self.inputs[3]->requires_grad ? self.inputs[3].get() : nullptr) {
          Eigen::Map<Eigen::RowVectorXd>(nb->grad.data(), G) += dpre.colwise().sum();
        }
        if (Node* nx = self.inputs[0]->requires_grad ? self.inputs[0].get() : nullptr) {
          const RowMat dxs = dpre * ConstMapMat(self.inputs[1]->value.data(), D, G).transpose();
          for (Index s = 0; s < T; ++s) {
            for (Index bi = 0; bi < B; ++bi) MapMat(nx->grad.data() + src_row(s, bi) * D, 1, D) += dxs.row(s * B + bi);
          }
        }
      });
}

}  // namespace ser::ad
