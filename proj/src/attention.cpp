#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "lost/model.hpp"

namespace lost {

template <class T>
Matrix<T> causal_attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                           std::size_t batch, std::size_t seq, std::size_t heads,
                           Matrix<T>& probs) {
  const std::size_t d = q.cols();
  const std::size_t dh = d / heads;
  require_shape(q, batch * seq, d, "attention q");
  require_shape(k, batch * seq, d, "attention k");
  require_shape(v, batch * seq, d, "attention v");
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  Matrix<T> out(batch * seq, d);
  probs.resize(batch * heads * seq, seq);
  probs.set_zero();

  const std::size_t pairs = batch * heads;
#pragma omp parallel for schedule(static)
  for (std::size_t bh = 0; bh < pairs; ++bh) {
    const std::size_t b = bh / heads, h = bh % heads;
    const std::size_t c0 = h * dh;
    for (std::size_t i = 0; i < seq; ++i) {
      const T* qi = q.data() + (b * seq + i) * d + c0;
      T* p = probs.data() + (bh * seq + i) * seq;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j <= i; ++j) {
        const T* kj = k.data() + (b * seq + j) * d + c0;
        T s{0};
        for (std::size_t t = 0; t < dh; ++t) s += qi[t] * kj[t];
        p[j] = s * scale;
        mx = std::max(mx, p[j]);
      }
      T sum{0};
      for (std::size_t j = 0; j <= i; ++j) {
        p[j] = std::exp(p[j] - mx);
        sum += p[j];
      }
      const T inv = T{1} / sum;
      T* oi = out.data() + (b * seq + i) * d + c0;
      for (std::size_t j = 0; j <= i; ++j) {
        p[j] *= inv;
        const T* vj = v.data() + (b * seq + j) * d + c0;
        for (std::size_t t = 0; t < dh; ++t) oi[t] += p[j] * vj[t];
      }
    }
  }
  return out;
}

template <class T>
void causal_attention_backward(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                               const Matrix<T>& probs, const Matrix<T>& dout, std::size_t batch,
                               std::size_t seq, std::size_t heads, Matrix<T>& dq, Matrix<T>& dk,
                               Matrix<T>& dv) {
  const std::size_t d = q.cols();
  const std::size_t dh = d / heads;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  dq = Matrix<T>(batch * seq, d);
  dk = Matrix<T>(batch * seq, d);
  dv = Matrix<T>(batch * seq, d);

  const std::size_t pairs = batch * heads;
  // Each (batch, head) pair owns a disjoint column slab of dq/dk/dv.
#pragma omp parallel for schedule(static)
  for (std::size_t bh = 0; bh < pairs; ++bh) {
    const std::size_t b = bh / heads, h = bh % heads;
    const std::size_t c0 = h * dh;
    std::vector<T> dp(seq);
    for (std::size_t i = 0; i < seq; ++i) {
      const T* p = probs.data() + (bh * seq + i) * seq;
      const T* doi = dout.data() + (b * seq + i) * d + c0;
      T dot_pdp{0};
      for (std::size_t j = 0; j <= i; ++j) {
        const T* vj = v.data() + (b * seq + j) * d + c0;
        T* dvj = dv.data() + (b * seq + j) * d + c0;
        T s{0};
        for (std::size_t t = 0; t < dh; ++t) {
          s += doi[t] * vj[t];
          dvj[t] += p[j] * doi[t];
        }
        dp[j] = s;
        dot_pdp += p[j] * s;
      }
      const T* qi = q.data() + (b * seq + i) * d + c0;
      T* dqi = dq.data() + (b * seq + i) * d + c0;
      for (std::size_t j = 0; j <= i; ++j) {
        const T ds = p[j] * (dp[j] - dot_pdp) * scale;
        const T* kj = k.data() + (b * seq + j) * d + c0;
        T* dkj = dk.data() + (b * seq + j) * d + c0;
        for (std::size_t t = 0; t < dh; ++t) {
          dqi[t] += ds * kj[t];
          dkj[t] += ds * qi[t];
        }
      }
    }
  }
}

namespace reference {

template <class T>
Matrix<T> causal_attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                           std::size_t batch, std::size_t seq, std::size_t heads) {
  const std::size_t d = q.cols(), dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix<T> out(batch * seq, d);
  std::vector<double> scores(seq * seq);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < seq; ++i) {
        for (std::size_t j = 0; j < seq; ++j) {
          double s = 0.0;
          for (std::size_t t = 0; t < dh; ++t) {
            s += static_cast<double>(q(b * seq + i, h * dh + t)) *
                 static_cast<double>(k(b * seq + j, h * dh + t));
          }
          scores[i * seq + j] = j <= i ? s * scale : -std::numeric_limits<double>::infinity();
        }
      }
      for (std::size_t i = 0; i < seq; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < seq; ++j) mx = std::max(mx, scores[i * seq + j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < seq; ++j) sum += std::exp(scores[i * seq + j] - mx);
        for (std::size_t t = 0; t < dh; ++t) {
          double acc = 0.0;
          for (std::size_t j = 0; j < seq; ++j) {
            acc += std::exp(scores[i * seq + j] - mx) / sum *
                   static_cast<double>(v(b * seq + j, h * dh + t));
          }
          out(b * seq + i, h * dh + t) = static_cast<T>(acc);
        }
      }
    }
  }
  return out;
}

template MatrixF causal_attention<float>(const MatrixF&, const MatrixF&, const MatrixF&,
                                         std::size_t, std::size_t, std::size_t);
template MatrixD causal_attention<double>(const MatrixD&, const MatrixD&, const MatrixD&,
                                          std::size_t, std::size_t, std::size_t);

}  // namespace reference

#define LOST_INSTANTIATE(T)                                                                     \
  template Matrix<T> causal_attention<T>(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&,  \
                                         std::size_t, std::size_t, std::size_t, Matrix<T>&);    \
  template void causal_attention_backward<T>(                                                   \
      const Matrix<T>&, const Matrix<T>&, const Matrix<T>&, const Matrix<T>&, const Matrix<T>&, \
      std::size_t, std::size_t, std::size_t, Matrix<T>&, Matrix<T>&, Matrix<T>&);

LOST_INSTANTIATE(float)
LOST_INSTANTIATE(double)
#undef LOST_INSTANTIATE

}  // namespace lost
