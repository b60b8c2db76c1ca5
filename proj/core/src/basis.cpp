#include "ngo/basis.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace ngo {

std::string to_string(BasisKind k) {
  return k == BasisKind::BSpline ? "bspline" : "chebyshev";
}

Basis1D Basis1D::bspline(int n, int degree) {
  if (degree < 0) throw std::invalid_argument("bspline: negative degree");
  if (n < degree + 1) throw std::invalid_argument("bspline: need n >= degree+1");
  Basis1D b;
  b.kind_ = BasisKind::BSpline;
  b.n_ = n;
  b.degree_ = degree;
  // Clamped uniform knot vector on [0,1].
  const int spans = n - degree;
  b.knots_.resize(n + degree + 1);
  for (int i = 0; i <= degree; ++i) b.knots_[i] = 0.0;
  for (int i = 1; i < spans; ++i) b.knots_[degree + i] = static_cast<double>(i) / spans;
  for (int i = 0; i <= degree; ++i) b.knots_[n + i] = 1.0;
  return b;
}

Basis1D Basis1D::chebyshev(int n) {
  if (n < 1) throw std::invalid_argument("chebyshev: need n >= 1");
  Basis1D b;
  b.kind_ = BasisKind::Chebyshev;
  b.n_ = n;
  b.degree_ = n - 1;
  return b;
}

Basis1D make_bspline_basis(int n, int degree) { return Basis1D::bspline(n, degree); }
Basis1D make_chebyshev_basis(int n) { return Basis1D::chebyshev(n); }

int Basis1D::find_span(double x) const {
  const int p = degree_;
  if (x >= 1.0) return n_ - 1;
  if (x <= 0.0) return p;
  // knots_[span] <= x < knots_[span+1], span in [p, n-1]
  auto it = std::upper_bound(knots_.begin() + p, knots_.begin() + n_ + 1, x);
  return static_cast<int>(it - knots_.begin()) - 1;
}

int Basis1D::eval_local(double x, int nderiv, double* vals) const {
  if (nderiv > 2) throw std::invalid_argument("eval_local: nderiv <= 2");
  if (kind_ == BasisKind::Chebyshev) {
    // Modal Chebyshev via the recurrences for T, T', T'' on s = 2x-1.
    const double s = 2.0 * x - 1.0;
    double t0 = 1.0, t1 = s;
    double d0 = 0.0, d1 = 2.0;        // dT/dx with chain factor 2
    double s0 = 0.0, s1 = 0.0;        // second derivatives
    for (int k = 0; k < n_; ++k) {
      double tk, dk, sk;
      if (k == 0) { tk = t0; dk = d0; sk = s0; }
      else if (k == 1) { tk = t1; dk = d1; sk = s1; }
      else {
        tk = 2.0 * s * t1 - t0;
        dk = 2.0 * s * d1 - d0 + 4.0 * t1;            // d/dx(2s t1) = 2s t1' + 2*2*t1
        sk = 2.0 * s * s1 - s0 + 8.0 * d1;            // second derivative recurrence
        t0 = t1; t1 = tk;
        d0 = d1; d1 = dk;
        s0 = s1; s1 = sk;
      }
      vals[k] = tk;
      if (nderiv >= 1) vals[n_ + k] = dk;
      if (nderiv >= 2) vals[2 * n_ + k] = sk;
    }
    return 0;
  }

  // B-spline: derivatives-of-basis-functions algorithm (banded, p+1 values).
  const int p = degree_;
  const int span = find_span(x);
  double left[16], right[16];
  double ndu[16][16];
  if (p + 1 > 16) throw std::invalid_argument("eval_local: degree too large");
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - knots_[span + 1 - j];
    right[j] = knots_[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  for (int j = 0; j <= p; ++j) vals[j] = ndu[j][p];
  if (nderiv >= 1) {
    double a[2][16];
    for (int r = 0; r <= p; ++r) {
      int s1 = 0, s2 = 1;
      a[0][0] = 1.0;
      for (int k = 1; k <= nderiv; ++k) {
        double d = 0.0;
        const int rk = r - k, pk = p - k;
        if (r >= k) {
          a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
          d = a[s2][0] * ndu[rk][pk];
        }
        const int j1 = (rk >= -1) ? 1 : -rk;
        const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
        for (int j = j1; j <= j2; ++j) {
          a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
          d += a[s2][j] * ndu[rk + j][pk];
        }
        if (r <= pk) {
          a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
          d += a[s2][k] * ndu[r][pk];
        }
        double factor = 1.0;
        for (int i = 0; i < k; ++i) factor *= (p - i);
        vals[k * (p + 1) + r] = d * factor;
        std::swap(s1, s2);
      }
    }
  }
  return span - p;
}

void Basis1D::eval(double x, int nderiv, double* out) const {
  const int sup = support();
  double local[3 * 16];
  const int first = eval_local(x, nderiv, local);
  std::memset(out, 0, sizeof(double) * static_cast<size_t>((nderiv + 1) * n_));
  for (int d = 0; d <= nderiv; ++d)
    for (int j = 0; j < sup; ++j) out[d * n_ + first + j] = local[d * sup + j];
}

Eigen::VectorXd Basis1D::values(double x) const {
  Eigen::VectorXd v(n_);
  eval(x, 0, v.data());
  return v;
}

Eigen::VectorXd Basis1D::derivatives(double x, int order) const {
  std::vector<double> buf(static_cast<size_t>((order + 1) * n_));
  eval(x, order, buf.data());
  Eigen::VectorXd v(n_);
  for (int j = 0; j < n_; ++j) v(j) = buf[static_cast<size_t>(order * n_ + j)];
  return v;
}

TensorBasis::TensorBasis(std::vector<Basis1D> factors) : factors_(std::move(factors)) {
  if (factors_.empty() || factors_.size() > 3)
    throw std::invalid_argument("TensorBasis: need 1-3 factors");
  count_ = 1;
  for (const auto& f : factors_) count_ *= f.count();
  strides_.assign(factors_.size(), 1);
  for (int i = static_cast<int>(factors_.size()) - 2; i >= 0; --i)
    strides_[i] = strides_[i + 1] * factors_[i + 1].count();
}

TensorBasis make_tensor_basis(std::vector<Basis1D> factors) {
  return TensorBasis(std::move(factors));
}

int TensorBasis::flat_index(const std::vector<int>& multi) const {
  if (static_cast<int>(multi.size()) != dim())
    throw std::invalid_argument("flat_index: wrong rank");
  int m = 0;
  for (int i = 0; i < dim(); ++i) m += multi[i] * strides_[i];
  return m;
}

std::vector<int> TensorBasis::multi_index(int flat) const {
  std::vector<int> multi(dim());
  for (int i = 0; i < dim(); ++i) {
    multi[i] = flat / strides_[i];
    flat %= strides_[i];
  }
  return multi;
}

void TensorBasis::eval_active(const double* x, ActiveEval& out, bool with_second) const {
  const int d = dim();
  const int nderiv = with_second ? 2 : 1;
  double local[3][3 * 16];
  int first[3], sup[3];
  for (int i = 0; i < d; ++i) {
    sup[i] = factors_[i].support();
    first[i] = factors_[i].eval_local(x[i], nderiv, local[i]);
  }
  int total = 1;
  for (int i = 0; i < d; ++i) total *= sup[i];
  out.index.resize(total);
  out.value.resize(total);
  out.grad.resize(static_cast<size_t>(total) * d);
  if (with_second) out.second.resize(static_cast<size_t>(total) * d);

  std::vector<int> idx(d, 0);
  for (int k = 0; k < total; ++k) {
    int flat = 0;
    double v = 1.0;
    for (int i = 0; i < d; ++i) {
      flat += (first[i] + idx[i]) * strides_[i];
      v *= local[i][idx[i]];
    }
    out.index[k] = flat;
    out.value[k] = v;
    for (int g = 0; g < d; ++g) {
      double gv = 1.0;
      for (int i = 0; i < d; ++i) {
        const double* li = local[i];
        gv *= (i == g) ? li[sup[i] + idx[i]] : li[idx[i]];
      }
      out.grad[static_cast<size_t>(k) * d + g] = gv;
      if (with_second) {
        double sv = 1.0;
        for (int i = 0; i < d; ++i) {
          const double* li = local[i];
          sv *= (i == g) ? li[2 * sup[i] + idx[i]] : li[idx[i]];
        }
        out.second[static_cast<size_t>(k) * d + g] = sv;
      }
    }
    for (int i = d - 1; i >= 0; --i) {
      if (++idx[i] < sup[i]) break;
      idx[i] = 0;
    }
  }
}

Eigen::VectorXd TensorBasis::values(const double* x) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(count_);
  ActiveEval a;
  eval_active(x, a);
  for (int k = 0; k < a.size(); ++k) v(a.index[k]) = a.value[k];
  return v;
}

Eigen::MatrixXd TensorBasis::gradient(const double* x) const {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(count_, dim());
  ActiveEval a;
  eval_active(x, a);
  for (int k = 0; k < a.size(); ++k)
    for (int d = 0; d < dim(); ++d) g(a.index[k], d) = a.grad[static_cast<size_t>(k) * dim() + d];
  return g;
}

Eigen::MatrixXd TensorBasis::value_table(const QuadratureRule& quad) const {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(quad.size(), count_);
  ActiveEval a;
  for (int q = 0; q < quad.size(); ++q) {
    eval_active(quad.points.row(q).data(), a);
    for (int k = 0; k < a.size(); ++k) t(q, a.index[k]) = a.value[k];
  }
  return t;
}

std::vector<Eigen::MatrixXd> TensorBasis::gradient_tables(const QuadratureRule& quad) const {
  std::vector<Eigen::MatrixXd> tabs(dim(), Eigen::MatrixXd::Zero(quad.size(), count_));
  ActiveEval a;
  for (int q = 0; q < quad.size(); ++q) {
    eval_active(quad.points.row(q).data(), a);
    for (int k = 0; k < a.size(); ++k)
      for (int d = 0; d < dim(); ++d)
        tabs[d](q, a.index[k]) = a.grad[static_cast<size_t>(k) * dim() + d];
  }
  return tabs;
}

Eigen::VectorXd TensorBasis::evaluate(const Eigen::VectorXd& coeffs,
                                      const QuadratureRule& quad) const {
  if (coeffs.size() != count_) throw std::invalid_argument("evaluate: coefficient size mismatch");
  Eigen::VectorXd out(quad.size());
  ActiveEval a;
  for (int q = 0; q < quad.size(); ++q) {
    eval_active(quad.points.row(q).data(), a);
    double v = 0.0;
    for (int k = 0; k < a.size(); ++k) v += coeffs(a.index[k]) * a.value[k];
    out(q) = v;
  }
  return out;
}

}  // namespace ngo
