#include "mconf/exact.hpp"

#include <cmath>

namespace mconf {

AffineCoeffs affine_coeffs(const HatSet& hats, const Eigen::MatrixXd& responses) {
  const Eigen::Index n = responses.rows();
  const Eigen::Index q = responses.cols();
  if (hats.q() != q || hats.size() != n + 1) {
    throw Error(ErrorCode::Data, "hat set dimensions do not match responses");
  }
  AffineCoeffs c;
  c.a.resize(n + 1, q);
  c.b.resize(n + 1, q);
  Eigen::VectorXd yk = Eigen::VectorXd::Zero(n + 1);
  const Eigen::VectorXd e_last = Eigen::VectorXd::Unit(n + 1, n);
  for (Eigen::Index k = 0; k < q; ++k) {
    yk.head(n) = responses.col(k);
    yk[n] = 0.0;
    const Eigen::MatrixXd& h = hats.mats[static_cast<std::size_t>(k)];
    c.a.col(k) = yk - h * yk;
    c.b.col(k) = e_last - h * e_last;
  }
  return c;
}

double score_closed(const AffineCoeffs& coeffs, const ConformityMeasure& measure,
                    Eigen::Index i, const Eigen::VectorXd& z) {
  if (i < 0 || i >= coeffs.n_plus_1()) {
    throw Error(ErrorCode::Data, "observation index out of range");
  }
  if (z.size() != coeffs.q()) {
    throw Error(ErrorCode::Data, "candidate dimension mismatch");
  }
  const Eigen::VectorXd r =
      coeffs.a.row(i).transpose() + coeffs.b.row(i).transpose().cwiseProduct(z);
  if (measure.kind == ConformityMeasure::Kind::L1) {
    return r.lpNorm<1>();
  }
  measure.validate(coeffs.q());
  return r.dot(measure.w * r);
}

Rational pvalue_exact(const AffineCoeffs& coeffs, const ConformityMeasure& measure,
                      const Eigen::VectorXd& z) {
  const Eigen::Index n = coeffs.n_plus_1() - 1;
  const double s_new = score_closed(coeffs, measure, n, z);
  std::int64_t count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (s_new <= score_closed(coeffs, measure, i, z)) ++count;
  }
  return {count, n + 1};
}

QuadraticRegion::QuadraticRegion(Eigen::MatrixXd qmat, Eigen::VectorXd lin, double cst,
                                 int obs)
    : Region(obs), qmat_(std::move(qmat)), lin_(std::move(lin)), cst_(cst) {
  const double scale = std::max(qmat_.norm(), 1.0);
  if ((qmat_ - qmat_.transpose()).norm() > 1e-10 * scale) {
    throw Error(ErrorCode::Numeric, "quadratic region matrix must be symmetric");
  }
}

bool QuadraticRegion::contains(const Eigen::VectorXd& z) const {
  return z.dot(qmat_ * z) + lin_.dot(z) + cst_ <= 0.0;
}

L1Region::L1Region(std::shared_ptr<const AffineCoeffs> coeffs, int obs)
    : Region(obs), coeffs_(std::move(coeffs)) {}

bool L1Region::contains(const Eigen::VectorXd& z) const {
  const Eigen::Index n = coeffs_->n_plus_1() - 1;
  const auto measure = ConformityMeasure::l1();
  return score_closed(*coeffs_, measure, n, z) <=
         score_closed(*coeffs_, measure, obs_index(), z);
}

QuadraticRegion region_wnorm(const AffineCoeffs& coeffs, const Eigen::MatrixXd& w,
                             Eigen::Index i) {
  const Eigen::Index last = coeffs.n_plus_1() - 1;
  if (i < 0 || i >= coeffs.n_plus_1()) {
    throw Error(ErrorCode::Data, "observation index out of range");
  }
  if ((w - w.transpose()).norm() > 1e-10 * std::max(w.norm(), 1.0)) {
    throw Error(ErrorCode::Config, "W must be symmetric");
  }
  const Eigen::VectorXd a_i = coeffs.a.row(i).transpose();
  const Eigen::VectorXd b_i = coeffs.b.row(i).transpose();
  const Eigen::VectorXd a_n = coeffs.a.row(last).transpose();
  const Eigen::VectorXd b_n = coeffs.b.row(last).transpose();
  const Eigen::MatrixXd dn = b_n.asDiagonal();
  const Eigen::MatrixXd di = b_i.asDiagonal();
  Eigen::MatrixXd qmat = dn * w * dn - di * w * di;
  qmat = 0.5 * (qmat + qmat.transpose());
  const Eigen::VectorXd lin = 2.0 * (dn * w * a_n - di * w * a_i);
  const double cst = a_n.dot(w * a_n) - a_i.dot(w * a_i);
  return QuadraticRegion(std::move(qmat), lin, cst, static_cast<int>(i));
}

L1Region region_l1(std::shared_ptr<const AffineCoeffs> coeffs, Eigen::Index i) {
  if (i < 0 || i >= coeffs->n_plus_1() - 1) {
    throw Error(ErrorCode::Data, "observation index out of range");
  }
  return L1Region(std::move(coeffs), static_cast<int>(i));
}

std::vector<ChangeLine> l1_changepoints_2d(const AffineCoeffs& coeffs, Eigen::Index i) {
  if (coeffs.q() != 2) {
    throw Error(ErrorCode::Config, "change-point enumeration supports q = 2 only");
  }
  if (i < 0 || i >= coeffs.n_plus_1() - 1) {
    throw Error(ErrorCode::Data, "observation index out of range");
  }
  const Eigen::Index last = coeffs.n_plus_1() - 1;
  const double a1i = coeffs.a(i, 0), b1i = coeffs.b(i, 0);
  const double a2i = coeffs.a(i, 1), b2i = coeffs.b(i, 1);
  const double a1n = coeffs.a(last, 0), b1n = coeffs.b(last, 0);
  const double a2n = coeffs.a(last, 1), b2n = coeffs.b(last, 1);

  std::vector<ChangeLine> lines;
  // s1|.| + s2|.| = s3|.| + s4|.| across the 2^4 sign assignments; each
  // consistent assignment is a line s1(a1i+b1i z1)+s2(a2i+b2i z2)
  // -s3(a1n+b1n z1)-s4(a2n+b2n z2) = 0.
  for (int mask = 0; mask < 16; ++mask) {
    const int s1 = (mask & 1) ? -1 : 1;
    const int s2 = (mask & 2) ? -1 : 1;
    const int s3 = (mask & 4) ? -1 : 1;
    const int s4 = (mask & 8) ? -1 : 1;
    ChangeLine ln;
    ln.signs = {s1, s2, s3, s4};
    ln.normal[0] = s1 * b1i - s3 * b1n;
    ln.normal[1] = s2 * b2i - s4 * b2n;
    ln.offset = s1 * a1i + s2 * a2i - s3 * a1n - s4 * a2n;
    const double coeff_scale = std::abs(b1i) + std::abs(b2i) + std::abs(b1n) +
                               std::abs(b2n) + 1.0;
    if (ln.normal.lpNorm<1>() <= 1e-14 * coeff_scale) {
      continue;  // degenerate pattern, no line
    }
    lines.push_back(ln);
  }
  return lines;
}

WEstimate estimate_w(const Dataset& data, const HatSet& hats_for_dn) {
  data.validate();
  const Eigen::Index n = data.n();
  const Eigen::Index q = data.q();
  if (hats_for_dn.q() != q || hats_for_dn.size() != n) {
    throw Error(ErrorCode::Data, "hat set for training data must be n x n, one per dimension");
  }
  Eigen::MatrixXd resid(n, q);
  for (Eigen::Index k = 0; k < q; ++k) {
    resid.col(k) =
        data.responses.col(k) - hats_for_dn.mats[static_cast<std::size_t>(k)] * data.responses.col(k);
  }
  const Eigen::RowVectorXd mean = resid.colwise().mean();
  resid.rowwise() -= mean;
  Eigen::MatrixXd sigma = resid.transpose() * resid / static_cast<double>(n);
  sigma.diagonal().array() += 1e-8 * sigma.trace() / static_cast<double>(q);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(sigma);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw Error(ErrorCode::Numeric, "residual covariance degenerate after jitter");
  }
  Eigen::MatrixXd w = ldlt.solve(Eigen::MatrixXd::Identity(q, q));
  w = 0.5 * (w + w.transpose());
  return {w, true};
}

}  // namespace mconf
