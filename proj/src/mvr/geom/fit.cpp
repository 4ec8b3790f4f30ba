#include "mvr/geom/fit.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace mvr {

SimilarityTransform umeyama_align(const std::vector<Eigen::Vector3d>& X,
                                  const std::vector<Eigen::Vector3d>& Y) {
  if (X.size() != Y.size())
    throw std::invalid_argument("umeyama: point counts differ (" + std::to_string(X.size()) + " vs " +
                                std::to_string(Y.size()) + ")");
  const size_t n = X.size();
  if (n < 3) throw std::invalid_argument("umeyama: need at least 3 points");

  Eigen::Vector3d cx = Eigen::Vector3d::Zero(), cy = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < n; ++i) {
    cx += X[i];
    cy += Y[i];
  }
  cx /= static_cast<double>(n);
  cy /= static_cast<double>(n);

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  double var_x = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d dx = X[i] - cx;
    const Eigen::Vector3d dy = Y[i] - cy;
    cov += dy * dx.transpose();
    var_x += dx.squaredNorm();
  }
  cov /= static_cast<double>(n);
  var_x /= static_cast<double>(n);
  if (var_x < 1e-18) throw std::invalid_argument("umeyama: degenerate source cloud (zero spread)");

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d d = svd.singularValues();
  if (d(1) < 1e-12 * std::max(d(0), 1e-300))
    throw std::invalid_argument("umeyama: rank-deficient cross-covariance");

  Eigen::Vector3d sgn(1, 1, 1);
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) sgn(2) = -1;

  SimilarityTransform out;
  out.R = svd.matrixU() * sgn.asDiagonal() * svd.matrixV().transpose();
  out.s = (d.dot(sgn)) / var_x;
  out.u = cy - out.s * (out.R * cx);
  return out;
}

PnpResult camera_from_pointmap(const PointMap& P, const MaskMap& mask, int W, int H) {
  std::vector<Eigen::Vector3d> pts;
  std::vector<Eigen::Vector2d> pix;
  for (int i = 0; i < P.H; ++i)
    for (int j = 0; j < P.W; ++j) {
      if (!mask.at(i, j)) continue;
      pts.push_back(P.at(i, j));
      pix.emplace_back(j - W / 2.0, i - H / 2.0);  // principal point removed
    }
  const size_t n = pts.size();
  if (n < 6) throw std::invalid_argument("camera_from_pointmap: need >= 6 valid pixels, have " +
                                         std::to_string(n));

  // Hartley-style conditioning of both sides.
  Eigen::Vector3d c3 = Eigen::Vector3d::Zero();
  Eigen::Vector2d c2 = Eigen::Vector2d::Zero();
  for (size_t k = 0; k < n; ++k) {
    c3 += pts[k];
    c2 += pix[k];
  }
  c3 /= static_cast<double>(n);
  c2 /= static_cast<double>(n);
  double s3 = 0.0, s2 = 0.0;
  for (size_t k = 0; k < n; ++k) {
    s3 += (pts[k] - c3).norm();
    s2 += (pix[k] - c2).norm();
  }
  s3 = s3 > 1e-12 ? std::sqrt(3.0) * n / s3 : 1.0;
  s2 = s2 > 1e-12 ? std::sqrt(2.0) * n / s2 : 1.0;

  // Normal equations for the 12-vector m with ||m|| = 1.
  Eigen::Matrix<double, 12, 12> AtA = Eigen::Matrix<double, 12, 12>::Zero();
  for (size_t k = 0; k < n; ++k) {
    const Eigen::Vector3d Xn = s3 * (pts[k] - c3);
    const Eigen::Vector2d xn = s2 * (pix[k] - c2);
    Eigen::Matrix<double, 1, 4> Xh;
    Xh << Xn.x(), Xn.y(), Xn.z(), 1.0;
    Eigen::Matrix<double, 2, 12> rows = Eigen::Matrix<double, 2, 12>::Zero();
    rows.block<1, 4>(0, 0) = Xh;
    rows.block<1, 4>(0, 8) = -xn.x() * Xh;
    rows.block<1, 4>(1, 4) = Xh;
    rows.block<1, 4>(1, 8) = -xn.y() * Xh;
    AtA += rows.transpose() * rows;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 12, 12>> eig(AtA);
  const auto& evals = eig.eigenvalues();
  // A well-posed problem has a single (near-)zero eigenvalue; a second one
  // signals a coplanar/degenerate configuration.
  const double scale_ref = std::max(evals(11), 1e-300);
  if (evals(1) < 1e-10 * scale_ref)
    throw std::invalid_argument("camera_from_pointmap: rank-deficient configuration (coplanar points)");
  Eigen::Matrix<double, 12, 1> m = eig.eigenvectors().col(0);

  Eigen::Matrix<double, 3, 4> M;
  M.row(0) = m.segment<4>(0).transpose();
  M.row(1) = m.segment<4>(4).transpose();
  M.row(2) = m.segment<4>(8).transpose();

  // Undo conditioning: x = T2^-1 Mn T3.
  Eigen::Matrix3d T2inv = Eigen::Matrix3d::Identity();
  T2inv(0, 0) = 1.0 / s2;
  T2inv(1, 1) = 1.0 / s2;
  T2inv(0, 2) = c2.x();
  T2inv(1, 2) = c2.y();
  Eigen::Matrix4d T3 = Eigen::Matrix4d::Identity();
  T3.block<3, 3>(0, 0) *= s3;
  T3.block<3, 1>(0, 3) = -s3 * c3;
  M = T2inv * M * T3;

  // Fix scale and sign so that row 3 is a unit vector and depths positive.
  double rho = M.row(2).head<3>().norm();
  if (rho < 1e-15) throw std::invalid_argument("camera_from_pointmap: degenerate projection matrix");
  M /= rho;
  Eigen::Vector4d X0h(c3.x(), c3.y(), c3.z(), 1.0);
  if (M.row(2).dot(X0h) < 0) M = -M;

  // Known structure M = diag(fx, fy, 1) [R | t] with centered principal
  // point: peel the focal lengths off rows 1 and 2.
  const Eigen::Vector3d r3 = M.row(2).head<3>();
  Eigen::Vector3d r1 = M.row(0).head<3>().transpose() - M.row(0).head<3>().dot(r3) * r3;
  Eigen::Vector3d r2 = M.row(1).head<3>().transpose() - M.row(1).head<3>().dot(r3) * r3;
  const double fx = r1.norm(), fy = r2.norm();
  if (fx < 1e-12 || fy < 1e-12)
    throw std::invalid_argument("camera_from_pointmap: degenerate focal estimate");
  Eigen::Matrix3d R0;
  R0.row(0) = (r1 / fx).transpose();
  R0.row(1) = (r2 / fy).transpose();
  R0.row(2) = r3.transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> rsvd(R0, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d R = rsvd.matrixU() * rsvd.matrixV().transpose();
  if (R.determinant() < 0) {
    Eigen::Vector3d flip(1, 1, -1);
    R = rsvd.matrixU() * flip.asDiagonal() * rsvd.matrixV().transpose();
  }
  const Eigen::Vector3d t(M(0, 3) / fx, M(1, 3) / fy, M(2, 3));

  PnpResult out;
  out.cam = make_camera(rotmat_to_quat(R), {t.x(), t.y(), t.z()},
                        {2.0 * std::atan2(W / 2.0, fx), 2.0 * std::atan2(H / 2.0, fy)});
  double se = 0.0;
  size_t cnt = 0;
  for (int i = 0; i < P.H; ++i)
    for (int j = 0; j < P.W; ++j) {
      if (!mask.at(i, j)) continue;
      const auto pr = project(out.cam, P.at(i, j), W, H);
      se += (pr.pix - Eigen::Vector2d(j, i)).squaredNorm();
      ++cnt;
    }
  out.reproj_rms = std::sqrt(se / static_cast<double>(cnt));
  return out;
}

void write_ply(const std::string& path, const std::vector<Eigen::Vector3d>& pts,
               const std::vector<Eigen::Vector3d>* colors) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_ply: cannot open " + path);
  f << "ply\nformat ascii 1.0\nelement vertex " << pts.size()
    << "\nproperty float x\nproperty float y\nproperty float z\n";
  if (colors)
    f << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  f << "end_header\n";
  for (size_t i = 0; i < pts.size(); ++i) {
    f << static_cast<float>(pts[i].x()) << " " << static_cast<float>(pts[i].y()) << " "
      << static_cast<float>(pts[i].z());
    if (colors) {
      auto to8 = [](double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
      f << " " << to8((*colors)[i].x()) << " " << to8((*colors)[i].y()) << " " << to8((*colors)[i].z());
    }
    f << "\n";
  }
  if (!f) throw std::runtime_error("write_ply: write failed for " + path);
}

}  // namespace mvr
