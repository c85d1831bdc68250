#include "kappaface/io.hpp"

namespace kappaface::io {

void write_matrix_f32(BinaryWriter& w, const Eigen::MatrixXf& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.write_f32(m(i, j));
  }
}

void write_matrix_f64(BinaryWriter& w, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.write_f64(m(i, j));
  }
}

Eigen::MatrixXf read_matrix_f32(BinaryReader& r, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXf m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.read_f32();
  }
  return m;
}

Eigen::MatrixXd read_matrix_f64(BinaryReader& r, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.read_f64();
  }
  return m;
}

}  // namespace kappaface::io
