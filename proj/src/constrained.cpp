#include <stdexcept>

#include "shiftbench/correlation.hpp"
#include "shiftbench/estimators.hpp"

namespace shiftbench {

Eigen::MatrixXd adjacencyDesign(int k) {
  if (k < 1) throw InvalidInput("adjacencyDesign: k must be >= 1");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k * (k + 1) / 2, k);
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j <= k; ++j) a.row(pairRow(i, j, k)).segment(i, j - i).setOnes();
  }
  return a;
}

ConstrainedResult solveAdjacentDisplacements(const PairwiseTable& pairwise, int k) {
  const Eigen::MatrixXd a = adjacencyDesign(k);
  if (pairwise.rows() != a.rows()) throw InvalidInput("solveAdjacentDisplacements: expected K(K+1)/2 pairs");
  requireFinite(pairwise, "solveAdjacentDisplacements");

  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() != k) throw std::logic_error("adjacency design matrix is rank deficient");

  ConstrainedResult res;
  res.pairwise = pairwise;
  res.adjacent = zeroShifts(k);
  for (int axis = 0; axis < 2; ++axis) {
    const Eigen::VectorXd b = pairwise.col(axis);
    const Eigen::VectorXd r = qr.solve(b);
    res.adjacent.col(axis) = r;
    res.residual(axis) = (a * r - b).norm();
  }
  res.shifts = zeroShifts(k + 1);
  for (int j = 1; j <= k; ++j) res.shifts.row(j) = res.shifts.row(j - 1) + res.adjacent.row(j - 1);
  return res;
}

ConstrainedResult estimateConstrained(std::span<const Spectrum> stack, const CostWeights& w, int newtonIters) {
  if (stack.size() < 2) throw InvalidInput("estimateConstrained: need K >= 1");
  const int k = static_cast<int>(stack.size()) - 1;
  for (const auto& s : stack) {
    if (s.rows() != w.weights.rows() || s.cols() != w.weights.cols()) {
      throw InvalidInput("estimateConstrained: weights do not match frame size");
    }
  }
  PairwiseTable table(k * (k + 1) / 2, 2);
  for (int i = 0; i < k; ++i) {
    const Spectrum reference = stack[i].conjugate();
    for (int j = i + 1; j <= k; ++j) {
      const PeakEstimate peak = locateCorrelationPeak(w.weights * stack[j] * reference, newtonIters);
      table.row(pairRow(i, j, k)) = peak.shift.transpose();
    }
  }
  return solveAdjacentDisplacements(table, k);
}

}  // namespace shiftbench
