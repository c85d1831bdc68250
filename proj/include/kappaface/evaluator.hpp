#pragma once

#include <iosfwd>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "kappaface/data_synth.hpp"
#include "kappaface/errors.hpp"

// 1:1 verification metrics over cosine similarities of unit embeddings:
// best-threshold accuracy, TAR at fixed FAR levels, and the ROC curve.
// Pure functions; safe for concurrent calls.

namespace kappaface {

struct VerificationReport {
  double accuracy = 0.0;
  double best_threshold = 0.0;
  std::vector<std::pair<double, double>> tar_at_far;  // (requested FAR level, TAR)
  std::vector<std::pair<double, double>> roc;         // (FAR, TAR), FAR ascending
};

namespace eval {

/// Default FAR levels; 1e-4 is appended only when the negative-pair count
/// can resolve it.
std::vector<double> default_far_levels(std::size_t num_negative);

/// Similarity is the dot product of unit rows. The threshold sweep visits
/// the midpoints between consecutive distinct similarities plus sentinels
/// beyond both ends; a pair is accepted when similarity >= threshold.
/// Accuracy is the sweep maximum of (TP+TN)/total; TAR@FAR is the maximum
/// TAR over thresholds whose FAR does not exceed the level.
VerificationReport evaluate_pairs(const Eigen::Ref<const Eigen::MatrixXd>& embeddings,
                                  const std::vector<Pair>& pairs,
                                  const std::vector<double>& far_levels);

VerificationReport evaluate_pairs(const Eigen::Ref<const Eigen::MatrixXd>& embeddings,
                                  const std::vector<Pair>& pairs);

/// ROC export, TSV far<TAB>tar ascending in FAR.
void write_roc_tsv(std::ostream& out, const VerificationReport& report);

/// Flat key = value report, 6 significant digits.
void write_report(std::ostream& out, const VerificationReport& report);

}  // namespace eval
}  // namespace kappaface
