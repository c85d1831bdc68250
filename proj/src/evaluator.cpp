#include "kappaface/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace kappaface::eval {

std::vector<double> default_far_levels(std::size_t num_negative) {
  std::vector<double> levels = {1e-1, 1e-2, 1e-3};
  if (num_negative >= 10000) levels.push_back(1e-4);
  return levels;
}

VerificationReport evaluate_pairs(const Eigen::Ref<const Eigen::MatrixXd>& embeddings,
                                  const std::vector<Pair>& pairs,
                                  const std::vector<double>& far_levels) {
  std::vector<double> pos;
  std::vector<double> neg;
  for (const Pair& p : pairs) {
    if (static_cast<Eigen::Index>(p.i) >= embeddings.rows() ||
        static_cast<Eigen::Index>(p.j) >= embeddings.rows()) {
      raise(ErrorKind::IndexOutOfRange, "pair index exceeds embedding count");
    }
    const double sim = embeddings.row(p.i).dot(embeddings.row(p.j));
    (p.same_class ? pos : neg).push_back(sim);
  }
  if (pos.empty() || neg.empty()) {
    raise(ErrorKind::DegeneratePairs, "need at least one positive and one negative pair");
  }
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());

  // Candidate thresholds: midpoints between consecutive distinct observed
  // similarities, plus sentinels past both ends.
  std::vector<double> sims;
  sims.reserve(pos.size() + neg.size());
  sims.insert(sims.end(), pos.begin(), pos.end());
  sims.insert(sims.end(), neg.begin(), neg.end());
  std::sort(sims.begin(), sims.end());
  sims.erase(std::unique(sims.begin(), sims.end()), sims.end());

  std::vector<double> thresholds;
  thresholds.reserve(sims.size() + 1);
  thresholds.push_back(sims.front() - 1.0);
  for (std::size_t k = 0; k + 1 < sims.size(); ++k) {
    thresholds.push_back(0.5 * (sims[k] + sims[k + 1]));
  }
  thresholds.push_back(sims.back() + 1.0);

  const double num_pos = static_cast<double>(pos.size());
  const double num_neg = static_cast<double>(neg.size());
  auto count_at_or_above = [](const std::vector<double>& sorted, double threshold) {
    return static_cast<double>(sorted.end() -
                               std::lower_bound(sorted.begin(), sorted.end(), threshold));
  };

  VerificationReport report;
  report.accuracy = -1.0;
  for (double threshold : thresholds) {
    const double tp = count_at_or_above(pos, threshold);
    const double fp = count_at_or_above(neg, threshold);
    const double tar = tp / num_pos;
    const double far = fp / num_neg;
    const double accuracy = (tp + (num_neg - fp)) / (num_pos + num_neg);
    if (accuracy > report.accuracy) {
      report.accuracy = accuracy;
      report.best_threshold = threshold;
    }
    report.roc.emplace_back(far, tar);
  }

  // Thresholds descend in FAR as they ascend in value; out points were
  // pushed in ascending threshold order, so reverse for ascending FAR and
  // keep the best TAR per distinct FAR.
  std::reverse(report.roc.begin(), report.roc.end());
  std::vector<std::pair<double, double>> dedup;
  for (const auto& [far, tar] : report.roc) {
    if (!dedup.empty() && dedup.back().first == far) {
      dedup.back().second = std::max(dedup.back().second, tar);
    } else {
      dedup.emplace_back(far, tar);
    }
  }
  report.roc = std::move(dedup);

  for (double level : far_levels) {
    double best_tar = 0.0;
    for (const auto& [far, tar] : report.roc) {
      if (far <= level) best_tar = std::max(best_tar, tar);
    }
    report.tar_at_far.emplace_back(level, best_tar);
  }
  return report;
}

VerificationReport evaluate_pairs(const Eigen::Ref<const Eigen::MatrixXd>& embeddings,
                                  const std::vector<Pair>& pairs) {
  std::size_t num_neg = 0;
  for (const Pair& p : pairs) num_neg += p.same_class ? 0 : 1;
  return evaluate_pairs(embeddings, pairs, default_far_levels(num_neg));
}

void write_roc_tsv(std::ostream& out, const VerificationReport& report) {
  char buf[96];
  for (const auto& [far, tar] : report.roc) {
    std::snprintf(buf, sizeof buf, "%.6g\t%.6g\n", far, tar);
    out << buf;
  }
}

void write_report(std::ostream& out, const VerificationReport& report) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "accuracy = %.6g\n", report.accuracy);
  out << buf;
  std::snprintf(buf, sizeof buf, "best_threshold = %.6g\n", report.best_threshold);
  out << buf;
  for (const auto& [level, tar] : report.tar_at_far) {
    std::snprintf(buf, sizeof buf, "tar_at_far_%g = %.6g\n", level, tar);
    out << buf;
  }
}

}  // namespace kappaface::eval
