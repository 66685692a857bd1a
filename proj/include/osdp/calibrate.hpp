#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "osdp/cost.hpp"
#include "osdp/errors.hpp"
#include "osdp/model.hpp"
#include "osdp/split.hpp"

namespace osdp {

struct MeasurementRecord {
  std::string operator_id;
  Decision decision;
  std::int64_t batch_size = 1;
  double measured_time_s = 0.0;

  bool operator==(const MeasurementRecord&) const = default;
};

inline void validate(const MeasurementRecord& rec) {
  if (rec.measured_time_s <= 0.0) {
    throw ValidationError("measurement for operator '" + rec.operator_id +
                          "': measured_time_s must be > 0");
  }
  if (rec.batch_size < 1) {
    throw ValidationError("measurement for operator '" + rec.operator_id +
                          "': batch_size must be >= 1");
  }
  if (rec.decision.slice_granularity < 1 || rec.decision.zdp_slices < 0 ||
      rec.decision.zdp_slices > rec.decision.slice_granularity) {
    throw ValidationError("measurement for operator '" + rec.operator_id +
                          "': decision out of range");
  }
}

inline std::vector<MeasurementRecord> measurements_from_json(const nlohmann::json& j) {
  if (!j.is_array()) {
    throw ParseError("measurements: top level must be an array");
  }
  std::vector<MeasurementRecord> records;
  for (const auto& jr : j) {
    const std::string ctx = "measurements[" + std::to_string(records.size()) + "]";
    MeasurementRecord rec;
    rec.operator_id = detail::field_as<std::string>(jr, "operator_id", ctx);
    rec.decision.slice_granularity = detail::field_as<std::int64_t>(jr, "s", ctx);
    rec.decision.zdp_slices = detail::field_as<std::int64_t>(jr, "k", ctx);
    rec.batch_size = detail::field_as<std::int64_t>(jr, "batch_size", ctx);
    rec.measured_time_s = detail::field_as<double>(jr, "measured_time_s", ctx);
    validate(rec);
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::vector<MeasurementRecord> parse_measurements(const std::string& text) {
  return measurements_from_json(detail::parse_json(text, "measurements"));
}

inline nlohmann::json to_json(const std::vector<MeasurementRecord>& records) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& rec : records) {
    j.push_back({{"operator_id", rec.operator_id},
                 {"s", rec.decision.slice_granularity},
                 {"k", rec.decision.zdp_slices},
                 {"batch_size", rec.batch_size},
                 {"measured_time_s", rec.measured_time_s}});
  }
  return j;
}

inline std::string serialize(const std::vector<MeasurementRecord>& records) {
  return to_json(records).dump(2);
}

namespace detail {

// Lawson-Hanson non-negative least squares. The inner unconstrained solves
// use a rank-revealing decomposition so proportional columns (alpha and
// beta are indistinguishable when only one operator size was profiled) get
// the minimum-norm split instead of blowing up.
inline Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& y) {
  const Eigen::Index n = A.cols();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  const double tol = 1e-12 * std::max(1.0, (A.transpose() * y).cwiseAbs().maxCoeff());

  auto solve_passive = [&](const std::vector<bool>& set) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (set[static_cast<std::size_t>(i)]) idx.push_back(i);
    }
    Eigen::MatrixXd Ap(A.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) Ap.col(static_cast<Eigen::Index>(c)) = A.col(idx[c]);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Ap);
    Eigen::VectorXd zp = cod.solve(y);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
    for (std::size_t c = 0; c < idx.size(); ++c) z[idx[c]] = zp[static_cast<Eigen::Index>(c)];
    return z;
  };

  const int max_iter = 30 * static_cast<int>(n) + 30;
  for (int iter = 0; iter < max_iter; ++iter) {
    const Eigen::VectorXd w = A.transpose() * (y - A * x);
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!passive[static_cast<std::size_t>(i)] && w[i] > best_w) {
        best = i;
        best_w = w[i];
      }
    }
    if (best < 0) break;  // KKT satisfied
    passive[static_cast<std::size_t>(best)] = true;

    Eigen::VectorXd z = solve_passive(passive);
    while (true) {
      bool ok = true;
      double step = 1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (passive[static_cast<std::size_t>(i)] && z[i] < -tol) {
          ok = false;
          step = std::min(step, x[i] / (x[i] - z[i]));
        }
      }
      if (ok) {
        x = z.cwiseMax(0.0);
        break;
      }
      x += step * (z - x);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (passive[static_cast<std::size_t>(i)] && x[i] <= tol) {
          passive[static_cast<std::size_t>(i)] = false;
          x[i] = 0.0;
        }
      }
      z = solve_passive(passive);
    }
  }
  return x.cwiseMax(0.0);
}

}  // namespace detail

// Least-squares fit of (alpha, beta, gamma per operator) against measured
// step times, constrained to non-negative coefficients.
//
// alpha and beta only ever appear through one linear combination per
// operator size, so with a single profiled size they cannot be separated;
// what matters is that every *prediction* the coefficients will be used for
// is pinned down. The fit therefore checks, per measured operator, that its
// communication term and its gamma both lie in the row space of the design
// matrix, and reports which operator lacks variation otherwise.
inline Coefficients fit_coefficients(const std::vector<MeasurementRecord>& records,
                                     const ModelSpec& model, std::int64_t n_workers) {
  if (n_workers < 1) {
    throw ValidationError("fit_coefficients: n_workers must be >= 1");
  }
  if (records.empty()) {
    throw UnderdeterminedFitError("fit_coefficients: no measurements given");
  }

  // Fitted operators in model order.
  std::vector<const OperatorSpec*> ops;
  for (const auto& rec : records) {
    validate(rec);
    const OperatorSpec* op = model.find(rec.operator_id);
    if (op == nullptr) {
      throw ValidationError("measurement references unknown operator '" + rec.operator_id + "'");
    }
  }
  for (const auto& op : model.operators) {
    for (const auto& rec : records) {
      if (rec.operator_id == op.id) {
        ops.push_back(&op);
        break;
      }
    }
  }

  auto op_index = [&](const std::string& id) {
    for (std::size_t i = 0; i < ops.size(); ++i) {
      if (ops[i]->id == id) return i;
    }
    return ops.size();
  };

  const Eigen::Index rows = static_cast<Eigen::Index>(records.size());
  const Eigen::Index cols = 2 + static_cast<Eigen::Index>(ops.size());
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(rows, cols);
  Eigen::VectorXd observed(rows);
  const double steps = static_cast<double>(n_workers - 1);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& rec = records[static_cast<std::size_t>(r)];
    const OperatorSpec& op = *ops[op_index(rec.operator_id)];
    const double mult = comm_multiplier(rec.decision);
    design(r, 0) = mult * steps;
    design(r, 1) = mult * steps * op.weight_bytes() / static_cast<double>(n_workers);
    design(r, 2 + static_cast<Eigen::Index>(op_index(rec.operator_id))) =
        static_cast<double>(rec.batch_size);
    observed[r] = rec.measured_time_s;
  }

  // Column scaling for conditioning; functionals move to the same space.
  Eigen::VectorXd scale(cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    const double norm = design.col(c).norm();
    scale[c] = norm > 0.0 ? norm : 1.0;
  }
  Eigen::MatrixXd scaled = design * scale.cwiseInverse().asDiagonal();

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled, Eigen::ComputeThinV);
  const double rank_tol =
      1e-10 * std::max(1.0, svd.singularValues().size() > 0 ? svd.singularValues()[0] : 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
    if (svd.singularValues()[i] > rank_tol) ++rank;
  }
  const Eigen::MatrixXd row_basis = svd.matrixV().leftCols(rank);

  auto identified = [&](Eigen::VectorXd functional) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (design.col(c).norm() == 0.0) {
        if (functional[c] != 0.0) return false;  // never-observed coefficient
        continue;
      }
      functional[c] *= scale[c];
    }
    const double norm = functional.norm();
    if (norm == 0.0) return true;
    const Eigen::VectorXd residue = functional - row_basis * (row_basis.transpose() * functional);
    return residue.norm() <= 1e-8 * norm;
  };

  for (std::size_t i = 0; i < ops.size(); ++i) {
    Eigen::VectorXd comm = Eigen::VectorXd::Zero(cols);
    comm[0] = steps;
    comm[1] = steps * ops[i]->weight_bytes() / static_cast<double>(n_workers);
    Eigen::VectorXd gamma = Eigen::VectorXd::Zero(cols);
    gamma[2 + static_cast<Eigen::Index>(i)] = 1.0;
    if (!identified(comm) || !identified(gamma)) {
      throw UnderdeterminedFitError(
          "fit_coefficients: measurements for operator '" + ops[i]->id +
          "' do not vary enough to separate communication from computation; "
          "profile at least two distinct decisions or batch sizes for it");
    }
  }

  const Eigen::VectorXd solution_scaled = detail::nnls(scaled, observed);
  const Eigen::VectorXd solution = scale.cwiseInverse().asDiagonal() * solution_scaled;

  Coefficients coeffs;
  coeffs.alpha_s = std::max(0.0, solution[0]);
  coeffs.beta_s_per_byte = std::max(0.0, solution[1]);
  for (std::size_t i = 0; i < ops.size(); ++i) {
    coeffs.gamma_per_op[ops[i]->id] =
        std::max(0.0, solution[2 + static_cast<Eigen::Index>(i)]);
  }
  return coeffs;
}

}  // namespace osdp
