#include "cpred/beamform.hpp"

#include <cmath>

namespace cpred {

CovarianceTensor spatial_covariance(const Spectrogram& signal) {
  const auto p = static_cast<Eigen::Index>(signal.channels());
  CovarianceTensor out(signal.bins(), Eigen::MatrixXcd::Zero(p, p));
  Eigen::VectorXcd s(p);
  for (std::size_t f = 0; f < signal.bins(); ++f) {
    auto& phi = out[f];
    for (std::size_t t = 0; t < signal.frames(); ++t) {
      for (Eigen::Index c = 0; c < p; ++c) s(c) = signal.at(static_cast<std::size_t>(c), t, f);
      phi.noalias() += s * s.adjoint();
    }
    // Exact Hermitian symmetry regardless of summation order.
    phi = (0.5 * (phi + phi.adjoint())).eval();
  }
  return out;
}

Spectrogram nontarget_signal(const Spectrogram& dereverb, const Spectrogram& estimate, const Spectrogram& mixture,
                             CovarianceVariant variant) {
  const Spectrogram& base = variant == CovarianceVariant::dereverb_residual ? dereverb : mixture;
  if (!base.same_shape(estimate)) throw data_error("non-target signal: shape mismatch");
  return base - estimate;
}

CovarianceSet covariance_set(const Spectrogram& estimate, const Spectrogram& nontarget, CovarianceVariant variant) {
  if (!estimate.same_shape(nontarget)) throw data_error("covariance set: shape mismatch");
  return {spatial_covariance(estimate), spatial_covariance(nontarget), variant};
}

SteeringVectors steering_vector(const CovarianceTensor& target_cov, std::size_t ref_channel) {
  const auto bins = static_cast<Eigen::Index>(target_cov.size());
  const Eigen::Index p = target_cov.empty() ? 0 : target_cov.front().rows();
  if (!target_cov.empty() && static_cast<Eigen::Index>(ref_channel) >= p) {
    throw data_error("steering vector: reference channel out of range");
  }
  SteeringVectors out{Eigen::MatrixXcd::Zero(bins, p), std::vector<BinStatus>(target_cov.size(), BinStatus::ok)};
  for (Eigen::Index f = 0; f < bins; ++f) {
    const auto& phi = target_cov[static_cast<std::size_t>(f)];
    if (phi.rows() != p || phi.cols() != p) throw data_error("steering vector: covariance shape mismatch");
    const double trace = phi.diagonal().real().sum();
    if (!(trace > 0.0)) {
      out.status[static_cast<std::size_t>(f)] = BinStatus::degenerate;
      continue;
    }
    if (p > 1) {
      const Eigen::MatrixXcd spread = phi - (trace / static_cast<double>(p)) * Eigen::MatrixXcd::Identity(p, p);
      if (spread.norm() <= 1e-12 * trace) out.status[static_cast<std::size_t>(f)] = BinStatus::isotropic;
    }

    Eigen::Index start = 0;
    phi.diagonal().real().maxCoeff(&start);
    Eigen::VectorXcd v = phi.col(start).normalized();
    for (int it = 0; it < 100; ++it) {
      Eigen::VectorXcd next = phi * v;
      const double n = next.norm();
      if (n == 0.0) break;
      next /= n;
      const double change = (next - v).norm();
      v = next;
      if (change < 1e-10) break;
    }
    const cdouble ref = v(static_cast<Eigen::Index>(ref_channel));
    if (std::abs(ref) > 0.0) {
      v *= std::conj(ref) / std::abs(ref);
      v(static_cast<Eigen::Index>(ref_channel)) = std::abs(ref);
    }
    out.vectors.row(f) = v.transpose();
  }
  return out;
}

Beamformer mvdr_weights(const SteeringVectors& steering, const CovarianceTensor& nontarget_cov, std::size_t ref_channel,
                        double loading) {
  const auto bins = steering.vectors.rows();
  const auto p = steering.vectors.cols();
  if (static_cast<Eigen::Index>(nontarget_cov.size()) != bins) throw data_error("mvdr: bin count mismatch");
  if (static_cast<Eigen::Index>(ref_channel) >= p) throw data_error("mvdr: reference channel out of range");
  if (loading < 0.0) throw config_error("mvdr: loading must be non-negative");

  Beamformer bf{Eigen::MatrixXcd::Zero(bins, p), steering.vectors, ref_channel, steering.status};
  bf.status.resize(static_cast<std::size_t>(bins), BinStatus::ok);
  for (Eigen::Index f = 0; f < bins; ++f) {
    const auto fi = static_cast<std::size_t>(f);
    const Eigen::VectorXcd d = steering.vectors.row(f).transpose();
    if (bf.status[fi] == BinStatus::degenerate || d.squaredNorm() == 0.0) {
      bf.status[fi] = BinStatus::degenerate;
      continue;
    }
    Eigen::MatrixXcd phi = nontarget_cov[fi];
    if (phi.rows() != p || phi.cols() != p) throw data_error("mvdr: covariance shape mismatch");
    const double trace = phi.diagonal().real().sum();
    if (!(trace > 0.0)) {
      phi = Eigen::MatrixXcd::Identity(p, p);
      bf.status[fi] = BinStatus::no_interference;
    } else {
      phi.diagonal().array() += loading * trace / static_cast<double>(p);
    }
    Eigen::LLT<Eigen::MatrixXcd> llt(phi);
    if (llt.info() != Eigen::Success) throw numerical_error("mvdr: singular non-target covariance");
    const Eigen::MatrixXcd l = llt.matrixL();
    if (l.diagonal().real().cwiseAbs2().minCoeff() <= 1e-14 * phi.diagonal().real().maxCoeff()) {
      throw numerical_error("mvdr: singular non-target covariance");
    }
    const Eigen::VectorXcd num = llt.solve(d);
    const cdouble den = d.dot(num);  // d^H Phi^-1 d
    bf.weights.row(f) = (num / den * std::conj(d(static_cast<Eigen::Index>(ref_channel)))).transpose();
  }
  return bf;
}

Spectrogram apply_beamformer(const Beamformer& bf, const Spectrogram& signal) {
  if (static_cast<Eigen::Index>(signal.channels()) != bf.weights.cols() ||
      static_cast<Eigen::Index>(signal.bins()) != bf.weights.rows()) {
    throw data_error("beamformer: shape mismatch");
  }
  Spectrogram out = signal.zeros_like(1);
  for (std::size_t t = 0; t < signal.frames(); ++t) {
    for (std::size_t f = 0; f < signal.bins(); ++f) {
      cdouble acc = 0.0;
      for (std::size_t c = 0; c < signal.channels(); ++c) {
        acc += std::conj(bf.weights(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(c))) * signal.at(c, t, f);
      }
      out.at(0, t, f) = acc;
    }
  }
  return out;
}

}  // namespace cpred
