#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

#include "cpred/stft.hpp"

namespace cpred {

inline constexpr double kDefaultMvdrLoading = 1e-4;

/// One P x P Hermitian matrix per frequency bin.
using CovarianceTensor = std::vector<Eigen::MatrixXcd>;

enum class CovarianceVariant {
  dereverb_residual,  // non-target = dereverberated output - estimate; beamform the dereverberated output
  mixture_residual,   // non-target = mixture - estimate; beamform the mixture
};

struct CovarianceSet {
  CovarianceTensor target;
  CovarianceTensor nontarget;
  CovarianceVariant variant = CovarianceVariant::dereverb_residual;
};

/// Per-bin diagnostic attached to steering vectors and beamformers.
enum class BinStatus {
  ok,
  degenerate,       // zero target covariance: zero steering vector and zero weights
  isotropic,        // target covariance proportional to identity: steering direction arbitrary
  no_interference,  // zero non-target covariance: identity used in its place
};

struct SteeringVectors {
  Eigen::MatrixXcd vectors;  // [F, P], unit norm per row (zero when degenerate)
  std::vector<BinStatus> status;
};

struct Beamformer {
  Eigen::MatrixXcd weights;   // [F, P]
  Eigen::MatrixXcd steering;  // [F, P]
  std::size_t ref_channel = 0;
  std::vector<BinStatus> status;
};

/// Phi(f) = sum_t s(t,f) s(t,f)^H, unnormalized.
CovarianceTensor spatial_covariance(const Spectrogram& signal);

/// dereverb_residual: dereverb - estimate. mixture_residual: mixture - estimate.
Spectrogram nontarget_signal(const Spectrogram& dereverb, const Spectrogram& estimate, const Spectrogram& mixture,
                             CovarianceVariant variant);

CovarianceSet covariance_set(const Spectrogram& estimate, const Spectrogram& nontarget, CovarianceVariant variant);

/// Principal eigenvector of each target covariance by power iteration (at most 100 iterations,
/// stopping once the update changes by less than 1e-10). The reference-channel component is
/// rotated to be real and non-negative.
SteeringVectors steering_vector(const CovarianceTensor& target_cov, std::size_t ref_channel = 0);

/// w = Phi_n^-1 d / (d^H Phi_n^-1 d) * conj(d_q), with Phi_n loaded by loading * trace / P.
/// Satisfies w^H d = d_q for every non-degenerate bin.
Beamformer mvdr_weights(const SteeringVectors& steering, const CovarianceTensor& nontarget_cov,
                        std::size_t ref_channel = 0, double loading = kDefaultMvdrLoading);

/// out(t,f) = w(f)^H s(t,f).
Spectrogram apply_beamformer(const Beamformer& bf, const Spectrogram& signal);

}  // namespace cpred
