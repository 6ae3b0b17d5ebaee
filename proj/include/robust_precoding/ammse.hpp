#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "robust_precoding/channel_model.hpp"
#include "robust_precoding/types.hpp"

namespace rbp {

/// Linear precoder: column k is the beamformer p_k of user k.
struct Precoder {
  CMatrix columns;

  Precoder() = default;
  explicit Precoder(CMatrix p) : columns(std::move(p)) {}

  int num_users() const { return static_cast<int>(columns.cols()); }
  int num_antennas() const { return static_cast<int>(columns.rows()); }
  auto beam(int k) const { return columns.col(k); }

  /// sum_k ||p_k||^2
  double total_power() const { return columns.squaredNorm(); }
  Precoder scaled(double c) const { return Precoder(columns * c); }
};

/// Per-user Gram matrices Q_k = p_k p_k^H (or their relaxed counterparts) and
/// their sum Q.
struct GramSet {
  std::vector<CMatrix> per_user;
  CMatrix sum;

  static GramSet from_precoder(const Precoder& precoder);
  /// Validates Hermitian PSD structure (within `tol_psd`) and forms the sum.
  static GramSet from_matrices(std::vector<CMatrix> per_user, double tol_psd = 1e-9);

  int num_users() const { return static_cast<int>(per_user.size()); }
  double total_power() const { return sum.trace().real(); }
};

/// Inputs of E{(x^H A x)(x^H B x)} for x ~ CN(mean, cov_scale * I).
struct MomentInputs {
  CVector mean;
  double cov_scale = 0.0;
  CMatrix a;
  CMatrix b;
};

/// Closed-form AMMSE quantities of one user.
struct AmmseBreakdown {
  double r_bar = 0.0;  ///< E{R_k}
  double t_bar = 0.0;  ///< E{T_k}
  double a = 0.0;
  double b = 0.0;
  std::optional<double> alpha;  ///< absent when r_bar == 0
  double value_order1 = 0.0;
  double value_order2 = 0.0;
};

/// (M + M^H) / 2, with a warning when the input is visibly non-Hermitian.
CMatrix hermitian_part(const CMatrix& m, const char* what);

/// 1 - R_k / T_k for a known channel h of user k.
double exact_mmse(const CVector& h, const Precoder& precoder, int k, double noise_var);

/// MMSE equaliser g_k = p_k^H h / T_k.
Complex mmse_receiver_gain(const CVector& h, const Precoder& precoder, int k, double noise_var);

/// MSE |g|^2 T - 2 Re(g h^H p_k) + 1 of an arbitrary scalar equaliser g.
double receiver_mse(const CVector& h, const Precoder& precoder, int k, double noise_var, Complex g);

/// AMMSE when the receiver is designed from the transmitter's CSI only.
double ignorant_ammse(const ChannelInstance& instance, const Precoder& precoder, int k);

/// E{(x^H A x)(x^H B x)} for a circularly-symmetric complex Gaussian x.
double quartic_moment(const MomentInputs& inputs);

/// E{R_k} and E{T_k}.
double expected_R(const ChannelInstance& instance, const GramSet& gram, int k);
double expected_T(const ChannelInstance& instance, const GramSet& gram, int k);

/// E{R_k T_k} and E{T_k^2} in closed form.
double expected_RT(const ChannelInstance& instance, const GramSet& gram, int k);
double expected_T2(const ChannelInstance& instance, const GramSet& gram, int k);

AmmseBreakdown ammse_breakdown(const ChannelInstance& instance, const GramSet& gram, int k);
AmmseBreakdown ammse_breakdown(const ChannelInstance& instance, const Precoder& precoder, int k);

/// Second-order AMMSE assembled from covariance/variance of (R_k, T_k), with
/// E{R_k T_k} and E{T_k^2} evaluated through quartic_moment.
double ammse_order2_from_moments(const ChannelInstance& instance, const GramSet& gram, int k);

/// Sample mean and standard error of the MMSE of user k over `count` channel
/// draws. Deterministic in `seed`, independent of `workers`.
McEstimate mc_ammse(const ChannelInstance& instance, const Precoder& precoder, int k,
                    std::size_t count, std::uint64_t seed, int workers = 1);

/// mc_ammse for every user over the same channel draws.
std::vector<McEstimate> mc_ammse_all(const ChannelInstance& instance, const Precoder& precoder,
                                     std::size_t count, std::uint64_t seed, int workers = 1);

/// Receiver a CSIT-only design forwards to user k: p_k^H h_hat_k / T_bar_k.
/// Its average MSE is ignorant_ammse.
Complex ignorant_receiver_gain(const ChannelInstance& instance, const Precoder& precoder, int k);

/// Sample mean and standard error of each user's MSE when user k applies the
/// fixed receiver `receivers[k]` instead of its MMSE receiver.
std::vector<McEstimate> mc_fixed_receiver_mse_all(const ChannelInstance& instance, const Precoder& precoder,
                                                  const std::vector<Complex>& receivers, std::size_t count,
                                                  std::uint64_t seed, int workers = 1);

/// -log2(ammse), a lower bound on the average rate in bits per channel use.
double rate_lower_bound(double ammse);

/// SINR corresponding to an MMSE value.
double sinr_from_mmse(double mmse);

void to_json(nlohmann::json& j, const AmmseBreakdown& breakdown);

}  // namespace rbp
