#pragma once

#include <cstdint>

#include "tubekit/geometry.hpp"

namespace tubekit {

/// Relative error of an analytic/finite-difference gradient pair:
/// |a - f| / max(|a|, |f|, kGradCheckFloor). The floor turns the comparison
/// absolute for near-zero gradients, where central differences of a large
/// summed loss are dominated by rounding noise.
inline constexpr double kGradCheckFloor = 1e-2;

struct GradCheckReport {
  double max_rel_err = 0.0;
  int probes = 0;
};

/// Compare analytic gradients of the center focal loss against central finite
/// differences on randomly generated (gt, pred) map pairs. gt heatmaps are
/// realistic encoder outputs (gaussian bumps, exact-1 centers); pred values
/// are sampled inside (0, 1) away from the clamp band edges, so every probed
/// cell is smooth.
GradCheckReport gradcheck_center_loss(std::uint64_t seed, const GridSpec& spec,
                                      int num_maps, int probes_per_map,
                                      double alpha = 2.0, double beta = 4.0);

/// Same for the movement loss. Probe cells whose L1 argument is within 1e-6
/// of zero (kinks) are re-drawn.
GradCheckReport gradcheck_movement_loss(std::uint64_t seed, const GridSpec& spec,
                                        int num_maps, int probes_per_map);

/// Same for the box-size loss.
GradCheckReport gradcheck_box_loss(std::uint64_t seed, const GridSpec& spec,
                                   int num_maps, int probes_per_map,
                                   bool per_frame_normalization = false);

}  // namespace tubekit
