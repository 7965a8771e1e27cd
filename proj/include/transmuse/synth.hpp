#pragma once

// Seeded synthetic multi-node, multi-service traffic with known node cohorts
// and service families.

#include "transmuse/data.hpp"
#include "transmuse/partition.hpp"

#include <cstdint>
#include <vector>

namespace transmuse {

struct ServiceProfile {
  int family = 0;                  // ground-truth service group
  double base_volume = 1.0;        // MB per step
  double diurnal_amplitude = 0.5;  // fraction of base
  double weekly_dip = 0.2;         // fractional drop on weekend days
  double noise_std = 0.05;         // fraction of base
  double phase = 0.0;              // radians
};

/// Shorthand used by configs: `num_services` profiles split into contiguous
/// families. Family f has base `base_volume / family_volume_ratio^f`; services
/// within a family get a small magnitude ramp and phase offset.
struct ProfileTemplate {
  int num_services = 20;
  int num_families = 2;
  double base_volume = 100.0;
  double family_volume_ratio = 10.0;
  double diurnal_amplitude = 0.5;
  double weekly_dip = 0.2;
  double noise_std = 0.05;
  double family_phase_step = 1.5707963267948966;
  double service_phase_step = 0.05;
};

std::vector<ServiceProfile> make_profiles(const ProfileTemplate& tpl);

struct GenConfig {
  int num_nodes = 8;
  int num_cohorts = 2;
  int num_services = 20;
  int num_days = 14;
  int steps_per_day = 1440;
  std::uint64_t seed = 0;
  std::vector<ServiceProfile> service_profiles;  // one per service
  double cohort_scale_jitter = 0.05;
  /// Cohort c multiplies every base volume by `cohort_volume_ratio^c`.
  double cohort_volume_ratio = 3.0;

  void validate() const;
};

struct GroundTruth {
  Partition node_cohort;
  Partition service_groups;
};

struct Generated {
  std::vector<NodeDataset> nodes;
  GroundTruth truth;
};

/// Pure function of `config`. Node i belongs to cohort i mod num_cohorts.
Generated generate(const GenConfig& config);

}  // namespace transmuse
