#include "transmuse/synth.hpp"

#include "transmuse/errors.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace transmuse {

std::vector<ServiceProfile> make_profiles(const ProfileTemplate& tpl) {
  if (tpl.num_services < 1 || tpl.num_families < 1 || tpl.num_families > tpl.num_services)
    throw InvalidArgument("profile template needs 1 <= num_families <= num_services");
  std::vector<ServiceProfile> out;
  for (int s = 0; s < tpl.num_services; ++s) {
    const int family = s * tpl.num_families / tpl.num_services;
    const int first = (family * tpl.num_services + tpl.num_families - 1) / tpl.num_families;
    const int within = s - first;
    ServiceProfile p;
    p.family = family;
    p.base_volume = tpl.base_volume / std::pow(tpl.family_volume_ratio, family) * (1.0 + 0.1 * within);
    p.diurnal_amplitude = tpl.diurnal_amplitude;
    p.weekly_dip = tpl.weekly_dip;
    p.noise_std = tpl.noise_std;
    p.phase = family * tpl.family_phase_step + within * tpl.service_phase_step;
    out.push_back(p);
  }
  return out;
}

void GenConfig::validate() const {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (num_nodes < 1 || num_cohorts < 1 || num_cohorts > num_nodes)
    throw InvalidArgument("gen: need 1 <= num_cohorts <= num_nodes");
  if (num_services < 1 || num_days < 1 || steps_per_day < 1)
    throw InvalidArgument("gen: num_services, num_days and steps_per_day must be positive");
  if (service_profiles.size() != static_cast<std::size_t>(num_services))
    throw InvalidArgument("gen: expected one service profile per service");
  if (!in_unit(cohort_scale_jitter)) throw InvalidArgument("gen: cohort_scale_jitter must lie in [0,1]");
  if (!(cohort_volume_ratio > 0.0)) throw InvalidArgument("gen: cohort_volume_ratio must be positive");
  for (const auto& p : service_profiles) {
    if (!(p.base_volume > 0.0)) throw InvalidArgument("gen: base_volume must be positive");
    if (!in_unit(p.diurnal_amplitude) || !in_unit(p.weekly_dip) || !in_unit(p.noise_std))
      throw InvalidArgument("gen: profile fractions must lie in [0,1]");
    if (p.family < 0) throw InvalidArgument("gen: negative service family");
  }
}

Generated generate(const GenConfig& config) {
  config.validate();
  const auto length = static_cast<std::size_t>(config.num_days) * config.steps_per_day;
  const double two_pi = 2.0 * std::numbers::pi;

  Generated out;
  std::vector<int> cohorts;
  for (int n = 0; n < config.num_nodes; ++n) {
    const int cohort = n % config.num_cohorts;
    cohorts.push_back(cohort);
    const double cohort_mult = std::pow(config.cohort_volume_ratio, cohort);

    // Independent substream per node so nodes could be generated in any order.
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(n), 0x7e5eedu};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> jitter(1.0 - config.cohort_scale_jitter, 1.0 + config.cohort_scale_jitter);
    const double scale = config.cohort_scale_jitter > 0.0 ? jitter(rng) : 1.0;
    std::normal_distribution<double> gauss(0.0, 1.0);

    char id[32];
    std::snprintf(id, sizeof id, "node%02d", n);
    NodeDataset d;
    d.node_id = id;
    d.length = length;
    for (int k = 0; k < config.num_services; ++k) d.series.push_back({k, std::vector<double>(length)});

    for (std::size_t t = 0; t < length; ++t) {
      const auto day = t / static_cast<std::size_t>(config.steps_per_day);
      const double weekend = (day % 7 == 5 || day % 7 == 6) ? 1.0 : 0.0;
      const double angle = two_pi * static_cast<double>(t) / config.steps_per_day;
      for (int k = 0; k < config.num_services; ++k) {
        const auto& p = config.service_profiles[k];
        const double base = p.base_volume * cohort_mult;
        double v = base * scale * (1.0 + p.diurnal_amplitude * std::sin(angle + p.phase)) *
                   (1.0 - p.weekly_dip * weekend);
        if (p.noise_std > 0.0) v += gauss(rng) * p.noise_std * base;
        d.series[k].values[t] = std::max(v, 0.0);
      }
    }
    out.nodes.push_back(std::move(d));
  }

  std::vector<int> families;
  for (const auto& p : config.service_profiles) families.push_back(p.family);
  out.truth = {Partition(cohorts), Partition(families)};
  return out;
}

}  // namespace transmuse
