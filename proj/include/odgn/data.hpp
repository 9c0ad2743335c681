#pragma once

#include "odgn/core.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace odgn {

/// Parameters of the synthetic-city generator. Every field is a config key of
/// the same name in `odgn synth` config files.
struct SynthConfig {
  std::size_t n_regions = 50;
  std::size_t attr_dim = 60;
  double cell_km = 1.0;
  double gravity_g = 1e-4;
  double lambda1 = 0.8;
  double lambda2 = 1.0;
  double lambda3 = 1.5;
  /// Strength s of the multiplicative exp(s * cos(z_i, z_j)) attribute-interaction factor.
  double interaction = 0.3;
  bool poisson_noise = true;
  std::uint64_t seed = 1;
  /// Seed of the attribute-generating weights; shared by all cities of one "world".
  std::uint64_t attribute_seed = 1234;
  std::size_t bus_lines = 6;
  std::size_t rail_lines = 2;
  double pop_log_mean = 7.0;
  double pop_log_sd = 1.0;

  std::size_t grid_side() const;
  void validate() const;
};

/// Loads a city directory (regions.csv, transport_{ngb,bus,rail}.csv, optional od.csv).
City load_city(const std::filesystem::path& dir);

/// Writes `city` in the load_city format; creates the directory if needed.
void save_city(const City& city, const std::filesystem::path& dir);

/// Reads an od.csv against the region ordering of `city`.
ODNetwork load_od(const std::filesystem::path& file, const City& city);

/// Writes off-diagonal cells with positive flow, plus any positive diagonal cells.
/// With `round_flows`, values are rounded to the nearest integer and zero rows dropped.
void save_od(const ODNetwork& net, const City& city, const std::filesystem::path& file, bool round_flows = false);

City synth_city(const SynthConfig& cfg);

/// Noise-free gravity means G * P_i^l1 * P_j^l2 / max(d_ij, 1e-6)^l3 * exp(s * interaction_ij);
/// zero diagonal. `coords` is N x 2 (km), `interaction` is N x N or empty for s = 0.
Matrix gravity_means(const Vector& populations, const Matrix& coords, double g, double l1, double l2, double l3,
                     const Matrix& interaction = {}, double strength = 0.0);

/// Cosine similarity of standardized signed-log attribute vectors, N x N.
Matrix attribute_similarity(const Matrix& attributes);

/// Planar grid coordinates (km) the generator used for region k.
Matrix synth_coordinates(const SynthConfig& cfg);

}  // namespace odgn
