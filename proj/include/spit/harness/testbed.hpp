#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "spit/dynamics.hpp"
#include "spit/harness/config.hpp"

namespace spit::harness {

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit Mersenne Twister
/// draw. Unlike std::uniform_real_distribution this is identical on every
/// standard library.
inline double uniform01(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

/// Splits count into `dims` factors as close to equal as possible, largest first.
std::vector<int> grid_shape(int count, int dims);

/// Jitter-free lattice packing at contact distance 2 * scale: a hexagonal
/// supercell in two dimensions, a simple cubic grid otherwise.
PackingState<double> lattice_packing(int n, int count, double scale);

/// Inflated lattice, seeded uniform jitter in [-jitter, jitter] per coordinate,
/// then Gauss-Seidel and energy-nonexpansive projection rounds until every slack
/// is at least delta. v = 0 and x_prev = x on return.
DynamicsState<double> make_testbed(const RunConfig& cfg);

}  // namespace spit::harness
