#pragma once

#include <cstdint>
#include <vector>

#include "klcbl/data.hpp"

namespace klcbl {

/// Labelled incident-report-like sentences: each text mixes words from its
/// class's vocabulary with words shared by all classes. Labels cycle 0,1,2 so
/// classes are balanced; ids are "s0000", "s0001", ...
std::vector<RawExample> make_synthetic_dataset(std::size_t n, std::uint64_t seed);

}  // namespace klcbl
