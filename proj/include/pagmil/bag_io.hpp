#pragma once

#include <iosfwd>
#include <string>

#include "pagmil/synth_data.hpp"

namespace pagmil {

/// Line-oriented text format, documented in docs/FORMATS.md:
///   PAGMIL-BAG 1
///   task/label/grid/dim/patches/thumb header lines
///   P <row> <col> <f0> ... <f_{d-1}>   one line per patch
///   T <3*S values>                     one line per thumbnail row
///   M <tag per patch>                  ground truth, evaluation only
/// Doubles are printed with %.17g so files round-trip bit-exactly.
void serialize_bag(const Bag& bag, std::ostream& os);
Bag parse_bag(std::istream& is);

void write_bag_file(const Bag& bag, const std::string& path);
Bag read_bag_file(const std::string& path);

} // namespace pagmil
