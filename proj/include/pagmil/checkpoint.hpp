#pragma once

#include <iosfwd>
#include <string>

#include "pagmil/mil_core.hpp"

namespace pagmil {

/// Versioned binary checkpoint (documented in docs/FORMATS.md): magic +
/// version header, model dimensions, then each parameter tensor as shape +
/// row-major little-endian doubles, then heads and the prompt registry.
/// save(load(x)) is byte-identical to x.
void save_checkpoint(const ModelState& model, std::ostream& os);
ModelState load_checkpoint(std::istream& is);

void write_checkpoint_file(const ModelState& model, const std::string& path);
ModelState read_checkpoint_file(const std::string& path);

} // namespace pagmil
