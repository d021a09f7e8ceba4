#pragma once

#include <string>
#include <string_view>

namespace kpgen {

/// Porter (1980) suffix-stripping stemmer, following Martin Porter's reference
/// C implementation. Input is expected lowercased; words of length <= 2 are
/// returned unchanged.
std::string porter_stem(std::string_view word);

}  // namespace kpgen
