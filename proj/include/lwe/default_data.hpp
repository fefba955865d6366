#pragma once

namespace lwe {

// Compiled-in copies of the files under data/, so the library works without
// an install prefix.  data/ remains the source of truth; the build embeds it.
extern const char* const kDefaultStoplist;
extern const char* const kDefaultStemRules;

}  // namespace lwe
