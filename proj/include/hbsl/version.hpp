#pragma once

#ifndef HBSL_GIT_REVISION
#define HBSL_GIT_REVISION "unknown"
#endif

namespace hbsl {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kGitRevision = HBSL_GIT_REVISION;

}  // namespace hbsl
