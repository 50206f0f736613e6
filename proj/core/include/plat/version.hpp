#pragma once

namespace plat {

inline constexpr const char* kVersion = "0.1.0";

#ifdef PLAT_GIT_DESC
inline constexpr const char* kBuildId = PLAT_GIT_DESC;
#else
inline constexpr const char* kBuildId = "v0.1.0-unknown";
#endif

}  // namespace plat
