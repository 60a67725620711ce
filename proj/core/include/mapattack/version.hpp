#pragma once

namespace mapattack {

inline constexpr const char* kVersion = "0.1.0";

/// Schema version stamped into scene manifests and run artifacts.
inline constexpr int kSchemaVersion = 1;

}  // namespace mapattack
