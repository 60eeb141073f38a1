#pragma once

#include <cstdio>
#include <string>

namespace srl360 {

/// 17 significant digits; parses back to exactly `v`.
inline std::string fmt_exact(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace srl360
