#pragma once

#include <iostream>
#include <string>

namespace curriseg {

inline void log_warn(const std::string& msg) {
    std::cerr << "[warn] " << msg << "\n";
}

inline void log_info(const std::string& msg) {
    std::cerr << "[info] " << msg << "\n";
}

}  // namespace curriseg
