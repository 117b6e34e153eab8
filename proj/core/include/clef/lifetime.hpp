#pragma once

// The four-level lifetime ordering shared by escape analysis and target
// memory-region maps: Stack < Arena < Heap < Static.

#include <string_view>

namespace clef {

enum class LifetimeLevel : int {
    Stack = 0,
    Arena = 1,
    Heap = 2,
    Static = 3,
};

inline std::string_view lifetime_name(LifetimeLevel l) {
    switch (l) {
        case LifetimeLevel::Stack: return "stack";
        case LifetimeLevel::Arena: return "arena";
        case LifetimeLevel::Heap: return "heap";
        case LifetimeLevel::Static: return "static";
    }
    return "?";
}

}  // namespace clef
