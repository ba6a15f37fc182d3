#pragma once

#include <array>
#include <string_view>

namespace vadvae {

enum class Factor { Valence = 0, Arousal = 1, Dominance = 2, Content = 3 };

inline constexpr std::array<Factor, 4> kAllFactors = {Factor::Valence, Factor::Arousal,
                                                      Factor::Dominance, Factor::Content};
inline constexpr std::array<Factor, 3> kVadFactors = {Factor::Valence, Factor::Arousal,
                                                      Factor::Dominance};

constexpr std::size_t index_of(Factor f) { return static_cast<std::size_t>(f); }

constexpr std::string_view short_name(Factor f) {
  constexpr std::array<std::string_view, 4> names = {"V", "A", "D", "C"};
  return names[index_of(f)];
}

}  // namespace vadvae
