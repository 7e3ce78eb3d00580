#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>

namespace ars {

// Tagged integer identifier. Kernel, object and class ids live in separate
// namespaces, so they are distinct types and never convert into each other.
template <typename Tag, typename Rep = std::uint32_t>
struct StrongId {
  using rep_type = Rep;

  Rep value{0};

  constexpr StrongId() = default;
  constexpr explicit StrongId(Rep v) noexcept : value(v) {}

  friend constexpr auto operator<=>(StrongId, StrongId) = default;
  friend constexpr bool operator==(StrongId, StrongId) = default;

  friend std::ostream& operator<<(std::ostream& os, StrongId id) {
    return os << id.value;
  }
};

struct ObjectTag {};
struct KernelTag {};
struct ClassTag {};

using ObjectId = StrongId<ObjectTag>;
using KernelId = StrongId<KernelTag>;
using ClassId = StrongId<ClassTag>;

using Score = std::uint64_t;

}  // namespace ars

template <typename Tag, typename Rep>
struct std::hash<ars::StrongId<Tag, Rep>> {
  std::size_t operator()(ars::StrongId<Tag, Rep> id) const noexcept {
    return std::hash<Rep>{}(id.value);
  }
};
