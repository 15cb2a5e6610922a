#pragma once

#include <compare>
#include <cstdint>

namespace vmsched {

// A (cpu, mem) pair in integer units: cores and GB.
struct ResourceVec {
  std::int64_t cpu = 0;
  std::int64_t mem = 0;

  friend constexpr auto operator<=>(const ResourceVec&, const ResourceVec&) = default;

  constexpr ResourceVec& operator+=(const ResourceVec& o) {
    cpu += o.cpu;
    mem += o.mem;
    return *this;
  }
  constexpr ResourceVec& operator-=(const ResourceVec& o) {
    cpu -= o.cpu;
    mem -= o.mem;
    return *this;
  }
  friend constexpr ResourceVec operator+(ResourceVec a, const ResourceVec& b) { return a += b; }
  friend constexpr ResourceVec operator-(ResourceVec a, const ResourceVec& b) { return a -= b; }

  // Componentwise a >= b (not the lexicographic order above).
  constexpr bool covers(const ResourceVec& demand) const {
    return cpu >= demand.cpu && mem >= demand.mem;
  }
  constexpr bool non_negative() const { return cpu >= 0 && mem >= 0; }
};

// A VM type: its requested cores and memory. Both are >= 1.
struct Flavor {
  std::int64_t cpu = 0;
  std::int64_t mem = 0;

  friend constexpr auto operator<=>(const Flavor&, const Flavor&) = default;

  constexpr ResourceVec demand() const { return {cpu, mem}; }
  constexpr ResourceVec half() const { return {cpu / 2, mem / 2}; }
  constexpr bool valid() const { return cpu >= 1 && mem >= 1; }
};

}  // namespace vmsched
