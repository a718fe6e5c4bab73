// Copyright 2026 The mchain Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mchain/errors.hpp"

namespace mchain {

/// Occupation-number basis of the fixed-total-number sector of an L-site
/// bosonic chain with a hard per-site cap.
///
/// States are stored in ascending lexicographic order, so indices are stable
/// across runs and binary search gives the inverse map.
class FockBasis {
 public:
  FockBasis(int sites, int particles, int max_occupation)
      : sites_(sites), particles_(particles), max_occupation_(max_occupation) {
    detail::require(sites >= 1, "FockBasis: need at least one site");
    detail::require(particles >= 0, "FockBasis: particle number must be nonnegative");
    detail::require(max_occupation >= 1, "FockBasis: occupation cap must be positive");
    detail::require(static_cast<long>(particles) <= static_cast<long>(sites) * max_occupation,
                    "FockBasis: empty sector, N exceeds L * n_max");
    std::vector<int> current(static_cast<std::size_t>(sites), 0);
    enumerate(0, particles, current);
  }

  int sites() const { return sites_; }
  int particles() const { return particles_; }
  int max_occupation() const { return max_occupation_; }
  std::size_t dim() const { return occupations_.size() / static_cast<std::size_t>(sites_); }

  std::span<const int> state(std::size_t index) const {
    return {occupations_.data() + index * static_cast<std::size_t>(sites_),
            static_cast<std::size_t>(sites_)};
  }

  int occupation(std::size_t index, int site) const {
    return occupations_[index * static_cast<std::size_t>(sites_) + static_cast<std::size_t>(site)];
  }

  /// Index of an occupation vector, or nullopt when it lies outside the sector.
  std::optional<std::size_t> index_of(std::span<const int> occupation) const {
    if (occupation.size() != static_cast<std::size_t>(sites_)) return std::nullopt;
    std::size_t lo = 0, hi = dim();
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      const auto row = state(mid);
      if (std::lexicographical_compare(row.begin(), row.end(), occupation.begin(), occupation.end())) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    if (lo < dim() && std::ranges::equal(state(lo), occupation)) return lo;
    return std::nullopt;
  }

  bool same_sector(const FockBasis& other) const {
    return sites_ == other.sites_ && particles_ == other.particles_ &&
           max_occupation_ == other.max_occupation_;
  }

  std::string label() const {
    return "L=" + std::to_string(sites_) + " N=" + std::to_string(particles_) +
           " n_max=" + std::to_string(max_occupation_);
  }

 private:
  void enumerate(int site, int remaining, std::vector<int>& current) {
    if (site == sites_ - 1) {
      if (remaining > max_occupation_) return;
      current[static_cast<std::size_t>(site)] = remaining;
      occupations_.insert(occupations_.end(), current.begin(), current.end());
      return;
    }
    const int capacity_after = (sites_ - site - 1) * max_occupation_;
    const int lowest = std::max(0, remaining - capacity_after);
    const int highest = std::min(max_occupation_, remaining);
    for (int n = lowest; n <= highest; ++n) {
      current[static_cast<std::size_t>(site)] = n;
      enumerate(site + 1, remaining - n, current);
    }
  }

  int sites_;
  int particles_;
  int max_occupation_;
  std::vector<int> occupations_;  // row-major, dim x sites
};

using BasisPtr = std::shared_ptr<const FockBasis>;

inline BasisPtr build_basis(int sites, int particles, int max_occupation) {
  return std::make_shared<const FockBasis>(sites, particles, max_occupation);
}

}  // namespace mchain
