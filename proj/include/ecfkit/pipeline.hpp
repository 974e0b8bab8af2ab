#pragma once

#include "ecfkit/classify.hpp"
#include "ecfkit/design.hpp"
#include "ecfkit/ecf.hpp"
#include "ecfkit/ecoc.hpp"
#include "ecfkit/policy.hpp"

#include <optional>
#include <string>

namespace ecfkit {

struct DesignBuild {
  DesignMatrix design;
  ProjectionResult projection;
  ClassDistanceMatrix distances;
  /// Rank of the design built at length k; set when the length was automatic.
  std::optional<int> rank;
};

/// Smallest l with 2^l >= k.
inline int min_code_length(int k) {
  int l = 1;
  while ((std::int64_t{1} << l) < k) ++l;
  return l;
}

/// Mahalanobis class distances, mapped by `policy` and projected. Without a
/// length the design is first built at length k and l is its numerical rank
/// (at least ceil(log2 k)); the design is then rebuilt at that l.
inline DesignBuild design_from_data(const LabeledDataset& data, AllocationPolicy policy,
                                    std::optional<int> length = std::nullopt) {
  DesignBuild out;
  out.distances = pairwise_mahalanobis(data);
  int l = 0;
  if (length) {
    l = *length;
  } else {
    const auto full = project_psd_scaled(distances_to_design(out.distances, data.k, policy));
    out.rank = code_length(full.design);
    l = std::max(*out.rank, min_code_length(data.k));
  }
  out.projection = project_psd_scaled(distances_to_design(out.distances, l, policy));
  out.design = out.projection.design;
  return out;
}

/// ECF-H / ECF-E coding computed from each fold's training data.
inline CodingSource ecf_source(AllocationPolicy policy, std::optional<int> length, int min_distance,
                               EcfOptions opts = {}) {
  const std::string name = policy == AllocationPolicy::Hard ? "ecf-h" : "ecf-e";
  return {name, [=](const LabeledDataset& train, int) {
            const auto built = design_from_data(train, policy, length);
            const int l = built.design.l;
            if (min_distance > l)
              throw InvalidArgument("minimum distance " + std::to_string(min_distance) + " exceeds code length " +
                                    std::to_string(l));
            return factorize(built.design, make_policy(train.k, l, min_distance), opts).coding;
          }};
}

inline CodingSource fixed_source(std::string name, CodingMatrix coding) {
  return {std::move(name), [coding](const LabeledDataset& train, int) {
            require(train.k == coding.k(), "coding has " + std::to_string(coding.k()) + " rows, data has " +
                                               std::to_string(train.k) + " classes");
            return coding;
          }};
}

inline CodingSource ova_source() {
  return {"ova", [](const LabeledDataset& train, int) { return ova_coding(train.k); }};
}

inline CodingSource dense_source(int pool, std::uint64_t seed) {
  return {"dense", [=](const LabeledDataset& train, int) { return dense_random_coding(train.k, pool, seed).coding; }};
}

inline CodingSource rand_source(int length, int min_distance, std::uint64_t seed, int attempts) {
  return {"rand", [=](const LabeledDataset& train, int) {
            auto r = fixed_correction_random_coding(train.k, length, min_distance, seed, attempts);
            if (!r.success)
              throw NumericalFailure("rand: no code with minimum distance " + std::to_string(min_distance) +
                                     " found in " + std::to_string(attempts) + " attempts");
            return r.coding;
          }};
}

}  // namespace ecfkit
