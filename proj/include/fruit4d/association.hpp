#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "fruit4d/registration.hpp"
#include "fruit4d/types.hpp"

namespace fruit4d {

struct CostWeights {
  double gate_distance_m = 0.3;       // cross-session pairing gate
  double entropy_threshold_bits = 0.8;
  double angle_threshold_deg = 10.0;
  double topology_weight = 0.5;       // penalty per violated anchor pair
  double no_match_cost = 1.0;         // augmented block, after normalization
  double min_vector_norm_px = 2.0;    // descriptor vectors below this are skipped

  void Validate() const;  // throws Error(kInvalidInput)
};

// Pixel vectors from a target fruit to the matched reference fruits visible
// in the same image; vectors[k] corresponds to anchors[k].
struct TopologyDescriptor {
  std::vector<int> anchors;
  std::vector<Eigen::Vector2d> vectors;
};

// Frame of B whose embedding is nearest to frame_a's embedding; ties go to
// the lowest frame id.
int ViewMatch(int frame_a, const EmbeddingTable& frames_a,
              const EmbeddingTable& frames_b);

// Euclidean distance between flattened crop embeddings.
double VisualCost(const EmbeddingTable& emb_a, int id_a,
                  const EmbeddingTable& emb_b, int id_b);

// Euclidean distance after mapping position_a into B's frame; nullopt when
// the pair is beyond the gate (treated as a forbidden assignment).
std::optional<double> PositionCost(const Eigen::Vector3d& position_a,
                                   const Eigen::Vector3d& position_b,
                                   const RigidTransform& a_to_b,
                                   double gate_distance_m);

// Number of anchor pairs whose descriptor vectors disagree by more than the
// angle threshold; pairs with a vector shorter than min_vector_norm_px are
// skipped.
int TopologyCost(const TopologyDescriptor& a, const TopologyDescriptor& b,
                 double angle_threshold_deg, double min_vector_norm_px = 2.0);

// Shannon entropy (base 2) of the empirical distribution over symbols.
double EntropyBits(const std::vector<int>& symbols);

using VoteTable = std::map<int, std::vector<VoteEntry>>;

// Per-image Hungarian matching with normalized visual + position cost.
// Every A-fruit visible in a processed image receives one vote per image:
// either a B-fruit or a distinguished no-match symbol.
VoteTable Stage1Match(const SessionMap& a, const SessionMap& b,
                      const RigidTransform& a_to_b, const CostWeights& weights);

// Low-entropy fruits become reference pairs (f_i, mode of M(f_i)), kept
// mutually injective by preferring lower entropy.
std::vector<std::pair<int, int>> SelectReferences(
    const VoteTable& votes, double entropy_threshold_bits);

// Stage-1 matching repeated with the topology penalty; matched reference
// pairs cost 0.
VoteTable Stage2Match(const SessionMap& a, const SessionMap& b,
                      const RigidTransform& a_to_b,
                      const std::vector<std::pair<int, int>>& references,
                      const CostWeights& weights);

// Resolves each fruit to its most frequent vote; ties prefer the lower
// aggregate cost, then the lower id. Global injectivity is enforced in
// descending vote-count order; losers become unmatched.
TemporalMatchSet MajorityVote(const VoteTable& votes, const SessionMap& a,
                              const SessionMap& b);

// Full two-stage pipeline: stage 1, reference selection, stage 2, vote.
TemporalMatchSet Associate(const SessionMap& a, const SessionMap& b,
                           const RigidTransform& a_to_b,
                           const CostWeights& weights);

// Single global Hungarian on gated Euclidean distance between landmark sets.
TemporalMatchSet BaselinePosition(const SessionMap& a, const SessionMap& b,
                                  const RigidTransform& a_to_b,
                                  double gate_distance_m);

struct HistogramBaselineParams {
  int azimuth_bins = 8;
  int height_bins = 3;
  int radius_bins = 3;
  double radius_m = 1.0;
  double half_height_m = 0.75;
  double gate_distance_m = 0.3;
};

// Cylindrical neighbour-count descriptor around each fruit; cost is the
// normalized position cost plus the normalized L1 histogram distance.
TemporalMatchSet BaselineHistogram(const SessionMap& a, const SessionMap& b,
                                   const RigidTransform& a_to_b,
                                   const HistogramBaselineParams& params);

}  // namespace fruit4d
