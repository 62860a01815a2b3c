#pragma once

#include <string>
#include <vector>

#include "fruit4d/config.hpp"
#include "fruit4d/simulator.hpp"

namespace fruit4d {

// Per-session 3D localization: instance-cloud fusion, IoU tracking,
// re-association, finalization, and box-constrained reprojection refinement.
std::vector<FruitLandmark> TrackSession(const SessionMap& map,
                                        const std::vector<TimedCloud>& clouds,
                                        const PipelineConfig& config);

enum class AssociationMethod { kProposed, kPosition, kHistogram };

AssociationMethod ParseMethod(const std::string& name);  // throws on unknown
std::string MethodName(AssociationMethod method);

TemporalMatchSet RunAssociation(const SessionMap& a, const SessionMap& b,
                                const RigidTransform& a_to_b,
                                AssociationMethod method,
                                const PipelineConfig& config);

}  // namespace fruit4d
