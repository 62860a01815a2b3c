#include "fruit4d/association.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "fruit4d/error.hpp"
#include "fruit4d/hungarian.hpp"

namespace fruit4d {
namespace {

constexpr double kForbidden = 1e9;

// One landmark as seen in one image.
struct LandmarkView {
  int fruit_id = 0;
  const FruitLandmark* landmark = nullptr;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  int embedding_id = -1;
};

// frame_id -> landmarks visible in that frame, ordered by fruit id.
using ViewIndex = std::map<int, std::vector<LandmarkView>>;

ViewIndex BuildViewIndex(const SessionMap& session) {
  const DetectionIndex det_index(session.detections);
  ViewIndex index;
  for (const FruitLandmark& lm : session.landmarks) {
    for (const PixelObservation& obs : lm.pixel_obs) {
      LandmarkView view;
      view.fruit_id = lm.fruit_id;
      view.landmark = &lm;
      view.pixel = obs.pixel;
      const Detection* det = det_index.Find(obs.frame_id, obs.det_id);
      view.embedding_id = det != nullptr ? det->embedding_id : -1;
      index[obs.frame_id].push_back(view);
    }
  }
  for (auto& [frame, views] : index) {
    std::sort(views.begin(), views.end(),
              [](const LandmarkView& a, const LandmarkView& b) {
                return a.fruit_id < b.fruit_id;
              });
  }
  return index;
}

// Min-max normalization over the finite entries of a block; a constant
// block normalizes to zero.
void MinMaxNormalize(Eigen::MatrixXd* block) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Eigen::Index i = 0; i < block->rows(); ++i) {
    for (Eigen::Index j = 0; j < block->cols(); ++j) {
      const double v = (*block)(i, j);
      if (v >= kForbidden) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo)) {
    for (Eigen::Index i = 0; i < block->rows(); ++i) {
      for (Eigen::Index j = 0; j < block->cols(); ++j) {
        if ((*block)(i, j) < kForbidden) (*block)(i, j) = 0.0;
      }
    }
    return;
  }
  const double range = hi - lo;
  for (Eigen::Index i = 0; i < block->rows(); ++i) {
    for (Eigen::Index j = 0; j < block->cols(); ++j) {
      if ((*block)(i, j) < kForbidden) {
        (*block)(i, j) = ((*block)(i, j) - lo) / range;
      }
    }
  }
}

struct StageContext {
  const SessionMap* a = nullptr;
  const SessionMap* b = nullptr;
  const RigidTransform* a_to_b = nullptr;
  const CostWeights* weights = nullptr;
  const std::vector<std::pair<int, int>>* references = nullptr;  // stage 2
};

// Shared per-image matching loop of Algorithm steps 2-4; with references it
// adds the topology penalty and zeroes reference-pair costs.
VoteTable RunStage(const StageContext& ctx) {
  const CostWeights& w = *ctx.weights;
  const ViewIndex views_a = BuildViewIndex(*ctx.a);
  const ViewIndex views_b = BuildViewIndex(*ctx.b);

  std::map<int, int> ref_map;  // A fruit -> B fruit
  if (ctx.references != nullptr) {
    for (const auto& [fa, fb] : *ctx.references) ref_map[fa] = fb;
  }
  // Per-frame pixel lookup for reference fruits.
  std::map<int, std::map<int, Eigen::Vector2d>> ref_pixels_a, ref_pixels_b;
  if (!ref_map.empty()) {
    for (const FruitLandmark& lm : ctx.a->landmarks) {
      if (!ref_map.count(lm.fruit_id)) continue;
      for (const PixelObservation& obs : lm.pixel_obs) {
        ref_pixels_a[obs.frame_id][lm.fruit_id] = obs.pixel;
      }
    }
    std::set<int> ref_b;
    for (const auto& [fa, fb] : ref_map) ref_b.insert(fb);
    for (const FruitLandmark& lm : ctx.b->landmarks) {
      if (!ref_b.count(lm.fruit_id)) continue;
      for (const PixelObservation& obs : lm.pixel_obs) {
        ref_pixels_b[obs.frame_id][lm.fruit_id] = obs.pixel;
      }
    }
  }

  VoteTable votes;
  for (const auto& [frame_a, rows] : views_a) {
    if (rows.empty()) continue;
    const int frame_b =
        ViewMatch(frame_a, ctx.a->frame_embeddings, ctx.b->frame_embeddings);
    const auto cols_it = views_b.find(frame_b);
    const std::vector<LandmarkView> no_cols;
    const std::vector<LandmarkView>& cols =
        cols_it == views_b.end() ? no_cols : cols_it->second;

    const int m = static_cast<int>(rows.size());
    const int n = static_cast<int>(cols.size());

    if (n == 0) {
      for (const LandmarkView& row : rows) {
        votes[row.fruit_id].push_back({kNoMatchVote, frame_b, w.no_match_cost});
      }
      continue;
    }

    // Anchor pairs: references visible in both images, ordered by A fruit.
    std::vector<std::pair<Eigen::Vector2d, Eigen::Vector2d>> anchor_pixels;
    std::vector<std::pair<int, int>> anchor_ids;
    if (!ref_map.empty()) {
      const auto pa = ref_pixels_a.find(frame_a);
      const auto pb = ref_pixels_b.find(frame_b);
      if (pa != ref_pixels_a.end() && pb != ref_pixels_b.end()) {
        for (const auto& [fa, pixel_a] : pa->second) {
          const int fb = ref_map.at(fa);
          const auto it = pb->second.find(fb);
          if (it == pb->second.end()) continue;
          anchor_pixels.emplace_back(pixel_a, it->second);
          anchor_ids.emplace_back(fa, fb);
        }
      }
    }

    Eigen::MatrixXd pos(m, n), vis(m, n);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        const auto gated = PositionCost(rows[i].landmark->position,
                                        cols[j].landmark->position,
                                        *ctx.a_to_b, w.gate_distance_m);
        pos(i, j) = gated ? *gated : kForbidden;
        vis(i, j) = gated ? VisualCost(ctx.a->embeddings, rows[i].embedding_id,
                                       ctx.b->embeddings, cols[j].embedding_id)
                          : kForbidden;
      }
    }
    MinMaxNormalize(&pos);
    MinMaxNormalize(&vis);

    Eigen::MatrixXd cost(m, n);
    for (int i = 0; i < m; ++i) {
      TopologyDescriptor da;
      if (!anchor_pixels.empty()) {
        for (size_t k = 0; k < anchor_pixels.size(); ++k) {
          da.anchors.push_back(anchor_ids[k].first);
          da.vectors.push_back(anchor_pixels[k].first - rows[i].pixel);
        }
      }
      for (int j = 0; j < n; ++j) {
        if (pos(i, j) >= kForbidden || vis(i, j) >= kForbidden) {
          cost(i, j) = kForbidden;
          continue;
        }
        double c = pos(i, j) + vis(i, j);
        if (!anchor_pixels.empty()) {
          TopologyDescriptor db;
          for (size_t k = 0; k < anchor_pixels.size(); ++k) {
            db.anchors.push_back(anchor_ids[k].first);
            db.vectors.push_back(anchor_pixels[k].second - cols[j].pixel);
          }
          c += w.topology_weight *
               TopologyCost(da, db, w.angle_threshold_deg, w.min_vector_norm_px);
        }
        const auto ref_it = ref_map.find(rows[i].fruit_id);
        if (ref_it != ref_map.end() && ref_it->second == cols[j].fruit_id) {
          c = 0.0;  // matched reference fruits
        }
        cost(i, j) = c;
      }
    }

    const AssignmentProblem problem =
        AssignmentProblem::Augment(cost, w.no_match_cost);
    const std::vector<int> assignment = SolveWithUnmatched(problem);
    for (int i = 0; i < m; ++i) {
      const int j = assignment[i];
      if (j == kUnmatched || cost(i, j) >= kForbidden) {
        votes[rows[i].fruit_id].push_back(
            {kNoMatchVote, frame_b, w.no_match_cost});
      } else {
        votes[rows[i].fruit_id].push_back(
            {cols[j].fruit_id, frame_b, cost(i, j)});
      }
    }
  }
  return votes;
}

struct VoteWinner {
  int id = kNoMatchVote;
  int count = -1;
  double cost_sum = 0.0;
};

// Highest count wins; ties prefer the lower aggregate cost, then a real id
// over the no-match symbol, then the lower id.
VoteWinner SelectWinner(const std::vector<VoteEntry>& entries) {
  std::map<int, std::pair<int, double>> tally;  // id -> (count, cost sum)
  for (const VoteEntry& e : entries) {
    tally[e.fruit_b].first += 1;
    tally[e.fruit_b].second += e.cost;
  }
  VoteWinner winner;
  for (const auto& [id, stat] : tally) {
    bool better = false;
    if (stat.first != winner.count) {
      better = stat.first > winner.count;
    } else if (stat.second != winner.cost_sum) {
      better = stat.second < winner.cost_sum;
    } else if ((winner.id == kNoMatchVote) != (id == kNoMatchVote)) {
      better = id != kNoMatchVote;
    } else {
      better = id < winner.id;
    }
    if (better) winner = {id, stat.first, stat.second};
  }
  return winner;
}

std::vector<int> AllFruitIds(const SessionMap& session) {
  std::vector<int> ids;
  ids.reserve(session.landmarks.size());
  for (const FruitLandmark& lm : session.landmarks) ids.push_back(lm.fruit_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

// Global Hungarian over full landmark sets with a forbidden-gated position
// block; shared by the two baselines.
TemporalMatchSet GlobalAssign(const SessionMap& a, const SessionMap& b,
                              const Eigen::MatrixXd& cost,
                              double unmatched_cost) {
  TemporalMatchSet out;
  out.session_a = a.session_id;
  out.session_b = b.session_id;
  const int m = static_cast<int>(a.landmarks.size());
  std::set<int> used_b;
  if (m > 0 && cost.cols() > 0) {
    const AssignmentProblem problem =
        AssignmentProblem::Augment(cost, unmatched_cost);
    const std::vector<int> assignment = SolveWithUnmatched(problem);
    for (int i = 0; i < m; ++i) {
      const int j = assignment[i];
      if (j == kUnmatched || cost(i, j) >= kForbidden) continue;
      out.final_matches.emplace_back(a.landmarks[i].fruit_id,
                                     b.landmarks[j].fruit_id);
      used_b.insert(b.landmarks[j].fruit_id);
    }
  }
  std::sort(out.final_matches.begin(), out.final_matches.end());
  std::set<int> matched_a;
  for (const auto& [fa, fb] : out.final_matches) matched_a.insert(fa);
  for (int id : AllFruitIds(a)) {
    if (!matched_a.count(id)) out.unmatched_a.push_back(id);
  }
  for (int id : AllFruitIds(b)) {
    if (!used_b.count(id)) out.unmatched_b.push_back(id);
  }
  return out;
}

}  // namespace

void CostWeights::Validate() const {
  if (!(gate_distance_m > 0.0)) ThrowInvalidInput("weights: gate_distance <= 0");
  if (entropy_threshold_bits < 0.0) {
    ThrowInvalidInput("weights: entropy threshold < 0");
  }
  if (!(angle_threshold_deg > 0.0 && angle_threshold_deg < 180.0)) {
    ThrowInvalidInput("weights: angle threshold outside (0, 180)");
  }
}

int ViewMatch(int frame_a, const EmbeddingTable& frames_a,
              const EmbeddingTable& frames_b) {
  const auto ea = frames_a.Row(frame_a);
  int best_frame = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const auto& [frame_b, row] : frames_b.id_to_row()) {
    const double dist =
        static_cast<double>((ea - frames_b.Row(frame_b)).norm());
    if (dist < best_dist) {
      best_dist = dist;
      best_frame = frame_b;
    }
  }
  if (best_frame < 0) ThrowInvalidInput("view match: empty frame embeddings");
  return best_frame;
}

double VisualCost(const EmbeddingTable& emb_a, int id_a,
                  const EmbeddingTable& emb_b, int id_b) {
  return EmbeddingTable::Distance(emb_a, id_a, emb_b, id_b);
}

std::optional<double> PositionCost(const Eigen::Vector3d& position_a,
                                   const Eigen::Vector3d& position_b,
                                   const RigidTransform& a_to_b,
                                   double gate_distance_m) {
  const double dist = (a_to_b.Apply(position_a) - position_b).norm();
  if (dist > gate_distance_m) return std::nullopt;
  return dist;
}

int TopologyCost(const TopologyDescriptor& a, const TopologyDescriptor& b,
                 double angle_threshold_deg, double min_vector_norm_px) {
  if (a.vectors.size() != b.vectors.size()) {
    ThrowInvalidInput("topology: descriptor size mismatch");
  }
  int violations = 0;
  for (size_t k = 0; k < a.vectors.size(); ++k) {
    const double na = a.vectors[k].norm();
    const double nb = b.vectors[k].norm();
    if (na < min_vector_norm_px || nb < min_vector_norm_px) continue;
    const double cosine =
        std::clamp(a.vectors[k].dot(b.vectors[k]) / (na * nb), -1.0, 1.0);
    const double angle_deg = std::acos(cosine) * 180.0 / M_PI;
    if (angle_deg > angle_threshold_deg) ++violations;
  }
  return violations;
}

double EntropyBits(const std::vector<int>& symbols) {
  if (symbols.empty()) return 0.0;
  std::map<int, int> counts;
  for (int s : symbols) counts[s] += 1;
  const double n = static_cast<double>(symbols.size());
  double h = 0.0;
  for (const auto& [symbol, count] : counts) {
    const double p = count / n;
    h -= p * std::log2(p);
  }
  return h;
}

VoteTable Stage1Match(const SessionMap& a, const SessionMap& b,
                      const RigidTransform& a_to_b,
                      const CostWeights& weights) {
  weights.Validate();
  StageContext ctx{&a, &b, &a_to_b, &weights, nullptr};
  return RunStage(ctx);
}

std::vector<std::pair<int, int>> SelectReferences(
    const VoteTable& votes, double entropy_threshold_bits) {
  struct Candidate {
    int fruit_a;
    int fruit_b;
    double entropy;
  };
  std::vector<Candidate> candidates;
  for (const auto& [fruit_a, entries] : votes) {
    std::vector<int> symbols;
    symbols.reserve(entries.size());
    for (const VoteEntry& e : entries) symbols.push_back(e.fruit_b);
    const double h = EntropyBits(symbols);
    if (h >= entropy_threshold_bits) continue;

    // Mode over the vote multiset; a no-match mode yields no reference.
    const VoteWinner mode = SelectWinner(entries);
    if (mode.id == kNoMatchVote) continue;
    candidates.push_back({fruit_a, mode.id, h});
  }

  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.entropy != b.entropy) return a.entropy < b.entropy;
              return a.fruit_a < b.fruit_a;
            });
  std::set<int> used_b;
  std::vector<std::pair<int, int>> references;
  for (const Candidate& c : candidates) {
    if (used_b.count(c.fruit_b)) continue;  // keep the lower-entropy fruit
    used_b.insert(c.fruit_b);
    references.emplace_back(c.fruit_a, c.fruit_b);
  }
  std::sort(references.begin(), references.end());
  return references;
}

VoteTable Stage2Match(const SessionMap& a, const SessionMap& b,
                      const RigidTransform& a_to_b,
                      const std::vector<std::pair<int, int>>& references,
                      const CostWeights& weights) {
  weights.Validate();
  StageContext ctx{&a, &b, &a_to_b, &weights, &references};
  return RunStage(ctx);
}

TemporalMatchSet MajorityVote(const VoteTable& votes, const SessionMap& a,
                              const SessionMap& b) {
  TemporalMatchSet out;
  out.session_a = a.session_id;
  out.session_b = b.session_id;
  out.vote_table = votes;

  struct Resolved {
    int fruit_a;
    int winner;
    int count;
    double cost_sum;
  };
  std::vector<Resolved> resolved;
  for (const auto& [fruit_a, entries] : votes) {
    if (entries.empty()) continue;
    const VoteWinner winner = SelectWinner(entries);
    if (winner.id == kNoMatchVote) continue;
    resolved.push_back({fruit_a, winner.id, winner.count, winner.cost_sum});
  }

  // Injectivity: strong claims first; losers fall back to unmatched.
  std::sort(resolved.begin(), resolved.end(),
            [](const Resolved& a, const Resolved& b) {
              if (a.count != b.count) return a.count > b.count;
              if (a.cost_sum != b.cost_sum) return a.cost_sum < b.cost_sum;
              return a.fruit_a < b.fruit_a;
            });
  std::set<int> used_b;
  for (const Resolved& r : resolved) {
    if (used_b.count(r.winner)) continue;
    used_b.insert(r.winner);
    out.final_matches.emplace_back(r.fruit_a, r.winner);
  }
  std::sort(out.final_matches.begin(), out.final_matches.end());

  std::set<int> matched_a;
  for (const auto& [fa, fb] : out.final_matches) matched_a.insert(fa);
  for (int id : AllFruitIds(a)) {
    if (!matched_a.count(id)) out.unmatched_a.push_back(id);
  }
  for (int id : AllFruitIds(b)) {
    if (!used_b.count(id)) out.unmatched_b.push_back(id);
  }
  return out;
}

TemporalMatchSet Associate(const SessionMap& a, const SessionMap& b,
                           const RigidTransform& a_to_b,
                           const CostWeights& weights) {
  const VoteTable stage1 = Stage1Match(a, b, a_to_b, weights);
  const std::vector<std::pair<int, int>> references =
      SelectReferences(stage1, weights.entropy_threshold_bits);
  const VoteTable stage2 = Stage2Match(a, b, a_to_b, references, weights);
  TemporalMatchSet out = MajorityVote(stage2, a, b);
  out.references = references;
  if (references.empty()) {
    out.warnings.push_back("no reference fruits; stage 2 degraded to stage 1");
  }
  return out;
}

TemporalMatchSet BaselinePosition(const SessionMap& a, const SessionMap& b,
                                  const RigidTransform& a_to_b,
                                  double gate_distance_m) {
  const int m = static_cast<int>(a.landmarks.size());
  const int n = static_cast<int>(b.landmarks.size());
  Eigen::MatrixXd cost(m, n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto gated =
          PositionCost(a.landmarks[i].position, b.landmarks[j].position,
                       a_to_b, gate_distance_m);
      cost(i, j) = gated ? *gated : kForbidden;
    }
  }
  return GlobalAssign(a, b, cost, gate_distance_m);
}

TemporalMatchSet BaselineHistogram(const SessionMap& a, const SessionMap& b,
                                   const RigidTransform& a_to_b,
                                   const HistogramBaselineParams& params) {
  const int bins =
      params.azimuth_bins * params.height_bins * params.radius_bins;

  // Descriptors are computed in B's frame so both sessions share axes.
  auto descriptors = [&](const SessionMap& session, bool transform) {
    std::vector<Eigen::Vector3d> positions;
    for (const FruitLandmark& lm : session.landmarks) {
      positions.push_back(transform ? a_to_b.Apply(lm.position) : lm.position);
    }
    std::vector<Eigen::VectorXd> hists(positions.size(),
                                       Eigen::VectorXd::Zero(bins));
    for (size_t i = 0; i < positions.size(); ++i) {
      for (size_t j = 0; j < positions.size(); ++j) {
        if (i == j) continue;
        const Eigen::Vector3d d = positions[j] - positions[i];
        const double rho = std::hypot(d.x(), d.y());
        if (rho > params.radius_m || rho <= 0.0) continue;
        if (std::abs(d.z()) > params.half_height_m) continue;
        const double azimuth = std::atan2(d.y(), d.x());  // [-pi, pi]
        int az = static_cast<int>((azimuth + M_PI) / (2.0 * M_PI) *
                                  params.azimuth_bins);
        az = std::clamp(az, 0, params.azimuth_bins - 1);
        int hz = static_cast<int>((d.z() + params.half_height_m) /
                                  (2.0 * params.half_height_m) *
                                  params.height_bins);
        hz = std::clamp(hz, 0, params.height_bins - 1);
        int ra = static_cast<int>(rho / params.radius_m * params.radius_bins);
        ra = std::clamp(ra, 0, params.radius_bins - 1);
        const int bin =
            (az * params.height_bins + hz) * params.radius_bins + ra;
        hists[i][bin] += 1.0;
      }
    }
    return hists;
  };

  const auto hist_a = descriptors(a, true);
  const auto hist_b = descriptors(b, false);

  const int m = static_cast<int>(a.landmarks.size());
  const int n = static_cast<int>(b.landmarks.size());
  Eigen::MatrixXd pos(m, n), hist(m, n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto gated =
          PositionCost(a.landmarks[i].position, b.landmarks[j].position,
                       a_to_b, params.gate_distance_m);
      pos(i, j) = gated ? *gated : kForbidden;
      hist(i, j) =
          gated ? (hist_a[i] - hist_b[j]).cwiseAbs().sum() : kForbidden;
    }
  }
  MinMaxNormalize(&pos);
  MinMaxNormalize(&hist);
  Eigen::MatrixXd cost(m, n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      cost(i, j) = (pos(i, j) >= kForbidden || hist(i, j) >= kForbidden)
                       ? kForbidden
                       : pos(i, j) + hist(i, j);
    }
  }
  return GlobalAssign(a, b, cost, 1.0);
}

}  // namespace fruit4d
