#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "fruit4d/association.hpp"
#include "fruit4d/error.hpp"

using namespace fruit4d;

namespace {

// Builds minimal sessions for association: landmarks with per-frame pixel
// observations, per-detection embeddings, and per-frame view embeddings.
class SessionBuilder {
 public:
  explicit SessionBuilder(const std::string& id) {
    map_.session_id = id;
    map_.intrinsics = {500.0, 500.0, 320.0, 240.0, 640, 480};
  }

  void AddFrame(int frame_id, const std::vector<float>& frame_embedding) {
    Pose pose;
    pose.frame_id = frame_id;
    pose.timestamp = frame_id * 0.25;
    map_.poses.push_back(pose);
    map_.frame_embeddings.Append(frame_id, frame_embedding);
  }

  int AddLandmark(int fruit_id, const Eigen::Vector3d& position) {
    FruitLandmark lm;
    lm.fruit_id = fruit_id;
    lm.position = position;
    lm.diameter = 0.08;
    map_.landmarks.push_back(lm);
    return static_cast<int>(map_.landmarks.size()) - 1;
  }

  void AddObservation(int landmark_index, int frame_id,
                      const Eigen::Vector2d& pixel,
                      const std::vector<float>& embedding) {
    Detection det;
    det.det_id = next_det_id_++;
    det.frame_id = frame_id;
    const int row = static_cast<int>(std::lround(pixel.y()));
    const int col = static_cast<int>(std::lround(pixel.x()));
    det.mask = Mask(frame_id, {{row, col, col}});
    det.centroid_px = pixel;
    det.embedding_id = next_embedding_id_++;
    map_.embeddings.Append(det.embedding_id, embedding);
    map_.detections.push_back(det);
    map_.landmarks[landmark_index].pixel_obs.push_back(
        {frame_id, det.det_id, pixel});
  }

  SessionMap Build() { return map_; }

 private:
  SessionMap map_;
  int next_det_id_ = 0;
  int next_embedding_id_ = 0;
};

std::vector<float> Embed(float a, float b = 0.0f) { return {a, b}; }

// Two sessions of `n` fruits on a line, every fruit seen in every frame of a
// 3-frame pass; embeddings are distinct per fruit and reproducible.
struct ScenePair {
  SessionMap a;
  SessionMap b;
};

ScenePair LineScene(int n, double spacing, double drift,
                    double embedding_noise, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  SessionBuilder builder_a("a");
  SessionBuilder builder_b("b");
  const int frames = 3;
  for (int f = 0; f < frames; ++f) {
    builder_a.AddFrame(f, Embed(static_cast<float>(f)));
    builder_b.AddFrame(f, Embed(static_cast<float>(f)));
  }
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d pos(i * spacing, 0.0, 2.0);
    Eigen::Vector3d pos_b = pos;
    pos_b.x() += drift * g(rng);
    pos_b.y() += drift * g(rng);
    const int la = builder_a.AddLandmark(i, pos);
    const int lb = builder_b.AddLandmark(i, pos_b);
    for (int f = 0; f < frames; ++f) {
      const Eigen::Vector2d px(100.0 + 40.0 * i, 240.0);
      const float noise_a = static_cast<float>(embedding_noise * g(rng));
      const float noise_b = static_cast<float>(embedding_noise * g(rng));
      builder_a.AddObservation(la, f, px, Embed(10.0f * i + noise_a, 1.0f));
      builder_b.AddObservation(lb, f, px, Embed(10.0f * i + noise_b, 1.0f));
    }
  }
  return {builder_a.Build(), builder_b.Build()};
}

}  // namespace

TEST_CASE("view match: exact copy, nearest, and tie rules") {
  EmbeddingTable a;
  a.Append(3, {1.0f, 0.0f});
  EmbeddingTable b;
  b.Append(10, {0.0f, 1.0f});
  b.Append(11, {0.9f, 0.1f});
  CHECK(ViewMatch(3, a, b) == 11);

  EmbeddingTable exact;
  exact.Append(5, {0.0f, 1.0f});
  exact.Append(6, {1.0f, 0.0f});
  CHECK(ViewMatch(3, a, exact) == 6);

  EmbeddingTable tie;
  tie.Append(8, {1.0f, 1.0f});
  tie.Append(7, {1.0f, -1.0f});
  CHECK(ViewMatch(3, a, tie) == 7);  // equidistant, lower frame id

  EmbeddingTable empty;
  CHECK_THROWS_AS(ViewMatch(3, a, empty), Error);
}

TEST_CASE("visual cost: identity, pythagoras, zeros, mismatch") {
  EmbeddingTable t;
  t.Append(0, {3.0f, 0.0f});
  t.Append(1, {0.0f, 4.0f});
  t.Append(2, {0.0f, 0.0f});
  CHECK(VisualCost(t, 0, t, 0) == doctest::Approx(0.0));
  CHECK(VisualCost(t, 0, t, 1) == doctest::Approx(5.0));
  CHECK(VisualCost(t, 2, t, 2) == doctest::Approx(0.0));
  EmbeddingTable other;
  other.Append(0, {1.0f});
  CHECK_THROWS_AS(VisualCost(t, 0, other, 0), Error);
}

TEST_CASE("position cost: distance and 0.3 m gate") {
  const RigidTransform identity;
  CHECK(*PositionCost({1, 1, 1}, {1, 1, 1}, identity, 0.3) ==
        doctest::Approx(0.0));
  CHECK(*PositionCost({0, 0, 0}, {0.1, 0, 0}, identity, 0.3) ==
        doctest::Approx(0.1));
  CHECK_FALSE(
      PositionCost({0, 0, 0}, {0.31, 0, 0}, identity, 0.3).has_value());
}

TEST_CASE("topology cost: angle counting") {
  TopologyDescriptor d;
  d.anchors = {0, 1};
  d.vectors = {{10.0, 0.0}, {0.0, 10.0}};
  CHECK(TopologyCost(d, d, 10.0) == 0);

  TopologyDescriptor rotated = d;
  rotated.vectors[0] = {0.0, 10.0};  // 90 degrees off
  CHECK(TopologyCost(d, rotated, 10.0) == 1);
  CHECK(TopologyCost(rotated, d, 10.0) == 1);  // symmetric

  // 5 anchors: two rotated by 15 degrees, three by 5; threshold 10 -> 2.
  TopologyDescriptor a5, b5;
  for (int k = 0; k < 5; ++k) {
    a5.anchors.push_back(k);
    b5.anchors.push_back(k);
    a5.vectors.push_back({20.0, 0.0});
    const double angle = (k < 2 ? 15.0 : 5.0) * M_PI / 180.0;
    b5.vectors.push_back(20.0 * Eigen::Vector2d(std::cos(angle), std::sin(angle)));
  }
  CHECK(TopologyCost(a5, b5, 10.0) == 2);

  // Short vectors are skipped.
  TopologyDescriptor short_a = d, short_b = rotated;
  short_a.vectors[0] = {0.5, 0.0};
  CHECK(TopologyCost(short_a, short_b, 10.0) == 0);
}

TEST_CASE("entropy: closed-form Shannon values") {
  CHECK(EntropyBits({4, 4, 4}) == doctest::Approx(0.0));
  CHECK(EntropyBits({1, 2}) == doctest::Approx(1.0));
  CHECK(EntropyBits({1, 1, 2}) == doctest::Approx(0.9182958340544896));
}

TEST_CASE("select references: entropy gating per the worked examples") {
  VoteTable votes;
  votes[0] = {{5, 0, 0.1}, {5, 1, 0.1}, {5, 2, 0.1}};          // H = 0
  votes[1] = {{6, 0, 0.1}, {7, 1, 0.1}};                       // H = 1.0
  votes[2] = {{8, 0, 0.1}, {8, 1, 0.1}, {9, 2, 0.1}};          // H ~ 0.918
  const auto refs = SelectReferences(votes, 0.8);
  REQUIRE(refs.size() == 1);
  CHECK(refs[0] == std::pair<int, int>(0, 5));
}

TEST_CASE("select references: conflicts keep the lower-entropy fruit") {
  VoteTable votes;
  votes[0] = {{5, 0, 0.1}, {5, 1, 0.1}};                        // H = 0
  votes[1] = {{5, 0, 0.1}, {5, 1, 0.1}, {5, 2, 0.1}, {6, 3, 0.1}};  // H ~ 0.81 >= 0.8
  votes[2] = {{5, 0, 0.1}, {5, 1, 0.1}, {5, 2, 0.1}, {5, 3, 0.1},
              {6, 4, 0.1}};                                     // H ~ 0.72
  const auto refs = SelectReferences(votes, 0.8);
  REQUIRE(refs.size() == 1);
  CHECK(refs[0].first == 0);  // H=0 beats H=0.72 for the same B fruit
  CHECK(refs[0].second == 5);
}

TEST_CASE("select references: consistent no-match is not a reference") {
  VoteTable votes;
  votes[0] = {{kNoMatchVote, 0, 1.0}, {kNoMatchVote, 1, 1.0}};
  CHECK(SelectReferences(votes, 0.8).empty());
}

TEST_CASE("majority vote: worked example and tie handling") {
  SessionBuilder a("a"), b("b");
  a.AddFrame(0, Embed(0.0f));
  b.AddFrame(0, Embed(0.0f));
  a.AddLandmark(2, {0, 0, 2});
  b.AddLandmark(0, {0, 0, 2});
  b.AddLandmark(1, {0.1, 0, 2});
  const SessionMap sa = a.Build();
  const SessionMap sb = b.Build();

  SUBCASE("most frequent identity wins") {
    VoteTable votes;
    votes[2] = {{0, 0, 0.2}, {0, 1, 0.2}, {1, 2, 0.1}};
    const TemporalMatchSet out = MajorityVote(votes, sa, sb);
    REQUIRE(out.final_matches.size() == 1);
    CHECK(out.final_matches[0] == std::pair<int, int>(2, 0));
  }
  SUBCASE("empty votes leave the fruit unmatched") {
    const TemporalMatchSet out = MajorityVote({}, sa, sb);
    CHECK(out.final_matches.empty());
    CHECK(out.unmatched_a == std::vector<int>{2});
  }
  SUBCASE("2-2 tie resolved by lower aggregate cost") {
    VoteTable votes;
    votes[2] = {{0, 0, 0.4}, {0, 1, 0.4}, {1, 2, 0.1}, {1, 3, 0.1}};
    const TemporalMatchSet out = MajorityVote(votes, sa, sb);
    REQUIRE(out.final_matches.size() == 1);
    CHECK(out.final_matches[0] == std::pair<int, int>(2, 1));
  }
  SUBCASE("no-match plurality leaves the fruit unmatched") {
    VoteTable votes;
    votes[2] = {{kNoMatchVote, 0, 1.0}, {kNoMatchVote, 1, 1.0}, {0, 2, 0.1}};
    const TemporalMatchSet out = MajorityVote(votes, sa, sb);
    CHECK(out.final_matches.empty());
  }
}

TEST_CASE("majority vote: injectivity resolved by vote count") {
  SessionBuilder a("a"), b("b");
  a.AddFrame(0, Embed(0.0f));
  b.AddFrame(0, Embed(0.0f));
  a.AddLandmark(0, {0, 0, 2});
  a.AddLandmark(1, {0.1, 0, 2});
  b.AddLandmark(7, {0, 0, 2});
  const SessionMap sa = a.Build();
  const SessionMap sb = b.Build();

  VoteTable votes;
  votes[0] = {{7, 0, 0.1}, {7, 1, 0.1}, {7, 2, 0.1}};
  votes[1] = {{7, 0, 0.1}};
  const TemporalMatchSet out = MajorityVote(votes, sa, sb);
  REQUIRE(out.final_matches.size() == 1);
  CHECK(out.final_matches[0] == std::pair<int, int>(0, 7));
  CHECK(out.unmatched_a == std::vector<int>{1});
}

TEST_CASE("stage 1: single fruit matched in every view") {
  ScenePair scene = LineScene(1, 1.0, 0.0, 0.0, 3);
  const VoteTable votes =
      Stage1Match(scene.a, scene.b, RigidTransform::Identity(), CostWeights{});
  REQUIRE(votes.count(0) == 1);
  CHECK(votes.at(0).size() == 3);
  for (const VoteEntry& e : votes.at(0)) CHECK(e.fruit_b == 0);
}

TEST_CASE("stage 1: fruits beyond the gate are all unmatched") {
  ScenePair scene = LineScene(2, 1.0, 0.0, 0.0, 4);
  RigidTransform far;
  far.translation = {50.0, 0.0, 0.0};
  const VoteTable votes = Stage1Match(scene.a, scene.b, far, CostWeights{});
  for (const auto& [fruit, entries] : votes) {
    for (const VoteEntry& e : entries) CHECK(e.fruit_b == kNoMatchVote);
  }
  const TemporalMatchSet out = MajorityVote(votes, scene.a, scene.b);
  CHECK(out.final_matches.empty());
}

TEST_CASE("stage 1: distinctive embeddings override a small position swap") {
  // Two fruits 6 cm apart; session B positions swapped relative to A, but
  // embeddings stay with the fruit identity.
  SessionBuilder a("a"), b("b");
  a.AddFrame(0, Embed(0.0f));
  b.AddFrame(0, Embed(0.0f));
  const int a0 = a.AddLandmark(0, {0.00, 0, 2});
  const int a1 = a.AddLandmark(1, {0.06, 0, 2});
  const int b0 = b.AddLandmark(0, {0.06, 0, 2});
  const int b1 = b.AddLandmark(1, {0.00, 0, 2});
  a.AddObservation(a0, 0, {100, 240}, Embed(0.0f, 0.0f));
  a.AddObservation(a1, 0, {130, 240}, Embed(10.0f, 0.0f));
  b.AddObservation(b0, 0, {130, 240}, Embed(0.0f, 0.0f));
  b.AddObservation(b1, 0, {100, 240}, Embed(10.0f, 0.0f));
  const VoteTable votes = Stage1Match(a.Build(), b.Build(),
                                      RigidTransform::Identity(), CostWeights{});
  CHECK(votes.at(0).front().fruit_b == 0);
  CHECK(votes.at(1).front().fruit_b == 1);
}

TEST_CASE("associate: self-match yields a perfect matching") {
  ScenePair scene = LineScene(8, 0.25, 0.0, 0.0, 5);
  const TemporalMatchSet out = Associate(scene.a, scene.a,
                                         RigidTransform::Identity(),
                                         CostWeights{});
  REQUIRE(out.final_matches.size() == 8);
  for (const auto& [fa, fb] : out.final_matches) CHECK(fa == fb);
  CHECK(out.unmatched_a.empty());
  CHECK(out.unmatched_b.empty());
  // References are stage-1 modal matches with entropy below threshold.
  for (const auto& [fa, fb] : out.references) CHECK(fa == fb);
}

TEST_CASE("associate: final matches injective both ways") {
  ScenePair scene = LineScene(10, 0.2, 0.01, 0.3, 6);
  const TemporalMatchSet out = Associate(scene.a, scene.b,
                                         RigidTransform::Identity(),
                                         CostWeights{});
  std::set<int> as, bs;
  for (const auto& [fa, fb] : out.final_matches) {
    CHECK(as.insert(fa).second);
    CHECK(bs.insert(fb).second);
  }
}

TEST_CASE("associate: identical match set under conjugation by a rigid motion") {
  ScenePair scene = LineScene(10, 0.2, 0.015, 0.2, 7);
  const RigidTransform a_to_b = RigidTransform::Identity();
  const TemporalMatchSet base =
      Associate(scene.a, scene.b, a_to_b, CostWeights{});

  RigidTransform g;
  g.rotation = Eigen::Quaterniond(
      Eigen::AngleAxisd(0.7, Eigen::Vector3d(0.2, 0.3, 0.9).normalized()));
  g.translation = {4.0, -2.0, 1.0};
  SessionMap moved_b = scene.b;
  for (auto& lm : moved_b.landmarks) lm.position = g.Apply(lm.position);
  const RigidTransform conjugated = g.Compose(a_to_b);
  const TemporalMatchSet moved =
      Associate(scene.a, moved_b, conjugated, CostWeights{});
  CHECK(moved.final_matches == base.final_matches);
}

TEST_CASE("stage 2: reference pairs get cost zero and are always kept") {
  ScenePair scene = LineScene(4, 0.3, 0.0, 0.0, 8);
  const std::vector<std::pair<int, int>> refs = {{0, 0}, {3, 3}};
  const VoteTable votes = Stage2Match(scene.a, scene.b,
                                      RigidTransform::Identity(), refs,
                                      CostWeights{});
  for (const VoteEntry& e : votes.at(0)) {
    CHECK(e.fruit_b == 0);
    CHECK(e.cost == 0.0);
  }
}

TEST_CASE("stage 2: no visible references reduces to stage 1") {
  ScenePair scene = LineScene(5, 0.25, 0.01, 0.1, 9);
  const VoteTable stage1 =
      Stage1Match(scene.a, scene.b, RigidTransform::Identity(), CostWeights{});
  const VoteTable stage2 = Stage2Match(scene.a, scene.b,
                                       RigidTransform::Identity(), {},
                                       CostWeights{});
  CHECK(stage1.size() == stage2.size());
  for (const auto& [fruit, entries] : stage1) {
    REQUIRE(stage2.count(fruit) == 1);
    REQUIRE(stage2.at(fruit).size() == entries.size());
    for (size_t i = 0; i < entries.size(); ++i) {
      CHECK(stage2.at(fruit)[i].fruit_b == entries[i].fruit_b);
      CHECK(stage2.at(fruit)[i].cost == entries[i].cost);
    }
  }
}

TEST_CASE("stage 2: topology penalty rejects an impostor at the right spot") {
  // Fruit 0's true partner is missing in B. An impostor sits at the gated
  // position with a similar embedding, but disagrees with all three anchors.
  SessionBuilder a("a"), b("b");
  a.AddFrame(0, Embed(0.0f));
  b.AddFrame(0, Embed(0.0f));
  // Target fruit.
  const int a_target = a.AddLandmark(0, {0.0, 0.0, 2.0});
  const int b_impostor = b.AddLandmark(9, {0.02, 0.0, 2.0});
  // Three references around it (visible in both).
  std::vector<int> a_refs, b_refs;
  const Eigen::Vector3d ref_pos[3] = {
      {0.5, 0.0, 2.0}, {-0.5, 0.0, 2.0}, {0.0, 0.5, 2.0}};
  for (int k = 0; k < 3; ++k) {
    a_refs.push_back(a.AddLandmark(1 + k, ref_pos[k]));
    b_refs.push_back(b.AddLandmark(1 + k, ref_pos[k]));
  }
  // Pixels: references A at compass points around the target; in B the
  // impostor sits on the opposite side of every reference.
  a.AddObservation(a_target, 0, {320, 240}, Embed(0.0f));
  b.AddObservation(b_impostor, 0, {320, 140}, Embed(0.05f));
  const Eigen::Vector2d ref_px[3] = {{420, 240}, {220, 240}, {320, 290}};
  for (int k = 0; k < 3; ++k) {
    a.AddObservation(a_refs[k], 0, ref_px[k], Embed(20.0f + k));
    b.AddObservation(b_refs[k], 0, ref_px[k], Embed(20.0f + k));
  }
  const std::vector<std::pair<int, int>> refs = {{1, 1}, {2, 2}, {3, 3}};
  CostWeights weights;
  const VoteTable votes = Stage2Match(a.Build(), b.Build(),
                                      RigidTransform::Identity(), refs,
                                      weights);
  REQUIRE(votes.count(0) == 1);
  // Penalty 3 * 0.5 pushes the impostor beyond the no-match cost of 1.0.
  CHECK(votes.at(0).front().fruit_b == kNoMatchVote);
}

TEST_CASE("baseline position: identical sessions match perfectly") {
  ScenePair scene = LineScene(6, 0.3, 0.0, 0.0, 10);
  const TemporalMatchSet out =
      BaselinePosition(scene.a, scene.a, RigidTransform::Identity(), 0.3);
  REQUIRE(out.final_matches.size() == 6);
  for (const auto& [fa, fb] : out.final_matches) CHECK(fa == fb);
}

TEST_CASE("baseline position: mutual swap is the known failure mode") {
  SessionBuilder a("a"), b("b");
  a.AddFrame(0, Embed(0.0f));
  b.AddFrame(0, Embed(0.0f));
  a.AddLandmark(0, {0.00, 0, 2});
  a.AddLandmark(1, {0.10, 0, 2});
  // In B the two fruits drifted past each other.
  b.AddLandmark(0, {0.11, 0, 2});
  b.AddLandmark(1, {0.01, 0, 2});
  const TemporalMatchSet out =
      BaselinePosition(a.Build(), b.Build(), RigidTransform::Identity(), 0.3);
  REQUIRE(out.final_matches.size() == 2);
  CHECK(out.final_matches[0] == std::pair<int, int>(0, 1));
  CHECK(out.final_matches[1] == std::pair<int, int>(1, 0));
}

TEST_CASE("baseline position: beyond-gate pairs stay unmatched") {
  SessionBuilder a("a"), b("b");
  a.AddFrame(0, Embed(0.0f));
  b.AddFrame(0, Embed(0.0f));
  a.AddLandmark(0, {0, 0, 2});
  b.AddLandmark(0, {1.0, 0, 2});
  const TemporalMatchSet out =
      BaselinePosition(a.Build(), b.Build(), RigidTransform::Identity(), 0.3);
  CHECK(out.final_matches.empty());
  CHECK(out.unmatched_a == std::vector<int>{0});
  CHECK(out.unmatched_b == std::vector<int>{0});
}

TEST_CASE("baseline histogram: identical sessions match perfectly") {
  ScenePair scene = LineScene(6, 0.3, 0.0, 0.0, 11);
  const TemporalMatchSet out = BaselineHistogram(
      scene.a, scene.a, RigidTransform::Identity(), HistogramBaselineParams{});
  REQUIRE(out.final_matches.size() == 6);
  for (const auto& [fa, fb] : out.final_matches) CHECK(fa == fb);
}

TEST_CASE("baseline histogram: isolated fruit decided by position alone") {
  SessionBuilder a("a"), b("b");
  a.AddFrame(0, Embed(0.0f));
  b.AddFrame(0, Embed(0.0f));
  a.AddLandmark(0, {0, 0, 2});       // isolated: nothing within 1 m
  b.AddLandmark(5, {0.05, 0, 2});
  const TemporalMatchSet out = BaselineHistogram(
      a.Build(), b.Build(), RigidTransform::Identity(), HistogramBaselineParams{});
  REQUIRE(out.final_matches.size() == 1);
  CHECK(out.final_matches[0] == std::pair<int, int>(0, 5));
}
