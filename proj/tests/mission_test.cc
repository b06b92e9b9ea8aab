// Copyright 2026 The Marsupial Authors
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

#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "marsupial/mission.h"

namespace marsupial {
namespace {

TrackEstimate at(const Vec3& p) {
  TrackEstimate e;
  e.position = p;
  return e;
}

Plane ground() { return Plane{}; }  // z = 0

DeploymentZone flat_zone() {
  DeploymentZone z;
  z.center = Vec3(1.0, 0.0, 0.0);
  return z;
}

const EventLogEntry* find_event(const MissionStepResult& r, const std::string& kind) {
  for (const EventLogEntry& e : r.events)
    if (e.kind == kind) return &e;
  return nullptr;
}

// ---- verify_touchdown -------------------------------------------------------

TEST(VerifyTouchdown, Examples) {
  EXPECT_TRUE(verify_touchdown(at(Vec3(0, 0, 0.02)), ground(), 0.05));
  EXPECT_FALSE(verify_touchdown(at(Vec3(0, 0, 0.10)), ground(), 0.05));
  EXPECT_TRUE(verify_touchdown(at(Vec3(0, 0, -0.01)), ground(), 0.05));
}

TEST(VerifyTouchdown, Errors) {
  EXPECT_THROW(verify_touchdown(at(Vec3::Zero()), ground(), 0.0), std::invalid_argument);
  Plane bad;
  bad.normal = Vec3(0, 0, 2);
  EXPECT_THROW(verify_touchdown(at(Vec3::Zero()), bad, 0.05), DegenerateInputError);
  bad.normal = Vec3(0, 0, std::numeric_limits<double>::quiet_NaN());
  EXPECT_THROW(verify_touchdown(at(Vec3::Zero()), bad, 0.05), DegenerateInputError);
}

TEST(VerifyTouchdown, MonotoneInThreshold) {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> h(-0.1, 0.5), t(0.001, 0.3);
  for (int i = 0; i < 1000; ++i) {
    const TrackEstimate e = at(Vec3(0, 0, h(rng)));
    const double a = t(rng), b = a + t(rng);
    if (verify_touchdown(e, ground(), a)) EXPECT_TRUE(verify_touchdown(e, ground(), b));
  }
}

// ---- verify_detachment ------------------------------------------------------

TEST(VerifyDetachment, Examples) {
  EXPECT_EQ(verify_detachment({0.06, 0.09, 0.13}, true, 0.05, 3).outcome,
            DeploymentOutcome::kSuccess);
  EXPECT_EQ(verify_detachment({0.06, 0.06, 0.06}, false, 0.05, 3).outcome,
            DeploymentOutcome::kFailure);
  EXPECT_EQ(verify_detachment({0.03}, true, 0.05, 5).outcome, DeploymentOutcome::kUndecided);
  EXPECT_EQ(verify_detachment({}, true, 0.05, 3).outcome, DeploymentOutcome::kUndecided);
}

TEST(VerifyDetachment, EachConditionIsRequired) {
  EXPECT_EQ(verify_detachment({0.06, 0.09, 0.13}, false, 0.05, 3).outcome,
            DeploymentOutcome::kFailure);
  EXPECT_EQ(verify_detachment({0.01, 0.02, 0.04}, true, 0.05, 3).outcome,
            DeploymentOutcome::kFailure);
  EXPECT_EQ(verify_detachment({0.06, 0.10, 0.09}, true, 0.05, 3).outcome,
            DeploymentOutcome::kFailure);
}

TEST(VerifyDetachment, UsesTrailingWindow) {
  const DeploymentVerdict v = verify_detachment({0.2, 0.0, 0.06, 0.09, 0.13}, true, 0.05, 3);
  EXPECT_EQ(v.outcome, DeploymentOutcome::kSuccess);
  EXPECT_EQ(v.separation_series, std::vector<double>({0.06, 0.09, 0.13}));
}

TEST(VerifyDetachment, MonotoneInMinSeparation) {
  std::mt19937_64 rng(102);
  std::uniform_real_distribution<double> step(-0.01, 0.05), s(0.0, 0.3);
  std::bernoulli_distribution coin(0.8);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> series{s(rng)};
    for (int k = 0; k < 6; ++k) series.push_back(series.back() + step(rng));
    const bool stationary = coin(rng);
    const double hi = s(rng), lo = hi * s(rng) / 0.3;
    if (verify_detachment(series, stationary, hi, 5).outcome == DeploymentOutcome::kSuccess)
      EXPECT_EQ(verify_detachment(series, stationary, lo, 5).outcome, DeploymentOutcome::kSuccess);
  }
}

// ---- transition relation ----------------------------------------------------

TEST(IsLegalTransition, NominalChain) {
  const std::vector<Phase> chain = {
      Phase::kIdle,        Phase::kScanAndMap,       Phase::kSelectZone, Phase::kPositionOverZone,
      Phase::kLowerTether, Phase::kVerifyTouchdown,  Phase::kDetach,     Phase::kGroundOps,
      Phase::kReturnAndSignal, Phase::kAlignForRetrieval, Phase::kReattach, Phase::kRetract,
      Phase::kDone};
  for (size_t i = 0; i + 1 < chain.size(); ++i)
    EXPECT_TRUE(is_legal_transition(chain[i], chain[i + 1])) << to_string(chain[i]);
}

TEST(IsLegalTransition, AttachedAndRetryEdges) {
  EXPECT_TRUE(is_legal_transition(Phase::kVerifyTouchdown, Phase::kGroundOps));
  EXPECT_TRUE(is_legal_transition(Phase::kAlignForRetrieval, Phase::kRetract));
  EXPECT_TRUE(is_legal_transition(Phase::kVerifyTouchdown, Phase::kLowerTether));
  EXPECT_TRUE(is_legal_transition(Phase::kDetach, Phase::kLowerTether));
}

TEST(IsLegalTransition, RejectsShortcutsAndTerminalExits) {
  EXPECT_FALSE(is_legal_transition(Phase::kIdle, Phase::kDetach));
  EXPECT_FALSE(is_legal_transition(Phase::kLowerTether, Phase::kDetach));
  EXPECT_FALSE(is_legal_transition(Phase::kScanAndMap, Phase::kIdle));
  EXPECT_FALSE(is_legal_transition(Phase::kDone, Phase::kIdle));
  EXPECT_FALSE(is_legal_transition(Phase::kAborted, Phase::kAborted));
  EXPECT_TRUE(is_legal_transition(Phase::kGroundOps, Phase::kAborted));
}

TEST(PhaseNames, RoundTrip) {
  for (int i = 0; i <= static_cast<int>(Phase::kAborted); ++i) {
    const Phase p = static_cast<Phase>(i);
    EXPECT_EQ(phase_from_string(to_string(p)), p);
  }
  EXPECT_FALSE(phase_from_string("Hover"));
}

// ---- mission_step -----------------------------------------------------------

MissionState in_phase(Phase p, int attempt = 1) {
  MissionState s;
  s.phase = p;
  s.attempt_count = attempt;
  s.lower_entries = attempt;
  s.zone = flat_zone();
  s.map_paused = p == Phase::kLowerTether || p == Phase::kVerifyTouchdown || p == Phase::kDetach;
  return s;
}

MissionObservations ugv_at_height(double z) {
  MissionObservations o;
  o.tether_length = 3.0;
  o.anchor = Vec3(1, 0, 4);
  o.ugv = at(Vec3(1, 0, z));
  o.head = at(Vec3(1, 0, z + 0.13));
  o.head_attached = true;
  o.uav_at_goal = true;
  return o;
}

TEST(MissionStep, IdleStartsScan) {
  const MissionStepResult r = mission_step(MissionState{}, MissionConfig{}, MissionObservations{}, 0.0);
  EXPECT_EQ(r.state.phase, Phase::kScanAndMap);
  const EventLogEntry* e = find_event(r, "phase_enter");
  ASSERT_NE(e, nullptr);
  EXPECT_EQ(e->payload["from"], "Idle");
  EXPECT_EQ(e->payload["to"], "ScanAndMap");
}

TEST(MissionStep, LowerTetherStopsAtClearanceLimit) {
  const MissionStepResult r =
      mission_step(in_phase(Phase::kLowerTether), MissionConfig{}, ugv_at_height(0.04), 10.0);
  EXPECT_EQ(r.state.phase, Phase::kVerifyTouchdown);
  EXPECT_EQ(r.commands.winch_rate, 0.0);
}

TEST(MissionStep, LowerTetherKeepsDescending) {
  const MissionConfig cfg;
  const MissionStepResult high =
      mission_step(in_phase(Phase::kLowerTether), cfg, ugv_at_height(1.0), 10.0);
  EXPECT_EQ(high.state.phase, Phase::kLowerTether);
  EXPECT_EQ(high.commands.winch_rate, cfg.descent_rate);
  const MissionStepResult near =
      mission_step(in_phase(Phase::kLowerTether), cfg, ugv_at_height(0.2), 10.0);
  EXPECT_EQ(near.commands.winch_rate, cfg.approach_rate);
}

TEST(MissionStep, TouchdownFailureRetries) {
  MissionState s = in_phase(Phase::kVerifyTouchdown, 1);
  s.slack_paid = true;
  MissionConfig cfg;
  cfg.touchdown_rule = TouchdownRule::kGroundPlane;
  const MissionStepResult r = mission_step(s, cfg, ugv_at_height(0.10), 20.0);
  EXPECT_EQ(r.state.phase, Phase::kLowerTether);
  EXPECT_EQ(r.state.attempt_count, 2);
  ASSERT_TRUE(r.state.touchdown_verdict);
  EXPECT_EQ(r.state.touchdown_verdict->outcome, DeploymentOutcome::kFailure);
  ASSERT_NE(find_event(r, "reattempt"), nullptr);
}

TEST(MissionStep, ExhaustedAttemptsAbort) {
  MissionState s = in_phase(Phase::kVerifyTouchdown, 3);
  s.slack_paid = true;
  MissionConfig cfg;
  cfg.max_attempts = 3;
  const MissionStepResult r = mission_step(s, cfg, ugv_at_height(0.10), 20.0);
  EXPECT_EQ(r.state.phase, Phase::kAborted);
  EXPECT_EQ(r.state.termination, Termination::kFailure);
  EXPECT_EQ(r.state.abort_reason, "max_attempts_exceeded");
  EXPECT_LE(r.state.attempt_count, cfg.max_attempts);
}

TEST(MissionStep, DetachRequestAboveLimitIsRefused) {
  MissionObservations o = ugv_at_height(0.2);
  o.detach_requested = true;
  const MissionStepResult r = mission_step(in_phase(Phase::kLowerTether), MissionConfig{}, o, 10.0);
  EXPECT_EQ(r.state.phase, Phase::kLowerTether);
  EXPECT_FALSE(r.commands.epm.has_value());
  const EventLogEntry* e = find_event(r, "detach_refused");
  ASSERT_NE(e, nullptr);
  EXPECT_NEAR(e->payload["clearance"].get<double>(), 0.2, 1e-12);
  EXPECT_EQ(find_event(r, "detach"), nullptr);
}

TEST(MissionStep, DetachReleasesOnlyBelowLimit) {
  MissionState s = in_phase(Phase::kDetach);
  const MissionStepResult ok = mission_step(s, MissionConfig{}, ugv_at_height(0.01), 30.0);
  EXPECT_EQ(ok.commands.epm, false);
  ASSERT_NE(find_event(ok, "detach"), nullptr);
  const MissionStepResult high = mission_step(s, MissionConfig{}, ugv_at_height(0.3), 30.0);
  EXPECT_FALSE(high.commands.epm.has_value());
  EXPECT_EQ(find_event(high, "detach"), nullptr);
  EXPECT_EQ(high.state.phase, Phase::kLowerTether);
}

TEST(MissionStep, MapPausedFromLowerTetherToGroundOps) {
  MissionState s = in_phase(Phase::kPositionOverZone);
  s.map_paused = false;
  s.arrived_at = 0.0;
  MissionConfig cfg;
  const MissionStepResult down = mission_step(s, cfg, ugv_at_height(1.0), 10.0);
  ASSERT_EQ(down.state.phase, Phase::kLowerTether);
  EXPECT_TRUE(down.state.map_paused);
  EXPECT_TRUE(down.commands.map_paused);

  MissionState v = in_phase(Phase::kVerifyTouchdown);
  v.slack_paid = true;
  cfg.mode = DeploymentMode::kAttached;
  const MissionStepResult up = mission_step(v, cfg, ugv_at_height(0.0), 20.0);
  ASSERT_EQ(up.state.phase, Phase::kGroundOps);
  EXPECT_FALSE(up.state.map_paused);
  EXPECT_FALSE(up.commands.map_paused);
}

TEST(MissionStep, InvalidObservationAborts) {
  MissionObservations o = ugv_at_height(1.0);
  o.tether_length = std::numeric_limits<double>::quiet_NaN();
  const MissionStepResult r = mission_step(in_phase(Phase::kLowerTether), MissionConfig{}, o, 10.0);
  EXPECT_EQ(r.state.phase, Phase::kAborted);
  EXPECT_EQ(r.state.abort_reason, "invalid_observation");
  ASSERT_NE(find_event(r, "abort"), nullptr);
}

TEST(MissionStep, MissingUgvEstimateAborts) {
  MissionObservations o = ugv_at_height(1.0);
  o.ugv.reset();
  EXPECT_EQ(mission_step(in_phase(Phase::kLowerTether), MissionConfig{}, o, 10.0).state.phase,
            Phase::kAborted);
}

TEST(MissionStep, NoZoneFails) {
  MissionState s;
  s.phase = Phase::kSelectZone;
  MissionObservations o;
  o.zone_search = ZoneSearchResult{std::nullopt, ZoneFailure::kNoCandidate};
  const MissionStepResult r = mission_step(s, MissionConfig{}, o, 5.0);
  EXPECT_EQ(r.state.phase, Phase::kAborted);
  EXPECT_EQ(r.state.termination, Termination::kFailure);
  EXPECT_NE(find_event(r, "zone_search_failed"), nullptr);
}

TEST(MissionStep, TerminalPhasesHold) {
  MissionState s;
  s.phase = Phase::kDone;
  const MissionStepResult r = mission_step(s, MissionConfig{}, ugv_at_height(0.0), 99.0);
  EXPECT_EQ(r.state.phase, Phase::kDone);
  EXPECT_TRUE(r.events.empty());
  EXPECT_EQ(r.commands.winch_rate, 0.0);
}

// Random observations from Idle onward. Whatever the inputs, the machine only
// takes legal edges, never releases above d_min and never exceeds the
// attempt budget.
class MissionFuzz : public ::testing::TestWithParam<int> {};

TEST_P(MissionFuzz, SafetyInvariants) {
  std::mt19937_64 rng(static_cast<uint64_t>(GetParam()));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  MissionConfig cfg;
  cfg.mode = u01(rng) < 0.5 ? DeploymentMode::kAttached : DeploymentMode::kDetached;
  cfg.max_attempts = 1 + static_cast<int>(u01(rng) * 3);
  cfg.verify_window = 3;
  MissionState s;
  double t = 0.0;
  for (int step = 0; step < 4000 && !is_terminal(s.phase); ++step) {
    t += 0.1;
    MissionObservations o;
    o.tether_length = 0.2 + 4.0 * u01(rng);
    o.anchor = Vec3(0, 0, 4);
    if (u01(rng) < 0.97) o.ugv = at(Vec3(0, 0, u01(rng) < 0.5 ? 0.3 * u01(rng) : 0.02 * u01(rng)));
    if (u01(rng) < 0.97) o.separation = 0.2 * u01(rng);
    o.ugv_speed = 0.02 * u01(rng);
    o.uav_at_goal = u01(rng) < 0.7;
    o.head_attached = u01(rng) < 0.5;
    o.ugv_route_done = u01(rng) < 0.2;
    o.ugv_upright = u01(rng) < 0.9;
    o.detach_requested = u01(rng) < 0.1;
    if (u01(rng) < 0.8) o.pixel_error = 10.0 * u01(rng);
    if (u01(rng) < 0.5) {
      ZoneSearchResult z;
      if (u01(rng) < 0.95) z.zone = flat_zone();
      else z.reason = ZoneFailure::kNoCandidate;
      o.zone_search = z;
    }
    const MissionStepResult r = mission_step(s, cfg, o, t);
    for (const EventLogEntry& e : r.events) {
      if (e.kind == "phase_enter") {
        const Phase from = *phase_from_string(e.payload["from"].get<std::string>());
        const Phase to = *phase_from_string(e.payload["to"].get<std::string>());
        ASSERT_TRUE(is_legal_transition(from, to)) << to_string(from) << " -> " << to_string(to);
      }
      if (e.kind == "detach") {
        ASSERT_LE(e.payload["clearance"].get<double>(), cfg.d_min);
      }
    }
    ASSERT_LE(r.state.lower_entries, cfg.max_attempts);
    ASSERT_LE(r.state.attempt_count, cfg.max_attempts);
    if (r.state.phase == Phase::kLowerTether || r.state.phase == Phase::kVerifyTouchdown ||
        r.state.phase == Phase::kDetach)
      ASSERT_TRUE(r.state.map_paused);
    s = r.state;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, MissionFuzz, ::testing::Range(1, 41));

}  // namespace
}  // namespace marsupial
