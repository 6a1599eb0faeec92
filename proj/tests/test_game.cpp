#include <gtest/gtest.h>

#include <numeric>

#include "oracles.hpp"
#include "swbnet/agents.hpp"
#include "swbnet/game.hpp"
#include "swbnet/metrics.hpp"

using namespace swbnet;

namespace {

SessionState make_state(const Network& g, Condition c = Condition::Invisible, Points start = 1000) {
  SessionState s;
  s.config.n_players = g.size();
  s.config.condition = c;
  s.network = g;
  s.wealth.assign(g.size(), start);
  s.last_action.assign(g.size(), std::nullopt);
  s.last_swb.assign(g.size(), std::nullopt);
  return s;
}

Network star(std::size_t leaves) {
  Network g(leaves + 1);
  for (NodeId v = 1; v <= leaves; ++v) g.add_edge(0, v);
  return g;
}

AgentPolicy fixed(PolicyKind k) {
  AgentPolicy p;
  p.kind = k;
  return p;
}

// Records every view handed to the cooperation decision.
struct SpyPolicy {
  AgentPolicy inner;
  mutable std::vector<PeerView> seen;
  Action cooperate(Condition c, std::span<const PeerView> view, Rng& rng) const {
    seen.insert(seen.end(), view.begin(), view.end());
    return inner.cooperate(c, view, rng);
  }
  SwbRating rate(const SessionState& s, NodeId i) const { return inner.rate(s, i); }
  bool tie(const TieQuery& q, Rng& rng) const {
    seen.push_back(q.partner_view);
    return inner.tie(q, rng);
  }
};

}  // namespace

TEST(InitSession, ForcedThreeRichSevenPoorGini) {
  std::vector<double> wealth(10, 200.0);
  std::fill(wealth.begin(), wealth.begin() + 3, 1150.0);
  EXPECT_NEAR(gini(std::span<const double>(wealth)), 0.411340206185567, 1e-12);
  EXPECT_NEAR(oracle::gini(wealth), 0.411340206185567, 1e-12);
}

TEST(InitSession, AllRichHasZeroGini) {
  SessionConfig cfg;
  cfg.rich_fraction = 1.0;
  for (auto mode : {WealthAssignment::Shuffled, WealthAssignment::Independent}) {
    cfg.wealth_assignment = mode;
    const auto s = init_session(cfg);
    for (Points w : s.wealth) EXPECT_EQ(w, 1150);
    EXPECT_EQ(gini(std::span<const Points>(s.wealth)), 0.0);
  }
}

TEST(InitSession, DefaultsStartAtRoundZeroWithoutActions) {
  SessionConfig cfg;
  cfg.seed = 3;
  const auto s = init_session(cfg);
  EXPECT_EQ(s.round, 0);
  EXPECT_EQ(s.size(), 13u);
  for (const auto& a : s.last_action) EXPECT_FALSE(a.has_value());
  // Shuffled assignment: round(0.3 * 13) = 4 rich players.
  EXPECT_EQ(std::count(s.wealth.begin(), s.wealth.end(), 1150), 4);
}

TEST(InitSession, DefaultMeanGiniNearPointFour) {
  SessionConfig cfg;
  double sum = 0;
  for (int r = 0; r < 10000; ++r) {
    cfg.seed = derive_seed(11, "init", static_cast<std::uint64_t>(r));
    const auto s = init_session(cfg);
    sum += gini(std::span<const Points>(s.wealth));
  }
  EXPECT_NEAR(sum / 10000, 0.4, 0.02);
}

TEST(InitSession, IndependentAssignmentMatchesBinomialExpectation) {
  // E[G] under independent draws at n = 13, enumerated over the rich count.
  double expected = 0;
  const int n = 13;
  for (int k = 1; k < n; ++k) {
    const double w = std::exp(std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1)) * std::pow(0.3, k) *
                     std::pow(0.7, n - k);
    const double mu = (k * 1150.0 + (n - k) * 200.0) / n;
    expected += w * (k * (n - k) * 950.0) / (n * n * mu);
  }
  SessionConfig cfg;
  cfg.wealth_assignment = WealthAssignment::Independent;
  double sum = 0;
  const int reps = 10000;
  for (int r = 0; r < reps; ++r) {
    cfg.seed = derive_seed(12, "init", static_cast<std::uint64_t>(r));
    const auto s = init_session(cfg);
    if (std::all_of(s.wealth.begin(), s.wealth.end(), [](Points w) { return w == 0; })) continue;
    sum += gini(std::span<const Points>(s.wealth));
  }
  EXPECT_NEAR(expected, 0.37616156522645, 1e-9);
  EXPECT_NEAR(sum / reps, expected, 0.005);
}

TEST(InitSession, RejectsInvalidConfig) {
  SessionConfig cfg;
  cfg.n_players = 1;
  EXPECT_THROW(init_session(cfg), InvalidConfig);
  cfg = SessionConfig{};
  cfg.rich_fraction = 1.2;
  EXPECT_THROW(init_session(cfg), InvalidConfig);
  cfg = SessionConfig{};
  cfg.rounds = 0;
  EXPECT_THROW(init_session(cfg), InvalidConfig);
  cfg = SessionConfig{};
  cfg.poor_wealth = -1;
  EXPECT_THROW(init_session(cfg), InvalidConfig);
}

TEST(PggRound, CooperatorWithTwoCooperatingNeighbors) {
  auto s = make_state(star(5));
  std::vector<Action> d(6, Action::Defect);
  d[0] = d[1] = d[2] = Action::Cooperate;
  const auto delta = apply_pgg_round(s, d);
  EXPECT_EQ(delta[0], -250 + 200);
  EXPECT_EQ(s.wealth[0], 1000 - 50);
}

TEST(PggRound, DefectorWithTwoCooperatingNeighbors) {
  auto s = make_state(star(5));
  std::vector<Action> d(6, Action::Defect);
  d[1] = d[2] = Action::Cooperate;
  EXPECT_EQ(apply_pgg_round(s, d)[0], 200);
}

TEST(PggRound, IsolatedCooperatorGetsNothing) {
  auto s = make_state(Network(3));
  std::vector<Action> d(3, Action::Cooperate);
  EXPECT_EQ(apply_pgg_round(s, d)[1], 0);
}

TEST(PggRound, MissingDecisionNamesPlayer) {
  auto s = make_state(star(3));
  std::vector<Action> d(3, Action::Cooperate);
  try {
    apply_pgg_round(s, d);
    FAIL() << "expected ProtocolError";
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("player 3"), std::string::npos);
  }
}

TEST(PggRound, WealthCreationIdentity) {
  Rng rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.index(12);
    auto s = make_state(random_network(n, rng.uniform(), rng));
    std::vector<Action> d(n);
    Points coop_degree = 0;
    for (NodeId i = 0; i < n; ++i) {
      d[i] = rng.bernoulli(0.5) ? Action::Cooperate : Action::Defect;
      if (d[i] == Action::Cooperate) coop_degree += static_cast<Points>(s.network.degree(i));
    }
    const auto delta = apply_pgg_round(s, d);
    ASSERT_EQ(std::accumulate(delta.begin(), delta.end(), Points{0}), 50 * coop_degree);
  }
}

TEST(SwbPhase, AnswerLevels) {
  EXPECT_EQ(swb_level(SwbAnswer::VeryGood), 2);
  EXPECT_EQ(swb_level(SwbAnswer::VeryBad), -2);
  EXPECT_EQ(swb_level(SwbAnswer::Neutral), 0);
}

TEST(SwbPhase, RejectsOutOfScale) {
  auto s = make_state(Network(2));
  apply_pgg_round(s, std::vector<Action>(2, Action::Defect));
  std::vector<SwbRating> r{{3, 0}, {0, 0}};
  EXPECT_THROW(apply_swb_phase(s, r), InvalidArgument);
  r = {{0, 0}, {1, 2}};
  apply_swb_phase(s, r);
  EXPECT_EQ(s.last_swb[1], (SwbRating{1, 2}));
}

TEST(PhaseOrder, OutOfOrderCallsAreRejected) {
  auto s = make_state(Network(2));
  std::vector<SwbRating> r(2);
  EXPECT_THROW(apply_swb_phase(s, r), ProtocolError);
  EXPECT_THROW(rewiring_phase(s, [](const TieQuery&, Rng&) { return true; }), ProtocolError);
  apply_pgg_round(s, std::vector<Action>(2, Action::Defect));
  EXPECT_THROW(apply_pgg_round(s, std::vector<Action>(2, Action::Defect)), ProtocolError);
}

TEST(Rewiring, ZeroProbabilityLeavesNetwork) {
  Rng rng(1);
  auto s = make_state(random_network(8, 0.4, rng));
  s.config.rewiring_pair_probability = 0.0;
  const Network before = s.network;
  apply_pgg_round(s, std::vector<Action>(8, Action::Defect));
  apply_swb_phase(s, std::vector<SwbRating>(8));
  const auto events = rewiring_phase(s, [](const TieQuery&, Rng&) { return false; });
  EXPECT_TRUE(events.empty());
  EXPECT_EQ(s.network, before);
}

TEST(Rewiring, CertainSelectionVisitsEveryPair) {
  auto s = make_state(Network(3));
  s.config.rewiring_pair_probability = 1.0;
  s.config.rounds = 5;
  for (int r = 0; r < 5; ++r) {
    apply_pgg_round(s, std::vector<Action>(3, Action::Cooperate));
    apply_swb_phase(s, std::vector<SwbRating>(3));
    const auto events = rewiring_phase(s, [](const TieQuery&, Rng& rng) { return rng.bernoulli(0.5); });
    EXPECT_EQ(events.size(), 3u);
    for (const auto& ev : events) EXPECT_TRUE(ev.consistent());
  }
}

TEST(Rewiring, MeanSelectedPairsMatchesBinomial) {
  SessionConfig cfg;
  cfg.rounds = 10000;
  cfg.seed = 77;
  auto s = init_session(cfg);
  double total = 0;
  for (int r = 0; r < 10000; ++r) {
    apply_pgg_round(s, std::vector<Action>(13, Action::Defect));
    apply_swb_phase(s, std::vector<SwbRating>(13));
    total += static_cast<double>(rewiring_phase(s, [](const TieQuery&, Rng&) { return true; }).size());
  }
  EXPECT_NEAR(total / 10000, 23.4, 3 * std::sqrt(78 * 0.21 / 10000));
}

TEST(Rewiring, UnilateralCutBilateralFormation) {
  auto s = make_state(Network(2));
  s.config.rewiring_pair_probability = 1.0;
  s.config.rounds = 3;
  // Proposal made but rejected: no tie.
  apply_pgg_round(s, std::vector<Action>(2, Action::Cooperate));
  apply_swb_phase(s, std::vector<SwbRating>(2));
  auto ev = rewiring_phase(s, [](const TieQuery& q, Rng&) { return q.stage == TieStage::Propose; });
  EXPECT_EQ(ev[0].decision, TieDecision::ProposeReject);
  EXPECT_FALSE(s.network.has_edge(0, 1));
  // Accepted proposal creates the tie.
  apply_pgg_round(s, std::vector<Action>(2, Action::Cooperate));
  apply_swb_phase(s, std::vector<SwbRating>(2));
  ev = rewiring_phase(s, [](const TieQuery&, Rng&) { return true; });
  EXPECT_EQ(ev[0].decision, TieDecision::ProposeAccept);
  EXPECT_TRUE(s.network.has_edge(0, 1));
  // One member alone can cut.
  apply_pgg_round(s, std::vector<Action>(2, Action::Cooperate));
  apply_swb_phase(s, std::vector<SwbRating>(2));
  ev = rewiring_phase(s, [](const TieQuery& q, Rng&) {
    EXPECT_EQ(q.stage, TieStage::Maintain);
    return false;
  });
  EXPECT_EQ(ev[0].decision, TieDecision::Cut);
  EXPECT_FALSE(s.network.has_edge(0, 1));
}

TEST(Rewiring, CallbackFailureCarriesContext) {
  auto s = make_state(Network(3));
  s.config.rewiring_pair_probability = 1.0;
  apply_pgg_round(s, std::vector<Action>(3, Action::Cooperate));
  apply_swb_phase(s, std::vector<SwbRating>(3));
  try {
    rewiring_phase(s, [](const TieQuery&, Rng&) -> bool { throw std::runtime_error("boom"); });
    FAIL() << "expected ProtocolError";
  } catch (const ProtocolError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("round 1"), std::string::npos);
    EXPECT_NE(what.find("boom"), std::string::npos);
  }
}

TEST(Visibility, InvisibleHidesEmoji) {
  auto s = make_state(star(2), Condition::Invisible);
  s.last_swb[1] = SwbRating{2, 2};
  for (const auto& v : visibility_view(s, 0)) {
    EXPECT_FALSE(v.swb_shown);
    EXPECT_FALSE(v.swb_emoji.has_value());
  }
}

TEST(Visibility, VisibleShowsSecondAnswer) {
  auto s = make_state(star(2), Condition::Visible);
  s.last_swb[1] = SwbRating{-1, 2};
  s.last_action[1] = Action::Defect;
  s.wealth[1] = 321;
  const auto view = visibility_view(s, 0);
  ASSERT_EQ(view.size(), 2u);
  EXPECT_EQ(view[0].peer, 1u);
  EXPECT_EQ(view[0].swb_emoji, 2);
  EXPECT_EQ(view[0].reputation, Action::Defect);
  EXPECT_EQ(view[0].wealth, 321);
}

TEST(Visibility, IsolatedViewerSeesNobody) {
  auto s = make_state(Network(3), Condition::Visible);
  EXPECT_TRUE(visibility_view(s, 2).empty());
  EXPECT_THROW(visibility_view(s, 3), InvalidArgument);
}

TEST(RunSession, AlwaysDefectKeepsWealth) {
  SessionConfig cfg;
  cfg.n_players = 2;
  cfg.rounds = 1;
  cfg.initial_density = 1.0;
  const auto log = run_session(cfg, fixed(PolicyKind::AlwaysDefect));
  const auto final_state = replay(log);
  EXPECT_EQ(final_state.wealth, log.header.initial_wealth);
}

TEST(RunSession, AlwaysCooperateGainsFifty) {
  SessionConfig cfg;
  cfg.n_players = 2;
  cfg.rounds = 1;
  cfg.initial_density = 1.0;
  const auto log = run_session(cfg, fixed(PolicyKind::AlwaysCooperate));
  const auto final_state = replay(log);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(final_state.wealth[i], log.header.initial_wealth[i] + 50);
}

TEST(RunSession, SameSeedSameLog) {
  SessionConfig cfg;
  cfg.seed = 31337;
  cfg.condition = Condition::Visible;
  const AgentPolicy policy;
  EXPECT_EQ(run_session(cfg, policy), run_session(cfg, policy));
  SessionConfig other = cfg;
  other.seed = 31338;
  EXPECT_NE(run_session(cfg, policy), run_session(other, policy));
}

TEST(RunSession, PhaseOrderInLog) {
  SessionConfig cfg;
  cfg.seed = 4;
  const auto log = run_session(cfg, AgentPolicy{});
  // EDG(0), then per round DEC*n PAY*n SWB*n REW* EDG, then OUT*n.
  std::size_t i = 1;
  for (int r = 1; r <= cfg.rounds; ++r) {
    for (std::size_t k = 0; k < 13; ++k, ++i) ASSERT_TRUE(std::holds_alternative<DecisionRecord>(log.records[i]));
    for (std::size_t k = 0; k < 13; ++k, ++i) ASSERT_TRUE(std::holds_alternative<PayoffRecord>(log.records[i]));
    for (std::size_t k = 0; k < 13; ++k, ++i) ASSERT_TRUE(std::holds_alternative<SwbRecord>(log.records[i]));
    while (std::holds_alternative<RewiringEvent>(log.records[i])) ++i;
    ASSERT_EQ(std::get<EdgeSnapshot>(log.records[i]).round(), r);
    ++i;
  }
  for (std::size_t k = 0; k < 13; ++k, ++i) ASSERT_TRUE(std::holds_alternative<PayoutRecord>(log.records[i]));
  EXPECT_EQ(i, log.records.size());
}

TEST(RunSession, ReplayReproducesFinalState) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SessionConfig cfg;
    cfg.seed = seed;
    cfg.condition = seed % 2 ? Condition::Visible : Condition::Invisible;
    const auto log = run_session(cfg, AgentPolicy{});
    const auto state = replay(log);
    std::vector<Points> final_wealth;
    for (const auto& rec : log.records)
      if (const auto* out = std::get_if<PayoutRecord>(&rec)) final_wealth.push_back(out->wealth);
    EXPECT_EQ(state.wealth, final_wealth);
    EXPECT_EQ(state.round, cfg.rounds);
  }
}

TEST(RunSession, ReplayRejectsTamperedPayoff) {
  SessionConfig cfg;
  cfg.seed = 9;
  auto log = run_session(cfg, AgentPolicy{});
  for (auto& rec : log.records)
    if (auto* pay = std::get_if<PayoffRecord>(&rec)) {
      pay->wealth += 1;
      break;
    }
  EXPECT_THROW(replay(log), ProtocolError);
}

TEST(RunSession, InvisibleSessionsNeverShowEmoji) {
  SpyPolicy spy;
  SessionConfig cfg;
  cfg.condition = Condition::Invisible;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    cfg.seed = seed;
    run_session(cfg, spy);
  }
  ASSERT_FALSE(spy.seen.empty());
  for (const auto& v : spy.seen) ASSERT_FALSE(v.swb_emoji.has_value());

  SpyPolicy vis;
  cfg.condition = Condition::Visible;
  run_session(cfg, vis);
  EXPECT_TRUE(std::any_of(vis.seen.begin(), vis.seen.end(), [](const PeerView& v) { return v.swb_emoji.has_value(); }));
}

TEST(RunSession, FirstRoundReputationUnknown) {
  SpyPolicy spy;
  SessionConfig cfg;
  cfg.rounds = 1;
  cfg.initial_density = 1.0;
  run_session(cfg, spy);
  // Decision-phase views come first: 13 players x 12 neighbors.
  for (std::size_t i = 0; i < 13 * 12; ++i) EXPECT_FALSE(spy.seen[i].reputation.has_value());
}

TEST(Payout, Conversion) {
  EXPECT_DOUBLE_EQ(payout(2000), 1.0);
  EXPECT_DOUBLE_EQ(payout(1558), 0.779);
  EXPECT_DOUBLE_EQ(payout(-100), 0.0);
}
