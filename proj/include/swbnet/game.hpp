#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "swbnet/error.hpp"
#include "swbnet/graph.hpp"
#include "swbnet/random.hpp"

namespace swbnet {

using Points = std::int64_t;

enum class Condition : std::uint8_t { Invisible = 0, Visible = 1 };
enum class Action : std::uint8_t { Cooperate = 0, Defect = 1 };

// A peer's prior-round action; empty before the first round.
using Reputation = std::optional<Action>;

inline const char* to_string(Condition c) { return c == Condition::Visible ? "visible" : "invisible"; }
inline const char* to_string(Action a) { return a == Action::Cooperate ? "C" : "D"; }

// How initial endowments are handed out.
//   Shuffled:    exactly round(rich_fraction * n) players, chosen uniformly, are rich.
//   Independent: each player is rich with probability rich_fraction.
enum class WealthAssignment : std::uint8_t { Shuffled, Independent };

struct SessionConfig {
  std::size_t n_players = 13;
  int rounds = 15;
  double initial_density = 0.3;
  Points rich_wealth = 1150;
  Points poor_wealth = 200;
  double rich_fraction = 0.3;
  WealthAssignment wealth_assignment = WealthAssignment::Shuffled;
  Points cooperation_cost_per_edge = 50;
  Points cooperation_benefit_per_edge = 100;
  double rewiring_pair_probability = 0.3;
  Points points_per_usd = 2000;
  Condition condition = Condition::Invisible;
  std::uint64_t seed = 0;

  void validate() const {
    auto prob = [](const char* name, double p) {
      if (!(p >= 0.0 && p <= 1.0))
        throw InvalidConfig(std::string(name) + " must lie in [0, 1], got " + std::to_string(p));
    };
    auto points = [](const char* name, Points v) {
      if (v < 0) throw InvalidConfig(std::string(name) + " must be non-negative, got " + std::to_string(v));
    };
    if (n_players < 2) throw InvalidConfig("n_players must be at least 2");
    if (rounds < 1) throw InvalidConfig("rounds must be at least 1");
    prob("initial_density", initial_density);
    prob("rich_fraction", rich_fraction);
    prob("rewiring_pair_probability", rewiring_pair_probability);
    points("rich_wealth", rich_wealth);
    points("poor_wealth", poor_wealth);
    points("cooperation_cost_per_edge", cooperation_cost_per_edge);
    points("cooperation_benefit_per_edge", cooperation_benefit_per_edge);
    if (points_per_usd <= 0) throw InvalidConfig("points_per_usd must be positive");
  }

  friend bool operator==(const SessionConfig&, const SessionConfig&) = default;
};

// Answers to "How do you feel right now?" (feeling) and "How would you want
// your neighbors to see you?" (presented), each on the -2..2 scale.
struct SwbRating {
  int feeling = 0;
  int presented = 0;
  friend bool operator==(const SwbRating&, const SwbRating&) = default;
};

enum class SwbAnswer : std::uint8_t { VeryGood, Good, Neutral, Bad, VeryBad };

constexpr int swb_level(SwbAnswer a) {
  switch (a) {
    case SwbAnswer::VeryGood: return 2;
    case SwbAnswer::Good: return 1;
    case SwbAnswer::Neutral: return 0;
    case SwbAnswer::Bad: return -1;
    case SwbAnswer::VeryBad: return -2;
  }
  return 0;
}

enum class Phase : std::uint8_t { Decision, Rating, Rewiring };

struct SessionState {
  SessionConfig config;
  int round = 0;  // last round whose decision phase has run
  Phase phase = Phase::Decision;
  Network network;
  std::vector<Points> wealth;
  std::vector<Reputation> last_action;
  std::vector<std::optional<SwbRating>> last_swb;
  Rng rng;

  std::size_t size() const { return network.size(); }
};

// What one player sees of another. The emoji slot is only ever filled in the
// visible condition; `swb_shown` records whether the condition shows it.
struct PeerView {
  NodeId peer = 0;
  Reputation reputation;
  Points wealth = 0;
  bool swb_shown = false;
  std::optional<int> swb_emoji;

  friend bool operator==(const PeerView&, const PeerView&) = default;
};

enum class PairState : std::uint8_t { Connected, Unconnected };
enum class TieDecision : std::uint8_t { Keep, Cut, ProposeAccept, ProposeReject, NoTie };
enum class TieStage : std::uint8_t { Maintain, Propose, Accept };

inline const char* to_string(PairState s) { return s == PairState::Connected ? "connected" : "unconnected"; }

inline const char* to_string(TieDecision d) {
  switch (d) {
    case TieDecision::Keep: return "keep";
    case TieDecision::Cut: return "cut";
    case TieDecision::ProposeAccept: return "propose_accept";
    case TieDecision::ProposeReject: return "propose_reject";
    case TieDecision::NoTie: return "no_tie";
  }
  return "?";
}

// One selected pair of the rewiring phase. `decider` made the first choice
// (keep/cut or propose); on a proposal the other member accepted or rejected.
struct RewiringEvent {
  int round = 0;
  NodeId u = 0;
  NodeId v = 0;
  NodeId decider = 0;
  PairState pre_state = PairState::Unconnected;
  TieDecision decision = TieDecision::NoTie;
  Action decider_action = Action::Cooperate;
  Action partner_action = Action::Cooperate;

  NodeId partner() const { return decider == u ? v : u; }

  // Whether the first chooser opted to be connected (keep or propose).
  bool decider_connects() const {
    return decision == TieDecision::Keep || decision == TieDecision::ProposeAccept ||
           decision == TieDecision::ProposeReject;
  }

  bool consistent() const {
    if (decider != u && decider != v) return false;
    const bool maintain = decision == TieDecision::Keep || decision == TieDecision::Cut;
    return maintain == (pre_state == PairState::Connected);
  }

  friend bool operator==(const RewiringEvent&, const RewiringEvent&) = default;
};

// Question put to a tie callback.
struct TieQuery {
  int round = 0;
  Condition condition = Condition::Invisible;
  TieStage stage = TieStage::Maintain;
  NodeId decider = 0;
  NodeId partner = 0;
  PairState pre_state = PairState::Unconnected;
  Reputation decider_action;
  PeerView partner_view;
};

// Event log records, in the order they are emitted.
struct DecisionRecord {
  int round = 0;
  NodeId player = 0;
  Action action = Action::Cooperate;
  friend bool operator==(const DecisionRecord&, const DecisionRecord&) = default;
};

struct PayoffRecord {
  int round = 0;
  NodeId player = 0;
  Points delta = 0;
  Points wealth = 0;
  friend bool operator==(const PayoffRecord&, const PayoffRecord&) = default;
};

struct SwbRecord {
  int round = 0;
  NodeId player = 0;
  SwbRating rating;
  friend bool operator==(const SwbRecord&, const SwbRecord&) = default;
};

struct PayoutRecord {
  NodeId player = 0;
  Points wealth = 0;
  double usd = 0.0;
  friend bool operator==(const PayoutRecord&, const PayoutRecord&) = default;
};

using LogRecord = std::variant<DecisionRecord, PayoffRecord, SwbRecord, RewiringEvent, EdgeSnapshot, PayoutRecord>;

struct LogHeader {
  int version = 1;
  std::string artifact;
  std::string label;
  SessionConfig config;
  std::vector<Points> initial_wealth;
  friend bool operator==(const LogHeader&, const LogHeader&) = default;
};

struct EventLog {
  LogHeader header;
  std::vector<LogRecord> records;
  friend bool operator==(const EventLog&, const EventLog&) = default;
};

inline constexpr const char* kArtifactVersion = "swbnet 1.0.0";

// ---------------------------------------------------------------------------
// Protocol operations

inline double payout(Points final_wealth, Points points_per_usd = 2000) {
  if (points_per_usd <= 0) throw InvalidArgument("points_per_usd must be positive");
  return final_wealth <= 0 ? 0.0 : static_cast<double>(final_wealth) / static_cast<double>(points_per_usd);
}

inline SessionState init_session(const SessionConfig& config) {
  config.validate();
  SessionState s;
  s.config = config;
  s.rng = Rng(config.seed);
  s.network = random_network(config.n_players, config.initial_density, s.rng);

  const std::size_t n = config.n_players;
  s.wealth.assign(n, config.poor_wealth);
  if (config.wealth_assignment == WealthAssignment::Independent) {
    for (auto& w : s.wealth)
      if (s.rng.bernoulli(config.rich_fraction)) w = config.rich_wealth;
  } else {
    const auto rich = static_cast<std::size_t>(std::lround(config.rich_fraction * static_cast<double>(n)));
    std::vector<NodeId> order(n);
    for (NodeId i = 0; i < n; ++i) order[i] = i;
    s.rng.shuffle(order.begin(), order.end());
    for (std::size_t k = 0; k < std::min(rich, n); ++k) s.wealth[order[k]] = config.rich_wealth;
  }
  s.last_action.assign(n, std::nullopt);
  s.last_swb.assign(n, std::nullopt);
  return s;
}

inline PeerView peer_view(const SessionState& s, NodeId peer) {
  if (peer >= s.size()) throw InvalidArgument("peer index " + std::to_string(peer) + " out of range");
  PeerView view;
  view.peer = peer;
  view.reputation = s.last_action[peer];
  view.wealth = s.wealth[peer];
  view.swb_shown = s.config.condition == Condition::Visible;
  if (view.swb_shown && s.last_swb[peer]) view.swb_emoji = s.last_swb[peer]->presented;
  return view;
}

// Everything `viewer` sees of its current neighbors.
inline std::vector<PeerView> visibility_view(const SessionState& s, NodeId viewer) {
  if (viewer >= s.size()) throw InvalidArgument("viewer index " + std::to_string(viewer) + " out of range");
  std::vector<PeerView> out;
  for (NodeId peer : s.network.neighbors(viewer)) out.push_back(peer_view(s, peer));
  return out;
}

// Network public goods payoffs. A cooperator pays `cost` per neighbor and
// every neighbor of a cooperator gains `benefit`. Returns per-player deltas.
inline std::vector<Points> apply_pgg_round(SessionState& s, std::span<const Action> decisions) {
  if (s.phase != Phase::Decision) throw ProtocolError("payoff phase requested out of order");
  if (s.round >= s.config.rounds) throw ProtocolError("session already played all " + std::to_string(s.config.rounds) + " rounds");
  const std::size_t n = s.size();
  if (decisions.size() < n)
    throw ProtocolError("missing cooperation decision for player " + std::to_string(decisions.size()));
  if (decisions.size() > n) throw ProtocolError("more decisions than players");

  const Points cost = s.config.cooperation_cost_per_edge;
  const Points benefit = s.config.cooperation_benefit_per_edge;
  std::vector<Points> delta(n, 0);
  for (NodeId u = 0; u < n; ++u) {
    const auto deg = static_cast<Points>(s.network.degree(u));
    if (decisions[u] == Action::Cooperate) delta[u] -= cost * deg;
    for (NodeId v : s.network.neighbors(u))
      if (decisions[v] == Action::Cooperate) delta[u] += benefit;
  }
  for (NodeId u = 0; u < n; ++u) {
    s.wealth[u] += delta[u];
    s.last_action[u] = decisions[u];
  }
  ++s.round;
  s.phase = Phase::Rating;
  return delta;
}

inline void apply_swb_phase(SessionState& s, std::span<const SwbRating> ratings) {
  if (s.phase != Phase::Rating) throw ProtocolError("rating phase requested out of order");
  if (ratings.size() != s.size())
    throw ProtocolError("expected " + std::to_string(s.size()) + " SWB ratings, got " + std::to_string(ratings.size()));
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    for (int q : {ratings[i].feeling, ratings[i].presented})
      if (q < -2 || q > 2)
        throw InvalidArgument("SWB rating " + std::to_string(q) + " for player " + std::to_string(i) +
                              " is outside -2..2");
  }
  for (std::size_t i = 0; i < ratings.size(); ++i) s.last_swb[i] = ratings[i];
  s.phase = Phase::Rewiring;
}

template <class F>
concept TieDecider = std::invocable<F&, const TieQuery&, Rng&> &&
                     std::convertible_to<std::invoke_result_t<F&, const TieQuery&, Rng&>, bool>;

// Each unordered pair is selected with probability rewiring_pair_probability.
// A connected pair is kept or cut by one member chosen uniformly (unilateral
// break). For an unconnected pair one member chosen uniformly may propose and
// the other accepts or rejects (bilateral formation).
template <TieDecider F>
std::vector<RewiringEvent> rewiring_phase(SessionState& s, F&& decide) {
  if (s.phase != Phase::Rewiring) throw ProtocolError("rewiring phase requested out of order");
  const std::size_t n = s.size();
  std::vector<RewiringEvent> events;

  auto ask = [&](TieStage stage, NodeId decider, NodeId partner, PairState pre) -> bool {
    TieQuery q;
    q.round = s.round;
    q.condition = s.config.condition;
    q.stage = stage;
    q.decider = decider;
    q.partner = partner;
    q.pre_state = pre;
    q.decider_action = s.last_action[decider];
    q.partner_view = peer_view(s, partner);
    try {
      return static_cast<bool>(decide(q, s.rng));
    } catch (const std::exception& e) {
      throw ProtocolError("tie decision failed in round " + std::to_string(s.round) + " for pair (" +
                          std::to_string(std::min(decider, partner)) + "," +
                          std::to_string(std::max(decider, partner)) + "): " + e.what());
    }
  };

  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) {
      if (!s.rng.bernoulli(s.config.rewiring_pair_probability)) continue;
      RewiringEvent ev;
      ev.round = s.round;
      ev.u = u;
      ev.v = v;
      ev.decider = s.rng.index(2) == 0 ? u : v;
      const NodeId partner = ev.partner();
      if (!s.last_action[u] || !s.last_action[v])
        throw ProtocolError("rewiring before any cooperation decision");
      ev.decider_action = *s.last_action[ev.decider];
      ev.partner_action = *s.last_action[partner];

      if (s.network.has_edge(u, v)) {
        ev.pre_state = PairState::Connected;
        const bool keep = ask(TieStage::Maintain, ev.decider, partner, ev.pre_state);
        ev.decision = keep ? TieDecision::Keep : TieDecision::Cut;
        if (!keep) s.network.remove_edge(u, v);
      } else {
        ev.pre_state = PairState::Unconnected;
        if (!ask(TieStage::Propose, ev.decider, partner, ev.pre_state)) {
          ev.decision = TieDecision::NoTie;
        } else if (ask(TieStage::Accept, partner, ev.decider, ev.pre_state)) {
          ev.decision = TieDecision::ProposeAccept;
          s.network.add_edge(u, v);
        } else {
          ev.decision = TieDecision::ProposeReject;
        }
      }
      events.push_back(ev);
    }
  }
  s.phase = Phase::Decision;
  return events;
}

// Applies already-decided rewiring events (replay path).
inline void apply_rewiring_events(SessionState& s, std::span<const RewiringEvent> events) {
  if (s.phase != Phase::Rewiring) throw ProtocolError("rewiring phase requested out of order");
  for (const auto& ev : events) {
    if (ev.round != s.round) throw ProtocolError("rewiring event for round " + std::to_string(ev.round) + " replayed in round " + std::to_string(s.round));
    if (!ev.consistent()) throw ProtocolError("inconsistent rewiring event for pair (" + std::to_string(ev.u) + "," + std::to_string(ev.v) + ")");
    const bool connected = s.network.has_edge(ev.u, ev.v);
    if (connected != (ev.pre_state == PairState::Connected))
      throw ProtocolError("rewiring event pre-state disagrees with network for pair (" + std::to_string(ev.u) + "," + std::to_string(ev.v) + ")");
    if (ev.decision == TieDecision::Cut) s.network.remove_edge(ev.u, ev.v);
    if (ev.decision == TieDecision::ProposeAccept) s.network.add_edge(ev.u, ev.v);
  }
  s.phase = Phase::Decision;
}

// ---------------------------------------------------------------------------
// Session driver

// A policy supplies the three per-player decisions of a round. All draws
// come from the session stream, serialized in player / pair order.
template <class P>
concept SessionPolicy = requires(const P& p, const SessionState& s, std::span<const PeerView> view,
                                 const TieQuery& q, Rng& rng, NodeId player) {
  { p.cooperate(s.config.condition, view, rng) } -> std::same_as<Action>;
  { p.rate(s, player) } -> std::same_as<SwbRating>;
  { p.tie(q, rng) } -> std::same_as<bool>;
};

namespace detail {

template <class F>
auto with_context(int round, const char* phase, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    throw InvalidArgument("round " + std::to_string(round) + ", " + phase + " phase: " + e.what());
  } catch (const ProtocolError& e) {
    throw ProtocolError("round " + std::to_string(round) + ", " + phase + " phase: " + e.what());
  }
}

}  // namespace detail

// Plays rounds 1..rounds (decide -> payoff -> rate -> rewire) and records
// every step. The same config and seed always yield an identical log.
template <SessionPolicy P>
EventLog run_session(const SessionConfig& config, const P& policy, std::string label = {}) {
  SessionState s = init_session(config);
  const std::size_t n = s.size();

  EventLog log;
  log.header.artifact = kArtifactVersion;
  log.header.label = std::move(label);
  log.header.config = config;
  log.header.initial_wealth = s.wealth;
  log.records.emplace_back(EdgeSnapshot(0, s.network));

  for (int r = 1; r <= config.rounds; ++r) {
    std::vector<Action> decisions(n);
    detail::with_context(r, "decision", [&] {
      for (NodeId i = 0; i < n; ++i) {
        const auto view = visibility_view(s, i);
        decisions[i] = policy.cooperate(config.condition, view, s.rng);
      }
      return 0;
    });
    for (NodeId i = 0; i < n; ++i) log.records.emplace_back(DecisionRecord{r, i, decisions[i]});

    const auto delta = detail::with_context(r, "payoff", [&] { return apply_pgg_round(s, decisions); });
    for (NodeId i = 0; i < n; ++i) log.records.emplace_back(PayoffRecord{r, i, delta[i], s.wealth[i]});

    std::vector<SwbRating> ratings(n);
    detail::with_context(r, "rating", [&] {
      for (NodeId i = 0; i < n; ++i) ratings[i] = policy.rate(s, i);
      apply_swb_phase(s, ratings);
      return 0;
    });
    for (NodeId i = 0; i < n; ++i) log.records.emplace_back(SwbRecord{r, i, ratings[i]});

    const auto events = detail::with_context(r, "rewiring", [&] {
      return rewiring_phase(s, [&](const TieQuery& q, Rng& rng) { return policy.tie(q, rng); });
    });
    for (const auto& ev : events) log.records.emplace_back(ev);
    log.records.emplace_back(EdgeSnapshot(r, s.network));
  }

  for (NodeId i = 0; i < n; ++i)
    log.records.emplace_back(PayoutRecord{i, s.wealth[i], payout(s.wealth[i], config.points_per_usd)});
  return log;
}

// Re-executes a log through the protocol operations, checking every recorded
// payoff, snapshot and payout against the recomputed state. Returns the final
// state; throws ProtocolError on the first disagreement.
inline SessionState replay(const EventLog& log) {
  const SessionConfig& config = log.header.config;
  config.validate();
  const std::size_t n = config.n_players;
  if (log.header.initial_wealth.size() != n) throw ProtocolError("header initial wealth has wrong length");

  SessionState s;
  s.config = config;
  s.network = Network(n);
  s.wealth = log.header.initial_wealth;
  s.last_action.assign(n, std::nullopt);
  s.last_swb.assign(n, std::nullopt);

  std::size_t i = 0;
  const auto& recs = log.records;
  auto fail = [&](const std::string& what) {
    throw ProtocolError("replay: record " + std::to_string(i) + ": " + what);
  };

  if (recs.empty() || !std::holds_alternative<EdgeSnapshot>(recs[0]) || std::get<EdgeSnapshot>(recs[0]).round() != 0)
    fail("log must start with the round-0 edge snapshot");
  s.network = std::get<EdgeSnapshot>(recs[0]).to_network(n);
  i = 1;

  for (int r = 1; r <= config.rounds; ++r) {
    std::vector<Action> decisions;
    while (i < recs.size() && std::holds_alternative<DecisionRecord>(recs[i])) {
      const auto& d = std::get<DecisionRecord>(recs[i]);
      if (d.round != r || d.player != decisions.size()) fail("decision out of order");
      decisions.push_back(d.action);
      ++i;
    }
    if (decisions.size() != n) fail("round " + std::to_string(r) + " has " + std::to_string(decisions.size()) + " decisions");
    const auto delta = apply_pgg_round(s, decisions);
    for (NodeId p = 0; p < n; ++p, ++i) {
      if (i >= recs.size() || !std::holds_alternative<PayoffRecord>(recs[i])) fail("expected payoff record");
      const auto& pay = std::get<PayoffRecord>(recs[i]);
      if (pay.round != r || pay.player != p || pay.delta != delta[p] || pay.wealth != s.wealth[p])
        fail("payoff mismatch for player " + std::to_string(p));
    }
    std::vector<SwbRating> ratings;
    while (i < recs.size() && std::holds_alternative<SwbRecord>(recs[i])) {
      const auto& sw = std::get<SwbRecord>(recs[i]);
      if (sw.round != r || sw.player != ratings.size()) fail("SWB record out of order");
      ratings.push_back(sw.rating);
      ++i;
    }
    apply_swb_phase(s, ratings);
    std::vector<RewiringEvent> events;
    while (i < recs.size() && std::holds_alternative<RewiringEvent>(recs[i])) {
      events.push_back(std::get<RewiringEvent>(recs[i]));
      if (events.size() > 1) {
        const auto& a = events[events.size() - 2];
        const auto& b = events.back();
        if (Edge(a.u, a.v) >= Edge(b.u, b.v)) fail("rewiring events out of pair order");
      }
      ++i;
    }
    apply_rewiring_events(s, events);
    if (i >= recs.size() || !std::holds_alternative<EdgeSnapshot>(recs[i])) fail("expected edge snapshot");
    const auto& snap = std::get<EdgeSnapshot>(recs[i]);
    if (snap.round() != r || !(snap.to_network(n) == s.network)) fail("edge snapshot mismatch in round " + std::to_string(r));
    ++i;
  }
  for (NodeId p = 0; p < n; ++p, ++i) {
    if (i >= recs.size() || !std::holds_alternative<PayoutRecord>(recs[i])) fail("expected payout record");
    const auto& out = std::get<PayoutRecord>(recs[i]);
    if (out.player != p || out.wealth != s.wealth[p] || out.usd != payout(s.wealth[p], config.points_per_usd))
      fail("payout mismatch for player " + std::to_string(p));
  }
  if (i != recs.size()) fail("trailing records after payout");
  return s;
}

}  // namespace swbnet
