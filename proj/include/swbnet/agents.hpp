#pragma once

#include <algorithm>
#include <array>
#include <span>
#include <string>

#include "swbnet/game.hpp"

namespace swbnet {

// Tie-decision probabilities indexed [condition][decider action][partner
// action], plus the per-condition cooperation rate.
struct CalibrationTable {
  std::array<std::array<std::array<double, 2>, 2>, 2> connect{};
  std::array<double, 2> coop_rate{};

  double& connect_prob(Condition c, Action decider, Action partner) {
    return connect[static_cast<int>(c)][static_cast<int>(decider)][static_cast<int>(partner)];
  }
  double connect_prob(Condition c, Action decider, Action partner) const {
    return connect[static_cast<int>(c)][static_cast<int>(decider)][static_cast<int>(partner)];
  }
  double& cooperation_rate(Condition c) { return coop_rate[static_cast<int>(c)]; }
  double cooperation_rate(Condition c) const { return coop_rate[static_cast<int>(c)]; }

  // Measured rates from the visible/invisible SWB experiment.
  static CalibrationTable published() {
    using enum Action;
    CalibrationTable t;
    t.connect_prob(Condition::Invisible, Cooperate, Cooperate) = 0.861;
    t.connect_prob(Condition::Invisible, Cooperate, Defect) = 0.295;
    t.connect_prob(Condition::Invisible, Defect, Defect) = 0.605;
    t.connect_prob(Condition::Invisible, Defect, Cooperate) = 0.721;
    t.cooperation_rate(Condition::Invisible) = 0.533;
    t.connect_prob(Condition::Visible, Cooperate, Cooperate) = 0.820;
    t.connect_prob(Condition::Visible, Cooperate, Defect) = 0.303;
    t.connect_prob(Condition::Visible, Defect, Defect) = 0.564;
    t.connect_prob(Condition::Visible, Defect, Cooperate) = 0.782;
    t.cooperation_rate(Condition::Visible) = 0.493;
    return t;
  }

  void validate() const {
    for (const auto& by_decider : connect)
      for (const auto& row : by_decider)
        for (double p : row)
          if (!(p >= 0.0 && p <= 1.0)) throw InvalidConfig("calibration probability " + std::to_string(p) + " outside [0, 1]");
    for (double p : coop_rate)
      if (!(p >= 0.0 && p <= 1.0)) throw InvalidConfig("cooperation rate " + std::to_string(p) + " outside [0, 1]");
  }

  friend bool operator==(const CalibrationTable&, const CalibrationTable&) = default;
};

enum class PolicyKind : std::uint8_t { CalibratedBernoulli, ConditionalCooperator, AlwaysCooperate, AlwaysDefect };

inline const char* to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::CalibratedBernoulli: return "calibrated";
    case PolicyKind::ConditionalCooperator: return "conditional";
    case PolicyKind::AlwaysCooperate: return "always_c";
    case PolicyKind::AlwaysDefect: return "always_d";
  }
  return "?";
}

// Rank-based quintile in 0..4: floor(5 * #{strictly poorer players} / n).
// Tied players share the quintile of their lowest rank.
inline int wealth_quintile(std::span<const Points> wealth, NodeId player) {
  if (player >= wealth.size()) throw InvalidArgument("player index out of range");
  std::size_t poorer = 0;
  for (Points w : wealth)
    if (w < wealth[player]) ++poorer;
  return static_cast<int>(5 * poorer / wealth.size());
}

struct AgentPolicy {
  PolicyKind kind = PolicyKind::CalibratedBernoulli;
  CalibrationTable table = CalibrationTable::published();
  // Rating per wealth quintile, bottom to top.
  std::array<int, 5> swb_mapping{0, 1, 1, 1, 2};
  // ConditionalCooperator: P(C) = clamp(alpha + beta * share of C peers).
  double conditional_alpha = 0.2;
  double conditional_beta = 0.6;
  // Shifts connect probability by sensitivity * emoji / 2 when an emoji is
  // shown. Zero (off) by default.
  double emoji_tie_sensitivity = 0.0;

  void validate() const {
    table.validate();
    for (int q : swb_mapping)
      if (q < -2 || q > 2) throw InvalidConfig("swb_mapping entries must lie in -2..2");
    if (!std::is_sorted(swb_mapping.begin(), swb_mapping.end()))
      throw InvalidConfig("swb_mapping must be non-decreasing in wealth quintile");
  }

  Action cooperate(Condition condition, std::span<const PeerView> view, Rng& rng) const;
  SwbRating rate(const SessionState& state, NodeId player) const;
  bool tie(const TieQuery& query, Rng& rng) const;

  friend bool operator==(const AgentPolicy&, const AgentPolicy&) = default;
};

inline Action decide_cooperation(const AgentPolicy& policy, Condition condition, std::span<const PeerView> view, Rng& rng) {
  switch (policy.kind) {
    case PolicyKind::AlwaysCooperate: return Action::Cooperate;
    case PolicyKind::AlwaysDefect: return Action::Defect;
    case PolicyKind::CalibratedBernoulli:
      return rng.bernoulli(policy.table.cooperation_rate(condition)) ? Action::Cooperate : Action::Defect;
    case PolicyKind::ConditionalCooperator: {
      std::size_t known = 0, cooperators = 0;
      for (const auto& peer : view) {
        if (!peer.reputation) continue;
        ++known;
        if (*peer.reputation == Action::Cooperate) ++cooperators;
      }
      const double share = known ? static_cast<double>(cooperators) / static_cast<double>(known) : 0.0;
      const double p = std::clamp(policy.conditional_alpha + policy.conditional_beta * share, 0.0, 1.0);
      return rng.bernoulli(p) ? Action::Cooperate : Action::Defect;
    }
  }
  return Action::Defect;
}

// One tie choice. An unknown action (no reputation yet) is drawn as C with
// the condition's cooperation rate. Connected pairs: true = keep. Unconnected
// pairs: true = propose (or accept, when called for the proposal's target).
inline bool decide_tie(const AgentPolicy& policy, Condition condition, Reputation decider_action,
                       Reputation partner_action, PairState /*pre_state*/, Rng& rng, double shift = 0.0) {
  auto resolve = [&](Reputation a) {
    if (a) return *a;
    return rng.bernoulli(policy.table.cooperation_rate(condition)) ? Action::Cooperate : Action::Defect;
  };
  const Action own = resolve(decider_action);
  const Action other = resolve(partner_action);
  const double p = std::clamp(policy.table.connect_prob(condition, own, other) + shift, 0.0, 1.0);
  return rng.bernoulli(p);
}

inline SwbRating rate_swb(const AgentPolicy& policy, const SessionState& state, NodeId player) {
  const int level = policy.swb_mapping[static_cast<std::size_t>(wealth_quintile(state.wealth, player))];
  return {level, level};
}

inline Action AgentPolicy::cooperate(Condition condition, std::span<const PeerView> view, Rng& rng) const {
  return decide_cooperation(*this, condition, view, rng);
}

inline SwbRating AgentPolicy::rate(const SessionState& state, NodeId player) const {
  return rate_swb(*this, state, player);
}

inline bool AgentPolicy::tie(const TieQuery& q, Rng& rng) const {
  double shift = 0.0;
  if (emoji_tie_sensitivity != 0.0 && q.partner_view.swb_emoji)
    shift = emoji_tie_sensitivity * static_cast<double>(*q.partner_view.swb_emoji) / 2.0;
  return decide_tie(*this, q.condition, q.decider_action, q.partner_view.reputation, q.pre_state, rng, shift);
}

static_assert(SessionPolicy<AgentPolicy>);

}  // namespace swbnet
