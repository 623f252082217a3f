"""Synthetic decision policies and cohort generation.

The three behavioral archetypes plus the payout-maximizing reference:

* risk_averse: upgrade every month until High.
* risk_tolerant: never upgrade.
* opportunistic: copy risk_averse when the displayed rate exceeds the
  threshold; otherwise hold, buying a single Low upgrade in the final month.
* risk_neutral: upgrade toward the expected-return optimum for the displayed
  rate (Low at 0.08, High at 0.3, Medium in between).

A policy spec can add independent per-decision noise (flip the action with
probability epsilon) and visibility sensitivity (extra upgrade pressure when
infections are visible, extra hold pressure when neighbor biosecurity is
visible) for constructing cohorts with known injected effects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .engine import DEFAULT_KERNEL, MAX_LEVEL, Action, Observation, TransmissionKernel
from .errors import InvalidConfigError
from .rng import Stream, derive_key
from .sessions import Design, SessionLog, SessionRuntime


class PolicyKind(str, Enum):
    RISK_AVERSE = "risk_averse"
    RISK_TOLERANT = "risk_tolerant"
    OPPORTUNISTIC = "opportunistic"
    RISK_NEUTRAL = "risk_neutral"


@dataclass(frozen=True)
class PolicySpec:
    kind: PolicyKind
    epsilon: float = 0.0  # per-decision action flip probability
    opportunist_threshold: float = 0.15
    infection_upgrade_boost: float = 0.0
    biosecurity_hold_boost: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 0.5:
            raise InvalidConfigError(f"epsilon must be in [0, 0.5), got {self.epsilon}")
        if not 0.0 < self.opportunist_threshold < 1.0:
            raise InvalidConfigError(f"threshold must be in (0, 1), got {self.opportunist_threshold}")
        for name in ("infection_upgrade_boost", "biosecurity_hold_boost"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidConfigError(f"{name} must be in [0, 1], got {value}")


def risk_neutral_target(rate: float) -> int:
    """Expected-return-optimal level by displayed rate (nearest anchor)."""
    if rate < 0.115:
        return 1
    if rate < 0.225:
        return 2
    return 3


def base_action(spec: PolicySpec, obs: Observation) -> Action:
    kind = spec.kind
    if kind is PolicyKind.RISK_AVERSE:
        return Action.UPGRADE if obs.player_level < MAX_LEVEL else Action.HOLD
    if kind is PolicyKind.RISK_TOLERANT:
        return Action.HOLD
    if kind is PolicyKind.OPPORTUNISTIC:
        if obs.rate > spec.opportunist_threshold:
            return Action.UPGRADE if obs.player_level < MAX_LEVEL else Action.HOLD
        if obs.month == obs.months_total and obs.player_level == 0:
            return Action.UPGRADE
        return Action.HOLD
    if kind is PolicyKind.RISK_NEUTRAL:
        return Action.UPGRADE if obs.player_level < risk_neutral_target(obs.rate) else Action.HOLD
    raise InvalidConfigError(f"unknown policy kind {kind}")


def decide(spec: PolicySpec, obs: Observation, stream: Stream) -> Action:
    """One decision. Draw order: epsilon flip, then the infection-visibility
    draw, then the biosecurity-visibility draw (each consumed only when its
    parameter is nonzero and the treatment applies)."""
    action = base_action(spec, obs)
    if spec.epsilon > 0.0 and stream.uniform() < spec.epsilon:
        action = Action.HOLD if action is Action.UPGRADE else Action.UPGRADE
    if spec.infection_upgrade_boost > 0.0 and obs.visibility.infection_visible:
        if stream.uniform() < spec.infection_upgrade_boost and obs.player_level < MAX_LEVEL:
            action = Action.UPGRADE
    if spec.biosecurity_hold_boost > 0.0 and obs.visibility.biosecurity_visible:
        if stream.uniform() < spec.biosecurity_hold_boost:
            action = Action.HOLD
    return action


def make_policy(spec: PolicySpec):
    def policy(obs: Observation, stream: Stream) -> Action:
        return decide(spec, obs, stream)

    return policy


def make_probe_policy(target_level: int):
    """Upgrade every month until ``target_level`` is reached, then hold."""

    def policy(obs: Observation, stream: Stream) -> Action:
        return Action.UPGRADE if obs.player_level < target_level else Action.HOLD

    return policy


@dataclass(frozen=True)
class GroupSpec:
    name: str
    policy: PolicySpec
    count: int

    def __post_init__(self):
        if self.count < 0:
            raise InvalidConfigError(f"group count must be >= 0, got {self.count}")


@dataclass(frozen=True)
class CohortSpec:
    groups: tuple[GroupSpec, ...]
    design: Design = Design.FULL_FACTORIAL
    base_seed: int = 0
    cohort_tag: str = "bot"
    kernel: TransmissionKernel = DEFAULT_KERNEL
    rate_override: float | None = None

    @property
    def total(self) -> int:
        return sum(g.count for g in self.groups)


def synth_cohort(spec: CohortSpec) -> list[tuple[SessionLog, str]]:
    """One complete session log per synthetic participant, paired with the
    generating group name.  Session r uses seed derive_key(base_seed,
    "session", r), so cohorts are reproducible file-for-file."""
    out: list[tuple[SessionLog, str]] = []
    index = 0
    for group in spec.groups:
        policy = make_policy(group.policy)
        for _ in range(group.count):
            runtime = SessionRuntime(
                session_id=f"{spec.cohort_tag}-{index:05d}",
                cohort=spec.cohort_tag,
                design=spec.design,
                seed=derive_key(spec.base_seed, "session", index),
                kernel=spec.kernel,
                rate_override=spec.rate_override,
            )
            out.append((runtime.play(policy), group.name))
            index += 1
    return out
