"""Single outbreak round: spatial layout, seeded transmission, player upgrades.

One round is up to six decision months on a 50-facility map (facility 0 is the
player).  Per-contact infection probability is
``rate * exp(-d / distance_scale) * level_damping ** target_level`` and a
facility's monthly hazard is ``1 - prod(1 - p_source)`` over currently
infected sources.  A player upgrade applies before that month's transmission
draw, so protection bought in month m already covers month m.

All randomness comes from a counter-based world stream with a fixed draw
layout (n facilities, id order throughout):

  =================  =========================================
  counters           draws
  =================  =========================================
  [0, 2n)            positions, x then y per facility
  [2n, 3n-1)         biosecurity levels for facilities 1..n-1
  3n-1               initial infection choice
  [3n+(m-1)n, 3n+mn) month m infection draws, one per facility
  =================  =========================================

Every month consumes exactly n draws whether or not a facility is still
susceptible, so draw positions are pure functions of (facility, month) and
vectorized replays stay aligned with this stepwise engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ContractViolationError, InvalidConfigError
from .rng import Stream

N_FACILITIES = 50
MAX_LEVEL = 3
MONTHS_PER_ROUND = 6


class Visibility(str, Enum):
    FULL = "full"
    INFECTION_HIDDEN = "infection_hidden"
    BIOSECURITY_HIDDEN = "biosecurity_hidden"
    BOTH_HIDDEN = "both_hidden"

    @property
    def infection_visible(self) -> bool:
        return self in (Visibility.FULL, Visibility.BIOSECURITY_HIDDEN)

    @property
    def biosecurity_visible(self) -> bool:
        return self in (Visibility.FULL, Visibility.INFECTION_HIDDEN)


class BioDistribution(str, Enum):
    LOW = "low"
    HIGH = "high"


# P(level = 0..3) for simulation-controlled facilities.
LEVEL_PROBS = {
    BioDistribution.LOW: (0.60, 0.32, 0.06, 0.02),
    BioDistribution.HIGH: (0.02, 0.06, 0.32, 0.60),
}
_LEVEL_CUM = {d: np.cumsum(p[:-1]) for d, p in LEVEL_PROBS.items()}


class Action(str, Enum):
    HOLD = "hold"
    UPGRADE = "upgrade"


@dataclass(frozen=True)
class TransmissionKernel:
    """Distance decay scale (map units) and per-level damping factor."""

    distance_scale: float
    level_damping: float

    def __post_init__(self):
        if not self.distance_scale > 0:
            raise InvalidConfigError(f"distance_scale must be positive, got {self.distance_scale}")
        if not 0 < self.level_damping < 1:
            raise InvalidConfigError(f"level_damping must be in (0, 1), got {self.level_damping}")


# Calibrated against the packaged infection-probability targets
# (see metrics.DEFAULT_CALIBRATION_TARGETS and `fieldlab calibrate`).
DEFAULT_KERNEL = TransmissionKernel(distance_scale=0.0945285344101306, level_damping=0.5485525988899994)


@dataclass(frozen=True)
class EconomicsConstants:
    """Round payout constants, in simulation dollars."""

    survival_earnings: int = 15_000
    upgrade_cost: int = 1_000
    infection_penalty: int = 25_000


ECONOMICS = EconomicsConstants()


@dataclass(frozen=True)
class RoundConfig:
    infection_rate: float
    distribution: BioDistribution
    visibility: Visibility
    months: int = MONTHS_PER_ROUND
    seed: int = 0

    def __post_init__(self):
        # 0.0 is allowed for smoke configs even though experiment rates are positive
        if not 0.0 <= self.infection_rate < 1.0:
            raise InvalidConfigError(f"infection_rate must be in [0, 1), got {self.infection_rate}")
        if self.months < 1:
            raise InvalidConfigError(f"months must be >= 1, got {self.months}")


@dataclass
class FacilityState:
    id: int
    x: float
    y: float
    level: int = 0
    infected: bool = False
    is_player: bool = False


@dataclass
class WorldState:
    """Array-backed state of one round; facility 0 is the player."""

    positions: np.ndarray  # (n, 2) float64
    levels: np.ndarray  # (n,) int64
    infected: np.ndarray  # (n,) bool
    month: int = 0
    round_over: bool = False

    @property
    def n(self) -> int:
        return len(self.levels)

    @property
    def player_level(self) -> int:
        return int(self.levels[0])

    @property
    def player_infected(self) -> bool:
        return bool(self.infected[0])

    @property
    def facilities(self) -> list[FacilityState]:
        return [
            FacilityState(
                id=i,
                x=float(self.positions[i, 0]),
                y=float(self.positions[i, 1]),
                level=int(self.levels[i]),
                infected=bool(self.infected[i]),
                is_player=i == 0,
            )
            for i in range(self.n)
        ]


@dataclass(frozen=True)
class Observation:
    """What the player (or a policy) may see before a decision.

    Fields hidden by the visibility treatment are None; the player's own
    level and the configured infection rate are always shown.
    """

    month: int  # upcoming decision month, 1-based
    months_total: int
    rate: float
    visibility: Visibility
    player_level: int
    positions: np.ndarray
    infected: np.ndarray | None
    levels: np.ndarray | None
    round_index: int | None = None
    balance: int | None = None

    @property
    def visible_infections(self) -> int | None:
        if self.infected is None:
            return None
        return int(self.infected.sum())


@dataclass
class MonthOutcome:
    month: int  # month just resolved, 1-based
    action_requested: Action
    action_applied: Action
    upgrade_coerced: bool
    infections: list[int]
    player_infected: bool
    round_over: bool


@dataclass
class MonthRecord:
    month: int
    action: Action
    level_after: int
    infected_this_month: bool
    npc_infected_before: int
    upgrade_coerced: bool = False


@dataclass
class RoundResult:
    records: list[MonthRecord]
    payout: int
    months_played: int
    infected: bool
    final_level: int


def _draw_positions(stream: Stream, n: int) -> np.ndarray:
    u = stream.uniforms(2 * n)
    return u.reshape(n, 2)


def generate_layout(seed: int, n: int = N_FACILITIES) -> list[FacilityState]:
    """Fresh map: n facilities uniform in the unit square, facility 0 is the
    player, everyone uninfected at level 0."""
    if n < 2:
        raise InvalidConfigError(f"need at least 2 facilities, got {n}")
    positions = _draw_positions(Stream(seed), n)
    return [
        FacilityState(id=i, x=float(positions[i, 0]), y=float(positions[i, 1]), is_player=i == 0)
        for i in range(n)
    ]


def assign_biosecurity(dist: BioDistribution, stream: Stream, count: int = N_FACILITIES - 1) -> np.ndarray:
    """Draw levels for simulation-controlled facilities from the treatment's
    distribution, one uniform per facility in id order."""
    u = stream.uniforms(count)
    return np.searchsorted(_LEVEL_CUM[dist], u, side="right").astype(np.int64)


def seed_initial_infection(world: WorldState, stream: Stream) -> WorldState:
    """Infect one simulation-controlled facility, chosen uniformly."""
    if world.infected.any():
        raise ContractViolationError("initial infection requires a fully susceptible world")
    idx = 1 + stream.randint(world.n - 1)
    world.infected[idx] = True
    return world


def contact_probability(rate: float, distance: float, target_level: int, kernel: TransmissionKernel) -> float:
    return rate * float(np.exp(-distance / kernel.distance_scale)) * kernel.level_damping**target_level


def transmission_probability(
    source: FacilityState, target: FacilityState, rate: float, kernel: TransmissionKernel
) -> float:
    """Per-contact probability that ``source`` infects ``target`` this month."""
    if not source.infected:
        raise ContractViolationError("source must be infected")
    if target.infected:
        raise ContractViolationError("target must be susceptible")
    dx = source.x - target.x
    dy = source.y - target.y
    d = float(np.sqrt(dx * dx + dy * dy))
    return contact_probability(rate, d, target.level, kernel)


def _contact_base(positions: np.ndarray, rate: float, kernel: TransmissionKernel) -> np.ndarray:
    """(n, n) matrix of rate * exp(-d/lambda); level damping applied later."""
    dx = positions[:, 0][:, None] - positions[:, 0][None, :]
    dy = positions[:, 1][:, None] - positions[:, 1][None, :]
    d = np.sqrt(dx * dx + dy * dy)
    return rate * np.exp(-d / kernel.distance_scale)


def _make_cache(world: WorldState, rate: float, kernel: TransmissionKernel) -> dict:
    base = _contact_base(world.positions, rate, kernel)
    damp = kernel.level_damping ** world.levels.astype(np.float64)
    return {"base": base, "log_surv": np.log1p(-base * damp[None, :]), "kernel": kernel, "rate": rate}


def _refresh_player_column(cache: dict, player_level: int) -> None:
    k: TransmissionKernel = cache["kernel"]
    cache["log_surv"][:, 0] = np.log1p(-cache["base"][:, 0] * k.level_damping**player_level)


def month_hazards(world: WorldState, rate: float, kernel: TransmissionKernel, _cache: dict | None = None) -> np.ndarray:
    """Per-facility probability of infection this month given the current
    infected set; 0 where no source reaches (empty product)."""
    cache = _cache if _cache is not None else _make_cache(world, rate, kernel)
    sources = world.infected
    if not sources.any():
        return np.zeros(world.n)
    log_surv = cache["log_surv"][sources].sum(axis=0)
    return -np.expm1(log_surv)


def step_month(
    world: WorldState,
    action: Action,
    stream: Stream,
    config: RoundConfig,
    kernel: TransmissionKernel = DEFAULT_KERNEL,
    _cache: dict | None = None,
) -> MonthOutcome:
    """Resolve one decision month: apply the player action, then draw
    transmission for every facility in id order (n draws, always)."""
    if world.round_over:
        raise ContractViolationError("round is over")
    applied = action
    coerced = False
    if action is Action.UPGRADE:
        if world.player_level >= MAX_LEVEL:
            applied = Action.HOLD
            coerced = True
        else:
            world.levels[0] += 1
            if _cache is not None:
                _refresh_player_column(_cache, world.player_level)
    hazards = month_hazards(world, config.infection_rate, kernel, _cache)
    u = stream.uniforms(world.n)
    new = ~world.infected & (u < hazards)
    world.infected |= new
    world.month += 1
    player_hit = bool(new[0])
    if player_hit or world.month >= config.months:
        world.round_over = True
    return MonthOutcome(
        month=world.month,
        action_requested=action,
        action_applied=applied,
        upgrade_coerced=coerced,
        infections=np.flatnonzero(new).tolist(),
        player_infected=player_hit,
        round_over=world.round_over,
    )


def observe(
    world: WorldState,
    config: RoundConfig,
    round_index: int | None = None,
    balance: int | None = None,
) -> Observation:
    vis = config.visibility
    infected = world.infected.copy() if vis.infection_visible else None
    levels = world.levels.copy() if vis.biosecurity_visible else None
    return Observation(
        month=world.month + 1,
        months_total=config.months,
        rate=config.infection_rate,
        visibility=vis,
        player_level=world.player_level,
        positions=world.positions,
        infected=infected,
        levels=levels,
        round_index=round_index,
        balance=balance,
    )


class RoundEngine:
    """One round with precomputed contact terms and the shared draw layout.

    ``round_stream`` splits into a "world" stream (layout + transmission) and
    a "policy" stream (decision noise), so replaying recorded actions cannot
    disturb the world draws.
    """

    def __init__(
        self,
        config: RoundConfig,
        kernel: TransmissionKernel = DEFAULT_KERNEL,
        round_stream: Stream | None = None,
        n: int = N_FACILITIES,
        economics: EconomicsConstants = ECONOMICS,
    ):
        if n < 2:
            raise InvalidConfigError(f"need at least 2 facilities, got {n}")
        self.config = config
        self.kernel = kernel
        self.economics = economics
        rs = round_stream if round_stream is not None else Stream(config.seed)
        self.world_stream = rs.split("world")
        self.policy_stream = rs.split("policy")
        positions = _draw_positions(self.world_stream, n)
        levels = np.zeros(n, dtype=np.int64)
        levels[1:] = assign_biosecurity(config.distribution, self.world_stream, n - 1)
        self.world = WorldState(positions=positions, levels=levels, infected=np.zeros(n, dtype=bool))
        seed_initial_infection(self.world, self.world_stream)
        self._cache = _make_cache(self.world, config.infection_rate, kernel)
        _refresh_player_column(self._cache, 0)

    @property
    def over(self) -> bool:
        return self.world.round_over

    def observation(self, round_index: int | None = None, balance: int | None = None) -> Observation:
        return observe(self.world, self.config, round_index=round_index, balance=balance)

    def step(self, action: Action) -> MonthOutcome:
        return step_month(self.world, action, self.world_stream, self.config, self.kernel, self._cache)

    def payout(self) -> int:
        if not self.world.round_over:
            raise ContractViolationError("round still in progress")
        if self.world.player_infected:
            return -self.economics.infection_penalty
        return self.economics.survival_earnings - self.economics.upgrade_cost * self.world.player_level


def play_round(
    config: RoundConfig,
    policy,
    rng: Stream,
    kernel: TransmissionKernel = DEFAULT_KERNEL,
    economics: EconomicsConstants = ECONOMICS,
    n: int = N_FACILITIES,
) -> RoundResult:
    """Run one full round with ``policy(observation, stream) -> Action``.

    Payout: -infection_penalty the moment the player is infected, otherwise
    survival_earnings minus upgrade costs for the final level.
    """
    engine = RoundEngine(config, kernel, rng, n=n, economics=economics)
    records: list[MonthRecord] = []
    while not engine.over:
        obs = engine.observation()
        action = policy(obs, engine.policy_stream)
        npc_before = int(engine.world.infected.sum())
        out = engine.step(action)
        records.append(
            MonthRecord(
                month=out.month,
                action=out.action_requested,
                level_after=engine.world.player_level,
                infected_this_month=out.player_infected,
                npc_infected_before=npc_before,
                upgrade_coerced=out.upgrade_coerced,
            )
        )
    return RoundResult(
        records=records,
        payout=engine.payout(),
        months_played=len(records),
        infected=engine.world.player_infected,
        final_level=engine.world.player_level,
    )
