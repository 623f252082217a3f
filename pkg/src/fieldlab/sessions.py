"""Treatment schedules, session state, and the decision-log format.

A session is 32 rounds played against one of two designs:

* ``full_factorial``: {0.08, 0.3} rates x {low, high} biosecurity
  distributions x 4 visibility treatments, each combination exactly twice,
  order shuffled per session seed.
* ``constant_rate``: 32 rounds at rate 0.15 (overridable for smoke configs),
  full visibility, 16 low + 16 high distribution rounds shuffled.

Logs are newline-delimited JSON: one header object, then one object per
decision in stable field order (schema ``fieldlab-log/1``).  Any analysis
value is re-derivable from the records alone: the final record of a round
carries the round payout, which also follows from ``infected_this_month``,
``month``, and ``level_after``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable

from .engine import (
    ECONOMICS,
    DEFAULT_KERNEL,
    Action,
    BioDistribution,
    EconomicsConstants,
    Observation,
    RoundConfig,
    RoundEngine,
    TransmissionKernel,
    Visibility,
)
from .errors import ContractViolationError, DataFormatError, InvalidConfigError
from .rng import Stream, derive_key

LOG_SCHEMA = "fieldlab-log/1"
ROUNDS_PER_SESSION = 32

FULL_FACTORIAL_RATES = (0.08, 0.3)
CONSTANT_RATE_VALUE = 0.15


class Design(str, Enum):
    FULL_FACTORIAL = "full_factorial"
    CONSTANT_RATE = "constant_rate"


class SessionStatus(str, Enum):
    ACTIVE = "active"
    COMPLETE = "complete"
    ABANDONED = "abandoned"


def build_schedule(design: Design, seed: int, rate_override: float | None = None) -> list[RoundConfig]:
    """The 32 round configs for a session, deterministic in ``seed``.

    Round r's engine stream key is ``derive_key(seed, "round", r)`` and is
    independent of the shuffle stream.
    """
    stream = Stream(derive_key(seed, "schedule"))
    if design is Design.FULL_FACTORIAL:
        if rate_override is not None:
            raise InvalidConfigError("rate_override only applies to the constant_rate design")
        combos = [
            (rate, dist, vis)
            for rate in FULL_FACTORIAL_RATES
            for dist in BioDistribution
            for vis in Visibility
        ] * 2
    else:
        rate = CONSTANT_RATE_VALUE if rate_override is None else rate_override
        combos = [(rate, dist, Visibility.FULL) for dist in BioDistribution for _ in range(16)]
    stream.shuffle(combos)
    return [
        RoundConfig(rate, dist, vis, seed=derive_key(seed, "round", i))
        for i, (rate, dist, vis) in enumerate(combos)
    ]


# Simulation dollars per real dollar, by (design, cohort); unknown cohorts
# fall back to the design default.
CONVERSION_DIVISORS = {
    (Design.FULL_FACTORIAL, "mturk"): 50_000,
    (Design.CONSTANT_RATE, "mturk"): 23_500,
    (Design.CONSTANT_RATE, "expo"): 12_000,
}
DEFAULT_DIVISORS = {Design.FULL_FACTORIAL: 50_000, Design.CONSTANT_RATE: 23_500}


def conversion_divisor(design: Design, cohort: str) -> int:
    return CONVERSION_DIVISORS.get((design, cohort), DEFAULT_DIVISORS[design])


def real_payout(balance: int, divisor: int) -> float:
    """Real-currency payout: non-negative, rounded to cents."""
    return round(max(0, balance) / divisor, 2)


_RECORD_FIELDS = (
    "session_id",
    "round",
    "month",
    "rate",
    "dist",
    "visibility",
    "visible_infections",
    "action",
    "level_after",
    "infected_this_month",
    "round_payout",
    "token",
    "timestamp",
)


@dataclass
class DecisionRecord:
    """One monthly choice with the context the player saw (hidden fields are
    null exactly when the treatment hides them)."""

    session_id: str
    round: int  # 1-based
    month: int  # 1-based
    rate: float
    dist: str
    visibility: str
    visible_infections: int | None
    action: str
    level_after: int
    infected_this_month: bool
    round_payout: int | None = None
    token: str | None = None
    timestamp: float | None = None

    def to_json(self) -> str:
        return json.dumps({name: getattr(self, name) for name in _RECORD_FIELDS})

    @classmethod
    def from_dict(cls, obj: dict) -> "DecisionRecord":
        try:
            return cls(**{name: obj[name] for name in _RECORD_FIELDS})
        except KeyError as exc:
            raise DataFormatError(f"decision record missing field {exc}") from exc


@dataclass
class SessionHeader:
    session_id: str
    cohort: str
    design: Design
    seed: int
    rate_override: float | None = None
    created: float | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema": LOG_SCHEMA,
                "session_id": self.session_id,
                "cohort": self.cohort,
                "design": self.design.value,
                "seed": self.seed,
                "rate_override": self.rate_override,
                "created": self.created,
            }
        )

    @classmethod
    def from_dict(cls, obj: dict) -> "SessionHeader":
        if obj.get("schema") != LOG_SCHEMA:
            raise DataFormatError(f"unsupported log schema: {obj.get('schema')!r}")
        return cls(
            session_id=obj["session_id"],
            cohort=obj["cohort"],
            design=Design(obj["design"]),
            seed=obj["seed"],
            rate_override=obj.get("rate_override"),
            created=obj.get("created"),
        )


@dataclass
class SessionLog:
    header: SessionHeader
    records: list[DecisionRecord] = field(default_factory=list)

    @property
    def session_id(self) -> str:
        return self.header.session_id

    def rounds_completed(self) -> int:
        return sum(1 for r in self.records if r.round_payout is not None)

    def balance(self) -> int:
        return sum(r.round_payout for r in self.records if r.round_payout is not None)

    def levels_at_rate(self, rate: float) -> list[int]:
        return [r.level_after for r in self.records if r.rate == rate]


def write_session_log(path: Path, log: SessionLog) -> None:
    lines = [log.header.to_json()]
    lines.extend(r.to_json() for r in log.records)
    path.write_text("\n".join(lines) + "\n")


def read_session_log(path: Path) -> SessionLog:
    lines = path.read_text().splitlines()
    if not lines:
        raise DataFormatError(f"empty session log: {path}")
    try:
        header = SessionHeader.from_dict(json.loads(lines[0]))
        records = [DecisionRecord.from_dict(json.loads(line)) for line in lines[1:] if line]
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"malformed session log {path}: {exc}") from exc
    return SessionLog(header=header, records=records)


def load_session_dir(directory: Path) -> list[SessionLog]:
    paths = sorted(directory.glob("*.ndjson"))
    return [read_session_log(p) for p in paths]


@dataclass
class RoundSummary:
    round: int
    payout: int
    months_played: int
    infected: bool
    final_level: int


@dataclass
class SubmitOutcome:
    record: DecisionRecord
    round_summary: RoundSummary | None
    session_complete: bool
    duplicate: bool = False


class SessionRuntime:
    """Authoritative state of one session: schedule, current round engine,
    balance, and the growing decision record list.

    Deterministic in (session seed, submitted actions); a session can be
    rebuilt from its log by replaying recorded actions.
    """

    def __init__(
        self,
        session_id: str,
        cohort: str,
        design: Design,
        seed: int,
        kernel: TransmissionKernel = DEFAULT_KERNEL,
        economics: EconomicsConstants = ECONOMICS,
        rate_override: float | None = None,
        created: float | None = None,
    ):
        self.header = SessionHeader(session_id, cohort, design, seed, rate_override, created)
        self.kernel = kernel
        self.economics = economics
        self.schedule = build_schedule(design, seed, rate_override)
        self.records: list[DecisionRecord] = []
        self.round_payouts: list[int] = []
        self.balance = 0
        self.status = SessionStatus.ACTIVE
        self.round_index = 0  # 0-based
        self._last_outcome: SubmitOutcome | None = None
        self._start_round()

    def _start_round(self) -> None:
        config = self.schedule[self.round_index]
        self.engine = RoundEngine(config, self.kernel, Stream(config.seed), economics=self.economics)

    @property
    def policy_stream(self) -> Stream:
        return self.engine.policy_stream

    @property
    def config(self) -> RoundConfig:
        return self.schedule[self.round_index]

    def observation(self) -> Observation:
        if self.status is not SessionStatus.ACTIVE:
            raise ContractViolationError(f"session is {self.status.value}")
        return self.engine.observation(round_index=self.round_index + 1, balance=self.balance)

    def submit(self, action: Action, token: str | None = None, timestamp: float | None = None) -> SubmitOutcome:
        if self.status is not SessionStatus.ACTIVE:
            raise ContractViolationError(f"session is {self.status.value}")
        if token is not None and self._last_outcome is not None and self._last_outcome.record.token == token:
            return replace(self._last_outcome, duplicate=True)
        config = self.config
        obs = self.engine.observation()
        out = self.engine.step(action)
        record = DecisionRecord(
            session_id=self.header.session_id,
            round=self.round_index + 1,
            month=out.month,
            rate=config.infection_rate,
            dist=config.distribution.value,
            visibility=config.visibility.value,
            visible_infections=obs.visible_infections,
            action=action.value,
            level_after=self.engine.world.player_level,
            infected_this_month=out.player_infected,
            token=token,
            timestamp=timestamp,
        )
        round_summary = None
        complete = False
        if self.engine.over:
            payout = self.engine.payout()
            record.round_payout = payout
            self.balance += payout
            self.round_payouts.append(payout)
            round_summary = RoundSummary(
                round=self.round_index + 1,
                payout=payout,
                months_played=self.engine.world.month,
                infected=self.engine.world.player_infected,
                final_level=self.engine.world.player_level,
            )
            if self.round_index + 1 >= len(self.schedule):
                self.status = SessionStatus.COMPLETE
                complete = True
            else:
                self.round_index += 1
                self._start_round()
        self.records.append(record)
        outcome = SubmitOutcome(record=record, round_summary=round_summary, session_complete=complete)
        self._last_outcome = outcome
        return outcome

    def to_log(self) -> SessionLog:
        return SessionLog(header=self.header, records=list(self.records))

    @classmethod
    def replay(
        cls,
        log: SessionLog,
        kernel: TransmissionKernel = DEFAULT_KERNEL,
        economics: EconomicsConstants = ECONOMICS,
    ) -> "SessionRuntime":
        """Rebuild a runtime from a persisted log by re-submitting actions."""
        runtime = cls(
            session_id=log.header.session_id,
            cohort=log.header.cohort,
            design=log.header.design,
            seed=log.header.seed,
            kernel=kernel,
            economics=economics,
            rate_override=log.header.rate_override,
            created=log.header.created,
        )
        for rec in log.records:
            out = runtime.submit(Action(rec.action), token=rec.token, timestamp=rec.timestamp)
            if out.record.to_json() != rec.to_json():
                raise DataFormatError(
                    f"session {log.header.session_id} does not replay: "
                    f"round {rec.round} month {rec.month} diverged"
                )
        return runtime

    def play(self, policy) -> SessionLog:
        """Drive the session to completion with a policy callable."""
        while self.status is SessionStatus.ACTIVE:
            obs = self.observation()
            self.submit(policy(obs, self.policy_stream))
        return self.to_log()


def iter_decisions(logs: Iterable[SessionLog]) -> Iterable[DecisionRecord]:
    for log in logs:
        yield from log.records
