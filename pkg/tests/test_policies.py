import numpy as np
import pytest

from fieldlab.engine import (
    Action,
    BioDistribution,
    RoundConfig,
    TransmissionKernel,
    Visibility,
    play_round,
)
from fieldlab.errors import InvalidConfigError
from fieldlab.metrics import rating_vector, session_rating
from fieldlab.policies import (
    CohortSpec,
    GroupSpec,
    PolicyKind,
    PolicySpec,
    base_action,
    decide,
    make_policy,
    risk_neutral_target,
    synth_cohort,
)
from fieldlab.rng import Stream
from fieldlab.sessions import Design

NO_SPREAD = TransmissionKernel(distance_scale=1e-9, level_damping=0.5)


def obs_stub(month=1, rate=0.08, level=0, visibility=Visibility.FULL):
    from fieldlab.engine import Observation

    return Observation(
        month=month,
        months_total=6,
        rate=rate,
        visibility=visibility,
        player_level=level,
        positions=np.zeros((2, 2)),
        infected=np.zeros(2, dtype=bool) if visibility.infection_visible else None,
        levels=np.zeros(2, dtype=np.int64) if visibility.biosecurity_visible else None,
    )


class TestBaseActions:
    def test_risk_averse_rollout_levels(self):
        cfg = RoundConfig(0.08, BioDistribution.LOW, Visibility.FULL, seed=1)
        res = play_round(cfg, make_policy(PolicySpec(PolicyKind.RISK_AVERSE)), Stream(1), NO_SPREAD)
        assert [r.level_after for r in res.records] == [1, 2, 3, 3, 3, 3]

    def test_risk_tolerant_always_holds(self):
        for month in range(1, 7):
            for rate in (0.08, 0.15, 0.3):
                assert base_action(PolicySpec(PolicyKind.RISK_TOLERANT), obs_stub(month, rate)) is Action.HOLD

    def test_opportunist_high_rate_copies_risk_averse(self):
        spec = PolicySpec(PolicyKind.OPPORTUNISTIC)
        for level in range(4):
            ra = base_action(PolicySpec(PolicyKind.RISK_AVERSE), obs_stub(rate=0.3, level=level))
            op = base_action(spec, obs_stub(rate=0.3, level=level))
            assert ra is op

    def test_opportunist_low_rate_buys_low_in_final_month(self):
        spec = PolicySpec(PolicyKind.OPPORTUNISTIC)
        for month in range(1, 6):
            assert base_action(spec, obs_stub(month=month, rate=0.08)) is Action.HOLD
        assert base_action(spec, obs_stub(month=6, rate=0.08)) is Action.UPGRADE
        assert base_action(spec, obs_stub(month=6, rate=0.08, level=1)) is Action.HOLD

    def test_opportunist_final_level_at_low_rate(self):
        cfg = RoundConfig(0.08, BioDistribution.LOW, Visibility.FULL, seed=2)
        res = play_round(cfg, make_policy(PolicySpec(PolicyKind.OPPORTUNISTIC)), Stream(2), NO_SPREAD)
        assert res.final_level <= 1
        assert [r.level_after for r in res.records] == [0, 0, 0, 0, 0, 1]

    def test_risk_neutral_targets(self):
        assert risk_neutral_target(0.08) == 1
        assert risk_neutral_target(0.15) == 2
        assert risk_neutral_target(0.3) == 3
        cfg = RoundConfig(0.3, BioDistribution.LOW, Visibility.FULL, seed=3)
        res = play_round(cfg, make_policy(PolicySpec(PolicyKind.RISK_NEUTRAL)), Stream(3), NO_SPREAD)
        assert res.final_level == 3
        cfg_low = RoundConfig(0.08, BioDistribution.LOW, Visibility.FULL, seed=3)
        res_low = play_round(cfg_low, make_policy(PolicySpec(PolicyKind.RISK_NEUTRAL)), Stream(3), NO_SPREAD)
        assert res_low.final_level == 1

    def test_spec_validation(self):
        with pytest.raises(InvalidConfigError):
            PolicySpec(PolicyKind.RISK_AVERSE, epsilon=0.5)
        with pytest.raises(InvalidConfigError):
            PolicySpec(PolicyKind.OPPORTUNISTIC, opportunist_threshold=1.5)


class TestNoise:
    def test_zero_epsilon_consumes_no_draws(self):
        stream = Stream(1)
        decide(PolicySpec(PolicyKind.RISK_AVERSE), obs_stub(), stream)
        assert stream.counter == 0

    def test_flip_probability(self):
        spec = PolicySpec(PolicyKind.RISK_TOLERANT, epsilon=0.25)
        stream = Stream(9)
        flips = sum(
            decide(spec, obs_stub(), stream) is Action.UPGRADE for _ in range(100_000)
        )
        assert abs(flips / 100_000 - 0.25) < 0.01

    def test_visibility_boosts_apply_only_when_visible(self):
        spec = PolicySpec(PolicyKind.RISK_TOLERANT, infection_upgrade_boost=1.0)
        assert decide(spec, obs_stub(visibility=Visibility.FULL), Stream(1)) is Action.UPGRADE
        assert decide(spec, obs_stub(visibility=Visibility.INFECTION_HIDDEN), Stream(1)) is Action.HOLD

        damp = PolicySpec(PolicyKind.RISK_AVERSE, biosecurity_hold_boost=1.0)
        assert decide(damp, obs_stub(visibility=Visibility.FULL), Stream(1)) is Action.HOLD
        assert decide(damp, obs_stub(visibility=Visibility.BIOSECURITY_HIDDEN), Stream(1)) is Action.UPGRADE


class TestCohorts:
    def test_empty_spec_gives_empty_list(self):
        assert synth_cohort(CohortSpec(groups=(), base_seed=1, kernel=NO_SPREAD)) == []

    def test_risk_averse_cohort_ratings_max_out(self):
        spec = CohortSpec(
            groups=(GroupSpec("ra", PolicySpec(PolicyKind.RISK_AVERSE), 5),),
            base_seed=21,
            kernel=NO_SPREAD,
        )
        for log, group in synth_cohort(spec):
            assert group == "ra"
            vec = rating_vector(log)
            assert vec.low.value == pytest.approx(2.5)
            assert vec.high.value == pytest.approx(2.5)

    def test_risk_tolerant_rating_zero(self):
        spec = CohortSpec(
            groups=(GroupSpec("rt", PolicySpec(PolicyKind.RISK_TOLERANT), 3),),
            base_seed=22,
            kernel=NO_SPREAD,
        )
        for log, _ in synth_cohort(spec):
            assert session_rating(log).value == 0.0

    def test_opportunist_matches_risk_averse_at_high_rate(self):
        base = dict(base_seed=23, kernel=NO_SPREAD)
        op_logs = synth_cohort(
            CohortSpec(groups=(GroupSpec("op", PolicySpec(PolicyKind.OPPORTUNISTIC), 4),), **base)
        )
        ra_logs = synth_cohort(
            CohortSpec(groups=(GroupSpec("ra", PolicySpec(PolicyKind.RISK_AVERSE), 4),), **base)
        )
        for (op, _), (ra, _) in zip(op_logs, ra_logs):
            op_vec, ra_vec = rating_vector(op), rating_vector(ra)
            assert op_vec.high.value == pytest.approx(ra_vec.high.value)
            assert op_vec.low.value == pytest.approx(1 / 6)

    def test_determinism_file_for_file(self):
        spec = CohortSpec(
            groups=(GroupSpec("mix", PolicySpec(PolicyKind.RISK_NEUTRAL, epsilon=0.1), 3),),
            base_seed=24,
            kernel=NO_SPREAD,
        )
        a = synth_cohort(spec)
        b = synth_cohort(spec)
        for (la, _), (lb, _) in zip(a, b):
            assert [r.to_json() for r in la.records] == [r.to_json() for r in lb.records]

    def test_noise_converges_to_base(self):
        def mean_abs_gap(eps, n=40):
            noisy = synth_cohort(
                CohortSpec(
                    groups=(GroupSpec("x", PolicySpec(PolicyKind.RISK_AVERSE, epsilon=eps), n),),
                    base_seed=25,
                    kernel=NO_SPREAD,
                )
            )
            return float(np.mean([abs(session_rating(log).value - 2.5) for log, _ in noisy]))

        gaps = [mean_abs_gap(eps) for eps in (0.3, 0.1, 0.02)]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 0.1

    def test_constant_rate_design_cohort(self):
        spec = CohortSpec(
            groups=(GroupSpec("x", PolicySpec(PolicyKind.RISK_NEUTRAL), 2),),
            design=Design.CONSTANT_RATE,
            base_seed=26,
            kernel=NO_SPREAD,
        )
        logs = synth_cohort(spec)
        assert all(len(log.records) == 192 for log, _ in logs)
        assert all(r.rate == 0.15 for log, _ in logs for r in log.records)
