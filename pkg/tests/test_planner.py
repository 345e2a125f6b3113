import numpy as np
import pytest

from hierdrive import frenet, planner
from hierdrive.frenet import FrenetState, QuinticProfile, build_reference_path, solve_quintic
from hierdrive.planner import (
    Behavior,
    ConfigError,
    DynamicLimits,
    EndStateGrids,
    FollowParams,
    LatTarget,
    PlanRequest,
    PlannerConfig,
    PlannerWeights,
    TargetError,
    build_cruise_target,
    build_follow_target,
    build_stop_target,
    generate_candidates,
    lateral_cost,
    longitudinal_cost,
    plan,
    select_behavior,
)

STRAIGHT = build_reference_path([(0.0, 0.0), (400.0, 0.0)])


def frenet_state(s=0.0, v=0.0, a=0.0, d=0.0, dd=0.0, ddd=0.0):
    return FrenetState(s=s, s_d=v, s_dd=a, d=d, d_d=dd, d_dd=ddd)


def unit_weights():
    return PlannerWeights(1, 1, 1, 1, 1, 1, 1, 1)


class TestTargets:
    def test_stop_target(self):
        t = build_stop_target(40.0, 10.0)
        assert (t.position, t.velocity, t.acceleration, t.mode) == (40.0, 0.0, 0.0, "stop")
        t = build_stop_target(12.5, 0.0)
        assert t.position == 12.5

    def test_stop_target_behind(self):
        with pytest.raises(TargetError):
            build_stop_target(10.0, 10.0)

    def test_follow_target(self):
        p = FollowParams(d0=3.0, tau=2.5)
        t = build_follow_target(frenet_state(s=50, v=10, a=0), p)
        assert (t.position, t.velocity, t.acceleration) == (22.0, 10.0, 0.0)
        t = build_follow_target(frenet_state(s=30, v=0, a=0), p)
        assert (t.position, t.velocity, t.acceleration) == (27.0, 0.0, 0.0)
        t = build_follow_target(frenet_state(s=50, v=10, a=2), p)
        assert (t.position, t.velocity, t.acceleration) == (22.0, 5.0, 2.0)


class TestCosts:
    def test_lateral_examples(self):
        flat = QuinticProfile(np.zeros(6), 2.0)
        assert lateral_cost(flat, 0.5, 2.0, unit_weights()) == pytest.approx(2.25)
        zero_w = PlannerWeights(0, 0, 0, 0, 0, 0, 1, 0)
        assert lateral_cost(flat, 0.0, 2.0, zero_w) == 0.0

    def test_lateral_min_jerk(self):
        q = solve_quintic((0, 0, 0), (1, 0, 0), 1.0)
        w = PlannerWeights(k_j_lat=0.1, k_t_lat=1.0, k_p_lat=1.0)
        assert lateral_cost(q, 0.0, 1.0, w) == pytest.approx(73.0, rel=1e-9)

    def test_longitudinal_examples(self):
        flat = QuinticProfile(np.zeros(6), 2.0)
        assert longitudinal_cost(flat, 22.0, 22.0, 2.0, unit_weights()) == pytest.approx(2.0)
        w = PlannerWeights(k_j_lon=0.0, k_t_lon=0.0, k_p_lon=1.0)
        assert longitudinal_cost(flat, 24.0, 22.0, 2.0, w) == pytest.approx(4.0)
        q = solve_quintic((0, 0, 0), (1, 0, 0), 1.0)
        w = PlannerWeights(k_j_lon=0.01, k_t_lon=1.0, k_p_lon=1.0)
        assert longitudinal_cost(q, 22.0, 22.0, 1.0, w) == pytest.approx(8.2, rel=1e-9)


class TestGenerateCandidates:
    def test_singleton_product(self):
        grids = EndStateGrids(dd=(0.0,), dv=(0.0,), ds=(0.0,), k_time=(2.0,))
        cands = generate_candidates(
            frenet_state(v=5), build_cruise_target(5.0), LatTarget(), grids, PlannerWeights()
        )
        assert len(cands) == 1

    def test_product_cardinality(self):
        grids = EndStateGrids(dd=(-0.5, 0, 0.5), dv=(-2, -1, 0, 1, 2), k_time=(1.5, 2.5, 3.5, 4.5))
        cands = generate_candidates(
            frenet_state(v=5), build_cruise_target(5.0), LatTarget(), grids, PlannerWeights()
        )
        assert len(cands) == 60
        # stop mode swaps in the position grid: 3 * 3 * 4
        cands = generate_candidates(
            frenet_state(v=5), build_stop_target(30, 0), LatTarget(), grids, PlannerWeights()
        )
        assert len(cands) == 36

    def test_empty_grid_rejected(self):
        grids = EndStateGrids(dd=(), dv=(0.0,), k_time=(2.0,))
        with pytest.raises(ConfigError):
            generate_candidates(
                frenet_state(), build_cruise_target(5.0), LatTarget(), grids, PlannerWeights()
            )

    def test_cost_identity(self):
        grids = EndStateGrids()
        w = PlannerWeights(k_lat=0.7, k_lon=1.3)
        cands = generate_candidates(frenet_state(v=5), build_cruise_target(5.0), LatTarget(), grids, w)
        for c in cands:
            assert c.c_tot == 0.7 * c.c_lat + 1.3 * c.c_lon

    def test_zero_offsets_hit_target(self):
        grids = EndStateGrids(dd=(0.0,), dv=(0.0,), ds=(0.0,), k_time=(3.0,))
        start = frenet_state(s=5, v=6, d=1.0)
        target = build_stop_target(30.0, 5.0)
        cands = generate_candidates(start, target, LatTarget(), grids, PlannerWeights())
        c = cands[0]
        p, v, a, _ = frenet.eval_profile(c.lon, c.duration)
        assert (p, v, a) == pytest.approx((30.0, 0.0, 0.0), abs=1e-6)
        d, dv, da, _ = frenet.eval_profile(c.lat, c.duration)
        assert (d, dv, da) == pytest.approx((0.0, 0.0, 0.0), abs=1e-6)


class TestSelectBehavior:
    def test_argmin_and_tie_break(self):
        grids = EndStateGrids(dd=(0.0,), dv=(-1.0, 0.0), k_time=(2.5,))
        start = frenet_state(v=5)
        cands = generate_candidates(start, build_cruise_target(5.0), LatTarget(), grids, PlannerWeights())
        b = select_behavior(cands, DynamicLimits(), STRAIGHT, start)
        best = min(cands, key=lambda c: (c.c_tot, c.index))
        assert b.source == best.index
        # order of the list must not matter
        b2 = select_behavior(list(reversed(cands)), DynamicLimits(), STRAIGHT, start)
        assert b2.source == best.index

    def test_sample_count_and_speed(self):
        grids = EndStateGrids()
        start = frenet_state(v=5)
        cands = generate_candidates(start, build_cruise_target(5.0), LatTarget(), grids, PlannerWeights())
        b = select_behavior(cands, DynamicLimits(), STRAIGHT, start)
        assert b.samples.shape == (6, 3)
        assert (b.speeds >= 0).all()
        assert not b.fallback

    def test_infeasible_falls_back_to_brake(self):
        grids = EndStateGrids(dd=(0.0,), ds=(0.0,), k_time=(0.4,))
        start = frenet_state(v=9.0)
        cands = generate_candidates(start, build_stop_target(1.0, 0.0), LatTarget(), grids, PlannerWeights())
        b = select_behavior(cands, DynamicLimits(a_max=4.0), STRAIGHT, start)
        assert b.fallback
        assert (np.diff(b.speeds) <= 1e-9).all()

    def test_empty_candidates_rejected(self):
        with pytest.raises(ConfigError):
            select_behavior([], DynamicLimits(), STRAIGHT, frenet_state())


class TestPlan:
    def test_slow_action_stops(self):
        cfg = PlannerConfig(v_set=8.0, dt_exec=0.1)
        state = frenet_state(s=10, v=6.0)
        behavior = None
        for _ in range(400):
            behavior = plan("slow", PlanRequest(path=STRAIGHT, start=state, stopline_s=40.0), cfg)
            state = behavior.frenet_after
        assert behavior.speeds[-1] < 0.1
        assert state.s_d < 0.05
        assert state.s <= 42.0

    def test_keep_action_reaches_set_speed(self):
        cfg = PlannerConfig(v_set=7.0)
        req = PlanRequest(path=STRAIGHT, start=frenet_state(s=0, v=7.0))
        b = plan("keep", req, cfg)
        assert b.speeds[-1] == pytest.approx(7.0, abs=1.0)
        assert not b.fallback

    def test_keep_with_leader_uses_follow(self):
        cfg = PlannerConfig(v_set=8.0)
        leader = frenet_state(s=60, v=4.0)
        req = PlanRequest(path=STRAIGHT, start=frenet_state(s=0, v=6.0), leader=leader)
        b = plan("keep", req, cfg)
        # terminal speed pulls toward the leader speed, not the set speed
        assert b.speeds[-1] < 6.5

    def test_change_action_converges_to_target_lane(self):
        # a 6 m lateral jump cannot finish inside one imagination window at
        # a_max, so drive the maneuver closed-loop with per-step replanning
        target_lane = build_reference_path([(0.0, 6.0), (400.0, 6.0)])
        cfg = PlannerConfig(v_set=7.0, dt_exec=0.5)
        state = frenet_state(s=20, v=7.0, d=-6.0)  # on the old lane, 6 m right
        b = None
        for _ in range(24):
            b = plan("change", PlanRequest(path=target_lane, start=state), cfg)
            state = b.frenet_after
        s, d = frenet.cartesian_to_frenet(target_lane, b.samples[-1, :2])
        assert abs(d) < 0.2

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            plan("warp", PlanRequest(path=STRAIGHT, start=frenet_state()), PlannerConfig())


class TestBehaviorInvariants:
    def test_feasible_behaviors_within_limits(self):
        rng = np.random.default_rng(0)
        cfg = PlannerConfig(v_set=8.0)
        for _ in range(30):
            start = frenet_state(
                s=rng.uniform(0, 50), v=rng.uniform(0, 8), d=rng.uniform(-1, 1)
            )
            b = plan("keep", PlanRequest(path=STRAIGHT, start=start), cfg)
            if b.fallback:
                continue
            dt = cfg.dt_im
            v = b.speeds
            acc = np.diff(v) / dt
            assert (np.abs(acc) <= cfg.limits.a_max + 0.5).all()
            assert (v <= cfg.limits.v_cap + 1e-6).all()
