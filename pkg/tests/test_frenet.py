import numpy as np
import pytest
from scipy.integrate import quad

from hierdrive import frenet
from hierdrive.frenet import (
    CorridorError,
    DomainError,
    PathError,
    QuinticProfile,
    build_reference_path,
    cartesian_to_frenet,
    eval_profile,
    frenet_to_cartesian,
    jerk_integral,
    solve_quintic,
)


def quarter_circle(n=4096, radius=5.0):
    theta = np.linspace(0.0, np.pi / 2, n)
    return build_reference_path(np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1))


def random_smooth_path(rng, n=200):
    # bounded turn per 0.5 m step keeps curvature radius above ~10 m
    turns = rng.uniform(-0.05, 0.05, n)
    heading = np.cumsum(turns) + rng.uniform(0, 2 * np.pi)
    steps = 0.5 * np.stack([np.cos(heading), np.sin(heading)], axis=1)
    pts = np.concatenate([[[0.0, 0.0]], np.cumsum(steps, axis=0)]) + rng.uniform(-50, 50, 2)
    return build_reference_path(pts)


class TestReferencePath:
    def test_straight_segment(self):
        p = build_reference_path([(0, 0), (10, 0)])
        assert p.length == pytest.approx(10.0)
        np.testing.assert_allclose(p.tangent(3.0), [1, 0], atol=1e-12)
        np.testing.assert_allclose(p.normal(3.0), [0, 1], atol=1e-12)

    def test_three_four_five(self):
        p = build_reference_path([(0, 0), (3, 4)])
        assert p.length == pytest.approx(5.0)
        np.testing.assert_allclose(p.tangent(1.0), [0.6, 0.8], atol=1e-12)

    def test_quarter_circle_length(self):
        p = quarter_circle(n=64)
        assert abs(p.length - 5 * np.pi / 2) < 1e-3

    def test_rejects_short_and_duplicate(self):
        with pytest.raises(PathError):
            build_reference_path([(0, 0)])
        with pytest.raises(PathError):
            build_reference_path([(0, 0), (0, 0), (1, 0)])

    def test_unit_frames(self):
        rng = np.random.default_rng(0)
        p = random_smooth_path(rng)
        np.testing.assert_allclose(np.hypot(p.seg_dir[:, 0], p.seg_dir[:, 1]), 1.0, atol=1e-9)
        np.testing.assert_allclose(np.hypot(p.seg_nor[:, 0], p.seg_nor[:, 1]), 1.0, atol=1e-9)
        # left normal: tangent rotated +90 degrees
        rot = np.stack([-p.seg_dir[:, 1], p.seg_dir[:, 0]], axis=1)
        np.testing.assert_allclose(p.seg_nor, rot, atol=1e-12)
        assert (np.diff(p.cum_s) > 0).all()


class TestConversions:
    def test_identity_frame(self):
        p = build_reference_path([(0, 0), (10, 0)])
        np.testing.assert_allclose(frenet_to_cartesian(p, 3, 2), [3, 2], atol=1e-12)
        np.testing.assert_allclose(frenet_to_cartesian(p, 3, 0), [3, 0], atol=1e-12)
        assert cartesian_to_frenet(p, (3, 2)) == pytest.approx((3, 2))
        assert cartesian_to_frenet(p, (3, -2)) == pytest.approx((3, -2))

    def test_quarter_circle_inward_normal(self):
        p = quarter_circle()
        s_end = min(5 * np.pi / 2, p.length)
        np.testing.assert_allclose(frenet_to_cartesian(p, s_end, 1.0), [0, 4], atol=1e-3)
        s, d = cartesian_to_frenet(p, (0, 4))
        assert abs(s - 5 * np.pi / 2) < 1e-3
        assert abs(d - 1.0) < 1e-3

    def test_domain_and_corridor_errors(self):
        p = build_reference_path([(0, 0), (10, 0)])
        with pytest.raises(DomainError):
            frenet_to_cartesian(p, 11.0, 0.0)
        with pytest.raises(DomainError):
            frenet_to_cartesian(p, -1.0, 0.0)
        with pytest.raises(CorridorError):
            cartesian_to_frenet(p, (5, 30))

    def test_round_trip_property(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            p = random_smooth_path(rng)
            s = rng.uniform(0.5, p.length - 0.5, 50)
            d = rng.uniform(-4, 4, 50)
            for si, di in zip(s, d):
                pt = frenet_to_cartesian(p, si, di)
                s2, d2 = cartesian_to_frenet(p, pt)
                pt2 = frenet_to_cartesian(p, s2, d2)
                assert np.hypot(*(pt - pt2)) < 1e-6

    def test_warm_start_matches_global(self):
        rng = np.random.default_rng(7)
        p = random_smooth_path(rng)
        for _ in range(100):
            s = rng.uniform(0, p.length)
            d = rng.uniform(-3, 3)
            pt = frenet_to_cartesian(p, s, d)
            got = cartesian_to_frenet(p, pt, hint_s=s + rng.uniform(-5, 5))
            want = cartesian_to_frenet(p, pt)
            assert got == pytest.approx(want, abs=1e-9)


class TestQuintic:
    def test_canonical_min_jerk(self):
        q = solve_quintic((0, 0, 0), (1, 0, 0), 1.0)
        np.testing.assert_allclose(q.coeffs, [0, 0, 0, 10, -15, 6], atol=1e-9)

    def test_stationary(self):
        q = solve_quintic((3.5, 0, 0), (3.5, 0, 0), 2.0)
        np.testing.assert_allclose(q.coeffs, [3.5, 0, 0, 0, 0, 0], atol=1e-9)

    def test_constant_velocity(self):
        q = solve_quintic((0, 1, 0), (1, 1, 0), 1.0)
        np.testing.assert_allclose(q.coeffs, [0, 1, 0, 0, 0, 0], atol=1e-9)

    def test_invalid_duration(self):
        with pytest.raises(DomainError):
            solve_quintic((0, 0, 0), (1, 0, 0), 0.0)
        with pytest.raises(DomainError):
            solve_quintic((0, 0, 0), (1, 0, 0), -1.0)

    def test_boundary_residuals_random(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            start = rng.uniform([-100, -10, -5], [100, 10, 5])
            end = rng.uniform([-100, -10, -5], [100, 10, 5])
            T = rng.uniform(0.5, 10.0)
            q = solve_quintic(start, end, T)
            p0, v0, a0, _ = eval_profile(q, 0.0)
            p1, v1, a1, _ = eval_profile(q, T)
            assert max(abs(p0 - start[0]), abs(v0 - start[1]), abs(a0 - start[2])) < 1e-9
            assert max(abs(p1 - end[0]), abs(v1 - end[1]), abs(a1 - end[2])) < 1e-9


class TestEvalAndJerk:
    def test_min_jerk_midpoint(self):
        q = solve_quintic((0, 0, 0), (1, 0, 0), 1.0)
        p, *_ = eval_profile(q, 0.5)
        assert p == pytest.approx(0.5, abs=1e-12)

    def test_constant_and_linear(self):
        c = QuinticProfile(np.array([2.0, 0, 0, 0, 0, 0]), 3.0)
        assert eval_profile(c, 1.7) == pytest.approx((2, 0, 0, 0))
        lin = QuinticProfile(np.array([0.0, 1, 0, 0, 0, 0]), 1.0)
        assert eval_profile(lin, 0.7) == pytest.approx((0.7, 1, 0, 0))
        assert jerk_integral(c) == 0.0
        assert jerk_integral(lin) == 0.0

    def test_eval_domain(self):
        q = solve_quintic((0, 0, 0), (1, 0, 0), 1.0)
        with pytest.raises(DomainError):
            eval_profile(q, 1.5)

    def test_min_jerk_value(self):
        q = solve_quintic((0, 0, 0), (1, 0, 0), 1.0)
        assert jerk_integral(q) == pytest.approx(720.0, rel=1e-9)

    def test_closed_form_matches_quadrature(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            q = solve_quintic(rng.uniform(-10, 10, 3), rng.uniform(-10, 10, 3), rng.uniform(0.5, 10))
            num, _ = quad(lambda t: eval_profile(q, t)[3] ** 2, 0, q.duration, limit=200)
            assert jerk_integral(q) == pytest.approx(num, rel=1e-6, abs=1e-9)

    def test_jerk_optimality(self):
        # admissible degree-5 perturbations are identically zero (6 boundary
        # constraints, 6 coefficients); use a degree-8 family with vanishing
        # boundary triples to make the minimality check meaningful
        rng = np.random.default_rng(4)
        for _ in range(100):
            start = rng.uniform(-5, 5, 3)
            end = rng.uniform(-5, 5, 3)
            T = rng.uniform(0.5, 5.0)
            q = solve_quintic(start, end, T)
            base = jerk_integral(q)
            for _ in range(20):
                abc = rng.uniform(-1, 1, 3)
                # q(t) = t^3 (T - t)^3 (a + b t + c t^2): zero triple at both ends
                bump = np.polynomial.polynomial.polymul(
                    np.polynomial.polynomial.polypow(np.array([0, 0, 0, 1.0]), 1),
                    np.polynomial.polynomial.polypow(np.array([T, -1.0]), 3),
                )
                bump = np.polynomial.polynomial.polymul(bump, abc)
                total = np.zeros(9)
                total[: len(q.coeffs)] = q.coeffs
                total[: len(bump)] += bump
                d3 = np.polynomial.polynomial.polyder(total, 3)
                sq = np.polynomial.polynomial.polymul(d3, d3)
                anti = np.polynomial.polynomial.polyint(sq)
                perturbed = np.polynomial.polynomial.polyval(T, anti)
                assert perturbed >= base - 1e-9
