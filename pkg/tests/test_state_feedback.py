import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from informativity.analysis import informative_stabilizability
from informativity.data import BlockMatrices
from informativity.errors import NotInformative
from informativity.numerics import spectral_radius
from informativity.oracle import GAIN, Controller, SystemModel, consistent_set, verify_controller
from informativity.state_feedback import (
    ALGEBRAIC,
    DEADBEAT,
    LMI,
    deadbeat,
    stabilize_algebraic,
    stabilize_lmi,
)

from helpers import random_system, trajectory

ROUTES = [stabilize_lmi, stabilize_algebraic]


def check_invariants(bm, cert):
    n = bm.n
    np.testing.assert_allclose(bm.X_minus @ cert.right_inverse, np.eye(n), atol=1e-10)
    np.testing.assert_allclose(bm.U_minus @ cert.right_inverse, cert.K, atol=1e-10)
    # [I; K] lies in the column space of [X_-; U_-]
    target = np.vstack([np.eye(n), cert.K])
    coef = np.linalg.lstsq(bm.stacked, target, rcond=None)[0]
    assert np.max(np.abs(bm.stacked @ coef - target)) < 1e-9


def sampled_members(bm, rng, count):
    param = consistent_set(bm)
    for _ in range(count):
        yield param.member(rng.standard_normal((param.free_rows, param.null_dimension)))


class TestStabilize:
    @pytest.mark.parametrize("route", ROUTES)
    def test_two_state_example(self, route, two_state_example):
        cert = route(two_state_example)
        np.testing.assert_allclose(cert.K, [[-1.0, -0.5]], atol=1e-9)
        assert abs(cert.spectrum.spectral_radius - np.sqrt(3) / 2) < 1e-9
        check_invariants(two_state_example, cert)

    def test_route_tags(self, two_state_example):
        assert stabilize_lmi(two_state_example).route == LMI
        assert stabilize_algebraic(two_state_example).route == ALGEBRAIC
        assert stabilize_lmi(two_state_example).theta is not None

    @pytest.mark.parametrize("route", ROUTES)
    def test_one_step_not_informative(self, route, one_step_example):
        with pytest.raises(NotInformative):
            route(one_step_example)

    @pytest.mark.parametrize("route", ROUTES)
    def test_zero_successor(self, route):
        bm = BlockMatrices(np.zeros((1, 2)), np.eye(2), np.zeros((2, 2)))
        cert = route(bm)
        np.testing.assert_allclose(cert.K, 0.0, atol=1e-9)
        assert cert.spectrum.spectral_radius < 1e-9

    def test_rank_deficient_rejected_by_algebraic_route(self):
        bm = BlockMatrices([[1.0, 0.0]], [[1.0, 1.0], [0.0, 0.0]], [[0.5, 0.5], [0.0, 0.0]])
        with pytest.raises(NotInformative):
            stabilize_algebraic(bm)

    def test_json(self, two_state_example):
        obj = json.loads(json.dumps(stabilize_lmi(two_state_example).to_json()))
        assert set(obj) >= {"K", "route", "right_inverse", "closed_loop", "spectrum", "theta"}

    @pytest.mark.parametrize("route", ROUTES)
    def test_random_stabilizable_system(self, route):
        rng = np.random.default_rng(20)
        sys = random_system(rng, 3, 1, radius=1.4)
        bm = trajectory(sys, rng, 20)
        cert = route(bm)
        check_invariants(bm, cert)
        report = verify_controller(consistent_set(bm), Controller(GAIN, cert.K), samples=100, seed=1)
        assert report.passed

    def test_routes_agree_on_sampled_members(self):
        rng = np.random.default_rng(21)
        n, m, T = 3, 2, 4
        sys = random_system(rng, n, m, radius=1.3)
        bm = trajectory(sys, rng, T)
        gains = [route(bm) for route in ROUTES]
        for member in sampled_members(bm, rng, 200):
            for cert in gains:
                closed = member.A + member.B @ cert.K
                np.testing.assert_allclose(closed, cert.closed_loop, atol=1e-9)
                assert spectral_radius(closed) < 1

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 100_000))
    def test_success_implies_stabilizability(self, seed):
        rng = np.random.default_rng(seed)
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        sys = random_system(rng, n, m, radius=float(rng.uniform(0.5, 2.0)))
        bm = trajectory(sys, rng, int(rng.integers(n, n + m + 2)))
        for route in ROUTES:
            try:
                cert = route(bm)
            except NotInformative:
                continue
            check_invariants(bm, cert)
            assert cert.spectrum.spectral_radius < 1 - 1e-9
            assert informative_stabilizability(bm)


class TestDeadbeat:
    def test_already_nilpotent(self):
        bm = BlockMatrices([[0.0, 0.0]], np.eye(2), [[0.0, 1.0], [0.0, 0.0]])
        cert = deadbeat(bm)
        np.testing.assert_allclose(cert.K, 0.0, atol=1e-12)
        assert cert.route == DEADBEAT

    def test_scalar(self):
        # a = 2, b = 1 is the only consistent system; K = -2 cancels it
        bm = BlockMatrices([[0.0, 1.0]], [[1.0, 2.0]], [[2.0, 5.0]])
        cert = deadbeat(bm)
        np.testing.assert_allclose(cert.K, [[-2.0]], atol=1e-10)
        np.testing.assert_allclose(cert.closed_loop, 0.0, atol=1e-10)

    def test_unique_right_inverse_not_nilpotent(self, two_state_example):
        with pytest.raises(NotInformative):
            deadbeat(two_state_example)

    def test_random_members_are_nilpotent(self):
        rng = np.random.default_rng(22)
        sys = random_system(rng, 3, 2, radius=1.5)
        bm = trajectory(sys, rng, 5)
        cert = deadbeat(bm)
        check_invariants(bm, cert)
        assert np.max(np.abs(np.linalg.matrix_power(cert.closed_loop, 3))) < 1e-8
        for member in sampled_members(bm, rng, 50):
            closed = member.A + member.B @ cert.K
            assert np.max(np.abs(np.linalg.matrix_power(closed, 3))) < 1e-8
        assert verify_controller(consistent_set(bm), Controller("deadbeat", cert.K), seed=2).passed

    def test_uncontrollable_mode_blocks_deadbeat(self):
        rng = np.random.default_rng(23)
        A = np.diag([0.5, 1.2])
        bm = trajectory(SystemModel(A, [[0.0], [1.0]]), rng, 6)
        with pytest.raises(NotInformative):
            deadbeat(bm)
