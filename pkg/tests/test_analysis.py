import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from informativity.analysis import (
    informative_controllability,
    informative_stability,
    informative_stabilizability,
    informative_sysid,
)
from informativity.data import BlockMatrices
from informativity.errors import DimensionMismatch
from informativity.numerics import is_controllable, is_stabilizable, rank_tol, spectral_radius
from informativity.oracle import SystemModel

from helpers import trajectory


def data_residual(bm, A, B):
    return np.max(np.abs(bm.X_plus - A @ bm.X_minus - B @ bm.U_minus))


def mixed_instance(seed):
    """Random data that are sometimes informative and sometimes not.

    The system may carry an uncontrollable mode (inside or outside the unit
    disk) and the record may be too short to identify it.
    """
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(1, 4)), int(rng.integers(1, 3))
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    if n > 1 and rng.random() < 0.5:
        lam = rng.choice([0.5, 1.5, -2.0])
        A[0, :] = 0.0
        A[0, 0] = lam
        B[0, :] = 0.0
    T = int(rng.integers(1, 2 * (n + m) + 2))
    return trajectory(SystemModel(A, B), rng, T), rng


class TestSysId:
    def test_shift_register_not_identifiable(self, shift_register_example):
        v = informative_sysid(shift_register_example)
        assert not v
        assert v.certificate["null_dimension"] == 1
        w = v.witness
        assert data_residual(shift_register_example, w["A"], w["B"]) < 1e-12

    def test_identity_stack(self):
        bm = BlockMatrices([[0, 1]], [[1, 0]], [[0.3, -2.0]])
        v = informative_sysid(bm)
        assert v
        np.testing.assert_allclose(v.certificate["A"], [[0.3]])
        np.testing.assert_allclose(v.certificate["B"], [[-2.0]])

    def test_two_state_example(self, two_state_example):
        assert not informative_sysid(two_state_example)

    def test_random_recovery(self):
        rng = np.random.default_rng(0)
        sys = SystemModel(rng.standard_normal((3, 3)) * 0.5, rng.standard_normal((3, 2)))
        v = informative_sysid(trajectory(sys, rng, 10))
        assert v
        np.testing.assert_allclose(v.certificate["A"], sys.A, atol=1e-10)
        np.testing.assert_allclose(v.certificate["B"], sys.B, atol=1e-10)

    def test_json(self, shift_register_example):
        obj = informative_sysid(shift_register_example).to_json()
        assert obj["property"] == "SysId" and obj["informative"] is False
        assert isinstance(obj["witness"]["A"], list)


class TestControllability:
    def test_shift_register(self, shift_register_example):
        v = informative_controllability(shift_register_example)
        assert v
        assert v.certificate["candidates"][0]["rank"] == 2

    def test_zero_data(self):
        bm = BlockMatrices([[1, 1]], [[0, 0], [0, 0]], [[0, 0], [0, 0]])
        v = informative_controllability(bm)
        assert not v
        assert v.certificate["failed_lambda"] == 0

    def test_uncontrollable_block(self):
        rng = np.random.default_rng(1)
        A = np.block([[np.array([[0.7, 0.2], [0.0, -0.4]]), np.zeros((2, 1))],
                      [np.zeros((1, 2)), np.array([[1.3]])]])
        B = np.array([[1.0], [1.0], [0.0]])
        bm = trajectory(SystemModel(A, B), rng, 12)
        v = informative_controllability(bm)
        ident = informative_sysid(bm)
        assert ident
        assert v.informative == is_controllable(ident.certificate["A"], ident.certificate["B"]) == False  # noqa: E712
        assert abs(v.certificate["failed_lambda"] - 1.3) < 1e-8

    def test_witness_is_consistent_and_uncontrollable(self):
        # too little data: some consistent system is uncontrollable
        bm = BlockMatrices.from_states([[1, 0.2], [0, 1]], [[0.5]])
        v = informative_controllability(bm)
        assert not v
        w = v.witness
        assert w["data_residual"] < 1e-10
        assert not is_controllable(w["A"], w["B"])


class TestStabilizability:
    def test_one_step(self, one_step_example):
        assert informative_stabilizability(one_step_example)

    def test_shift_register(self, shift_register_example):
        assert informative_stabilizability(shift_register_example)

    def test_common_unstable_mode(self):
        rng = np.random.default_rng(2)
        sys = SystemModel(np.diag([2.0, 0.1]), [[0.0], [1.0]])
        bm = trajectory(sys, rng, 8)
        v = informative_stabilizability(bm)
        assert not v
        assert abs(v.certificate["failed_lambda"] - 2.0) < 1e-8
        w = v.witness
        assert w["data_residual"] < 1e-10
        assert not is_stabilizable(w["A"], w["B"])

    def test_stable_uncontrollable_mode_is_fine(self):
        rng = np.random.default_rng(3)
        bm = trajectory(SystemModel(np.diag([0.5, 1.1]), [[0.0], [1.0]]), rng, 8)
        assert informative_stabilizability(bm)
        assert not informative_controllability(bm)


class TestStability:
    def test_contraction(self):
        v = informative_stability(BlockMatrices(None, np.eye(2), 0.5 * np.eye(2)))
        assert v
        np.testing.assert_allclose(v.certificate["A"], 0.5 * np.eye(2))

    def test_rank_deficient(self):
        v = informative_stability(BlockMatrices(None, [[0, 1], [0, 0]], [[0, 0.2], [0, 0.4]]))
        assert not v
        assert spectral_radius(v.witness["A"]) >= 1
        assert v.witness["data_residual"] < 1e-10

    def test_rank_deficient_inconsistent_data(self):
        # no autonomous system fits these data; the rank test alone decides
        assert not informative_stability(BlockMatrices(None, [[0, 1], [0, 0]], [[0.1, 0.2], [0.3, 0.4]]))

    def test_jordan_block_trajectory(self):
        A = np.array([[0.9, 1.0], [0.0, 0.9]])
        x = [np.array([1.0, 1.0])]
        for _ in range(2):
            x.append(A @ x[-1])
        v = informative_stability(BlockMatrices.from_states(np.array(x).T))
        assert v
        np.testing.assert_allclose(v.certificate["A"], A, atol=1e-9)

    def test_unstable_identified(self):
        v = informative_stability(BlockMatrices(None, np.eye(1), [[1.5]]))
        assert not v

    def test_inputs_rejected(self):
        with pytest.raises(DimensionMismatch):
            informative_stability(BlockMatrices([[1.0]], [[1.0]], [[0.5]]))


def grid_points(rng, k=200):
    """Random points on and around the unit circle, some inside, most outside."""
    radius = np.concatenate([np.ones(k // 4), rng.uniform(0.0, 3.0, k - k // 4)])
    return radius * np.exp(2j * np.pi * rng.random(k))


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 100_000))
    def test_finite_candidates_agree_with_grid(self, seed):
        bm, rng = mixed_instance(seed)
        n = bm.n
        ctrl = informative_controllability(bm)
        stab = informative_stabilizability(bm)
        for lam in grid_points(rng):
            r = rank_tol(bm.X_plus - lam * bm.X_minus)
            if ctrl:
                assert r == n
            if stab and abs(lam) >= 1:
                assert r == n

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 100_000))
    def test_witnesses_violate_the_property(self, seed):
        bm, _ = mixed_instance(seed)
        for test, model_test in ((informative_controllability, is_controllable),
                                 (informative_stabilizability, is_stabilizable)):
            v = test(bm)
            if not v:
                w = v.witness
                scale = max(1.0, np.max(np.abs(bm.X_plus)))
                assert w["data_residual"] < 1e-10 * scale
                assert not model_test(w["A"], w["B"])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 100_000))
    def test_identifiable_data_match_the_true_model(self, seed):
        rng = np.random.default_rng(seed)
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        A, B = rng.standard_normal((n, n)), rng.standard_normal((n, m))
        if n > 1 and rng.random() < 0.5:
            A[0, 1:] = 0.0
            B[0] = 0.0
        bm = trajectory(SystemModel(A, B), rng, n + m + 3)
        ident = informative_sysid(bm)
        if not ident:
            return
        # the identified model carries rounding in structurally zero entries,
        # so compare with the generating system
        assert bool(informative_controllability(bm)) == is_controllable(A, B)
        assert bool(informative_stabilizability(bm)) == is_stabilizable(A, B)

    def test_monotone_under_more_data(self):
        flips = 0
        for trial in range(100):
            rng = np.random.default_rng(1000 + trial)
            n, m = int(rng.integers(1, 4)), int(rng.integers(1, 3))
            A, B = rng.standard_normal((n, n)), rng.standard_normal((n, m))
            if n > 1 and trial % 2:
                A[0, 1:] = 0.0
                B[0] = 0.0
            full = trajectory(SystemModel(A, B), rng, 2 * (n + m) + 2)
            previous = {}
            for T in range(1, full.T + 1):
                bm = full.columns(range(T))
                for name, test in (("sysid", informative_sysid),
                                   ("ctrl", informative_controllability),
                                   ("stab", informative_stabilizability)):
                    v = bool(test(bm))
                    if previous.get(name) and not v:
                        flips += 1
                    previous[name] = v
        assert flips == 0
