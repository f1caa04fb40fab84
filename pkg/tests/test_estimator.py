"""Tests for uwb_coop.estimator: residuals, Levenberg-Marquardt, solvers and oracles."""

import math

import numpy as np
import pytest

from uwb_coop.estimator import (
    DegenerateGeometryError, EstimationError, SolverConfig, SweepEstimator,
    UnderdeterminedError, YawUnobservableError, check_jacobian, initial_position,
    levenberg_marquardt, oracle_pose, oracle_position, pose_jacobian, pose_residuals,
    position_jacobian, position_residuals, solve_pose, solve_position,
)
from uwb_coop.geometry import Pose, TransceiverLayout, square_anchor_layout
from uwb_coop.ranging import NoiseModel, RangeMeasurement, make_rng, sweep


def _ranges(layout, pose, sigma=0.0, seed=0):
    return sweep(layout, pose, NoiseModel(sigma=sigma, seed=seed), 0.0, make_rng(seed))


def _cost(position, measurements, responders):
    anchors = np.asarray(responders)[[m.responder_id for m in measurements]]
    ranges = np.array([m.range for m in measurements])
    r = position_residuals(position, ranges, anchors)
    return float(r @ r)


class TestSolverConfig:
    def test_defaults(self):
        config = SolverConfig()
        assert config.max_iterations == 50
        assert config.damping_init == 1e-3
        assert config.z_floor == 0.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            SolverConfig(max_iterations=0)


class TestJacobians:
    def test_position_jacobian(self, layout_12m):
        anchors = layout_12m.responders_array()
        ranges = np.array([10.0, 11.0, 12.0, 13.0])
        error = check_jacobian(
            lambda p: position_residuals(p, ranges, anchors),
            lambda p: position_jacobian(p, ranges, anchors),
            [1.0, -2.0, 7.0],
        )
        assert error < 1e-6

    def test_pose_jacobian(self, two_initiator_layout):
        offsets = two_initiator_layout.initiators_array()[[0, 0, 0, 0, 1, 1, 1, 1]]
        anchors = two_initiator_layout.responders_array()[[0, 1, 2, 3, 0, 1, 2, 3]]
        ranges = np.full(8, 10.0)
        error = check_jacobian(
            lambda x: pose_residuals(x, ranges, offsets, anchors),
            lambda x: pose_jacobian(x, ranges, offsets, anchors),
            [0.5, 1.0, 8.0, 0.9],
        )
        assert error < 1e-6

    def test_residual_sign(self, layout_12m):
        anchors = layout_12m.responders_array()[:1]
        r = position_residuals(np.array([0.0, 0.0, 0.0]), np.array([10.0]), anchors)
        assert r[0] == pytest.approx(10.0 - math.hypot(6.0, 6.0))


class TestLevenbergMarquardt:
    def test_cost_never_increases(self, layout_12m):
        anchors = layout_12m.responders_array()
        ranges = np.array([m.range for m in _ranges(layout_12m, Pose((2, -1, 9)), 0.1, 4)])
        residual = lambda p: position_residuals(p, ranges, anchors)  # noqa: E731
        jacobian = lambda p: position_jacobian(p, ranges, anchors)  # noqa: E731
        rng = np.random.default_rng(0)
        for _ in range(20):
            x0 = rng.uniform([-10, -10, 0.5], [10, 10, 30])
            r0 = residual(x0)
            x, r, iterations, _ = levenberg_marquardt(residual, jacobian, x0, SolverConfig())
            assert r @ r <= r0 @ r0
            assert iterations <= 50
            assert x[2] >= 0.0

    def test_respects_iteration_cap(self, layout_12m):
        anchors = layout_12m.responders_array()
        ranges = np.array([m.range for m in _ranges(layout_12m, Pose((2, -1, 9)))])
        _, _, iterations, converged = levenberg_marquardt(
            lambda p: position_residuals(p, ranges, anchors),
            lambda p: position_jacobian(p, ranges, anchors),
            [0.0, 0.0, 1.0], SolverConfig(max_iterations=1),
        )
        assert iterations == 1
        assert not converged


class TestSolvePosition:
    def test_noiseless_recovery(self, layout_12m):
        truth = np.array([1.0, 2.0, 10.0])
        estimate = solve_position(_ranges(layout_12m, Pose(truth)), layout_12m.responders,
                                  initial_position(layout_12m.responders))
        assert estimate.converged
        assert np.allclose(estimate.position, truth, atol=1e-6)
        assert estimate.residual_rms < 1e-6

    def test_small_separation_noiseless(self, layout_3m):
        truth = np.array([0.5, -0.5, 20.0])
        estimate = solve_position(_ranges(layout_3m, Pose(truth)), layout_3m.responders,
                                  truth + np.array([0.5, 0.5, -2.0]))
        assert np.allclose(estimate.position, truth, atol=1e-4)

    def test_mirror_solution_rejected(self, layout_12m):
        truth = np.array([1.0, 1.0, 5.0])
        estimate = solve_position(_ranges(layout_12m, Pose(truth)), layout_12m.responders,
                                  (1.0, 1.0, -5.0))
        assert estimate.position[2] > 0.0
        assert np.allclose(estimate.position, truth, atol=1e-6)

    def test_too_few_ranges(self, layout_12m):
        ranges = _ranges(layout_12m, Pose((0, 0, 5)))[:2]
        with pytest.raises(UnderdeterminedError):
            solve_position(ranges, layout_12m.responders, (0, 0, 1))

    def test_collinear_responders(self):
        responders = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (2.0, 0.0, 0.0)]
        ranges = [RangeMeasurement(0, j, 5.0, 0.0) for j in range(3)]
        with pytest.raises(DegenerateGeometryError):
            solve_position(ranges, responders, (0, 0, 1))

    def test_repeated_responder(self, layout_12m):
        ranges = [RangeMeasurement(0, 0, 5.0, 0.0), RangeMeasurement(0, 0, 5.1, 0.0),
                  RangeMeasurement(0, 1, 5.0, 0.0)]
        with pytest.raises(DegenerateGeometryError):
            solve_position(ranges, layout_12m.responders, (0, 0, 1))

    def test_unknown_responder(self, layout_12m):
        ranges = [RangeMeasurement(0, j, 5.0, 0.0) for j in (0, 1, 2, 9)]
        with pytest.raises(EstimationError):
            solve_position(ranges, layout_12m.responders, (0, 0, 1))

    def test_matches_oracle(self, layout_12m):
        truth = np.array([1.0, -1.0, 8.0])
        ranges = _ranges(layout_12m, Pose(truth), sigma=0.1, seed=3)
        estimate = solve_position(ranges, layout_12m.responders, initial_position(layout_12m.responders))
        oracle = oracle_position(ranges, layout_12m.responders, truth, 2.0)
        assert np.allclose(estimate.position, oracle, atol=1e-3)
        assert _cost(estimate.position, ranges, layout_12m.responders) <= \
            _cost(oracle, ranges, layout_12m.responders) + 1e-9

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_oracle_narrow_layout_high(self, seed):
        responders = square_anchor_layout(1.2)
        layout = TransceiverLayout(initiators=((0.0, 0.0, 0.0),), responders=tuple(responders))
        ranges = _ranges(layout, Pose((0.0, 0.0, 30.0)), sigma=0.1, seed=seed)
        estimate = solve_position(ranges, responders, initial_position(responders))
        oracle = oracle_position(ranges, responders, estimate.position, 2.0)
        assert np.linalg.norm(estimate.position - oracle) < 1e-3
        assert _cost(estimate.position, ranges, responders) <= _cost(oracle, ranges, responders) + 1e-9


class TestSolvePose:
    def test_noiseless_recovery(self, two_initiator_layout):
        truth = Pose((2.0, 1.0, 10.0), 0.7)
        guess = Pose(initial_position(two_initiator_layout.responders), 0.0)
        estimate = solve_pose(_ranges(two_initiator_layout, truth), two_initiator_layout, guess)
        assert np.allclose(estimate.position, truth.position, atol=1e-6)
        assert estimate.pose.yaw == pytest.approx(truth.yaw, abs=1e-6)

    def test_yaw_near_pi(self, two_initiator_layout):
        truth = Pose((-1.0, 3.0, 6.0), math.pi - 0.01)
        guess = Pose(initial_position(two_initiator_layout.responders), 0.0)
        estimate = solve_pose(_ranges(two_initiator_layout, truth), two_initiator_layout, guess)
        assert math.cos(estimate.pose.yaw - truth.yaw) == pytest.approx(1.0, abs=1e-10)
        assert -math.pi < estimate.pose.yaw <= math.pi

    def test_single_initiator_unobservable(self, layout_12m):
        with pytest.raises(YawUnobservableError):
            solve_pose(_ranges(layout_12m, Pose((0, 0, 5))), layout_12m, Pose((0, 0, 1)))

    def test_vertical_offsets_unobservable(self):
        layout = TransceiverLayout(initiators=((0, 0, 0.1), (0, 0, -0.1)),
                                   responders=tuple(square_anchor_layout(12.0)))
        with pytest.raises(YawUnobservableError):
            solve_pose(_ranges(layout, Pose((0, 0, 5))), layout, Pose((0, 0, 1)))

    def test_too_few_ranges(self, two_initiator_layout):
        ranges = _ranges(two_initiator_layout, Pose((0, 0, 5)))
        with pytest.raises(UnderdeterminedError):
            solve_pose([ranges[0], ranges[1], ranges[4]], two_initiator_layout, Pose((0, 0, 1)))

    def test_matches_oracle(self, two_initiator_layout):
        truth = Pose((1.0, 2.0, 5.0), -0.4)
        ranges = _ranges(two_initiator_layout, truth, sigma=0.02, seed=1)
        guess = Pose(initial_position(two_initiator_layout.responders), 0.0)
        estimate = solve_pose(ranges, two_initiator_layout, guess)
        oracle = oracle_pose(ranges, two_initiator_layout, truth.position, steps=720)
        assert np.allclose(estimate.position, oracle.position, atol=1e-4)
        assert math.cos(estimate.pose.yaw - oracle.yaw) == pytest.approx(1.0, abs=1e-8)


class TestSweepEstimator:
    def test_first_guess(self, layout_12m):
        guess = initial_position(layout_12m.responders)
        assert guess.tolist() == [0.0, 0.0, 1.0]

    def test_tracks_moving_uav(self, layout_12m):
        estimator = SweepEstimator(layout_12m)
        for z in (2.0, 2.1, 2.2, 2.3):
            estimate = estimator.update(_ranges(layout_12m, Pose((0.3, 0.1, z))))
            assert np.allclose(estimate.position, [0.3, 0.1, z], atol=1e-6)

    def test_lever_arm_removed(self):
        layout = TransceiverLayout(initiators=((0.2, 0.0, 0.0),),
                                   responders=tuple(square_anchor_layout(12.0)))
        estimator = SweepEstimator(layout)
        estimate = estimator.update(_ranges(layout, Pose((1.0, 1.0, 6.0))))
        assert np.allclose(estimate.position, [1.0, 1.0, 6.0], atol=1e-6)

    def test_reset_restarts_from_centroid(self, layout_12m):
        first = _ranges(layout_12m, Pose((2.0, 2.0, 8.0)), sigma=0.1, seed=2)
        second = _ranges(layout_12m, Pose((2.1, 2.0, 8.0)), sigma=0.1, seed=3)
        estimator = SweepEstimator(layout_12m)
        a = estimator.update(first)
        estimator.update(second)
        estimator.reset()
        b = estimator.update(first)
        assert np.array_equal(a.position, b.position)

    def test_pose_mode(self, two_initiator_layout):
        estimator = SweepEstimator(two_initiator_layout)
        assert estimator.estimates_yaw
        estimate = estimator.update(_ranges(two_initiator_layout, Pose((0.0, 0.0, 4.0), 0.2)))
        assert estimate.pose.yaw == pytest.approx(0.2, abs=1e-6)
