"""Least-squares range estimators for UAV position and position + yaw.

Both objectives are unweighted sums of squared range residuals
r = z - ||p_i - q_j||, minimized with Levenberg-Marquardt. Responders are
typically coplanar, so the objective has a mirror minimum below the anchor
plane; iterates are projected onto z >= z_floor and initial guesses are lifted
clear of the plane.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares, minimize, minimize_scalar

from .config import (
    DAMPING_INIT, GRADIENT_TOLERANCE, INITIAL_LIFT, MAX_ITERATIONS,
    STEP_TOLERANCE, Z_FLOOR,
)
from .geometry import (
    Pose, apply_pose, normalize_angle, rotation_z, rotation_z_derivative, vec3,
)

logger = logging.getLogger(__name__)

# Minimum height of an initial guess above z_floor. On the anchor plane itself
# the z-gradient vanishes and the solver could never leave it.
GUESS_CLEARANCE = 0.1


class EstimationError(ValueError):
    """Measurements cannot produce an estimate."""


class UnderdeterminedError(EstimationError):
    pass


class DegenerateGeometryError(EstimationError):
    pass


class YawUnobservableError(EstimationError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = MAX_ITERATIONS
    gradient_tolerance: float = GRADIENT_TOLERANCE
    step_tolerance: float = STEP_TOLERANCE
    damping_init: float = DAMPING_INIT
    z_floor: float = Z_FLOOR

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        for name in ("gradient_tolerance", "step_tolerance", "damping_init"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True, eq=False)
class PositionEstimate:
    position: np.ndarray
    residual_rms: float
    iterations: int
    converged: bool


@dataclass(frozen=True, eq=False)
class PoseEstimate:
    pose: Pose
    residual_rms: float
    iterations: int
    converged: bool

    @property
    def position(self):
        return self.pose.position


# --- Residuals and Jacobians ---

def position_residuals(p, ranges, anchors):
    return ranges - np.linalg.norm(p - anchors, axis=1)


def position_jacobian(p, ranges, anchors):
    """d r / d p; rows for a tag sitting exactly on an anchor are zero."""
    diff = p - anchors
    dist = np.linalg.norm(diff, axis=1)
    safe = np.where(dist > 0.0, dist, 1.0)
    return -np.where(dist[:, None] > 0.0, diff / safe[:, None], 0.0)


def pose_residuals(x, ranges, offsets, anchors):
    """Residuals over (px, py, pz, yaw); `offsets` and `anchors` are per measurement."""
    world = offsets @ rotation_z(x[3]).T + x[:3]
    return ranges - np.linalg.norm(world - anchors, axis=1)


def pose_jacobian(x, ranges, offsets, anchors):
    world = offsets @ rotation_z(x[3]).T + x[:3]
    diff = world - anchors
    dist = np.linalg.norm(diff, axis=1)
    safe = np.where(dist > 0.0, dist, 1.0)
    unit = np.where(dist[:, None] > 0.0, diff / safe[:, None], 0.0)
    d_world = offsets @ rotation_z_derivative(x[3]).T
    jac = np.empty((len(ranges), 4))
    jac[:, :3] = -unit
    jac[:, 3] = -np.sum(unit * d_world, axis=1)
    return jac


def check_jacobian(residual_fn, jacobian_fn, x, eps=1e-6):
    """Relative discrepancy between an analytic Jacobian and central differences."""
    x = np.asarray(x, dtype=float)
    analytic = jacobian_fn(x)
    numeric = np.empty_like(analytic)
    for k in range(len(x)):
        step = np.zeros_like(x)
        step[k] = eps
        numeric[:, k] = (residual_fn(x + step) - residual_fn(x - step)) / (2.0 * eps)
    scale = max(np.linalg.norm(analytic), np.finfo(float).tiny)
    return float(np.linalg.norm(analytic - numeric) / scale)


# --- Levenberg-Marquardt ---

def levenberg_marquardt(residual_fn, jacobian_fn, x0, config, angle_index=None):
    """Damped Gauss-Newton with projection onto z >= z_floor (z is index 2).

    Returns (x, residuals, iterations, converged).
    """
    x = np.array(x0, dtype=float)
    x[2] = max(x[2], config.z_floor)
    r = residual_fn(x)
    cost = float(r @ r)
    damping = config.damping_init
    identity = np.eye(len(x))
    converged = False
    iterations = 0

    while iterations < config.max_iterations:
        iterations += 1
        jac = jacobian_fn(x)
        grad = jac.T @ r
        projected = grad.copy()
        if x[2] <= config.z_floor and projected[2] > 0.0:
            projected[2] = 0.0
        if np.max(np.abs(projected)) < config.gradient_tolerance:
            converged = True
            break

        try:
            delta = np.linalg.solve(jac.T @ jac + damping * identity, -grad)
        except np.linalg.LinAlgError:
            damping *= 10.0
            continue
        candidate = x + delta
        candidate[2] = max(candidate[2], config.z_floor)
        if np.linalg.norm(candidate - x) < config.step_tolerance:
            converged = True
            break
        if angle_index is not None:
            candidate[angle_index] = normalize_angle(candidate[angle_index])

        r_new = residual_fn(candidate)
        cost_new = float(r_new @ r_new)
        if cost_new < cost:
            x, r, cost = candidate, r_new, cost_new
            damping /= 10.0
        else:
            damping *= 10.0

    return x, r, iterations, converged


# --- Measurement bookkeeping ---

def _responder_index(measurements, n_responders):
    ids = np.array([m.responder_id for m in measurements], dtype=int)
    bad = [int(j) for j in ids if not 0 <= j < n_responders]
    if bad:
        raise EstimationError(f"unknown responder id {bad[0]} (layout has {n_responders})")
    return ids


def _check_geometry(anchors):
    unique = np.unique(anchors, axis=0)
    if len(unique) < 3 or np.linalg.matrix_rank(unique - unique.mean(axis=0), tol=1e-9) < 2:
        raise DegenerateGeometryError(
            f"{len(unique)} distinct responders are collinear; position is not identifiable"
        )


def _lifted(position, config):
    guess = vec3(position).copy()
    guess[2] = max(guess[2], config.z_floor + GUESS_CLEARANCE)
    return guess


def initial_position(responders, config=None):
    """Responder centroid lifted clear of the anchor plane."""
    config = config or SolverConfig()
    guess = np.mean(np.asarray(responders, dtype=float), axis=0)
    guess[2] = max(guess[2], config.z_floor) + INITIAL_LIFT
    return guess


def _rms(r):
    return float(math.sqrt(r @ r / len(r)))


# --- Solvers ---

def solve_position(measurements, responders, initial_guess, config=None):
    """Position of one initiator from its ranges to known responders."""
    config = config or SolverConfig()
    if len(measurements) < 3:
        raise UnderdeterminedError(
            f"need at least 3 ranges for a position fix, got {len(measurements)}"
        )
    if len({m.initiator_id for m in measurements}) != 1:
        raise EstimationError("solve_position expects ranges from a single initiator")
    responders = np.asarray(responders, dtype=float)
    ids = _responder_index(measurements, len(responders))
    anchors = responders[ids]
    _check_geometry(anchors)
    ranges = np.array([m.range for m in measurements], dtype=float)

    x, r, iterations, converged = levenberg_marquardt(
        lambda p: position_residuals(p, ranges, anchors),
        lambda p: position_jacobian(p, ranges, anchors),
        _lifted(initial_guess, config),
        config,
    )
    logger.debug("position fix %s after %d iterations (converged=%s)", x, iterations, converged)
    return PositionEstimate(position=x, residual_rms=_rms(r), iterations=iterations, converged=converged)


def _check_yaw_observable(offsets):
    planar = offsets[:, :2] - offsets[:, :2].mean(axis=0)
    if len(offsets) < 2 or not np.any(np.abs(planar) > 1e-12):
        raise YawUnobservableError(
            "yaw needs at least two initiators with distinct horizontal offsets"
        )


def _bearing_guess(measurements, layout, initial_guess, config):
    """Initial pose from per-initiator position fixes and the bearing between them."""
    fixes = {}
    for i, offset in enumerate(layout.initiators):
        own = [m for m in measurements if m.initiator_id == i]
        if len(own) < 3:
            continue
        try:
            fix = solve_position(own, layout.responders, apply_pose(initial_guess, offset), config)
        except EstimationError:
            continue
        fixes[i] = fix.position
    usable = sorted(fixes)
    best = None
    for a in range(len(usable)):
        for b in range(a + 1, len(usable)):
            i, k = usable[a], usable[b]
            body = layout.initiators[k].body_offset - layout.initiators[i].body_offset
            baseline = math.hypot(body[0], body[1])
            if baseline > 1e-12 and (best is None or baseline > best[0]):
                best = (baseline, i, k)
    if best is None:
        return None
    _, i, k = best
    body = layout.initiators[k].body_offset - layout.initiators[i].body_offset
    world = fixes[k] - fixes[i]
    yaw = math.atan2(world[1], world[0]) - math.atan2(body[1], body[0])
    mean_offset = (layout.initiators[i].body_offset + layout.initiators[k].body_offset) / 2.0
    position = (fixes[i] + fixes[k]) / 2.0 - rotation_z(yaw) @ mean_offset
    return Pose(position, yaw)


def solve_pose(measurements, layout, initial_guess, config=None):
    """UAV position and yaw from ranges of two or more rigidly mounted initiators."""
    config = config or SolverConfig()
    _check_yaw_observable(layout.initiators_array())
    if len(measurements) < 4:
        raise UnderdeterminedError(
            f"need at least 4 ranges for a pose fix, got {len(measurements)}"
        )
    initiator_ids = np.array([m.initiator_id for m in measurements], dtype=int)
    bad = [int(i) for i in initiator_ids if not 0 <= i < layout.n_initiators]
    if bad:
        raise EstimationError(f"unknown initiator id {bad[0]} (layout has {layout.n_initiators})")
    _check_yaw_observable(layout.initiators_array()[np.unique(initiator_ids)])
    responders = layout.responders_array()
    anchors = responders[_responder_index(measurements, layout.n_responders)]
    _check_geometry(anchors)
    offsets = layout.initiators_array()[initiator_ids]
    ranges = np.array([m.range for m in measurements], dtype=float)

    def residual_fn(x):
        return pose_residuals(x, ranges, offsets, anchors)

    def jacobian_fn(x):
        return pose_jacobian(x, ranges, offsets, anchors)

    starts = []
    bearing = _bearing_guess(measurements, layout, initial_guess, config)
    if bearing is not None:
        starts.append(bearing)
    starts.append(initial_guess)

    best = None
    for start in starts:
        x0 = np.append(_lifted(start.position, config), start.yaw)
        x, r, iterations, converged = levenberg_marquardt(
            residual_fn, jacobian_fn, x0, config, angle_index=3
        )
        cost = float(r @ r)
        if best is None or cost < best[0]:
            best = (cost, x, r, iterations, converged)

    _, x, r, iterations, converged = best
    pose = Pose(x[:3], x[3])
    logger.debug("pose fix %s yaw=%.6f after %d iterations", pose.position, pose.yaw, iterations)
    return PoseEstimate(pose=pose, residual_rms=_rms(r), iterations=iterations, converged=converged)


class SweepEstimator:
    """Warm-started per-sweep estimation for a fixed layout.

    The first solve starts at the responder centroid lifted by INITIAL_LIFT;
    every later solve starts from the previous estimate. With a single
    initiator the UAV position is the initiator fix minus its rotated lever
    arm (yaw taken from `yaw_hint`); with two or more the full pose is solved.
    """

    def __init__(self, layout, config=None, yaw_hint=0.0):
        self.layout = layout
        self.config = config or SolverConfig()
        self.yaw_hint = yaw_hint
        self._previous = None

    @property
    def estimates_yaw(self):
        return self.layout.n_initiators > 1

    def reset(self):
        self._previous = None

    def update(self, measurements):
        if self.estimates_yaw:
            return self._update_pose(measurements)
        return self._update_position(measurements)

    def _update_position(self, measurements):
        lever = rotation_z(self.yaw_hint) @ self.layout.initiators[0].body_offset
        if self._previous is None:
            guess = initial_position(self.layout.responders, self.config)
        else:
            guess = self._previous + lever
        fix = solve_position(measurements, self.layout.responders, guess, self.config)
        position = fix.position - lever
        self._previous = position
        return PositionEstimate(position, fix.residual_rms, fix.iterations, fix.converged)

    def _update_pose(self, measurements):
        if self._previous is None:
            guess = Pose(initial_position(self.layout.responders, self.config), self.yaw_hint)
        else:
            guess = self._previous
        estimate = solve_pose(measurements, self.layout, guess, self.config)
        self._previous = estimate.pose
        return estimate


# --- Test oracles ---

def _grid_axis(lo, hi, step):
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    axis = lo + step * np.arange(n)
    if axis[-1] < hi - 1e-12:
        axis = np.append(axis, hi)
    return axis


def oracle_position(measurements, responders, search_center, search_half_width,
                    resolution=0.01, cells=40, candidates=3):
    """Brute-force minimizer of the position objective inside a search box.

    Nested grid searches zoom in on the best `candidates` cells until the grid
    spacing reaches `resolution`, then Nelder-Mead polishes each candidate
    within the box. A box that excludes the minimum yields a boundary point.
    """
    responders = np.asarray(responders, dtype=float)
    ids = np.array([m.responder_id for m in measurements], dtype=int)
    anchors = responders[ids]
    ranges = np.array([m.range for m in measurements], dtype=float)
    center = vec3(search_center)
    box_lo = center - search_half_width
    box_hi = center + search_half_width

    def cost_many(points):
        dist = np.sqrt(((points[:, None, :] - anchors[None, :, :]) ** 2).sum(axis=2))
        return ((ranges[None, :] - dist) ** 2).sum(axis=1)

    def grid_search(lo, hi, step):
        axes = [_grid_axis(lo[k], hi[k], step) for k in range(3)]
        points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        costs = cost_many(points)
        order = np.argsort(costs, kind="stable")
        return points[order], costs[order]

    step = max(float(np.max(box_hi - box_lo)) / cells, resolution)
    points, _ = grid_search(box_lo, box_hi, step)
    seeds = list(points[:candidates])
    while step > resolution:
        next_step = max(step * 6.0 / cells, resolution)
        refined = []
        for seed in seeds:
            lo = np.maximum(box_lo, seed - 3.0 * step)
            hi = np.minimum(box_hi, seed + 3.0 * step)
            pts, _ = grid_search(lo, hi, next_step)
            refined.append(pts[0])
        seeds = refined
        step = next_step

    def cost_one(p):
        d = np.sqrt(((p[None, :] - anchors) ** 2).sum(axis=1))
        return float(((ranges - d) ** 2).sum())

    best_point, best_cost = None, math.inf
    bounds = list(zip(box_lo, box_hi))
    for seed in seeds:
        simplex = np.vstack([seed, seed + np.diag(np.full(3, 2.0 * resolution))])
        simplex = np.clip(simplex, box_lo, box_hi)
        result = minimize(
            cost_one, seed, method="Nelder-Mead", bounds=bounds,
            options={"initial_simplex": simplex, "xatol": 1e-9, "fatol": 1e-15, "maxiter": 20000},
        )
        if result.fun < best_cost:
            best_point, best_cost = np.clip(result.x, box_lo, box_hi), result.fun
    return best_point


def oracle_pose(measurements, layout, search_center, steps=3600):
    """Yaw sweep oracle: solve position at each of `steps` yaws, then refine yaw.

    Positions at fixed yaw come from scipy's MINPACK least squares, warm-started
    along the sweep from `search_center`.
    """
    ranges = np.array([m.range for m in measurements], dtype=float)
    offsets = np.array([layout.initiators[m.initiator_id].body_offset for m in measurements])
    anchors = np.array([layout.responders[m.responder_id] for m in measurements])

    def solve_at(yaw, p0):
        c, s = math.cos(yaw), math.sin(yaw)
        rotated = np.column_stack([c * offsets[:, 0] - s * offsets[:, 1],
                                   s * offsets[:, 0] + c * offsets[:, 1],
                                   offsets[:, 2]])
        result = least_squares(
            lambda p: ranges - np.sqrt(((rotated + p - anchors) ** 2).sum(axis=1)),
            p0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
        )
        return result.x, float(result.fun @ result.fun)

    yaws = -math.pi + 2.0 * math.pi * np.arange(1, steps + 1) / steps
    p = vec3(search_center)
    costs = np.empty(steps)
    positions = np.empty((steps, 3))
    for k, yaw in enumerate(yaws):
        p, costs[k] = solve_at(yaw, p)
        positions[k] = p
    k_best = int(np.argmin(costs))
    width = 2.0 * math.pi / steps
    start = positions[k_best]
    center_yaw = yaws[k_best]
    refined = minimize_scalar(
        lambda yaw: solve_at(yaw, start)[1],
        bounds=(center_yaw - width, center_yaw + width),
        method="bounded", options={"xatol": 1e-10},
    )
    position, _ = solve_at(refined.x, start)
    return Pose(position, refined.x)
