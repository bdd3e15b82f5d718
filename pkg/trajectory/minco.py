"""
MINCO minimum-jerk trajectories
Piecewise quintics fixed by waypoints and durations through a banded linear map,
with evaluation, the planner's sample grid and adjoint gradient propagation
"""
from dataclasses import dataclass, field
from math import factorial
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import solve_banded


DIM = 3
N_COEFF = 6  # quintic


class MincoError(ValueError):
    """Invalid trajectory construction or query"""


class NonPositiveDurationError(MincoError):
    pass


class ShapeMismatchError(MincoError):
    pass


class SingularSystemError(MincoError):
    pass


@dataclass(frozen=True)
class BoundaryState:
    """Position, velocity and acceleration at a trajectory end"""
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(DIM))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(DIM))

    def __post_init__(self):
        for name in ("position", "velocity", "acceleration"):
            value = np.asarray(getattr(self, name), dtype=float).reshape(DIM)
            if not np.all(np.isfinite(value)):
                raise MincoError(f"boundary {name} must be finite")
            object.__setattr__(self, name, value)

    @classmethod
    def at_rest(cls, position) -> "BoundaryState":
        return cls(np.asarray(position, dtype=float))

    def as_rows(self) -> np.ndarray:
        return np.stack([self.position, self.velocity, self.acceleration])


def basis(s, order: int) -> np.ndarray:
    """Derivative `order` of the monomial basis 1, s, ..., s^5 at local time(s) s"""
    s_arr = np.asarray(s, dtype=float)
    out = np.zeros(s_arr.shape + (N_COEFF,))
    for n in range(order, N_COEFF):
        out[..., n] = factorial(n) / factorial(n - order) * s_arr ** (n - order)
    return out


@dataclass
class _BandedSystem:
    """Sparse triplets of M(T) plus, per row, which segment end and derivative order it evaluates"""
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    size: int
    end_rows: Dict[int, List[Tuple[int, int]]]  # segment -> [(row, order)]
    waypoint_rows: np.ndarray

    def _band(self, transpose: bool = False):
        r, c = (self.cols, self.rows) if transpose else (self.rows, self.cols)
        lower = int(max(0, np.max(r - c)))
        upper = int(max(0, np.max(c - r)))
        ab = np.zeros((lower + upper + 1, self.size))
        np.add.at(ab, (upper + r - c, c), self.vals)
        return (lower, upper), ab

    def solve(self, rhs: np.ndarray, transpose: bool = False) -> np.ndarray:
        bandwidths, ab = self._band(transpose)
        try:
            solution = solve_banded(bandwidths, ab, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError("MINCO system is singular") from exc
        if not np.all(np.isfinite(solution)):
            raise SingularSystemError("MINCO system produced non-finite coefficients")
        return solution

    def dense(self) -> np.ndarray:
        matrix = np.zeros((self.size, self.size))
        np.add.at(matrix, (self.rows, self.cols), self.vals)
        return matrix


def _assemble(durations: np.ndarray) -> _BandedSystem:
    n_seg = durations.size
    size = N_COEFF * n_seg
    rows, cols, vals = [], [], []
    end_rows: Dict[int, List[Tuple[int, int]]] = {i: [] for i in range(n_seg)}

    def put_end(row: int, seg: int, order: int):
        values = basis(durations[seg], order)
        for n in range(order, N_COEFF):
            rows.append(row)
            cols.append(N_COEFF * seg + n)
            vals.append(values[n])
        end_rows[seg].append((row, order))

    # start boundary: p, v, a of segment 0 at s = 0
    for k in range(3):
        rows.append(k)
        cols.append(k)
        vals.append(float(factorial(k)))

    waypoint_rows = []
    for i in range(n_seg - 1):
        base = 3 + N_COEFF * i
        put_end(base, i, 0)
        waypoint_rows.append(base)
        for k in range(5):
            row = base + 1 + k
            put_end(row, i, k)
            rows.append(row)
            cols.append(N_COEFF * (i + 1) + k)
            vals.append(-float(factorial(k)))

    for k in range(3):
        put_end(size - 3 + k, n_seg - 1, k)

    return _BandedSystem(np.array(rows), np.array(cols), np.array(vals, dtype=float),
                         size, end_rows, np.array(waypoint_rows, dtype=int))


def _rhs(waypoints: np.ndarray, start: BoundaryState, end: BoundaryState, n_seg: int) -> np.ndarray:
    b = np.zeros((N_COEFF * n_seg, DIM))
    b[0:3] = start.as_rows()
    for i in range(n_seg - 1):
        b[3 + N_COEFF * i] = waypoints[i]
    b[-3:] = end.as_rows()
    return b


@dataclass
class SampleGrid:
    """Trajectory state on the tau_{m,k} grid used by every sampled cost"""
    local: np.ndarray        # (M, K) segment-local time
    tau: np.ndarray          # (M, K) absolute plan time
    fraction: np.ndarray     # (K,) k / K
    bases: List[np.ndarray]  # order 0..3, each (M, K, 6)
    position: np.ndarray     # (M, K, 3)
    velocity: np.ndarray
    acceleration: np.ndarray
    jerk: np.ndarray


class MincoTrajectory:
    """M quintic segments with C4 junctions, uniquely fixed by (q, T, boundary)"""

    def __init__(self, waypoints: np.ndarray, durations: np.ndarray, coeffs: np.ndarray,
                 start: BoundaryState, end: BoundaryState, system: _BandedSystem):
        self.waypoints = waypoints
        self.durations = durations
        self.coeffs = coeffs
        self.start = start
        self.end = end
        self._system = system
        self._offsets = np.concatenate([[0.0], np.cumsum(durations)])

    @property
    def n_segments(self) -> int:
        return int(self.durations.size)

    @property
    def total_duration(self) -> float:
        return float(self._offsets[-1])

    def segment_at(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        idx = np.searchsorted(self._offsets, t, side="right") - 1
        idx = np.clip(idx, 0, self.n_segments - 1)
        return idx, t - self._offsets[idx]

    def eval(self, t: float, order: int = 0) -> np.ndarray:
        """Order-th derivative at plan time t in [0, T_u]"""
        if order < 0 or order > 5:
            raise MincoError("derivative order must lie in 0..5")
        tol = 1e-12 * max(1.0, self.total_duration)
        if t < -tol or t > self.total_duration + tol:
            raise MincoError(f"t={t} outside [0, {self.total_duration}]")
        return self.eval_many(np.array([min(max(t, 0.0), self.total_duration)]), order)[0]

    def eval_many(self, t: np.ndarray, order: int = 0) -> np.ndarray:
        """Vectorised eval; times beyond the end are clamped to the final state"""
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.total_duration)
        idx, local = self.segment_at(t)
        return np.einsum("sn,snd->sd", basis(local, order), self.coeffs[idx])

    def eval_left(self, segment: int, order: int) -> np.ndarray:
        """Order-th derivative at the end of a segment (left limit at its junction)"""
        return basis(self.durations[segment], order) @ self.coeffs[segment]

    def sample_times(self, samples_per_segment: int) -> np.ndarray:
        fraction = np.arange(samples_per_segment) / samples_per_segment
        return self._offsets[:-1, None] + fraction[None, :] * self.durations[:, None]

    def sample_grid(self, samples_per_segment: int) -> SampleGrid:
        fraction = np.arange(samples_per_segment) / samples_per_segment
        local = fraction[None, :] * self.durations[:, None]
        bases = [basis(local, order) for order in range(4)]
        states = [np.einsum("mkn,mnd->mkd", b, self.coeffs) for b in bases]
        return SampleGrid(local, self._offsets[:-1, None] + local, fraction, bases, *states)

    def accumulate_sample_gradients(self, grid: SampleGrid, g_p: np.ndarray,
                                    g_v: Optional[np.ndarray] = None,
                                    g_a: Optional[np.ndarray] = None,
                                    g_tau: Optional[np.ndarray] = None):
        """Chain rule from per-sample partials to (dF/dc, dF/dT)

        g_p, g_v, g_a are (M, K, 3) partials w.r.t. the sampled position,
        velocity and acceleration; g_tau (M, K) is the explicit dependence on
        the absolute sample time tau_{m,k} = sum_{j<m} T_j + (k/K) T_m.
        """
        zeros3 = np.zeros_like(grid.position)
        g_v = zeros3 if g_v is None else g_v
        g_a = zeros3 if g_a is None else g_a
        g_tau = np.zeros(grid.tau.shape) if g_tau is None else g_tau

        d_coeffs = (np.einsum("mkn,mkd->mnd", grid.bases[0], g_p)
                    + np.einsum("mkn,mkd->mnd", grid.bases[1], g_v)
                    + np.einsum("mkn,mkd->mnd", grid.bases[2], g_a))

        along_local = (np.einsum("mkd,mkd->mk", g_p, grid.velocity)
                       + np.einsum("mkd,mkd->mk", g_v, grid.acceleration)
                       + np.einsum("mkd,mkd->mk", g_a, grid.jerk)
                       + g_tau)
        d_durations = along_local @ grid.fraction
        per_segment = g_tau.sum(axis=1)
        later = np.cumsum(per_segment[::-1])[::-1] - per_segment
        return d_coeffs, d_durations + later

    def to_record(self) -> Dict[str, list]:
        """Per-segment duration and 18 coefficients (x, y, z blocks of 6)"""
        return {
            "durations": self.durations.tolist(),
            "coefficients": [seg.T.reshape(-1).tolist() for seg in self.coeffs],
        }


def _validate(waypoints, durations) -> Tuple[np.ndarray, np.ndarray]:
    durations = np.asarray(durations, dtype=float).reshape(-1)
    if durations.size < 1:
        raise MincoError("need at least one segment")
    if np.any(~np.isfinite(durations)) or np.any(durations <= 0):
        raise NonPositiveDurationError("segment durations must be positive")
    waypoints = np.asarray(waypoints, dtype=float)
    if waypoints.size != DIM * (durations.size - 1):
        raise ShapeMismatchError(
            f"expected {DIM * (durations.size - 1)} waypoint values, got {waypoints.size}"
        )
    return waypoints.reshape(durations.size - 1, DIM), durations


def construct(waypoints, durations, start: BoundaryState, end: BoundaryState) -> MincoTrajectory:
    """Solve the banded MINCO system for the unique minimum-jerk coefficients"""
    waypoints, durations = _validate(waypoints, durations)
    system = _assemble(durations)
    rhs = _rhs(waypoints, start, end, durations.size)
    coeffs = system.solve(rhs).reshape(durations.size, N_COEFF, DIM)
    return MincoTrajectory(waypoints, durations, coeffs, start, end, system)


def construct_dense(waypoints, durations, start: BoundaryState, end: BoundaryState) -> MincoTrajectory:
    """Same system through a dense solve, kept for small-M cross checks"""
    waypoints, durations = _validate(waypoints, durations)
    system = _assemble(durations)
    rhs = _rhs(waypoints, start, end, durations.size)
    coeffs = np.linalg.solve(system.dense(), rhs).reshape(durations.size, N_COEFF, DIM)
    return MincoTrajectory(waypoints, durations, coeffs, start, end, system)


def propagate_gradients(traj: MincoTrajectory, d_coeffs: np.ndarray,
                        d_durations: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Map (dF/dc, dF/dT) to (dJ/dq, dJ/dT) through the adjoint of M(T)"""
    d_coeffs = np.asarray(d_coeffs, dtype=float)
    d_durations = np.asarray(d_durations, dtype=float).reshape(-1)
    if d_coeffs.shape != traj.coeffs.shape:
        raise ShapeMismatchError(f"dF/dc must have shape {traj.coeffs.shape}")
    if d_durations.size != traj.n_segments:
        raise ShapeMismatchError(f"dF/dT must have {traj.n_segments} entries")

    system = traj._system
    adjoint = system.solve(d_coeffs.reshape(-1, DIM), transpose=True)

    d_waypoints = adjoint[system.waypoint_rows]
    d_total = d_durations.copy()
    for seg, rows in system.end_rows.items():
        for row, order in rows:
            d_total[seg] -= adjoint[row] @ traj.eval_left(seg, order + 1)
    return d_waypoints, d_total


def jerk_gram(duration: float) -> np.ndarray:
    """6x6 Gram matrix G with  integral_0^T |p'''|^2 dt = c^T G c  per dimension"""
    gram = np.zeros((N_COEFF, N_COEFF))
    for i in range(3, N_COEFF):
        for j in range(3, N_COEFF):
            ci = i * (i - 1) * (i - 2)
            cj = j * (j - 1) * (j - 2)
            power = i + j - 5
            gram[i, j] = ci * cj * duration ** power / power
    return gram
