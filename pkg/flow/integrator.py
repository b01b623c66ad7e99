"""
Batched adaptive Runge-Kutta integration of autonomous systems with
boundary-exit detection.

Every ray in a batch carries its own time, step size and status, so a
whole fan is advanced with one set of vectorised stage evaluations.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .constants import (
    ATOL,
    BOUNDARY_START_TOLERANCE,
    INITIAL_STEP_FRACTION,
    MAX_FACTOR,
    MAX_ROOT_ITERATIONS,
    MAX_STEPS,
    MIN_FACTOR,
    MIN_STEP_FRACTION,
    ROOT_TOLERANCE,
    RTOL,
    SAFETY,
)
from .exceptions import StepFailure

logger = logging.getLogger(__name__)

# Ray status codes
RUNNING = 0
EXITED = 1
REACHED_END = 2
TRAPPED = 3


class DiskBoundary:
    """
    Boundary defining function rho = R^2 - |x|^2 on the first two state slots.

    ``rate`` is d rho / dt given the state derivative.
    """

    def __init__(self, radius: float):
        self.radius = float(radius)

    def value(self, y: np.ndarray) -> np.ndarray:
        return self.radius ** 2 - y[:, 0] ** 2 - y[:, 1] ** 2

    def rate(self, y: np.ndarray, dy: np.ndarray) -> np.ndarray:
        return -2.0 * (y[:, 0] * dy[:, 0] + y[:, 1] * dy[:, 1])


class DormandPrince54:
    """Dormand-Prince 5(4) pair. Seven stages with FSAL, 5th order propagation
    with an embedded 4th order error estimate.

    Characteristics
    ---------------
    * Order: 5 (propagating) / 4 (error estimate)
    * Stages: 7, the last one reused as the first stage of the next step
    * Explicit, adaptive timestep
    """

    s = 7
    n = 5
    m = 4

    #butcher table rows (stage 2 to 7)
    BT = {
        1: [1/5],
        2: [3/40, 9/40],
        3: [44/45, -56/15, 32/9],
        4: [19372/6561, -25360/2187, 64448/6561, -212/729],
        5: [9017/3168, -355/33, 46732/5247, 49/176, -5103/18656],
        6: [35/384, 0, 500/1113, 125/192, -2187/6784, 11/84],
    }

    #difference of the 5th and 4th order weights
    TR = [71/57600, 0, -71/16695, 71/1920, -17253/339200, 22/525, -1/40]

    def __init__(self, rhs: Callable[[np.ndarray], np.ndarray]):
        self.rhs = rhs

    def step(self, y: np.ndarray, h: np.ndarray, k1: np.ndarray):
        """
        One step of size h (per row) from y with first stage k1.

        Returns:
            tuple: (y_new, error_vector, k7) where k7 = rhs(y_new)
        """
        hh = h[:, None]
        ks = [k1]
        for i in range(1, self.s):
            increment = sum(a * k for a, k in zip(self.BT[i], ks) if a != 0)
            ks.append(self.rhs(y + hh * increment))
        y_new = y + hh * sum(b * k for b, k in zip(self.BT[6], ks[:6]) if b != 0)
        # the 7th stage was evaluated at y_new already
        error = hh * sum(e * k for e, k in zip(self.TR, ks) if e != 0)
        return y_new, error, ks[-1]


@dataclass
class BatchResult:
    t: np.ndarray
    y: np.ndarray
    status: np.ndarray
    steps: np.ndarray
    samples: Optional[List[List]] = field(default=None, repr=False)

    @property
    def exited(self) -> np.ndarray:
        return self.status == EXITED

    @property
    def trapped(self) -> np.ndarray:
        return self.status == TRAPPED

    def sample_arrays(self, index: int):
        """(times, states) recorded for one ray."""
        if self.samples is None:
            return np.empty(0), np.empty((0, self.y.shape[1]))
        rows = self.samples[index]
        return np.array([r[0] for r in rows]), np.array([r[1] for r in rows])


class RayIntegrator:
    """
    Integrates a batch of autonomous ODEs until each ray leaves the boundary,
    reaches its own end time, or exceeds ``t_max``.

    Args:
        rhs: vectorised right-hand side, (B, D) -> (B, D)
        boundary: object with ``value``/``rate`` (see DiskBoundary), or None
        max_step: largest step in time units
        max_displacement: largest chart displacement per step (first two slots)
        rtol, atol: error-control tolerances
    """

    def __init__(self, rhs, boundary: Optional[DiskBoundary] = None, max_step: float = 0.01,
                 max_displacement: Optional[float] = None, rtol: float = RTOL, atol: float = ATOL,
                 scale: float = 1.0):
        self.rhs = rhs
        self.boundary = boundary
        self.max_step = float(max_step)
        self.max_displacement = max_displacement
        self.rtol = rtol
        self.atol = atol
        self.scale = scale

    def run(self, y0: np.ndarray, direction: int = 1, t_end=None, t_max: float = np.inf,
            record: bool = False) -> BatchResult:
        """
        Integrate every row of y0.

        Backward integration (direction = -1) solves dy/ds = -f(y) in s = -t.

        Returns:
            BatchResult: times are reported with the sign of ``direction``
        """
        y = np.array(y0, dtype=float, copy=True)
        if y.ndim != 2:
            raise ValueError('y0 must have shape (rays, dim)')
        count = y.shape[0]
        sign = 1.0 if direction >= 0 else -1.0
        signed_rhs = self.rhs if sign > 0 else (lambda z: -self.rhs(z))
        stepper = DormandPrince54(signed_rhs)

        ends = np.full(count, np.inf) if t_end is None else np.broadcast_to(
            np.abs(np.asarray(t_end, dtype=float)), (count,)).copy()
        s = np.zeros(count)
        h = np.full(count, INITIAL_STEP_FRACTION * self.max_step)
        status = np.zeros(count, dtype=int)
        steps = np.zeros(count, dtype=int)
        samples = [[(0.0, y[i].copy())] for i in range(count)] if record else None
        k1 = signed_rhs(y) if count else y.copy()
        first = np.ones(count, dtype=bool)
        min_step = MIN_STEP_FRACTION * self.scale

        status[ends <= 0.0] = REACHED_END

        if self.boundary is not None and count:
            rho = self.boundary.value(y)
            tol = BOUNDARY_START_TOLERANCE * self.boundary.radius ** 2
            outward = (rho <= tol) & (self.boundary.rate(y, k1) <= 0.0)
            status[outward & (status == RUNNING)] = EXITED

        iteration = 0
        while np.any(status == RUNNING):
            iteration += 1
            if iteration > MAX_STEPS:
                raise StepFailure(f"Exceeded {MAX_STEPS} integrator iterations")
            act = np.flatnonzero(status == RUNNING)
            ya, ka = y[act], k1[act]
            ha = np.minimum(h[act], self.max_step)
            if self.max_displacement is not None:
                speed = np.hypot(ka[:, 0], ka[:, 1])
                ha = np.minimum(ha, self.max_displacement / np.maximum(speed, 1e-300))
            remaining = ends[act] - s[act]
            clip = ha >= remaining
            ha = np.where(clip, remaining, ha)

            y_new, err, k_new = stepper.step(ya, ha, ka)
            scale = self.atol + self.rtol * np.maximum(np.abs(ya), np.abs(y_new))
            err_norm = np.sqrt(np.mean((err / scale) ** 2, axis=1))
            ok = np.isfinite(err_norm) & (err_norm <= 1.0)

            factor = np.where(
                err_norm > 0,
                SAFETY * np.power(np.maximum(err_norm, 1e-300), -1.0 / 5.0),
                MAX_FACTOR,
            )
            factor = np.clip(np.nan_to_num(factor, nan=MIN_FACTOR), MIN_FACTOR, MAX_FACTOR)
            factor = np.where(ok, factor, np.minimum(factor, SAFETY))
            h_next = ha * factor

            failed = (~ok) & (ha * factor < min_step)
            if np.any(failed):
                raise StepFailure(
                    f"Step size underflow on {int(np.sum(failed))} rays",
                    rays=act[failed].tolist(),
                )

            crossing = np.zeros(act.size, dtype=bool)
            if self.boundary is not None:
                crossing = ok & (self.boundary.value(y_new) < 0.0)
            if np.any(crossing):
                ci = np.flatnonzero(crossing)
                s_cross, y_cross, k_cross = self._locate_crossing(
                    stepper, ya[ci], ka[ci], ha[ci], first[act[ci]]
                )
                y_new[ci] = y_cross
                k_new[ci] = k_cross
                ha = ha.copy()
                ha[ci] = s_cross

            acc = act[ok]
            s[acc] += ha[ok]
            y[acc] = y_new[ok]
            k1[acc] = k_new[ok]
            steps[acc] += 1
            first[acc] = False
            h[act] = h_next

            status[act[crossing]] = EXITED
            done = ok & ~crossing & clip
            status[act[done]] = REACHED_END
            trapped = (status == RUNNING) & (s >= t_max)
            status[trapped] = TRAPPED

            if record:
                for i, row in zip(acc, y_new[ok]):
                    samples[i].append((sign * s[i], row.copy()))

        logger.debug(
            f"Integrated {count} rays: {int(np.sum(status == EXITED))} exited, "
            f"{int(np.sum(status == TRAPPED))} trapped, max steps {int(steps.max()) if count else 0}"
        )
        return BatchResult(t=sign * s, y=y, status=status, steps=steps, samples=samples)

    def _locate_crossing(self, stepper, y, k1, h, from_boundary):
        """
        Find the step size at which rho vanishes inside (0, h].

        Rays that start on the boundary have a trivial root at 0; for them the
        search runs on rho(s)/s, whose value at 0 is the inward rate.
        """
        boundary = self.boundary
        rho0 = boundary.value(y)
        rate0 = boundary.rate(y, k1)
        tol_start = BOUNDARY_START_TOLERANCE * boundary.radius ** 2
        divide = from_boundary & (rho0 <= tol_start)
        target = ROOT_TOLERANCE * boundary.radius ** 2

        def evaluate(step):
            y_s, _, k_s = stepper.step(y, step, k1)
            rho = boundary.value(y_s)
            rate = boundary.rate(y_s, k_s)
            f = np.where(divide, rho / step, rho)
            df = np.where(divide, (rate * step - rho) / step ** 2, rate)
            return y_s, k_s, rho, f, df

        lo = np.zeros_like(h)
        hi = h.copy()
        f_lo = np.where(divide, rate0, rho0)
        _, _, _, f_hi, _ = evaluate(hi)
        denom = f_lo - f_hi
        guess = np.where(denom > 0, hi * f_lo / np.where(denom > 0, denom, 1.0), 0.5 * hi)
        step = np.clip(guess, 1e-3 * hi, hi)

        for _ in range(MAX_ROOT_ITERATIONS):
            y_s, k_s, rho, f, df = evaluate(step)
            converged = np.abs(rho) < target
            if np.all(converged):
                break
            lo = np.where(f > 0, step, lo)
            hi = np.where(f > 0, hi, step)
            with np.errstate(divide='ignore', invalid='ignore'):
                newton = step - f / df
            bad = ~np.isfinite(newton) | (newton <= lo) | (newton >= hi)
            proposal = np.where(bad, 0.5 * (lo + hi), newton)
            step = np.where(converged, step, proposal)
        else:
            y_s, k_s, rho, _, _ = evaluate(step)
            worst = float(np.max(np.abs(rho)))
            if worst > 1e3 * target:
                raise StepFailure(f"Boundary crossing refinement stalled at |rho| = {worst:.3e}")
            logger.warning(f"Boundary crossing refinement reached |rho| = {worst:.3e}")

        return step, y_s, k_s
