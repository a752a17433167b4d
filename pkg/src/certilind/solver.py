"""Time steppers and the space-adaptive driver.

``run_fixed`` integrates on one truncation shape and accumulates the
certified estimator xi via the rectangle rule at accepted endpoints (or
per-step time-discretization bounds when the time certificate is on).
``run_adaptive`` implements the estimator-gated grow/shrink driver: a
step is accepted only while xi stays under the linear-in-time budget
(t/T) * space_tol, the shape grows on rejection, and it shrinks when the
budget divided by the downsize factor tolerates the discarded tail.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .estimators import (
    EstimatorLedger,
    euler_timedep_step_bound,
    model_space_defect,
    taylor_step_bound,
    xi_step,
)
from .fockspace import (
    DenseOperator,
    ShapeError,
    TruncationShape,
    contains,
    dimension,
    embed,
    grow,
    project,
    shrink,
)
from .lindblad import DensityState, LindbladModel, ModelError, shaped_generator

__all__ = [
    "SolverConfig",
    "TrajectoryRecord",
    "RunResult",
    "StepResult",
    "SolverError",
    "CertificationError",
    "adaptive_solve_one_step",
    "taylor_stepper",
    "euler_stepper",
    "rk4_stepper",
    "run_fixed",
    "run_adaptive",
    "write_trajectory_csv",
    "write_ledger_csv",
]

STEP_UNDERFLOW_FACTOR = 1e-14
MAX_STEP_GROWTH = 5.0
MIN_STEP_SHRINK = 0.2
SAFETY = 0.9


class SolverError(RuntimeError):
    """Integration failure (step underflow, invalid configuration)."""


class CertificationError(SolverError):
    """The requested error budget cannot be met within max_dimension."""


@dataclass(frozen=True)
class SolverConfig:
    final_time: float
    scheme: str = "adaptive_rk"  # adaptive_rk | rk4 | taylor | euler
    taylor_order: int = 2
    time_tol: float = 1e-10
    dt: float | None = None  # fixed-step schemes
    space_tol: float = 1e-9
    downsize_factor: float = 5.0
    grow_step: object = 4
    shrink_step: object = 4
    max_dimension: int = 4096
    enable_time_certificate: bool = False

    def __post_init__(self):
        if self.final_time <= 0:
            raise SolverError("final_time must be positive")
        if self.scheme not in ("adaptive_rk", "rk4", "taylor", "euler"):
            raise SolverError(f"unknown scheme {self.scheme!r}")
        if self.scheme in ("rk4", "taylor", "euler") and not self.dt:
            raise SolverError(f"scheme {self.scheme!r} requires dt")
        if self.space_tol <= 0:
            raise SolverError("space_tol must be positive")
        if self.downsize_factor <= 1:
            raise SolverError("downsize_factor must exceed 1")
        if self.enable_time_certificate and self.scheme not in ("taylor", "euler"):
            raise SolverError(
                "the time certificate is available for the taylor and euler "
                "schemes only"
            )


@dataclass(frozen=True)
class TrajectoryRecord:
    time: float
    dim: int
    trace_re: float
    xi: float
    defect_rate: float
    accepted: bool
    resize: str = "none"  # none | grow | shrink
    warning: str | None = None


@dataclass(frozen=True, eq=False)
class RunResult:
    final: DensityState
    ledger: EstimatorLedger
    trajectory: tuple[TrajectoryRecord, ...]
    warnings: tuple[str, ...] = ()

    @property
    def xi(self) -> float:
        return self.ledger.xi


class StepResult(NamedTuple):
    delta_rho: DenseOperator
    dt: float
    h_next: float


# ---------------------------------------------------------------------------
# embedded Dormand-Prince 5(4) pair
# ---------------------------------------------------------------------------

_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_ERR = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.abs(x) ** 2)))


def _combine(vectors, coefficients):
    acc = None
    for v, c in zip(vectors, coefficients):
        if not c:
            continue
        if acc is None:
            acc = v * c
        else:
            acc += c * v
    return acc


def _dp_attempt(f, t, y, h):
    """One trial step; returns the 5th-order solution and the error vector."""
    k = [f(t, y)]
    for i in range(1, 6):
        acc = _combine(k, _DP_A[i])
        acc *= h
        acc += y
        k.append(f(t + _DP_C[i] * h, acc))
    y1 = _combine(k, _DP_A[6])
    y1 *= h
    y1 += y
    k.append(f(t + h, y1))  # the last stage sits at the 5th-order solution
    err = _combine(k, _DP_ERR)
    err *= h
    return y1, err, k[0]


def _error_measure(err, y0, y1, tol):
    scale = tol + tol * np.maximum(np.abs(y0), np.abs(y1))
    return _rms(err / scale)


def _initial_step(f, t, y, tol, remaining):
    scale = tol + tol * np.abs(y)
    f0 = f(t, y)
    d0 = _rms(y / scale)
    d1 = _rms(f0 / scale)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, remaining)
    f1 = f(t + h0, y + h0 * f0)
    d2 = _rms((f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        return remaining  # flat vector field: jump to the horizon cap
    h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, remaining)


def _adaptive_step_raw(f, t, y, tol, remaining, horizon, h_start=None):
    """One accepted DP5(4) step; returns (increment, dt, h_next)."""
    h = h_start if h_start and h_start > 0 else _initial_step(f, t, y, tol, remaining)
    h = min(h, remaining)
    while True:
        if h < STEP_UNDERFLOW_FACTOR * horizon:
            raise SolverError(
                f"step size underflow at t={t!r} (h={h!r}); the model may be "
                "too stiff for the requested tolerance"
            )
        y1, err, _ = _dp_attempt(f, t, y, h)
        measure = _error_measure(err, y, y1, tol)
        if measure <= 1.0:
            if measure == 0.0:
                factor = MAX_STEP_GROWTH
            else:
                factor = min(
                    MAX_STEP_GROWTH, max(MIN_STEP_SHRINK, SAFETY * measure**-0.2)
                )
            return y1 - y, h, min(h * factor, horizon)
        h *= max(MIN_STEP_SHRINK, SAFETY * measure**-0.2)


def adaptive_solve_one_step(
    model: LindbladModel,
    shape: TruncationShape,
    rho: DenseOperator,
    t: float,
    time_tol: float,
    horizon: float | None = None,
    h_start: float | None = None,
) -> StepResult:
    """One accepted embedded RK 5(4) step of d rho/dt = L_shape(rho).

    Returns the state increment, the step the controller chose, and the
    suggested next step size.
    """
    if rho.shape != shape:
        raise SolverError("state does not live on the integration shape")
    gen = shaped_generator(model, shape)
    horizon = horizon if horizon is not None else max(abs(t), 1.0)
    remaining = horizon - t if horizon > t else horizon
    delta, dt, h_next = _adaptive_step_raw(
        gen.apply, t, np.asarray(rho.matrix), time_tol, remaining, horizon, h_start
    )
    return StepResult(DenseOperator(shape, delta), dt, h_next)


# ---------------------------------------------------------------------------
# fixed-step maps
# ---------------------------------------------------------------------------


def euler_stepper(
    model: LindbladModel, t: float, rho: DenseOperator, dt: float
) -> DenseOperator:
    """rho + dt * L_N(t, rho)."""
    gen = shaped_generator(model, rho.shape)
    y = np.asarray(rho.matrix)
    return DenseOperator(rho.shape, y + dt * gen.apply(t, y))


def taylor_stepper(
    model: LindbladModel, rho: DenseOperator, dt: float, k: int
) -> DenseOperator:
    """Degree-k truncation of exp(dt L_N) applied to rho (time-invariant)."""
    if k < 1:
        raise SolverError("Taylor order must be at least 1")
    if not model.is_time_invariant:
        raise ModelError("the Taylor scheme requires a time-invariant model")
    gen = shaped_generator(model, rho.shape)
    y = np.asarray(rho.matrix)
    out = y.copy()
    term = y
    fact = 1.0
    for j in range(1, k + 1):
        term = gen.apply(0.0, term)
        fact *= j
        out = out + (dt**j / fact) * term
    return DenseOperator(rho.shape, out)


def rk4_stepper(
    model: LindbladModel, t: float, rho: DenseOperator, dt: float
) -> DenseOperator:
    """Classical four-stage Runge-Kutta step."""
    gen = shaped_generator(model, rho.shape)
    y = np.asarray(rho.matrix)
    k1 = gen.apply(t, y)
    k2 = gen.apply(t + dt / 2, y + dt / 2 * k1)
    k3 = gen.apply(t + dt / 2, y + dt / 2 * k2)
    k4 = gen.apply(t + dt, y + dt * k3)
    return DenseOperator(rho.shape, y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))


# ---------------------------------------------------------------------------
# fixed-shape runs
# ---------------------------------------------------------------------------


def _prepare_initial(
    rho0: DenseOperator, shape: TruncationShape, ledger: EstimatorLedger
):
    """Bring the initial state onto the working shape; projection losses
    enter xi(0)."""
    if rho0.shape == shape:
        return rho0, ledger
    if contains(shape, rho0.shape):
        projected, lost = project(rho0, shape)
        if lost:
            ledger = ledger.record(0.0, "init_projection", lost)
        return projected, ledger
    if contains(rho0.shape, shape):
        return embed(rho0, shape), ledger
    raise SolverError("initial state shape is incompatible with the run shape")


def _soft_state_checks(mat: np.ndarray, t: float) -> str | None:
    scale = max(float(np.linalg.norm(mat)), 1e-30)
    defect = float(np.linalg.norm(mat - mat.conj().T)) / scale
    if defect > 1e-10:
        return f"hermiticity defect {defect:.2e} at t={t:.6g}"
    return None


def run_fixed(
    model: LindbladModel,
    rho0: DenseOperator,
    shape: TruncationShape,
    config: SolverConfig,
) -> RunResult:
    """Integrate to final_time on a fixed shape, accumulating xi at every
    accepted step (or the per-step time bounds when the certificate is on)."""
    ledger = EstimatorLedger.empty()
    state, ledger = _prepare_initial(rho0, shape, ledger)
    t_final = config.final_time
    records: list[TrajectoryRecord] = []
    warnings: list[str] = []

    def log(t, rho_mat, defect_rate, xi):
        warning = _soft_state_checks(rho_mat, t)
        if warning:
            warnings.append(warning)
        records.append(
            TrajectoryRecord(
                time=t,
                dim=dimension(shape),
                trace_re=float(np.trace(rho_mat).real),
                xi=xi,
                defect_rate=defect_rate,
                accepted=True,
                warning=warning,
            )
        )

    if config.scheme == "adaptive_rk":
        t = 0.0
        h_next = None
        rho = state
        while t < t_final * (1 - 1e-15):
            step = adaptive_solve_one_step(
                model, shape, rho, t, config.time_tol, horizon=t_final, h_start=h_next
            )
            rho = rho + step.delta_rho
            t += step.dt
            h_next = step.h_next
            rate = model_space_defect(model, t, rho)
            ledger = xi_step(ledger, t, rate, step.dt)
            log(t, rho.matrix, rate, ledger.xi)
        return RunResult(
            DensityState(rho, t), ledger, tuple(records), tuple(warnings)
        )

    # fixed-step schemes on a uniform grid
    n_steps = max(1, int(round(t_final / config.dt)))
    dt = t_final / n_steps
    rho = state
    t = 0.0
    for n in range(n_steps):
        if config.enable_time_certificate:
            if config.scheme == "taylor":
                bound = taylor_step_bound(model, rho, dt, config.taylor_order)
                kind = "time_taylor"
            else:
                bound = euler_timedep_step_bound(model, rho, t, dt)
                kind = "time_euler"
        if config.scheme == "euler":
            rho_new = euler_stepper(model, t, rho, dt)
        elif config.scheme == "taylor":
            rho_new = taylor_stepper(model, rho, dt, config.taylor_order)
        else:
            rho_new = rk4_stepper(model, t, rho, dt)
        t = (n + 1) * dt
        if config.enable_time_certificate:
            ledger = ledger.record(t, kind, bound)
            rate = 0.0
        else:
            rate = model_space_defect(model, t, rho_new)
            ledger = xi_step(ledger, t, rate, dt)
        rho = rho_new
        log(t, rho.matrix, rate, ledger.xi)
    return RunResult(DensityState(rho, t), ledger, tuple(records), tuple(warnings))


# ---------------------------------------------------------------------------
# space-adaptive driver
# ---------------------------------------------------------------------------


def run_adaptive(
    model: LindbladModel, rho0: DenseOperator, config: SolverConfig
) -> RunResult:
    """Estimator-gated space-adaptive integration.

    Propose a time step, price its certified cost d_xi = dt * defect at
    the proposed endpoint, and accept only while xi + d_xi stays below
    the linear budget ((t+dt)/T) * space_tol.  Rejections grow the shape
    by grow_step and recompute the step from scratch; after an ordinary
    acceptance the state shrinks by shrink_step when the discarded tail
    fits under the budget divided by downsize_factor, the tail norm
    being added to xi.
    """
    if config.scheme != "adaptive_rk":
        raise SolverError("run_adaptive drives the adaptive_rk scheme")
    shape = rho0.shape
    rho = rho0
    t = 0.0
    t_final = config.final_time
    ledger = EstimatorLedger.empty()
    records: list[TrajectoryRecord] = []
    warnings: list[str] = []
    h_next = None

    def budget(time):
        return (time / t_final) * config.space_tol

    while t < t_final * (1 - 1e-15):
        step = adaptive_solve_one_step(
            model, shape, rho, t, config.time_tol, horizon=t_final, h_start=h_next
        )
        proposed = rho + step.delta_rho
        rate = model_space_defect(model, t + step.dt, proposed)
        d_xi = step.dt * rate
        while ledger.xi + d_xi >= budget(t + step.dt):
            # rejected: grow and recompute until the budget admits the step
            records.append(
                TrajectoryRecord(
                    time=t + step.dt,
                    dim=dimension(shape),
                    trace_re=float(np.trace(proposed.matrix).real),
                    xi=ledger.xi,
                    defect_rate=rate,
                    accepted=False,
                    resize="grow",
                )
            )
            new_shape = grow(shape, config.grow_step)
            if dimension(new_shape) > config.max_dimension:
                raise CertificationError(
                    f"space budget unreachable: growing past "
                    f"{dimension(shape)} exceeds max_dimension="
                    f"{config.max_dimension}"
                )
            shape = new_shape
            rho = embed(rho, shape)
            h_next = step.h_next
            step = adaptive_solve_one_step(
                model, shape, rho, t, config.time_tol, horizon=t_final, h_start=h_next
            )
            proposed = rho + step.delta_rho
            rate = model_space_defect(model, t + step.dt, proposed)
            d_xi = step.dt * rate
        # accepted
        rho = proposed
        t += step.dt
        h_next = step.h_next
        ledger = xi_step(ledger, t, rate, step.dt)
        resize = "none"
        shrunk = _try_shrink(shape, config)
        if shrunk is not None:
            restricted, tail = project(rho, shrunk)
            if ledger.xi + tail < budget(t) / config.downsize_factor:
                ledger = ledger.record(t, "shrink_jump", tail)
                shape = shrunk
                rho = restricted
                resize = "shrink"
        warning = _soft_state_checks(rho.matrix, t)
        if warning:
            warnings.append(warning)
        records.append(
            TrajectoryRecord(
                time=t,
                dim=dimension(shape),
                trace_re=float(np.trace(rho.matrix).real),
                xi=ledger.xi,
                defect_rate=rate,
                accepted=True,
                resize=resize,
                warning=warning,
            )
        )
    return RunResult(DensityState(rho, t), ledger, tuple(records), tuple(warnings))


def _try_shrink(shape: TruncationShape, config: SolverConfig):
    try:
        return shrink(shape, config.shrink_step)
    except ShapeError:
        return None


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def write_trajectory_csv(records, path) -> None:
    """Columns t, dim, trace_re, xi, defect_rate, accepted, resize; one
    row per attempted step."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "dim", "trace_re", "xi", "defect_rate", "accepted", "resize"])
        for r in records:
            writer.writerow(
                [
                    repr(r.time),
                    r.dim,
                    repr(r.trace_re),
                    repr(r.xi),
                    repr(r.defect_rate),
                    int(r.accepted),
                    r.resize,
                ]
            )


def write_ledger_csv(ledger: EstimatorLedger, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", "kind", "value"])
        for e in ledger.entries:
            writer.writerow([repr(e.time), e.kind, repr(e.value)])
