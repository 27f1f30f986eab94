"""BFGS minimisation of gate errors over piecewise-constant fields."""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controls import RNG_NAME, ControlField
from .propagate import finite_difference_gradient

__all__ = [
    "TERMINATION_REASONS",
    "OptimizerOptions",
    "RunRecord",
    "NumericalAbort",
    "stall_detector",
    "bfgs_update",
    "bfgs_minimize",
    "save_record",
    "load_record",
    "write_history_csv",
]

TERMINATION_REASONS = ("threshold", "stalled", "max-iterations", "line-search-failure", "aborted")


@dataclass(frozen=True)
class OptimizerOptions:
    error_threshold: float = 1e-4
    max_iterations: int = 2000
    stall_window: int = 25
    stall_ratio: float = 1e-3
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    gradient: str = "analytic"
    fd_step: float = 1e-6

    def __post_init__(self):
        if not self.error_threshold > 0:
            raise ValueError("error_threshold must be positive")
        if self.stall_window < 2:
            raise ValueError("stall_window must be at least 2")
        if not 0 < self.backtrack < 1 or not 0 < self.armijo < 1:
            raise ValueError("line-search constants must lie in (0, 1)")
        if self.gradient not in ("analytic", "finite-difference"):
            raise ValueError(f"unknown gradient mode {self.gradient!r}")
        if self.max_iterations < 0 or self.max_backtracks < 1:
            raise ValueError("iteration limits must be non-negative")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class RunRecord:
    seed: int | None
    options: dict
    initial_field: ControlField
    final_field: ControlField
    history: list
    iterations: int
    final_error: float
    final_fidelity: float
    wall_time: float
    termination: str
    rng: str = RNG_NAME
    details: dict = field(default_factory=dict)
    skipped_updates: int = 0
    hessian_resets: int = 0
    n_evaluations: int = 0
    message: str = ""
    meta: dict = field(default_factory=dict)

    def succeeded(self, threshold: float) -> bool:
        return self.termination != "aborted" and self.final_error <= threshold

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, ControlField):
                v = {"T": v.T, "values": v.values.tolist()}
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        data = dict(data)
        for key in ("initial_field", "final_field"):
            data[key] = ControlField(np.array(data[key]["values"], dtype=float), data[key]["T"])
        return cls(**data)


class NumericalAbort(RuntimeError):
    """Raised on a non-finite objective or gradient; carries the partial record."""

    def __init__(self, message: str, record: RunRecord):
        super().__init__(message)
        self.record = record


def stall_detector(history, window: int, ratio: float) -> bool:
    """True when the error fell by less than ``ratio`` (relative) over the last ``window`` entries."""
    if len(history) < window:
        return False
    old, new = history[-window], history[-1]
    if old <= 0:
        return True
    return (old - new) / old < ratio


def bfgs_update(Hinv: np.ndarray, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Inverse-Hessian BFGS update, ``(1 - r s y^T) Hinv (1 - r y s^T) + r s s^T``."""
    rho = 1.0 / (y @ s)
    Hy = Hinv @ y
    return Hinv - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * (y @ Hy) + rho) * np.outer(s, s)


def _objective(problem, opts: OptimizerOptions, shape, T):
    counter = {"n": 0}

    def fun(x, need_grad=True):
        counter["n"] += 1
        fld = ControlField(x.reshape(shape), T)
        ev = problem.evaluate(fld, gradient=need_grad and opts.gradient == "analytic")
        g = ev.gradient
        if need_grad and opts.gradient == "finite-difference":
            g = finite_difference_gradient(problem.error, fld, opts.fd_step)
        return ev, g

    return fun, counter


def bfgs_minimize(problem, field0: ControlField, opts: OptimizerOptions | None = None,
                  seed=None, meta: dict | None = None) -> RunRecord:
    """Quasi-Newton descent from ``field0`` with backtracking line search.

    ``problem`` needs ``evaluate(field, gradient=bool)`` returning an object
    with ``error``, ``fidelity``, ``gradient`` and ``details``.  Each accepted
    step satisfies the Armijo condition; curvature violations skip the
    inverse-Hessian update and non-descent directions reset it to identity.
    """
    opts = opts or OptimizerOptions()
    start = time.process_time()
    shape, T = field0.values.shape, field0.T
    fun, counter = _objective(problem, opts, shape, T)
    x = field0.flat()
    n = x.size
    Hinv = np.eye(n)
    skipped = resets = iterations = 0
    termination = ""

    def make_record(ev, reason, message=""):
        return RunRecord(
            seed=seed, options=opts.to_dict(), initial_field=field0,
            final_field=ControlField(x.reshape(shape), T), history=[float(h) for h in history],
            iterations=iterations, final_error=float(ev.error) if ev else float("nan"),
            final_fidelity=float(ev.fidelity) if ev else float("nan"),
            wall_time=time.process_time() - start, termination=reason,
            details={k: float(v) for k, v in (ev.details if ev else {}).items()},
            skipped_updates=skipped, hessian_resets=resets, n_evaluations=counter["n"],
            message=message, meta=dict(meta or {}),
        )

    def check_finite(ev, g):
        if not np.isfinite(ev.error) or (g is not None and not np.all(np.isfinite(g))):
            raise NumericalAbort("non-finite objective or gradient",
                                 make_record(ev, "aborted", "non-finite objective or gradient"))

    history = []
    ev, g = fun(x)
    history.append(ev.error)
    check_finite(ev, g)
    while True:
        if ev.error <= opts.error_threshold:
            termination = "threshold"
            break
        if iterations >= opts.max_iterations:
            termination = "max-iterations"
            break
        if stall_detector(history, opts.stall_window, opts.stall_ratio):
            termination = "stalled"
            break
        step = -(Hinv @ g)
        slope = g @ step
        if not slope < 0:
            Hinv = np.eye(n)
            resets += 1
            step = -g
            slope = -(g @ g)
            if slope == 0:
                termination = "stalled"
                break
        alpha = 1.0
        accepted = None
        for trial in range(opts.max_backtracks):
            xn = x + alpha * step
            evn, gn = fun(xn, need_grad=trial == 0)
            if not np.isfinite(evn.error):
                raise NumericalAbort("non-finite objective in line search",
                                     make_record(ev, "aborted", "non-finite objective in line search"))
            if evn.error <= ev.error + opts.armijo * alpha * slope:
                accepted = (xn, evn, gn)
                break
            alpha *= opts.backtrack
        if accepted is None:
            termination = "line-search-failure"
            break
        xn, evn, gn = accepted
        if gn is None:
            evn, gn = fun(xn)
        check_finite(evn, gn)
        s, y = xn - x, gn - g
        if y @ s > 0:
            Hinv = bfgs_update(Hinv, s, y)
        else:
            skipped += 1
        x, ev, g = xn, evn, gn
        iterations += 1
        history.append(ev.error)
    return make_record(ev, termination)


def save_record(record: RunRecord, path) -> None:
    """Write a record as JSON; the file appears atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(record.to_dict(), indent=1))
    os.replace(tmp, path)


def load_record(path) -> RunRecord:
    return RunRecord.from_dict(json.loads(Path(path).read_text()))


def write_history_csv(record: RunRecord, path) -> None:
    lines = ["iteration,error"] + [f"{i},{e!r}" for i, e in enumerate(record.history)]
    Path(path).write_text("\n".join(lines) + "\n")
