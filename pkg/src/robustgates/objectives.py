"""Gate-error functionals and their exact gradients.

Markovian problems compare adjoint representations,

    E1' = lam * ||Y - X(T)||_F**2,   lam = 1 / (2 N1**2),   F1 = sqrt(1 - E1'),

and the optimiser minimises E1'.  Hamiltonian problems (closed, or with noise
qubits) use the noise-agnostic error

    E2 = 1 - F2,   F2 = Tr|Q| / N,   Q = Tr_S[(W x 1)^dag X(T)].
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .controls import ControlField
from .model import (
    LindbladSpec,
    QubitNetworkSpec,
    TargetGate,
    adjoint_dissipator,
    adjoint_gate,
    adjoint_hamiltonian,
    build_hamiltonians,
    build_lindblad_operators,
    pauli_basis,
)
from .propagate import Generator, PropagationCache, propagate

__all__ = [
    "CLAMP_TOL",
    "ObjectiveEvaluation",
    "GateProblem",
    "markovian_problem",
    "hamiltonian_problem",
    "markovian_error",
    "markovian_gradient",
    "partial_trace_system",
    "nonmarkovian_error",
    "nonmarkovian_gradient",
    "naive_composite_error",
]

CLAMP_TOL = 1e-10


@dataclass
class ObjectiveEvaluation:
    error: float
    fidelity: float
    gradient: np.ndarray | None = None
    details: dict = field(default_factory=dict)


def _matrix(x):
    return getattr(x, "matrix", x)


def markovian_error(X, Y, lam: float | None = None):
    """Return ``(E1', E1, F1)`` for adjoint matrices X (realised) and Y (target)."""
    X, Y = np.asarray(_matrix(X)), np.asarray(_matrix(Y))
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch {X.shape} vs {Y.shape}")
    if lam is None:
        lam = 1.0 / (2 * X.shape[0])
    e1p = float(lam * np.sum((Y - X) ** 2))
    radicand = 1.0 - e1p
    if radicand < -CLAMP_TOL:
        raise FloatingPointError(f"E1' = {e1p} exceeds 1; propagator is corrupted")
    f1 = float(np.sqrt(max(radicand, 0.0)))
    return e1p, 1.0 - f1, f1


def markovian_gradient(cache: PropagationCache, Y, lam: float | None = None, wrt: str = "E1prime"):
    """Gradient of E1' (or E1 with ``wrt="E1"``), flattened control-major."""
    Y = np.asarray(_matrix(Y))
    if lam is None:
        lam = 1.0 / (2 * Y.shape[0])
    X = cache.final
    C = -2.0 * lam * (Y - X).T
    g = cache.gradient_contraction(C).ravel()
    if wrt == "E1prime":
        return g
    if wrt != "E1":
        raise ValueError(f"unknown gradient target {wrt!r}")
    _, _, f1 = markovian_error(X, Y, lam)
    if f1 == 0:
        warnings.warn("F1 = 0: E1 is not differentiable, returning the E1' gradient", RuntimeWarning)
        return g
    return g / (2.0 * f1)


def partial_trace_system(Z: np.ndarray, n1: int, n2: int) -> np.ndarray:
    """Trace out the leading (system) factor of an ``(n1*n2) x (n1*n2)`` matrix."""
    return np.einsum("sase->ae", np.asarray(Z).reshape(n1, n2, n1, n2))


def _check_unitary(X, atol=1e-8):
    if not np.allclose(X.conj().T @ X, np.eye(X.shape[0]), atol=atol, rtol=0):
        raise ValueError("evolution operator is not unitary")


def nonmarkovian_error(X: np.ndarray, W, n1: int, n2: int):
    """Return ``(E2, F2, Q)``; ``n1``, ``n2`` are system and noise dimensions."""
    X = np.asarray(X)
    W = np.asarray(getattr(W, "unitary", W))
    if X.shape != (n1 * n2, n1 * n2) or W.shape != (n1, n1):
        raise ValueError("dimension mismatch between X, W and (n1, n2)")
    _check_unitary(X)
    Q = partial_trace_system(np.kron(W.conj().T, np.eye(n2)) @ X, n1, n2)
    f2 = float(np.sum(np.linalg.svd(Q, compute_uv=False)) / (n1 * n2))
    return 1.0 - f2, f2, Q


def _polar_factor(Q: np.ndarray) -> np.ndarray:
    """``(Q^dag Q)^(-1/2) Q^dag = E G^dag`` on the range of Q.

    Singular values at roundoff level are dropped: the nuclear norm has a
    symmetric kink there and contributes no one-sided slope.
    """
    G, s, Eh = np.linalg.svd(Q)
    keep = s > 1e-10 * max(1.0, s[0])
    return Eh[keep].conj().T @ G[:, keep].conj().T


def nonmarkovian_gradient(cache: PropagationCache, W, n1: int, n2: int) -> np.ndarray:
    """Gradient of E2, flattened control-major."""
    W = np.asarray(getattr(W, "unitary", W))
    Q = partial_trace_system(np.kron(W.conj().T, np.eye(n2)) @ cache.final, n1, n2)
    C = -np.kron(W.conj().T, _polar_factor(Q)) / (n1 * n2)
    return cache.gradient_contraction(C).ravel()


def naive_composite_error(X: np.ndarray, W) -> float:
    """``1 - |Tr((W x 1)^dag X)| / N``; zero only when the noise block is the identity."""
    X = np.asarray(X)
    W = np.asarray(getattr(W, "unitary", W))
    N = X.shape[0]
    n2 = N // W.shape[0]
    return 1.0 - abs(np.trace(np.kron(W.conj().T, np.eye(n2)) @ X)) / N


class GateProblem:
    """A gate-synthesis objective over piecewise-constant fields.

    Parameters
    ----------
    kind : {"markovian", "nonmarkovian", "closed"}
    generator : Generator
    target : TargetGate
    n1, n2 : int
        System and noise Hilbert-space dimensions (``n2 = 1`` unless
        ``kind == "nonmarkovian"``).
    method : str
        Propagation route passed to :func:`propagate`.
    """

    def __init__(self, kind, generator: Generator, target: TargetGate, n1: int, n2: int = 1,
                 method: str = "auto", label: str = ""):
        if kind not in ("markovian", "nonmarkovian", "closed"):
            raise ValueError(f"unknown problem kind {kind!r}")
        if kind == "markovian" and (generator.kind != "markovian" or n2 != 1):
            raise ValueError("markovian problems need a real generator and no noise subsystem")
        if kind != "markovian" and generator.kind != "hamiltonian":
            raise ValueError(f"{kind} problems need a Hamiltonian generator")
        if kind == "closed" and n2 != 1:
            raise ValueError("closed problems have no noise subsystem")
        self.kind = kind
        self.generator = generator
        self.target = target
        self.n1 = n1
        self.n2 = n2
        self.method = method
        self.label = label
        self.Y = adjoint_gate(target.unitary, pauli_basis(int(np.log2(n1)))) if kind == "markovian" else None

    @property
    def n_controls(self) -> int:
        return self.generator.n_controls

    @property
    def N(self) -> int:
        return self.n1 * self.n2

    def __repr__(self):
        return (f"GateProblem(kind={self.kind!r}, target={self.target.name!r}, "
                f"N1={self.n1}, N2={self.n2}, M={self.n_controls}, label={self.label!r})")

    def propagate(self, field: ControlField) -> PropagationCache:
        return propagate(self.generator, field, self.method)

    def evaluate(self, field: ControlField, gradient: bool = True) -> ObjectiveEvaluation:
        cache = self.propagate(field)
        X = cache.final
        if self.kind == "markovian":
            e1p, e1, f1 = markovian_error(X, self.Y)
            g = markovian_gradient(cache, self.Y) if gradient else None
            return ObjectiveEvaluation(e1p, f1, g, {"E1prime": e1p, "E1": e1, "F1": f1})
        e2, f2, _ = nonmarkovian_error(X, self.target, self.n1, self.n2)
        g = nonmarkovian_gradient(cache, self.target, self.n1, self.n2) if gradient else None
        return ObjectiveEvaluation(e2, f2, g, {"E2": e2, "F2": f2})

    def error(self, field: ControlField) -> float:
        return self.evaluate(field, gradient=False).error


def markovian_problem(spec: QubitNetworkSpec, lind: LindbladSpec, target: TargetGate,
                      method: str = "augmented", label: str = "") -> GateProblem:
    """Lindblad dynamics of the system register in the normalised Pauli basis."""
    if spec.n_noise:
        raise ValueError("markovian problems take a system-only network")
    basis = pauli_basis(spec.n_system)
    H0, Hm = build_hamiltonians(spec)
    drift = adjoint_hamiltonian(H0, basis).matrix
    for V in build_lindblad_operators(spec, lind):
        drift = drift + adjoint_dissipator(V, basis).matrix
    controls = np.array([adjoint_hamiltonian(h, basis).matrix for h in Hm])
    if target.dim != spec.system_dim:
        raise ValueError("target gate does not act on the system register")
    return GateProblem("markovian", Generator("markovian", drift, controls), target,
                       spec.system_dim, 1, method, label)


def hamiltonian_problem(spec: QubitNetworkSpec, target: TargetGate, method: str = "spectral",
                        label: str = "") -> GateProblem:
    """Unitary dynamics of system plus noise qubits (closed if there are none)."""
    H0, Hm = build_hamiltonians(spec)
    if target.dim != spec.system_dim:
        raise ValueError("target gate does not act on the system register")
    kind = "nonmarkovian" if spec.n_noise else "closed"
    return GateProblem(kind, Generator("hamiltonian", H0, Hm), target,
                       spec.system_dim, spec.noise_dim, method, label)
