"""Piecewise-constant propagation and exact derivatives of the final propagator.

Two dynamics are supported:

* ``"markovian"`` - real adjoint-representation generators, slice generator
  ``G_p = L0 + LD + sum_m f_mp L_m``;
* ``"hamiltonian"`` - Hermitian H, slice generator ``G_p = -i(H0 + sum_m f_mp H_m)``.

Slice derivatives are Frechet derivatives of the matrix exponential,

    D_mp = int_0^dt exp(G_p (dt - s)) G_m exp(G_p s) ds,

computed either from one exponential of the block matrix
``[[G dt, E dt], [0, G dt]]`` (``"augmented"``) or from an eigendecomposition of
``G_p`` with divided differences (``"spectral"``).  For objective gradients the
cache never forms the ``M*K`` blocks: it uses ``Tr(C L(A, E)) = Tr(L(A, C) E)``
so that a single Frechet derivative per slice yields all ``M`` components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .controls import ControlField

__all__ = [
    "DEGENERACY_TOL",
    "NotDiagonalizableError",
    "Generator",
    "SliceSpectrum",
    "PropagationCache",
    "augmented_expm",
    "slice_exp_and_derivative_augmented",
    "slice_exp_and_derivative_spectral",
    "divided_differences",
    "propagate",
    "evolution_gradient",
    "finite_difference_gradient",
]

DEGENERACY_TOL = 1e-10
# Eigenvector matrices worse conditioned than this are treated as defective.
_EIG_COND_LIMIT = 1e10


class NotDiagonalizableError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class Generator:
    """Drift and control matrices of one model.

    For ``kind="hamiltonian"`` the stored matrices are the Hermitian H0 and
    H_m; the skew-Hermitian generator is formed on demand.
    """

    kind: str
    drift: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        if self.kind not in ("markovian", "hamiltonian"):
            raise ValueError(f"unknown generator kind {self.kind!r}")
        drift = np.asarray(self.drift)
        controls = np.asarray(self.controls)
        if drift.ndim != 2 or drift.shape[0] != drift.shape[1]:
            raise ValueError("drift must be square")
        if controls.ndim != 3 or controls.shape[1:] != drift.shape:
            raise ValueError("control matrices must share the drift dimension")
        for a in (drift, controls):
            a.setflags(write=False)
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "controls", controls)

    @property
    def dim(self) -> int:
        return self.drift.shape[0]

    @property
    def n_controls(self) -> int:
        return self.controls.shape[0]

    def slice_operators(self, values: np.ndarray) -> np.ndarray:
        """``drift + sum_m f_mp controls_m`` for every slice, shape (K, d, d)."""
        return self.drift + np.einsum("mp,mij->pij", values, self.controls)

    def slice_generators(self, values: np.ndarray) -> np.ndarray:
        ops = self.slice_operators(values)
        return -1j * ops if self.kind == "hamiltonian" else ops

    @property
    def directions(self) -> np.ndarray:
        """Derivative of the slice generator with respect to each amplitude."""
        return -1j * self.controls if self.kind == "hamiltonian" else self.controls


def augmented_expm(A: np.ndarray, B: np.ndarray):
    """Return ``exp(A)`` and ``int_0^1 exp(A(1-s)) B exp(As) ds``.

    Both are read off ``exp([[A, B], [0, A]])``.  Leading axes broadcast.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape[-1] != A.shape[-2] or A.shape != B.shape:
        raise ValueError("A and B must be square matrices of the same shape")
    n = A.shape[-1]
    Z = np.zeros(A.shape[:-2] + (2 * n, 2 * n), dtype=np.result_type(A, B))
    Z[..., :n, :n] = A
    Z[..., :n, n:] = B
    Z[..., n:, n:] = A
    E = scipy.linalg.expm(Z)
    return E[..., :n, :n], E[..., :n, n:]


def slice_exp_and_derivative_augmented(G: np.ndarray, Gm: np.ndarray, dt: float):
    """Slice propagator ``exp(G dt)`` and its derivative along direction ``Gm``."""
    return augmented_expm(np.asarray(G) * dt, np.asarray(Gm) * dt)


def divided_differences(lam: np.ndarray, dt: float, tol: float = DEGENERACY_TOL) -> np.ndarray:
    """``(exp(l_i dt) - exp(l_j dt)) / (l_i - l_j)`` with the confluent limit.

    Pairs closer than ``tol`` use ``dt exp((l_i + l_j) dt / 2)``.
    """
    lam = np.asarray(lam)
    e = np.exp(lam * dt)
    diff = lam[..., :, None] - lam[..., None, :]
    close = np.abs(diff) < tol
    num = e[..., :, None] - e[..., None, :]
    gam = num / np.where(close, 1.0, diff)
    limit = dt * np.exp(0.5 * (lam[..., :, None] + lam[..., None, :]) * dt)
    return np.where(close, limit, gam)


@dataclass(frozen=True)
class SliceSpectrum:
    """Eigendecomposition ``G_p = V diag(lam) V^-1`` of every slice generator."""

    lam: np.ndarray
    V: np.ndarray
    Vinv: np.ndarray
    gamma: np.ndarray  # divided differences, shape (K, d, d)

    @classmethod
    def from_hamiltonians(cls, H: np.ndarray, dt: float) -> "SliceSpectrum":
        w, V = np.linalg.eigh(H)
        lam = -1j * w
        return cls(lam, V, np.conj(np.swapaxes(V, -1, -2)), divided_differences(lam, dt))

    @classmethod
    def from_generators(cls, G: np.ndarray, dt: float) -> "SliceSpectrum":
        lam, V = np.linalg.eig(G)
        cond = np.linalg.cond(V)
        if not np.all(np.isfinite(cond)) or np.max(cond) > _EIG_COND_LIMIT:
            raise NotDiagonalizableError(f"eigenvector condition number {np.max(cond):.3g}")
        return cls(lam, V, np.linalg.inv(V), divided_differences(lam, dt))

    def expm(self, dt: float) -> np.ndarray:
        return (self.V * np.exp(self.lam * dt)[..., None, :]) @ self.Vinv

    def frechet(self, E: np.ndarray) -> np.ndarray:
        """``int_0^dt exp(G(dt-s)) E exp(Gs) ds`` for each slice."""
        return self.V @ ((self.Vinv @ E @ self.V) * self.gamma) @ self.Vinv


def slice_exp_and_derivative_spectral(H: np.ndarray, Hm: np.ndarray, amplitudes, dt: float):
    """Slice propagator and control derivatives from an eigendecomposition.

    Parameters
    ----------
    H : ndarray, shape (N, N)
        Hermitian drift Hamiltonian.
    Hm : ndarray, shape (M, N, N)
        Hermitian control Hamiltonians.
    amplitudes : array_like, shape (M,)
        Field values on this slice.
    dt : float
        Slice duration.

    Returns
    -------
    U : ndarray, shape (N, N)
        ``exp(-i (H + sum_m f_m H_m) dt)``.
    dU : ndarray, shape (M, N, N)
        ``dU / df_m``.
    """
    Hm = np.asarray(Hm)
    Htot = np.asarray(H) + np.tensordot(np.asarray(amplitudes, dtype=float), Hm, axes=1)
    if not np.allclose(Htot, Htot.conj().T, atol=1e-12):
        raise NotDiagonalizableError("slice Hamiltonian is not Hermitian")
    spec = SliceSpectrum.from_hamiltonians(Htot, dt)
    U = spec.expm(dt)
    dU = np.array([spec.frechet(-1j * h) for h in Hm])
    return U, dU


class PropagationCache:
    """Slice propagators, prefix/suffix products and gradient machinery.

    ``forward[p] = X(t_p)`` (so ``forward[0]`` is the identity and
    ``forward[K] = X(T)``) and ``backward[p] = X(T, t_p)``.
    """

    def __init__(self, generator: Generator, field: ControlField, method: str,
                 slices: np.ndarray, spectrum: SliceSpectrum | None = None):
        self.generator = generator
        self.field = field
        self.method = method
        self.slices = slices
        self.spectrum = spectrum
        K, d = slices.shape[0], slices.shape[-1]
        eye = np.eye(d, dtype=slices.dtype)
        forward = np.empty((K + 1, d, d), dtype=slices.dtype)
        backward = np.empty_like(forward)
        forward[0] = eye
        backward[K] = eye
        for p in range(K):
            forward[p + 1] = slices[p] @ forward[p]
            backward[K - p - 1] = backward[K - p] @ slices[K - p - 1]
        self.forward = forward
        self.backward = backward
        self._blocks = {}
        for a in (self.slices, self.forward, self.backward):
            a.setflags(write=False)

    @property
    def final(self) -> np.ndarray:
        return self.forward[-1]

    @property
    def n_slices(self) -> int:
        return self.slices.shape[0]

    def _generators(self) -> np.ndarray:
        return self.generator.slice_generators(self.field.values)

    def _frechet(self, E: np.ndarray) -> np.ndarray:
        """``int_0^dt exp(G_p(dt-s)) E_p exp(G_p s) ds`` for all slices at once."""
        dt = self.field.dt
        if self.spectrum is not None:
            return self.spectrum.frechet(E)
        _, L = augmented_expm(self._generators() * dt, E)
        return L * dt

    def derivative_block(self, p: int) -> np.ndarray:
        """``dX(t_{p+1}, t_p) / df_mp`` for every control, shape (M, d, d)."""
        if not 0 <= p < self.n_slices:
            raise IndexError(f"slice index {p} out of range")
        if p not in self._blocks:
            dt = self.field.dt
            dirs = self.generator.directions
            if self.spectrum is not None:
                one = SliceSpectrum(self.spectrum.lam[p], self.spectrum.V[p],
                                    self.spectrum.Vinv[p], self.spectrum.gamma[p])
                block = np.array([one.frechet(E) for E in dirs])
            else:
                G = self._generators()[p]
                _, block = augmented_expm(np.broadcast_to(G * dt, dirs.shape), dirs * dt)
            self._blocks[p] = block
        return self._blocks[p]

    def gradient_contraction(self, C: np.ndarray) -> np.ndarray:
        """``Re Tr(C dX(T)/df_mp)`` for all m, p, shape (M, K).

        Uses ``Phi_p = X(t_p) C X(T, t_{p+1})`` and the transpose identity of
        the Frechet derivative, one derivative evaluation per slice.
        """
        phi = self.forward[:-1] @ C @ self.backward[1:]
        L = self._frechet(phi)
        g = np.einsum("pij,mji->mp", L, self.generator.directions)
        return g.real


def propagate(gen: Generator, field: ControlField, method: str = "auto") -> PropagationCache:
    """Propagate under a piecewise-constant field.

    ``method`` is ``"augmented"``, ``"spectral"`` or ``"auto"`` (spectral for
    Hamiltonian dynamics, augmented otherwise).  A spectral request on a
    generator whose slices are not safely diagonalisable falls back to the
    augmented route; the chosen route is stored on the cache.
    """
    if field.n_controls != gen.n_controls:
        raise ValueError(f"field has {field.n_controls} controls, generator has {gen.n_controls}")
    if not np.all(np.isfinite(field.values)):
        raise ValueError("field contains non-finite amplitudes")
    if method == "auto":
        method = "spectral" if gen.kind == "hamiltonian" else "augmented"
    if method not in ("augmented", "spectral"):
        raise ValueError(f"unknown propagation method {method!r}")
    dt = field.dt
    if method == "spectral":
        try:
            if gen.kind == "hamiltonian":
                spectrum = SliceSpectrum.from_hamiltonians(gen.slice_operators(field.values), dt)
            else:
                spectrum = SliceSpectrum.from_generators(gen.slice_generators(field.values), dt)
        except NotDiagonalizableError:
            method = "augmented"
        else:
            slices = spectrum.expm(dt)
            if gen.kind == "markovian":
                slices = slices.real
            return PropagationCache(gen, field, "spectral", np.ascontiguousarray(slices), spectrum)
    slices = scipy.linalg.expm(gen.slice_generators(field.values) * dt)
    return PropagationCache(gen, field, method, slices)


def evolution_gradient(cache: PropagationCache, m: int, p: int) -> np.ndarray:
    """``dX(T) / df_mp`` (slice ``p`` counted from 0)."""
    if not 0 <= m < cache.generator.n_controls:
        raise IndexError(f"control index {m} out of range")
    block = cache.derivative_block(p)[m]
    return cache.backward[p + 1] @ block @ cache.forward[p]


def finite_difference_gradient(objfn, field: ControlField, step: float = 1e-6, scheme: str = "forward"):
    """Difference-quotient gradient of ``objfn(field) -> float``, flattened control-major."""
    if not step > 0:
        raise ValueError("step must be positive")
    x = field.flat()
    base = objfn(field) if scheme == "forward" else None
    if base is not None and not np.isfinite(base):
        raise ValueError("objective is not finite at the base point")
    grad = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xp[i] += step
        fp = objfn(field.with_values(xp))
        if scheme == "forward":
            fm, denom = base, step
        elif scheme == "central":
            xm = x.copy()
            xm[i] -= step
            fm, denom = objfn(field.with_values(xm)), 2 * step
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"objective is not finite near parameter {i}")
        grad[i] = (fp - fm) / denom
    return grad
