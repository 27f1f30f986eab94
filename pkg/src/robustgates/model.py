"""Qubit-network Hamiltonians, Lindblad channels, target gates and the real
adjoint (Pauli transfer) representation of superoperators.

Tensor ordering: qubit 0 is the leftmost Kronecker factor, and system qubits
always precede noise qubits.  All matrices returned here are plain numpy
arrays and are never mutated after construction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache, reduce
from typing import Sequence

import numpy as np

__all__ = [
    "PAULI",
    "Actuator",
    "QubitNetworkSpec",
    "LindbladChannel",
    "LindbladSpec",
    "HermitianBasis",
    "AdjointRep",
    "TargetGate",
    "CHANNEL_KINDS",
    "spin_operator",
    "default_actuators",
    "chain_network",
    "noise_network",
    "build_hamiltonians",
    "build_lindblad_operators",
    "pauli_basis",
    "adjoint_hamiltonian",
    "adjoint_dissipator",
    "adjoint_gate",
    "adjoint_superoperator",
    "target_gate",
]

PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# Emission lowers the energy.  With H0 = w S^z the state (0, 1) has the lower
# energy -w/2, so the jump operator maps (1, 0) -> (0, 1).
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)

CHANNEL_KINDS = (
    "spontaneous-emission",
    "dephasing-z",
    "dephasing-x",
    "correlated-dephasing-z",
)


def _kron_all(factors):
    return reduce(np.kron, factors)


def spin_operator(axis: str, qubit: int, n_qubits: int) -> np.ndarray:
    """Return S^axis for one qubit embedded in an ``n_qubits`` register."""
    if not 0 <= qubit < n_qubits:
        raise ValueError(f"qubit {qubit} out of range for {n_qubits} qubits")
    factors = [PAULI["i"]] * n_qubits
    factors[qubit] = 0.5 * PAULI[axis]
    return _kron_all(factors)


@dataclass(frozen=True)
class Actuator:
    """One control Hamiltonian S^axis on ``qubit``.

    With ``leakage`` set, the same field also drives every noise qubit along
    the same axis.
    """

    qubit: int
    axis: str
    leakage: bool = False

    def __post_init__(self):
        if self.axis not in ("x", "y"):
            raise ValueError(f"actuator axis must be 'x' or 'y', got {self.axis!r}")


@dataclass(frozen=True)
class QubitNetworkSpec:
    """System and noise qubits coupled by Heisenberg exchange.

    Parameters
    ----------
    n_system, n_noise : int
        Qubit counts.  System qubits occupy indices ``0..n_system-1``.
    omega : sequence of float
        Angular frequency of every qubit, length ``n_system + n_noise``.
    gamma : array_like
        Symmetric coupling table with zero diagonal and no noise-noise terms.
    actuators : sequence of Actuator
        Control Hamiltonians, one per control field.
    """

    n_system: int
    n_noise: int
    omega: tuple
    gamma: np.ndarray
    actuators: tuple

    def __post_init__(self):
        n = self.n_system + self.n_noise
        object.__setattr__(self, "omega", tuple(float(w) for w in self.omega))
        gamma = np.array(self.gamma, dtype=float)
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "actuators", tuple(self.actuators))
        if self.n_system < 1 or self.n_noise < 0:
            raise ValueError("need at least one system qubit and n_noise >= 0")
        if len(self.omega) != n:
            raise ValueError(f"omega has length {len(self.omega)}, expected {n}")
        if any(w <= 0 for w in self.omega):
            raise ValueError("qubit frequencies must be positive")
        if gamma.shape != (n, n):
            raise ValueError(f"gamma must be {n}x{n}")
        if not np.allclose(gamma, gamma.T, atol=0) or np.any(np.diag(gamma) != 0):
            raise ValueError("gamma must be symmetric with zero diagonal")
        noise = slice(self.n_system, n)
        if np.any(gamma[noise, noise] != 0):
            raise ValueError("noise-noise couplings are not supported")
        ss = gamma[: self.n_system, : self.n_system]
        sn = gamma[: self.n_system, noise]
        if ss.size and sn.size and np.any(ss != 0) and np.any(sn != 0):
            if np.abs(ss[ss != 0]).min() < np.abs(sn[sn != 0]).max():
                raise ValueError("system-system couplings must dominate system-noise ones")
        for act in self.actuators:
            if not 0 <= act.qubit < n:
                raise ValueError(f"actuator references qubit {act.qubit}, only {n} qubits")
        if not self.actuators:
            raise ValueError("at least one actuator is required")

    @property
    def n_qubits(self) -> int:
        return self.n_system + self.n_noise

    @property
    def system_dim(self) -> int:
        return 2**self.n_system

    @property
    def noise_dim(self) -> int:
        return 2**self.n_noise

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def with_changes(self, **changes) -> "QubitNetworkSpec":
        kwargs = dict(
            n_system=self.n_system,
            n_noise=self.n_noise,
            omega=self.omega,
            gamma=self.gamma,
            actuators=self.actuators,
        )
        kwargs.update(changes)
        return QubitNetworkSpec(**kwargs)


def default_actuators(n_system: int, leakage: bool = False) -> tuple:
    """One S^x and one S^y control per system qubit, ordered (x0, y0, x1, ...)."""
    return tuple(Actuator(q, a, leakage) for q in range(n_system) for a in ("x", "y"))


def chain_network(omega: Sequence[float], coupling: float = 1.0, actuators=None) -> QubitNetworkSpec:
    """Linear chain of system qubits with uniform nearest-neighbour coupling."""
    n = len(omega)
    gamma = np.zeros((n, n))
    for i in range(n - 1):
        gamma[i, i + 1] = gamma[i + 1, i] = coupling
    return QubitNetworkSpec(
        n_system=n,
        n_noise=0,
        omega=omega,
        gamma=gamma,
        actuators=actuators if actuators is not None else default_actuators(n),
    )


def noise_network(
    system_omega: Sequence[float],
    noise_omega: Sequence[float],
    system_coupling: float,
    noise_coupling: float,
    topology: str = "round-robin",
    leakage: bool = False,
) -> QubitNetworkSpec:
    """System chain plus noise qubits attached to the system.

    ``topology`` selects which system qubits each noise qubit couples to:
    ``"round-robin"`` attaches noise qubit ``j`` to system qubit
    ``j % n_system``; ``"all"`` couples every noise qubit to every system qubit.
    """
    n1, n2 = len(system_omega), len(noise_omega)
    n = n1 + n2
    gamma = np.zeros((n, n))
    for i in range(n1 - 1):
        gamma[i, i + 1] = gamma[i + 1, i] = system_coupling
    for j in range(n2):
        if topology == "round-robin":
            targets = [j % n1]
        elif topology == "all":
            targets = range(n1)
        else:
            raise ValueError(f"unknown topology {topology!r}")
        for i in targets:
            gamma[i, n1 + j] = gamma[n1 + j, i] = noise_coupling
    return QubitNetworkSpec(
        n_system=n1,
        n_noise=n2,
        omega=tuple(system_omega) + tuple(noise_omega),
        gamma=gamma,
        actuators=default_actuators(n1, leakage),
    )


def build_hamiltonians(spec: QubitNetworkSpec):
    """Drift Hamiltonian and control Hamiltonians of a qubit network.

    Returns
    -------
    H0 : ndarray, shape (N, N)
        ``sum_k w_k S_k^z + sum_{i<j} g_ij S_i . S_j``.
    Hm : ndarray, shape (M, N, N)
        One Hermitian matrix per actuator.
    """
    n = spec.n_qubits
    spins = {(a, k): spin_operator(a, k, n) for a in "xyz" for k in range(n)}
    H0 = sum(w * spins["z", k] for k, w in enumerate(spec.omega))
    for i, j in itertools.combinations(range(n), 2):
        g = spec.gamma[i, j]
        if g != 0:
            H0 = H0 + g * sum(spins[a, i] @ spins[a, j] for a in "xyz")
    Hm = []
    for act in spec.actuators:
        h = spins[act.axis, act.qubit].copy()
        if act.leakage:
            for k in range(spec.n_system, n):
                if k != act.qubit:
                    h = h + spins[act.axis, k]
        Hm.append(h)
    return np.asarray(H0), np.array(Hm)


@dataclass(frozen=True)
class LindbladChannel:
    kind: str
    rate: float
    qubits: tuple | None = None  # None means every system qubit

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if not self.rate >= 0:
            raise ValueError(f"channel rate must be non-negative, got {self.rate}")
        if self.qubits is not None:
            object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))


@dataclass(frozen=True)
class LindbladSpec:
    """Markovian decoherence channels.

    ``convention`` fixes how a rate r scales the Pauli-normalised jump
    operator A: ``"amplitude"`` gives ``V = r A`` and ``"sqrt"`` gives
    ``V = sqrt(r) A``.
    """

    channels: tuple = ()
    convention: str = "amplitude"

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if self.convention not in ("amplitude", "sqrt"):
            raise ValueError(f"unknown rate convention {self.convention!r}")

    def prefactor(self, rate: float) -> float:
        return rate if self.convention == "amplitude" else float(np.sqrt(rate))


def build_lindblad_operators(spec: QubitNetworkSpec, lind: LindbladSpec) -> list:
    """Jump operators V_d acting on the system register."""
    if spec.n_noise != 0:
        raise ValueError("Lindblad channels are defined for system-only networks")
    n = spec.n_system
    ops = []
    for ch in lind.channels:
        c = lind.prefactor(ch.rate)
        qubits = range(n) if ch.qubits is None else ch.qubits
        for q in qubits:
            if not 0 <= q < n:
                raise ValueError(f"channel references qubit {q}, only {n} system qubits")
        if ch.kind == "correlated-dephasing-z":
            ops.append(c * sum(2 * spin_operator("z", q, n) for q in qubits))
            continue
        for q in qubits:
            if ch.kind == "spontaneous-emission":
                factors = [PAULI["i"]] * n
                factors[q] = SIGMA_MINUS
                ops.append(c * _kron_all(factors))
            else:
                ops.append(c * 2 * spin_operator(ch.kind[-1], q, n))
    return ops


@dataclass(frozen=True)
class HermitianBasis:
    """Orthonormal basis of Hermitian matrices, ``Tr(s_m s_n) = delta_mn``.

    ``matrices[0]`` is proportional to the identity.
    """

    matrices: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrices.shape[-1]

    @property
    def size(self) -> int:
        return self.matrices.shape[0]

    @property
    def vec(self) -> np.ndarray:
        """Columns are the row-major vectorised basis matrices."""
        return self.matrices.reshape(self.size, -1).T

    def coefficients(self, rho: np.ndarray) -> np.ndarray:
        """Real coordinates ``r_n = Tr(s_n rho)`` of a Hermitian matrix."""
        return np.einsum("nij,ji->n", self.matrices, rho).real

    def operator(self, r: np.ndarray) -> np.ndarray:
        return np.tensordot(r, self.matrices, axes=1)


@lru_cache(maxsize=8)
def _pauli_basis_matrices(n_qubits: int) -> np.ndarray:
    singles = [PAULI[k] / np.sqrt(2) for k in "ixyz"]
    mats = np.array([_kron_all(combo) for combo in itertools.product(singles, repeat=n_qubits)])
    mats.setflags(write=False)
    return mats


def pauli_basis(n_qubits: int) -> HermitianBasis:
    """Normalised Pauli products, enumerated with qubit 0 most significant."""
    return HermitianBasis(_pauli_basis_matrices(n_qubits))


@dataclass(frozen=True)
class AdjointRep:
    matrix: np.ndarray
    kind: str


def _check_dim(op: np.ndarray, basis: HermitianBasis):
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError("operator must be a square matrix")
    if op.shape[0] != basis.dim:
        raise ValueError(f"operator dimension {op.shape[0]} does not match basis dimension {basis.dim}")


def adjoint_superoperator(action, basis: HermitianBasis) -> np.ndarray:
    """Matrix ``R_mn = Tr(s_m action(s_n))`` for a batched linear map ``action``."""
    images = action(basis.matrices)
    flat = images.reshape(basis.size, -1).T
    return (basis.vec.conj().T @ flat).real


def adjoint_hamiltonian(H: np.ndarray, basis: HermitianBasis) -> AdjointRep:
    """Adjoint form of ``rho -> -i[H, rho]``, entries ``Tr(iH[s_m, s_n])``."""
    H = np.asarray(H)
    _check_dim(H, basis)
    L = adjoint_superoperator(lambda s: -1j * (H @ s - s @ H), basis)
    return AdjointRep(L, "hamiltonian-commutator")


def adjoint_dissipator(V: np.ndarray, basis: HermitianBasis) -> AdjointRep:
    """Adjoint form of the Lindblad dissipator D[V]."""
    V = np.asarray(V)
    _check_dim(V, basis)
    Vd = V.conj().T
    VdV = Vd @ V

    def action(s):
        return V @ s @ Vd - 0.5 * (VdV @ s + s @ VdV)

    return AdjointRep(adjoint_superoperator(action, basis), "dissipator")


def adjoint_gate(W: np.ndarray, basis: HermitianBasis, atol: float = 1e-8) -> AdjointRep:
    """Orthogonal matrix ``Y_mn = Tr(s_m W s_n W^dag)`` of a unitary gate."""
    W = np.asarray(W)
    _check_dim(W, basis)
    if not np.allclose(W.conj().T @ W, np.eye(W.shape[0]), atol=atol, rtol=0):
        raise ValueError("gate is not unitary")
    Wd = W.conj().T
    return AdjointRep(adjoint_superoperator(lambda s: W @ s @ Wd, basis), "gate")


@dataclass(frozen=True)
class TargetGate:
    name: str
    unitary: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.unitary.shape[0]


def _qft(dim: int) -> np.ndarray:
    j, k = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
    return np.exp(2j * np.pi * j * k / dim) / np.sqrt(dim)


_GATE_ALIASES = {"hadamard": "hadamard", "had": "hadamard", "h": "hadamard",
                 "identity": "identity", "id": "identity",
                 "t": "t", "t-gate": "t", "cnot": "cnot", "qft": "qft"}


def target_gate(name: str, n_qubits: int) -> TargetGate:
    """Standard gates: Hadamard, T, Identity, CNOT (control qubit 0), QFT."""
    key = name.lower()
    if key.startswith("qft-"):
        size = int(key[4:])
        if size != n_qubits:
            raise ValueError(f"{name} acts on {size} qubits, not {n_qubits}")
        key = "qft"
    key = _GATE_ALIASES.get(key)
    if key is None:
        raise ValueError(f"unknown gate {name!r}")
    dim = 2**n_qubits
    if key == "identity":
        W = np.eye(dim, dtype=complex)
    elif key == "qft":
        W = _qft(dim)
    elif key in ("hadamard", "t"):
        if n_qubits != 1:
            raise ValueError(f"{name} is a one-qubit gate")
        W = (np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2) if key == "hadamard"
             else np.diag([1, np.exp(1j * np.pi / 4)]))
    else:
        if n_qubits != 2:
            raise ValueError("CNOT is a two-qubit gate")
        W = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
    W.setflags(write=False)
    return TargetGate(key if key != "qft" else f"qft-{n_qubits}", W)
