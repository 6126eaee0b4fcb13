"""Truncated Fock-space substrate: states, operators, propagation, measurement.

Basis convention (fixed so serialized states are portable): the joint state
vector is indexed qubit-bitstring-major, Fock-minor.  For one qubit the
amplitude of |q, n> sits at index q * n_fock + n, with q = 0 for the ground
state.  All frequencies are angular (rad/us), all times are us.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import (
    IncompleteProjectors,
    IntegratorDrift,
    TruncationGuardTripped,
    TruncationRisk,
)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class HilbertDims:
    """Dimensions of the qubit(s) x oscillator Hilbert space."""

    n_fock: int = 32
    n_qubits: int = 1

    def __post_init__(self):
        if self.n_fock < 2:
            raise ValueError("n_fock must be >= 2")
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")

    @property
    def n_states(self) -> int:
        return 2 ** self.n_qubits

    @property
    def total(self) -> int:
        return self.n_states * self.n_fock


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of the dispersive qubit-oscillator model.

    chi is the cross-Kerr interaction strength in rad/us.  The guard
    threshold is the maximum tolerated population of the top Fock level;
    crossing it aborts the run because truncation artifacts would act as an
    unphysical nonlinearity.
    """

    chi: float = TWO_PI * 2.415
    n_fock: int = 32
    guard_threshold: float = 0.01
    dt: float = 1e-3  # integrator step, us

    def __post_init__(self):
        if self.chi <= 0:
            raise ValueError("chi must be positive")
        if not 0 < self.guard_threshold < 1:
            raise ValueError("guard_threshold must be in (0, 1)")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @classmethod
    def from_mhz(cls, chi_mhz, **kwargs):
        """Construct from a cross-Kerr given in MHz (converted by 2*pi)."""
        return cls(chi=TWO_PI * chi_mhz, **kwargs)

    @property
    def kerr_period(self) -> float:
        """Revival period 2*pi/chi of the dispersive rotation, us."""
        return TWO_PI / self.chi


@dataclass
class JointState:
    """Normalized amplitude vector over the joint basis."""

    dims: HilbertDims
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amp.size != self.dims.total:
            raise ValueError(f"expected {self.dims.total} amplitudes, got {amp.size}")
        self.amplitudes = amp

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def grid(self) -> np.ndarray:
        """View shaped (2^n_qubits, n_fock)."""
        return self.amplitudes.reshape(self.dims.n_states, self.dims.n_fock)

    def normalized(self) -> "JointState":
        return JointState(self.dims, self.amplitudes / self.norm)

    def photon_number(self) -> float:
        """Expectation of the oscillator number operator."""
        pop = np.abs(self.grid()) ** 2
        return float(np.sum(pop.sum(axis=0) * np.arange(self.dims.n_fock)))

    def parity_expectation(self) -> float:
        pop = np.abs(self.grid()) ** 2
        signs = 1.0 - 2.0 * (np.arange(self.dims.n_fock) % 2)
        return float(np.sum(pop.sum(axis=0) * signs))

    def top_fock_population(self) -> float:
        g = self.grid()
        return float(np.sum(np.abs(g[:, -1]) ** 2))


@dataclass
class DenseOperator:
    """Dense matrix operator, either on the joint space or oscillator-only.

    dims is None for bare oscillator operators (n_fock x n_fock).  kind is
    an optional consistency flag: 'unitary' or 'hermitian'.
    """

    matrix: np.ndarray
    dims: HilbertDims | None = None
    kind: str | None = field(default=None)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("operator matrix must be square")
        if self.dims is not None and m.shape[0] != self.dims.total:
            raise ValueError("matrix size does not match dims")
        self.matrix = m
        if self.kind == "unitary":
            err = unitarity_defect(m)
            if err >= 1e-8:
                raise ValueError(f"unitary defect {err:.2e} >= 1e-8")
        elif self.kind == "hermitian":
            err = float(np.max(np.abs(m - m.conj().T)))
            if err >= 1e-10:
                raise ValueError(f"hermiticity defect {err:.2e} >= 1e-10")

    def __matmul__(self, other):
        if isinstance(other, DenseOperator):
            return DenseOperator(self.matrix @ other.matrix, dims=self.dims)
        return self.matrix @ other

    def apply(self, state: JointState) -> JointState:
        return JointState(state.dims, self.matrix @ state.amplitudes)

    def dagger(self) -> "DenseOperator":
        return DenseOperator(self.matrix.conj().T, dims=self.dims, kind=self.kind)


def unitarity_defect(matrix) -> float:
    m = np.asarray(matrix)
    return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))


# ---------------------------------------------------------------------------
# operator builders
# ---------------------------------------------------------------------------

def destroy(n_fock: int) -> np.ndarray:
    """Annihilation operator a on the truncated Fock space."""
    return np.diag(np.sqrt(np.arange(1, n_fock, dtype=float)), 1).astype(complex)


def number(n_fock: int) -> np.ndarray:
    return np.diag(np.arange(n_fock, dtype=float)).astype(complex)


def make_vacuum(dims: HilbertDims) -> JointState:
    """All qubits in |g>, oscillator in Fock |0>."""
    amp = np.zeros(dims.total, dtype=np.complex128)
    amp[0] = 1.0
    return JointState(dims, amp)


def displacement(alpha: complex, n_fock: int) -> DenseOperator:
    """Displacement operator D(alpha) = exp(alpha a^dag - alpha* a).

    Built by dense matrix exponential of the truncated generator.  Raises
    TruncationRisk when the coherent amplitude is not safely inside the
    cutoff (4 |alpha|^2 must stay below n_fock).
    """
    alpha = complex(alpha)
    if 4.0 * abs(alpha) ** 2 >= n_fock:
        raise TruncationRisk(
            f"|alpha|^2 = {abs(alpha) ** 2:.3f} too large for n_fock = {n_fock}"
        )
    a = destroy(n_fock)
    return DenseOperator(expm(alpha * a.conj().T - np.conj(alpha) * a), kind="unitary")


def coherent_state(alpha: complex, n_fock: int) -> np.ndarray:
    """D(alpha)|0> as a bare oscillator vector."""
    return displacement(alpha, n_fock).matrix[:, 0].copy()


def parity_projectors(n_fock: int) -> tuple[DenseOperator, DenseOperator]:
    """(P_even, P_odd) with P_+- = (1 +- Pi)/2, Pi = (-1)^n."""
    even = (np.arange(n_fock) % 2 == 0).astype(float)
    p_even = DenseOperator(np.diag(even).astype(complex), kind="hermitian")
    p_odd = DenseOperator(np.diag(1.0 - even).astype(complex), kind="hermitian")
    return p_even, p_odd


def embed_oscillator(op: np.ndarray, dims: HilbertDims) -> np.ndarray:
    """Lift an oscillator operator to the joint space (identity on qubits)."""
    return np.kron(np.eye(dims.n_states), op)


def embed_qubit_states(diag_weights: np.ndarray, dims: HilbertDims) -> np.ndarray:
    """Diagonal joint operator sum_s w_s |s><s| (x) identity."""
    return np.kron(np.diag(diag_weights), np.eye(dims.n_fock))


def qubit_projectors(dims: HilbertDims, qubit: int = 0) -> tuple[DenseOperator, DenseOperator]:
    """Joint-space projectors onto qubit q being |g> / |e>."""
    bit = (np.arange(dims.n_states) >> (dims.n_qubits - 1 - qubit)) & 1
    pg = embed_qubit_states((bit == 0).astype(float), dims)
    pe = embed_qubit_states((bit == 1).astype(float), dims)
    return (DenseOperator(pg, dims=dims, kind="hermitian"),
            DenseOperator(pe, dims=dims, kind="hermitian"))


def joint_parity_projectors(dims: HilbertDims) -> tuple[DenseOperator, DenseOperator]:
    p_even, p_odd = parity_projectors(dims.n_fock)
    return (DenseOperator(embed_oscillator(p_even.matrix, dims), dims=dims, kind="hermitian"),
            DenseOperator(embed_oscillator(p_odd.matrix, dims), dims=dims, kind="hermitian"))


# ---------------------------------------------------------------------------
# time evolution
# ---------------------------------------------------------------------------

def _drive_arrays(drive, duration):
    """Normalize a drive argument to (samples, sample_dt).

    Accepts None (no drive), a complex scalar (constant envelope), or any
    object with .samples and .dt (a ComplexSignal).
    """
    if drive is None:
        return np.zeros(1, dtype=complex), float(duration)
    if np.isscalar(drive):
        return np.full(1, complex(drive)), float(duration)
    samples = np.asarray(drive.samples, dtype=complex)
    return samples, float(drive.dt)


def evolve(state: JointState, drive, qubit_drive, params: SystemParams,
           duration: float) -> JointState:
    """Propagate under H = -chi |e><e| n + eps(t) a^dag + Omega(t)|e><g| + h.c.

    Fixed-step classical 4th-order integration at params.dt, holding each
    drive sample constant over its interval; drive-free intervals apply
    the exact diagonal phases instead (H is diagonal there, and the
    integrator would needlessly erode high-Fock magnitudes).  The
    truncation guard runs every step; the norm is allowed to drift by less
    than 1e-6 and is renormalized at the end.
    """
    dims = state.dims
    if dims.n_fock != params.n_fock:
        raise ValueError("state and params disagree on n_fock")
    eps, eps_dt = _drive_arrays(drive, duration)
    om, om_dt = _drive_arrays(qubit_drive, duration)
    if abs(len(eps) * eps_dt - duration) > 1e-9:
        raise ValueError("oscillator drive does not cover the duration")
    if abs(len(om) * om_dt - duration) > 1e-9:
        raise ValueError("qubit drive does not cover the duration")

    nf, ns = dims.n_fock, dims.n_states
    sqrt_n = np.sqrt(np.arange(1, nf))
    n_arr = np.arange(nf, dtype=float)
    # number of excited qubits per basis bitstring
    exc = np.array([bin(s).count("1") for s in range(ns)], dtype=float)
    chi = params.chi
    psi = state.amplitudes.reshape(ns, nf).copy()

    # flip partners for the qubit drive Omega |e><g| + h.c. (applied to
    # every qubit with the same envelope); qubit 0 owns the most
    # significant bit of the state index
    flips = []
    for q in range(dims.n_qubits):
        mask = 1 << (dims.n_qubits - 1 - q)
        flips.append((np.arange(ns) ^ mask,
                      (np.arange(ns) & mask).astype(bool)))

    def rhs(y, eps_k, om_k):
        out = (-1j) * (-chi) * (exc[:, None] * n_arr[None, :]) * y
        if eps_k != 0:
            adag_y = np.zeros_like(y)
            adag_y[:, 1:] = sqrt_n * y[:, :-1]
            a_y = np.zeros_like(y)
            a_y[:, :-1] = sqrt_n * y[:, 1:]
            out += (-1j) * (eps_k * adag_y + np.conj(eps_k) * a_y)
        if om_k != 0:
            for partner, is_exc in flips:
                term = np.where(is_exc[:, None], np.conj(om_k), om_k) * y
                out += (-1j) * term[partner]
        return out

    # iterate over the union grid of the two drive grids; in practice one
    # of them is constant, so just subdivide the finer grid
    boundaries = np.unique(np.concatenate([
        np.arange(len(eps) + 1) * eps_dt, np.arange(len(om) + 1) * om_dt]))
    for left, right in zip(boundaries[:-1], boundaries[1:]):
        eps_k = eps[min(int(left / eps_dt + 1e-12), len(eps) - 1)]
        om_k = om[min(int(left / om_dt + 1e-12), len(om) - 1)]
        span = right - left
        if eps_k == 0 and om_k == 0:
            # drive-free interval: H is diagonal, apply the exact phases
            psi *= np.exp(1j * chi * span * exc[:, None] * n_arr[None, :])
            continue
        nsub = max(1, int(np.ceil(span / params.dt - 1e-12)))
        h = span / nsub
        for _ in range(nsub):
            k1 = rhs(psi, eps_k, om_k)
            k2 = rhs(psi + 0.5 * h * k1, eps_k, om_k)
            k3 = rhs(psi + 0.5 * h * k2, eps_k, om_k)
            k4 = rhs(psi + h * k3, eps_k, om_k)
            psi += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            top = float(np.sum(np.abs(psi[:, -1]) ** 2))
            if top > params.guard_threshold:
                raise TruncationGuardTripped(
                    f"top Fock population {top:.3e} > {params.guard_threshold}")

    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) >= 1e-6:
        raise IntegratorDrift(f"norm drifted to {norm:.9f}")
    return JointState(dims, (psi / norm).reshape(-1))


def measure(state: JointState, projectors, rng) -> tuple[int, JointState]:
    """Projective measurement over a complete orthogonal projector set.

    Samples outcome k with Born probability <psi|P_k|psi> using one uniform
    from rng (RandomStream or numpy Generator) and returns the normalized
    collapsed state.
    """
    mats = [p.matrix if isinstance(p, DenseOperator) else np.asarray(p)
            for p in projectors]
    total = sum(mats)
    if float(np.max(np.abs(total - np.eye(total.shape[0])))) >= 1e-8:
        raise IncompleteProjectors("projectors do not sum to identity")
    psi = state.amplitudes
    probs = np.array([max(0.0, float(np.real(np.vdot(psi, m @ psi)))) for m in mats])
    probs = probs / probs.sum()
    u = rng.next_uniform() if hasattr(rng, "next_uniform") else float(rng.random())
    outcome = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    outcome = min(outcome, len(mats) - 1)
    collapsed = mats[outcome] @ psi
    collapsed = collapsed / np.linalg.norm(collapsed)
    return outcome, JointState(state.dims, collapsed)
