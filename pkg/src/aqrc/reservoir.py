"""Reservoir protocol operations and closed-form validation oracles.

One round of the standard protocol is

    X_pi/2, CNOD(alpha), input segment, X_pi, input segment,
    CNOD(-alpha), Y_pi/2, qubit measurement, parity measurement.

For a time-independent input the loop closes: the oscillator is displaced
by the per-segment amplitude beta, the qubit disentangles, and the
excited-state probability is cos^2(A - pi/4) with the enclosed phase-space
area A.  Those closed forms (and the parity-chain distribution of the
displacement-only reduction) are the oracles the Monte-Carlo engine is
validated against.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .engine import (
    DEFAULT_CHUNK,
    ProtocolConfig,
    _Workspace,
    run_chunk,
    run_trajectories,
    constant_signal_trajectories,
)
from .errors import SignalTooShort
from .fock import (
    DenseOperator,
    HilbertDims,
    JointState,
    SystemParams,
    coherent_state,
    displacement,
    embed_oscillator,
    evolve,
    make_vacuum,
)
from .rng import RandomStream, uniforms_for_seeds
from .signals import ComplexSignal

__all__ = [
    "ProtocolConfig", "TrajectoryRecord", "MultiQubitGrid", "cnod",
    "qubit_rotation", "run_round", "run_shot", "signal_segment_provider",
    "geometric_phase_oracle", "parity_trajectory_oracle",
    "function_space_rank", "multiqubit_conditional_displacement",
    "kerr_revival_check", "write_trajectories", "read_trajectories",
]


@dataclass
class TrajectoryRecord:
    """Measurement bitstring of one shot.

    Qubit outcomes sit at even positions, parity outcomes at odd positions
    (g -> 0, e -> 1; even -> 0, odd -> 1).
    """

    bits: np.ndarray
    shot_seed: int

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8).reshape(-1)
        if np.any(bits > 1):
            raise ValueError("bits must be 0/1")
        self.bits = bits
        self.shot_seed = int(self.shot_seed)


@dataclass(frozen=True)
class MultiQubitGrid:
    """Displacement values indexed by qubit bitstring (decimal)."""

    n_qubits: int
    displacement_map: tuple

    def __post_init__(self):
        if not 1 <= self.n_qubits <= 4:
            raise ValueError("n_qubits must be in 1..4")
        if len(self.displacement_map) != 2 ** self.n_qubits:
            raise ValueError("displacement_map must have 2^n_qubits entries")

    @classmethod
    def default(cls, n_qubits: int) -> "MultiQubitGrid":
        """Square grids from the multi-qubit extension.

        n=2: corners +-0.5 +- 0.5i; n=3: the 3x3 grid on [-1,1]^2 minus the
        origin; n=4: the 4x4 grid spanning +-1.5.  Index 0 maps to the
        (+, +) corner and indices advance row-major with descending real
        and imaginary parts.
        """
        if n_qubits == 1:
            vals = (0.5, -0.5)
        elif n_qubits == 2:
            axis = (0.5, -0.5)
            vals = tuple(complex(re, im) for im in axis for re in axis)
        elif n_qubits == 3:
            axis = (1.0, 0.0, -1.0)
            vals = tuple(complex(re, im) for im in axis for re in axis
                         if not (re == 0 and im == 0))
        else:
            axis = (1.5, 0.5, -0.5, -1.5)
            vals = tuple(complex(re, im) for im in axis for re in axis)
        return cls(n_qubits, vals)


# ---------------------------------------------------------------------------
# gate builders (joint-space dense operators)
# ---------------------------------------------------------------------------

_SIGMA = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
}


def qubit_rotation(axis: str, angle: float, dims: HilbertDims) -> DenseOperator:
    """R = exp(-i angle/2 sigma_axis) on the qubit, identity on the rest."""
    sig = _SIGMA[axis.upper()]
    r2 = np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * sig
    mat = r2
    for _ in range(dims.n_qubits - 1):
        mat = np.kron(mat, np.eye(2))
    return DenseOperator(np.kron(mat, np.eye(dims.n_fock)), dims=dims, kind="unitary")


def cnod(alpha: complex, dims: HilbertDims) -> DenseOperator:
    """Conditional displacement D(alpha)|g><e| + D(-alpha)|e><g|."""
    if dims.n_qubits != 1:
        raise ValueError("cnod is a single-qubit gate")
    nf = dims.n_fock
    d_plus = displacement(alpha, nf).matrix
    d_minus = displacement(-alpha, nf).matrix
    mat = np.zeros((dims.total, dims.total), dtype=complex)
    mat[:nf, nf:] = d_plus
    mat[nf:, :nf] = d_minus
    return DenseOperator(mat, dims=dims, kind="unitary")


def multiqubit_conditional_displacement(grid: MultiQubitGrid,
                                        dims: HilbertDims) -> DenseOperator:
    """Block-diagonal sum_s |s><s| (x) D(grid[s])."""
    if dims.n_qubits != grid.n_qubits:
        raise ValueError("dims and grid disagree on n_qubits")
    nf = dims.n_fock
    mat = np.zeros((dims.total, dims.total), dtype=complex)
    for s, amp in enumerate(grid.displacement_map):
        mat[s * nf:(s + 1) * nf, s * nf:(s + 1) * nf] = displacement(amp, nf).matrix
    return DenseOperator(mat, dims=dims, kind="unitary")


# ---------------------------------------------------------------------------
# protocol execution
# ---------------------------------------------------------------------------

def signal_segment_provider(signal: ComplexSignal, cfg: ProtocolConfig,
                            shot_stride: float = None):
    """Window extractor over a sampled signal (real-time semantics).

    Shot k starts consuming the signal at k * shot_stride (default: the
    shot exposure, i.e. back to back); window w covers the w-th entry of
    cfg.window_durations() within the shot, split into pieces on the
    signal's sample grid and scaled by cfg.input_scale.
    """
    samples = signal.samples
    dt = signal.dt
    durations_w = np.asarray(cfg.window_durations())
    offsets_w = np.concatenate([[0.0], np.cumsum(durations_w)[:-1]])
    stride = cfg.shot_exposure if shot_stride is None else shot_stride
    n_samp = len(samples)

    def provider(shot_indices, window_idx):
        dur = durations_w[window_idx]
        t0 = np.asarray(shot_indices, dtype=float) * stride + offsets_w[window_idx]
        t1 = t0 + dur
        if np.any(t1 > n_samp * dt + 1e-9):
            raise SignalTooShort(
                f"signal of {n_samp * dt:.3f} us cannot cover shots up to "
                f"{float(np.max(t1)):.3f} us")
        n_pieces = int(np.ceil(dur / dt - 1e-9)) + 1
        k0 = np.floor(t0 / dt + 1e-12).astype(np.int64)
        j = np.arange(n_pieces)
        idx = np.minimum(k0[:, None] + j[None, :], n_samp - 1)
        left = np.maximum(t0[:, None], (k0[:, None] + j[None, :]) * dt)
        right = np.minimum(t1[:, None], (k0[:, None] + j[None, :] + 1) * dt)
        durations = np.maximum(right - left, 0.0)
        return samples[idx] * cfg.input_scale, durations

    return provider


def run_shot(signal: ComplexSignal, cfg: ProtocolConfig, rng) -> TrajectoryRecord:
    """One reset-to-reset trajectory, consumed from the start of signal.

    rng must be a RandomStream; its seed is the shot seed, and the same
    seed fed to the batched engine reproduces identical bits.
    """
    if not isinstance(rng, RandomStream):
        rng = RandomStream(int(rng))
    if signal.duration + 1e-9 < cfg.shot_exposure:
        raise SignalTooShort(
            f"signal lasts {signal.duration:.3f} us, shot needs "
            f"{cfg.shot_exposure:.3f} us")
    provider = signal_segment_provider(signal, cfg, shot_stride=0.0)
    uni = uniforms_for_seeds(np.array([rng.seed], dtype=np.uint64),
                             cfg.bits_per_shot)
    bits = run_chunk(cfg, provider, np.zeros(1, dtype=int), uni)
    return TrajectoryRecord(bits[0], rng.seed)


def run_round(state: JointState, segment_a: ComplexSignal,
              segment_b: ComplexSignal, cfg: ProtocolConfig, rng,
              round_index: int = 0):
    """Apply one protocol round to a state; returns (state, q_bit, p_bit).

    Both segments must last exactly cfg.seg_time.  Uses two uniforms from
    rng for the qubit and parity measurements.
    """
    from .engine import (_apply_qubit_gate, _apply_segment, _cnod,
                         _measure_parity, _measure_qubit,
                         ROT_X_HALF, ROT_X_PI, ROT_Y_HALF)
    for seg in (segment_a, segment_b):
        if abs(seg.duration - cfg.seg_time) > 1e-9:
            raise ValueError("segment duration must equal cfg.seg_time")
    if not isinstance(rng, RandomStream):
        rng = RandomStream(int(rng))
    ws = _Workspace(cfg)
    alpha_r = cfg.round_alpha(round_index)
    st = state.amplitudes.reshape(1, 2, cfg.system.n_fock).copy()
    st = _apply_qubit_gate(st, ROT_X_HALF, 0, 1)
    st = _cnod(ws, st, alpha_r)
    st = _apply_segment(ws, st, segment_a.samples[None, :] * cfg.input_scale,
                        np.full(len(segment_a.samples), segment_a.dt))
    st = _apply_qubit_gate(st, ROT_X_PI, 0, 1)
    st = _apply_segment(ws, st, segment_b.samples[None, :] * cfg.input_scale,
                        np.full(len(segment_b.samples), segment_b.dt))
    st = _cnod(ws, st, -alpha_r)
    st = _apply_qubit_gate(st, ROT_Y_HALF, 0, 1)
    q_bits, st = _measure_qubit(st, np.array([rng.next_uniform()]), 0, 1)
    p_bits, st = _measure_parity(st, np.array([rng.next_uniform()]), ws.even_mask)
    return JointState(state.dims, st.reshape(-1)), int(q_bits[0]), int(p_bits[0])


# ---------------------------------------------------------------------------
# closed-form oracles
# ---------------------------------------------------------------------------

def geometric_phase_oracle(alpha: complex, beta: complex, prior="g") -> float:
    """Excited-state probability of the round's qubit measurement.

    A = i(alpha beta* - alpha* beta) = 2 Im(alpha* beta) is the enclosed
    phase-space area; P(e|g) = cos^2(A - pi/4), P(e|e) = sin^2(A - pi/4).
    beta is the per-segment input displacement.
    """
    area = 2.0 * float(np.imag(np.conj(alpha) * beta))
    if prior in ("g", 0):
        return float(np.cos(area - np.pi / 4) ** 2)
    if prior in ("e", 1):
        return float(np.sin(area - np.pi / 4) ** 2)
    raise ValueError("prior must be 'g' or 'e'")


def parity_trajectory_oracle(beta: complex, m: int) -> np.ndarray:
    """Exact Pr[x | beta] over parity bitstrings x in {0,1}^m.

    Expands prod_i [1/2 + (-1)^(x_i xor x_{i-1}) (D(2 beta)+D(-2 beta))/4]
    over the vacuum (x_0 = 0).  Collinear displacements compose without
    phases, so each product term reduces to <0|D(2k beta)|0> =
    exp(-2 k^2 |beta|^2); the expansion is carried as a polynomial over
    the net displacement count k.  Index order: bit 0 most significant.
    """
    if m > 12:
        raise ValueError("m > 12 would expand a 3^m product; refuse")
    b2 = abs(beta) ** 2
    ks = np.arange(-m, m + 1)
    gauss = np.exp(-2.0 * ks.astype(float) ** 2 * b2)
    table = np.empty(2 ** m)
    for idx in range(2 ** m):
        bits = (idx >> np.arange(m - 1, -1, -1)) & 1
        prev = np.concatenate([[0], bits[:-1]])
        signs = 1.0 - 2.0 * np.bitwise_xor(bits, prev)
        coef = np.zeros(2 * m + 1)
        coef[m] = 1.0
        for c in signs:
            nxt = 0.5 * coef
            nxt[:-1] += 0.25 * c * coef[1:]
            nxt[1:] += 0.25 * c * coef[:-1]
            coef = nxt
        table[idx] = float(coef @ gauss)
    return table


def parity_chain_bruteforce(beta: complex, m: int, n_fock: int = 48) -> np.ndarray:
    """Independent projector-chain oracle: P_xM D(beta) ... P_x1 D(beta)|0>.

    Explicit truncated matrices; used to cross-check the closed form.
    """
    d = displacement(beta, n_fock).matrix
    even = (np.arange(n_fock) % 2 == 0)
    table = np.empty(2 ** m)
    for idx in range(2 ** m):
        bits = (idx >> np.arange(m - 1, -1, -1)) & 1
        psi = np.zeros(n_fock, dtype=complex)
        psi[0] = 1.0
        for x in bits:
            psi = d @ psi
            mask = even if x == 0 else ~even
            psi = np.where(mask, psi, 0.0)
        table[idx] = float(np.real(np.vdot(psi, psi)))
    return table


def function_space_rank(m: int, beta_grid) -> int:
    """Numerical rank of the (2^m x grid) matrix of Pr[x | beta] values."""
    beta_grid = np.asarray(beta_grid)
    if len(beta_grid) < 2 ** m:
        raise ValueError("grid must have at least 2^m points")
    mat = np.stack([parity_trajectory_oracle(b, m) for b in beta_grid], axis=1)
    svals = np.linalg.svd(mat, compute_uv=False)
    return int(np.sum(svals > 1e-9 * svals[0]))


def kerr_revival_check(alpha: complex, cfg: ProtocolConfig,
                       delay: float = None) -> float:
    """Displace-wait-undisplace fidelity of the conditional branches.

    Prepares (|g>+|e>)/sqrt(2) (x) |0>, applies CNOD(alpha), evolves
    freely (all drives zero, 4th-order integrator) for the delay, applies
    CNOD(alpha) again and returns the vacuum population of the oscillator.
    At delay = 2*pi/chi the branches interfere back to vacuum.
    """
    params = cfg.system
    if delay is None:
        delay = params.kerr_period
    dims = HilbertDims(n_fock=params.n_fock, n_qubits=1)
    state = make_vacuum(dims)
    state = qubit_rotation("Y", np.pi / 2, dims).apply(state)  # (|g>+|e>)/sqrt2
    gate = cnod(alpha, dims)
    state = gate.apply(state)
    if delay > 0:
        state = evolve(state, None, None, params, delay)
    state = gate.apply(state)
    grid = state.grid()
    return float(np.sum(np.abs(grid[:, 0]) ** 2))


# ---------------------------------------------------------------------------
# trajectory files
# ---------------------------------------------------------------------------

def write_trajectories(path, records, signal_id: str) -> None:
    """JSON-lines, one record per shot."""
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps({
                "seed": int(rec.shot_seed),
                "bits": [int(b) for b in rec.bits],
                "signal_id": signal_id,
            }) + "\n")


def read_trajectories(path):
    records, signal_ids = [], []
    with open(path) as fh:
        for line in fh:
            obj = json.loads(line)
            records.append(TrajectoryRecord(np.array(obj["bits"], np.uint8),
                                            obj["seed"]))
            signal_ids.append(obj["signal_id"])
    return records, signal_ids
