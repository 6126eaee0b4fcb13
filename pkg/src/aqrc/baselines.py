"""Classical and component-ablation baselines.

Leaky echo state network (digital reservoir), cavity-only mean-field
reservoir, and qubit-only two-level reservoir.  All are deterministic
functions of their seeds.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .engine import ProtocolConfig
from .errors import DegenerateReservoir, SignalTooShort
from .features import MomentFeatureSpec, FeatureVector, central_moments
from .rng import RandomStream, generator, shot_seeds, uniforms_for_seeds
from .signals import ComplexSignal

ROT2_X_HALF = np.array([[1, -1j], [-1j, 1]]) / np.sqrt(2)
ROT2_X_PI = np.array([[0, -1j], [-1j, 0]], dtype=complex)


# ---------------------------------------------------------------------------
# leaky echo state network
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LesnConfig:
    """Leaky ESN hyperparameters.

    The state update is x_n = (1 - a*gamma) x_{n-1} + gamma * relu(W_in u_n
    + W_res x_{n-1}) from x_0 = 0; W_res is a sparse random matrix rescaled
    so its largest singular value equals rho.  For static tasks the same
    input is repeated `depth` times.
    """

    r: int = 64
    d: int = 2
    depth: int = 2
    a: float = 1.0
    gamma: float = 1.0
    w_in: float = 1.0
    rho: float = 0.9
    p_s: float = 0.5
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.a * self.gamma <= 1.0:
            raise ValueError("a * gamma must lie in [0, 1]")
        if not 0.0 < self.p_s <= 1.0:
            raise ValueError("p_s must lie in (0, 1]")
        if self.activation != "relu":
            raise ValueError("only relu is supported")


def lesn_build(cfg: LesnConfig):
    """(W_in, W_res): W_in uniform on [-w_in, w_in]; W_res = rho/s_max * W_R
    with W_R sparse uniform and s_max its largest singular value."""
    rng = generator(cfg.seed, stream=0x1e5)
    w_in = rng.uniform(-cfg.w_in, cfg.w_in, size=(cfg.r, cfg.d))
    w_r = rng.uniform(-1.0, 1.0, size=(cfg.r, cfg.r))
    w_r *= rng.uniform(0.0, 1.0, size=(cfg.r, cfg.r)) < cfg.p_s
    if not np.any(w_r):
        raise DegenerateReservoir("reservoir matrix is identically zero")
    s_max = np.linalg.svd(w_r, compute_uv=False)[0]
    return w_in, (cfg.rho / s_max) * w_r


def lesn_states(cfg: LesnConfig, w_in, w_res, inputs) -> np.ndarray:
    """Batched final states: inputs (E, d) repeated depth times -> (E, r)."""
    u = np.atleast_2d(np.asarray(inputs, dtype=float))
    x = np.zeros((len(u), cfg.r))
    drive = u @ w_in.T
    leak = 1.0 - cfg.a * cfg.gamma
    for _ in range(cfg.depth):
        x = leak * x + cfg.gamma * np.maximum(drive + x @ w_res.T, 0.0)
    return x


def lesn_run(cfg: LesnConfig, w_in, w_res, inputs) -> np.ndarray:
    """Final state x_N after the input sequence u_1..u_N (one example)."""
    seq = np.atleast_2d(np.asarray(inputs, dtype=float))
    x = np.zeros(cfg.r)
    leak = 1.0 - cfg.a * cfg.gamma
    for u_n in seq:
        x = leak * x + cfg.gamma * np.maximum(w_in @ u_n + w_res @ x, 0.0)
    return x


LESN_SWEEP_GRID = {
    "a": (0.25, 0.5, 0.75, 1.0),
    "gamma": (0.25, 0.5, 0.75, 1.0),
    "w_in": (0.1, 0.5, 1.0, 2.0),
    "rho": (0.5, 0.9, 1.2),
    "p_s": (0.1, 0.5, 1.0),
    "depth": (1, 2, 3),
}


def lesn_hyperparameter_sweep(inputs, labels, idx_train, idx_test, r: int,
                              seed: int, n_probe: int = 3, grid=None):
    """Best (config, val accuracy) over the sweep grid.

    Scored by validation accuracy (20% of the training split) averaged
    over n_probe random reservoir instances, trained by ridge.
    """
    from .learn import TrainConfig, fit_readout, train_val_split
    grid = grid or LESN_SWEEP_GRID
    labels = np.asarray(labels, dtype=int)
    idx_fit, idx_val = train_val_split(len(idx_train), 0.2, seed)
    fit_rows, val_rows = idx_train[idx_fit], idx_train[idx_val]
    probe_cfg = TrainConfig(method="pinv", ridge_eps=(1e-6, 1e-3, 1.0), seed=seed)
    best = None
    for depth in grid["depth"]:
        for a in grid["a"]:
            for gamma in grid["gamma"]:
                if not 0.0 <= a * gamma <= 1.0:
                    continue
                for w_in in grid["w_in"]:
                    for rho in grid["rho"]:
                        for p_s in grid["p_s"]:
                            accs = []
                            for probe in range(n_probe):
                                cfg = LesnConfig(r=r, d=inputs.shape[1],
                                                 depth=depth, a=a, gamma=gamma,
                                                 w_in=w_in, rho=rho, p_s=p_s,
                                                 seed=seed * 7919 + probe)
                                wi, wr = lesn_build(cfg)
                                feats = lesn_states(cfg, wi, wr, inputs)
                                pipe = fit_readout(feats[fit_rows], labels[fit_rows],
                                                   probe_cfg)
                                acc, _ = pipe.evaluate(feats[val_rows], labels[val_rows])
                                accs.append(acc)
                            score = float(np.mean(accs))
                            if best is None or score > best[1]:
                                best = (cfg, score)
    return best


def lesn_ensemble_accuracy(inputs, labels, idx_train, idx_test,
                           base_cfg: LesnConfig, n_instances: int,
                           seed: int, train_cfg=None):
    """Test accuracies of n_instances random reservoirs at fixed
    hyperparameters, each trained with the best of the two methods."""
    from .learn import TrainConfig, fit_readout
    train_cfg = train_cfg or TrainConfig(seed=seed)
    labels = np.asarray(labels, dtype=int)
    accs = []
    for inst in range(n_instances):
        cfg = replace(base_cfg, seed=seed * 104729 + inst)
        wi, wr = lesn_build(cfg)
        feats = lesn_states(cfg, wi, wr, inputs)
        pipe = fit_readout(feats[idx_train], labels[idx_train], train_cfg)
        acc, _ = pipe.evaluate(feats[idx_test], labels[idx_test])
        accs.append(float(acc))
    return np.array(accs)


# ---------------------------------------------------------------------------
# cavity-only reservoir (linear mean field + moment post-processing)
# ---------------------------------------------------------------------------

def cavity_mean_field_samples(signal: ComplexSignal, cfg: ProtocolConfig,
                              n_shots: int, shot_stride: float = None) -> np.ndarray:
    """Homodyne record of the bare linear cavity, sampled per shot.

    The cavity resets each shot and integrates d alpha/dt = -i eps(t); a
    transmission-style homodyne infers one quadrature of the mean field,
    Re alpha(t), read at the end of each of the 2 * rounds input segments.
    That matches the measurement count M of the full protocol.
    """
    stride = cfg.shot_exposure if shot_stride is None else shot_stride
    dt = signal.dt
    needed = (n_shots - 1) * stride + cfg.shot_exposure
    if signal.duration + 1e-9 < needed:
        raise SignalTooShort("signal too short for the requested shots")
    cum = np.concatenate([[0.0], np.cumsum(signal.samples) * dt])
    t_edges = np.arange(len(cum)) * dt

    def integral_to(t):
        """integral of eps over [0, t) on the sample-and-hold grid."""
        t = np.asarray(t, dtype=float)
        k = np.minimum(np.floor(t / dt + 1e-12).astype(int), len(cum) - 2)
        return cum[k] + (t - t_edges[k]) * signal.samples[np.minimum(k, len(signal.samples) - 1)]

    starts = np.arange(n_shots) * stride
    cols = []
    for s in range(2 * cfg.rounds_per_shot):
        t_meas = starts + (s + 1) * cfg.seg_time
        alpha = -1j * cfg.input_scale * (integral_to(t_meas) - integral_to(starts))
        cols.append(alpha.real)
    return np.stack(cols, axis=1)


def cavity_only_features(signal: ComplexSignal, cfg: ProtocolConfig,
                         n_shots: int, spec: MomentFeatureSpec,
                         shot_stride: float = None) -> FeatureVector:
    """Moment features of the sampled mean-field values.

    The moment functionals are evaluated about zero: the homodyne samples
    are continuous and carry the signal in their mean, so centering would
    reduce a time-independent input to purely linear features.  The
    uncentered second/third products are what make this baseline more than
    a linear classifier.
    """
    values = cavity_mean_field_samples(signal, cfg, n_shots, shot_stride)
    return central_moments(values, spec, check_bounds=False, center=False)


# ---------------------------------------------------------------------------
# qubit-only reservoir
# ---------------------------------------------------------------------------

def _rabi_step(states, omegas, durations):
    """Apply exp(-i (w s+ + w* s-) dt) piecewise to (B, 2) qubit states."""
    for p in range(omegas.shape[1]):
        w = omegas[:, p]
        dt = durations[:, p] if durations.ndim == 2 else np.full(len(w), durations[p])
        theta = np.abs(w) * dt
        cos_t = np.cos(theta)
        sin_t = np.sin(theta)
        phase = np.exp(1j * np.angle(w))
        g, e = states[:, 0].copy(), states[:, 1].copy()
        states[:, 0] = cos_t * g - 1j * sin_t * np.conj(phase) * e
        states[:, 1] = cos_t * e - 1j * sin_t * phase * g
    return states


def _qubit_only_chunk(qcfg: ProtocolConfig, provider, shot_indices, uniforms):
    """Round loop shared by the batched and single-shot surfaces."""
    n = len(shot_indices)
    n_rounds = qcfg.rounds_per_shot
    states = np.zeros((n, 2), dtype=complex)
    states[:, 0] = 1.0
    bits = np.zeros((n, n_rounds), dtype=np.uint8)
    rows = np.arange(n)
    for r in range(n_rounds):
        states = np.einsum("ij,bj->bi", ROT2_X_HALF, states)
        om, dur = provider(shot_indices, 2 * r)
        states = _rabi_step(states, om, dur)
        states = np.einsum("ij,bj->bi", ROT2_X_PI, states)
        om, dur = provider(shot_indices, 2 * r + 1)
        states = _rabi_step(states, om, dur)
        states = np.einsum("ij,bj->bi", ROT2_X_HALF, states)
        p_g = np.abs(states[:, 0]) ** 2
        p_g /= p_g + np.abs(states[:, 1]) ** 2
        bits[:, r] = (uniforms[:, r] >= p_g).astype(np.uint8)
        states = np.zeros_like(states)
        states[rows, bits[:, r]] = 1.0
    return bits


def qubit_only_trajectories(signal: ComplexSignal, cfg: ProtocolConfig,
                            n_shots: int, master_seed: int, stream: int = 0,
                            shot_stride: float = None):
    """Two-level reservoir: the signal drives the qubit directly.

    Control X_pi/2 - segment - X_pi - segment - X_pi/2 per round, with a
    projective measurement after every round; a zero signal composes to
    X_2pi and reproduces the measured state deterministically.  Eight
    single-bit rounds replace the four two-bit rounds of the full system,
    so each shot lasts twice as long.
    """
    from .reservoir import signal_segment_provider
    qcfg = replace(cfg, rounds_per_shot=cfg.rounds_per_shot * 2)
    stride = qcfg.shot_exposure if shot_stride is None else shot_stride
    provider = signal_segment_provider(signal, qcfg, shot_stride=stride)
    seeds = shot_seeds(master_seed, stream, n_shots)
    uni = uniforms_for_seeds(seeds, qcfg.rounds_per_shot)
    bits = _qubit_only_chunk(qcfg, provider, np.arange(n_shots), uni)
    return bits, seeds


def qubit_only_run(signal: ComplexSignal, cfg: ProtocolConfig, rng):
    """Single-shot surface; rng's seed is the shot seed."""
    from .reservoir import TrajectoryRecord, signal_segment_provider
    if not isinstance(rng, RandomStream):
        rng = RandomStream(int(rng))
    qcfg = replace(cfg, rounds_per_shot=cfg.rounds_per_shot * 2)
    if signal.duration + 1e-9 < qcfg.shot_exposure:
        raise SignalTooShort("signal too short for the qubit-only shot")
    provider = signal_segment_provider(signal, qcfg, shot_stride=0.0)
    uni = uniforms_for_seeds(np.array([rng.seed], dtype=np.uint64),
                             qcfg.rounds_per_shot)
    bits = _qubit_only_chunk(qcfg, provider, np.zeros(1, dtype=int), uni)
    return TrajectoryRecord(bits[0], rng.seed)
