"""Experiment harness: datasets, trajectory simulation, feature pipelines,
and the classification tasks end to end.

Real-time semantics throughout: every shot consumes a fresh stretch of the
input signal (shot k starts at k * stride), and larger shot budgets extend
the same signal rather than replaying it.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import fftconvolve

from .baselines import cavity_only_features, qubit_only_trajectories
from .engine import ProtocolConfig, constant_signal_trajectories, run_trajectories
from .errors import TruncationGuardTripped
from .features import MomentFeatureSpec, central_moments, feature_dimension
from .fock import SystemParams
from .learn import TrainConfig, evaluate, fit_readout, svd_project
from .reservoir import signal_segment_provider
from .rng import derive_seed, generator
from .signals import (
    FILTERED_NOISE,
    MODULATION,
    SPIRAL,
    SYMBOL_DURATION,
    SYMBOLS_PER_SHOT,
    ComplexSignal,
    LabeledExample,
    TASK_CLASS_COUNTS,
    constellation,
    gen_spiral,
    noise_class_kernel,
    spiral_point,
)

NOISE_PIECES_PER_SEGMENT = 41  # white-noise sample grid: dt = seg_time / 41

# mean per-round photon number the input-scale calibration aims for
DEFAULT_TARGET_PHOTONS = {MODULATION: 0.5, FILTERED_NOISE: 0.5}


def stream_id(*parts) -> int:
    """Stable 64-bit stream id from string/int parts (process-independent)."""
    text = "/".join(str(p) for p in parts)
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(),
                          "little")


@dataclass(frozen=True)
class TaskSetup:
    """One classification task at desk scale."""

    task: str
    n_train: int
    n_test: int
    shot_budgets: tuple
    protocol: ProtocolConfig
    feature: MomentFeatureSpec = field(default_factory=MomentFeatureSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    master_seed: int = 2024
    class_filter: tuple | None = None  # noise subtasks: restrict class ids

    def __post_init__(self):
        if self.task not in TASK_CLASS_COUNTS:
            raise ValueError(f"unknown task {self.task!r}")
        if tuple(self.shot_budgets) != tuple(sorted(self.shot_budgets)):
            raise ValueError("shot_budgets must be ascending")

    @property
    def classes(self) -> tuple:
        if self.class_filter is not None:
            return tuple(self.class_filter)
        return tuple(range(TASK_CLASS_COUNTS[self.task]))

    @property
    def max_budget(self) -> int:
        return int(max(self.shot_budgets))


def default_protocol(task: str, n_fock: int = None) -> ProtocolConfig:
    """Per-task protocol defaults.

    The spiral runs at the largest CNOD amplitude |alpha| = 1 with four
    distinct CNOD phases: at small alpha the geometric phase stays in the
    near-linear regime of sin(2A) and the moment features span little
    beyond cubic polynomials of the quadratures, which caps a linear
    readout well below the target accuracy; extra phase projections
    enlarge the spanned function space.  Time-dependent tasks keep the
    small alpha since the qubit stays entangled through the measurement
    anyway.
    """
    if n_fock is None:
        # streamed noise aligns consecutive segment displacements (600-ns
        # correlations), so its walk has heavy tails and needs headroom
        n_fock = 48 if task == FILTERED_NOISE else 32
    system = SystemParams(n_fock=n_fock)
    if task == SPIRAL:
        return ProtocolConfig(alpha=1.0,
                              cnod_phases=(0, np.pi / 4, np.pi / 2, 3 * np.pi / 4),
                              system=system, input_scale=1.0)
    if task == MODULATION:
        # readout dead time sized so one shot consumes exactly 8 symbols of
        # the stream; the cavity keeps integrating the signal through it
        rounds = 4
        coherent = 2.0 * system.kerr_period
        dead = (SYMBOLS_PER_SHOT * SYMBOL_DURATION) / rounds - coherent
        return ProtocolConfig(alpha=0.2, system=system, input_scale=1.0,
                              dead_time_per_round=dead)
    return ProtocolConfig(alpha=0.2, system=system, input_scale=1.0)


def shot_stride(task: str, protocol: ProtocolConfig) -> float:
    """Signal consumed per shot; the stream is never skipped, so this is
    the shot exposure (for modulation the dead-time windows are sized to
    land exactly on 8 symbols per shot)."""
    return protocol.shot_exposure


def spiral_drive(point: complex, seg_time: float) -> complex:
    """Drive amplitude that displaces the oscillator by `point` per round.

    One segment of constant drive eps displaces the ground branch by
    -i * eps * T, so eps = i * point / T makes the per-round displacement
    equal the (I, Q) point itself (max sqrt(0.3), i.e. 0.3 photons).
    """
    return 1j * point / seg_time


# ---------------------------------------------------------------------------
# input-scale calibration
# ---------------------------------------------------------------------------

def calibrate_input_scale(task: str, protocol: ProtocolConfig,
                          master_seed: int, target_photons: float = None,
                          n_trial: int = 100) -> float:
    """Scale so the mean per-round photon number sits at target_photons,
    backed off until 100 trial shots clear the truncation guard.

    The per-round oscillator displacement is beta = -i * integral of the
    scaled drive over one segment; the calibration first solves
    scale^2 E|beta|^2 = target over n_trial trial segments of the task's
    signal distribution, then simulates trial shots of every class and
    shrinks the scale by 0.75 until none trips the guard (long-correlated
    noise aligns displacements across rounds, so the quadrature estimate
    alone can run too hot).  The spiral is pinned by its own definition
    (max displacement = sqrt(0.3) photons) and returns 1.
    """
    if task == SPIRAL:
        return 1.0
    if target_photons is None:
        target_photons = DEFAULT_TARGET_PHOTONS[task]
    seg_t = protocol.seg_time
    rng = generator(master_seed, stream_id(task, "calibration"))
    if task == MODULATION:
        from .signals import gen_modulated
        acc = []
        for _ in range(n_trial):
            cls = int(rng.integers(0, TASK_CLASS_COUNTS[MODULATION]))
            sig = gen_modulated(cls, SYMBOLS_PER_SHOT, rng).signal
            offset = rng.uniform(0, SYMBOL_DURATION)
            edges = np.arange(len(sig.samples) + 1) * sig.dt - offset
            lo = np.clip(edges[:-1], 0, seg_t)
            hi = np.clip(edges[1:], 0, seg_t)
            acc.append(abs(np.sum(sig.samples * (hi - lo))) ** 2)
    else:
        dt = seg_t / NOISE_PIECES_PER_SEGMENT
        acc = []
        for _ in range(n_trial):
            cls = rng.integers(0, TASK_CLASS_COUNTS[FILTERED_NOISE])
            kern = noise_class_kernel(int(cls), dt)
            pad = len(kern.taps) - 1
            raw = rng.uniform(-1, 1, NOISE_PIECES_PER_SEGMENT + pad) \
                + 1j * rng.uniform(-1, 1, NOISE_PIECES_PER_SEGMENT + pad)
            seg = np.convolve(raw, kern.taps * kern.dt, mode="valid")
            acc.append(abs(np.sum(seg) * dt) ** 2)
    mean_beta2 = float(np.mean(acc))
    scale = float(np.sqrt(target_photons / mean_beta2))

    # trial shots run against a 50x tighter guard: the production run draws
    # many orders of magnitude more shots than the trial, so the trial must
    # bound the tail of the top-Fock population, not its typical value
    trial_system = replace(protocol.system,
                           guard_threshold=protocol.system.guard_threshold * 0.02)
    trial_setup = TaskSetup(task, 0, 0, (1,),
                            replace(protocol, system=trial_system),
                            master_seed=master_seed)
    classes = trial_setup.classes
    shots_per_class = max(1, n_trial // len(classes))
    for _ in range(30):
        try:
            for class_id in classes:
                entry = DatasetEntry(0, class_id,
                                     int(derive_seed(master_seed,
                                                     stream_id(task, "cal-trial"),
                                                     class_id)))
                simulate_example_bits(trial_setup, entry, shots_per_class, scale)
            return scale
        except TruncationGuardTripped:
            scale *= 0.8
    raise TruncationGuardTripped("calibration could not find a safe input scale")


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

@dataclass
class DatasetEntry:
    """One example: enough metadata to regenerate its signal lazily."""

    index: int
    class_id: int
    seed: int
    point: complex = None  # spiral only


def build_dataset(setup: TaskSetup) -> list:
    """Deterministic example list; train rows first, then test rows."""
    entries = []
    if setup.task == SPIRAL:
        n_total = setup.n_train + setup.n_test
        rng = generator(setup.master_seed, stream_id(SPIRAL, "dataset"))
        per_class = (n_total + 1) // 2
        examples = gen_spiral(per_class, rng,
                              round_duration=2 * setup.protocol.seg_time)
        order = generator(setup.master_seed,
                          stream_id(SPIRAL, "order")).permutation(len(examples))
        for i, src in enumerate(order[:n_total]):
            ex = examples[src]
            entries.append(DatasetEntry(i, ex.class_id,
                                        int(derive_seed(setup.master_seed,
                                                        stream_id(SPIRAL, "sig"), i)),
                                        point=complex(ex.signal.samples[0])))
        return entries
    classes = setup.classes
    per_class = (setup.n_train + setup.n_test) // len(classes)
    n_tr_pc = setup.n_train // len(classes)
    i = 0
    for split, count in (("train", n_tr_pc), ("test", per_class - n_tr_pc)):
        for class_id in classes:
            for k in range(count):
                seed = int(derive_seed(setup.master_seed,
                                       stream_id(setup.task, "sig", split, class_id), k))
                entries.append(DatasetEntry(i, class_id, seed))
                i += 1
    return entries


def split_indices(setup: TaskSetup, entries) -> tuple:
    if setup.task == SPIRAL:
        idx = np.arange(len(entries))
        return idx[:setup.n_train], idx[setup.n_train:]
    return (np.arange(setup.n_train),
            np.arange(setup.n_train, setup.n_train + setup.n_test))


def example_signal(setup: TaskSetup, entry: DatasetEntry, n_shots: int,
                   input_scale: float = 1.0) -> ComplexSignal:
    """Render the stretch of signal that n_shots will consume.

    input_scale here is the task calibration factor baked into the signal
    source (the protocol's own input_scale stays at 1 for streamed tasks).
    """
    stride = shot_stride(setup.task, setup.protocol)
    if setup.task == SPIRAL:
        return ComplexSignal.constant(
            spiral_drive(entry.point, setup.protocol.seg_time),
            setup.protocol.shot_exposure)
    rng = np.random.Generator(np.random.Philox(key=entry.seed))
    if setup.task == MODULATION:
        from .signals import gen_modulated
        n_symbols = n_shots * SYMBOLS_PER_SHOT
        return gen_modulated(entry.class_id, n_symbols, rng,
                             input_scale=input_scale).signal
    dt = setup.protocol.seg_time / NOISE_PIECES_PER_SEGMENT
    n_samples = int(np.ceil((n_shots * stride) / dt)) + 1
    kern = noise_class_kernel(entry.class_id, dt)
    pad = len(kern.taps) - 1
    raw = rng.uniform(-1, 1, n_samples + pad) + 1j * rng.uniform(-1, 1, n_samples + pad)
    filt = fftconvolve(raw, kern.taps * kern.dt, mode="valid")
    return ComplexSignal(filt * input_scale, dt)


# ---------------------------------------------------------------------------
# trajectory simulation and features
# ---------------------------------------------------------------------------

def simulate_example_bits(setup: TaskSetup, entry: DatasetEntry, n_shots: int,
                          input_scale: float, threads: int = 1) -> np.ndarray:
    """(n_shots, M) measurement bits for one example."""
    cfg = setup.protocol
    if setup.task == SPIRAL:
        bits, _seeds = constant_signal_trajectories(
            cfg, spiral_drive(entry.point, cfg.seg_time), n_shots,
            setup.master_seed, stream=stream_id(SPIRAL, "shots", entry.index))
        return bits
    signal = example_signal(setup, entry, n_shots, input_scale)
    provider = signal_segment_provider(
        signal, cfg, shot_stride=shot_stride(setup.task, cfg))
    bits, _seeds = run_trajectories(
        cfg, provider, n_shots, setup.master_seed,
        stream=stream_id(setup.task, "shots", entry.index),
        chunk_size=16384, threads=threads)
    return bits


def features_by_budget(setup: TaskSetup, entries=None, threads: int = 1,
                       input_scale: float = None, progress=None) -> dict:
    """{budget: (n_examples, n_features)} with budget-prefix shot reuse.

    Budget N uses shots 0..N-1 of each example, so ascending budgets share
    one simulation at the largest budget.
    """
    entries = build_dataset(setup) if entries is None else entries
    if input_scale is None:
        input_scale = calibrate_input_scale(setup.task, setup.protocol,
                                            setup.master_seed)
    budgets = sorted(int(b) for b in setup.shot_budgets)
    n_max = budgets[-1]
    out = {b: np.empty((len(entries), feature_dimension(setup.feature)))
           for b in budgets}
    for entry in entries:
        bits = simulate_example_bits(setup, entry, n_max, input_scale, threads)
        for b in budgets:
            out[b][entry.index] = central_moments(bits[:b], setup.feature).values
        if progress is not None:
            progress(entry.index + 1, len(entries))
    return out


def raw_input_features(setup: TaskSetup, entries) -> np.ndarray:
    """Features for the linear-on-raw baseline.

    Spiral: the (I, Q) point itself.  Modulation: re/im of the signal
    averaged over symbol-length bins of the first shot.  Noise: re/im of
    shot-length window integrals, whose distribution the DC equalization
    makes identical across classes (a linear integrator cannot separate
    them; finer bins would leak the classes' different per-sample
    variances through one-sided linear thresholds).
    """
    if setup.task == SPIRAL:
        return np.array([[e.point.real, e.point.imag] for e in entries])
    n_bins = 8
    if setup.task == FILTERED_NOISE:
        stride = shot_stride(setup.task, setup.protocol)
        feats = np.empty((len(entries), 2 * n_bins))
        for e in entries:
            sig = example_signal(setup, e, n_shots=n_bins, input_scale=1.0)
            edges = np.round(np.arange(n_bins + 1) * stride / sig.dt).astype(int)
            edges = np.minimum(edges, len(sig.samples))
            for b in range(n_bins):
                seg = sig.samples[edges[b]:max(edges[b + 1], edges[b] + 1)]
                feats[e.index, 2 * b] = seg.real.sum() * sig.dt
                feats[e.index, 2 * b + 1] = seg.imag.sum() * sig.dt
        return feats
    bin_t = shot_stride(setup.task, setup.protocol) / n_bins
    feats = np.empty((len(entries), 2 * n_bins))
    for e in entries:
        sig = example_signal(setup, e, n_shots=1, input_scale=1.0)
        edges = np.round(np.arange(n_bins + 1) * bin_t / sig.dt).astype(int)
        edges = np.minimum(edges, len(sig.samples))
        for b in range(n_bins):
            seg = sig.samples[edges[b]:max(edges[b + 1], edges[b] + 1)]
            feats[e.index, 2 * b] = seg.real.mean()
            feats[e.index, 2 * b + 1] = seg.imag.mean()
    return feats


# ---------------------------------------------------------------------------
# task runners
# ---------------------------------------------------------------------------

@dataclass
class TaskResult:
    setup: TaskSetup
    curve: list                 # (budget, accuracy, n_train, n_test)
    final_accuracy: float
    confusion: np.ndarray
    linear_baseline_accuracy: float
    feature_matrix: np.ndarray  # at the top budget
    labels: np.ndarray
    svd_coords: np.ndarray
    input_scale: float
    pipelines: dict = None


def run_classification_task(setup: TaskSetup, threads: int = 1,
                            progress=None) -> TaskResult:
    """Simulate, train, and evaluate one task over its shot budgets."""
    entries = build_dataset(setup)
    labels = np.array([e.class_id for e in entries])
    idx_train, idx_test = split_indices(setup, entries)
    scale = calibrate_input_scale(setup.task, setup.protocol, setup.master_seed)
    feats = features_by_budget(setup, entries, threads=threads,
                               input_scale=scale, progress=progress)
    curve, pipelines = [], {}
    confusion = None
    final_acc = None
    for budget in sorted(feats):
        pipe = fit_readout(feats[budget][idx_train], labels[idx_train], setup.train)
        acc, conf = pipe.evaluate(feats[budget][idx_test], labels[idx_test])
        curve.append((budget, float(acc), len(idx_train), len(idx_test)))
        pipelines[budget] = pipe
        confusion, final_acc = conf, float(acc)

    raw = raw_input_features(setup, entries)
    raw_pipe = fit_readout(raw[idx_train], labels[idx_train], setup.train)
    raw_acc, _ = raw_pipe.evaluate(raw[idx_test], labels[idx_test])

    top = max(feats)
    return TaskResult(
        setup=setup, curve=curve, final_accuracy=final_acc, confusion=confusion,
        linear_baseline_accuracy=float(raw_acc), feature_matrix=feats[top],
        labels=labels, svd_coords=svd_project(feats[top], 2),
        input_scale=scale, pipelines=pipelines)


def run_ablation(setup: TaskSetup, threads: int = 1) -> dict:
    """Spiral at one budget: full QRC vs cavity-only vs qubit-only."""
    budget = setup.max_budget
    entries = build_dataset(setup)
    labels = np.array([e.class_id for e in entries])
    idx_train, idx_test = split_indices(setup, entries)
    result = {}

    qrc = run_classification_task(setup, threads=threads)
    result["qrc"] = qrc.final_accuracy

    cfg = setup.protocol
    cav = np.empty((len(entries), feature_dimension(setup.feature)))
    for e in entries:
        sig = ComplexSignal.constant(spiral_drive(e.point, cfg.seg_time),
                                     cfg.shot_exposure)
        fv = cavity_only_features(sig, cfg, n_shots=8, spec=setup.feature,
                                  shot_stride=0.0)
        cav[e.index] = fv.values
    pipe = fit_readout(cav[idx_train], labels[idx_train], setup.train)
    acc, _ = pipe.evaluate(cav[idx_test], labels[idx_test])
    result["cavity_only"] = float(acc)

    qb = np.empty_like(cav)
    for e in entries:
        sig = ComplexSignal.constant(spiral_drive(e.point, cfg.seg_time),
                                     2 * cfg.shot_exposure)
        bits, _ = qubit_only_trajectories(
            sig, cfg, budget, setup.master_seed,
            stream=stream_id(SPIRAL, "qubit_only", e.index), shot_stride=0.0)
        qb[e.index] = central_moments(bits, setup.feature).values
    pipe = fit_readout(qb[idx_train], labels[idx_train], setup.train)
    acc, _ = pipe.evaluate(qb[idx_test], labels[idx_test])
    result["qubit_only"] = float(acc)
    return result


def lesn_spiral_benchmark(r: int, n_instances: int, master_seed: int = 2024,
                          n_train: int = 1000, n_test: int = 500,
                          sweep_seed: int = 1):
    """Ensemble accuracy of random LESNs on the spiral after a sweep.

    Inputs are the raw (I, Q) points with a constant bias channel
    appended: a bias-free ReLU reservoir is positively homogeneous in its
    input, which provably caps this through-origin spiral at 75 percent,
    so the benchmark uses the standard ESN bias input unit.  Returns
    (best LesnConfig, per-instance accuracy array).
    """
    from .baselines import lesn_ensemble_accuracy, lesn_hyperparameter_sweep
    setup = desk_setup(SPIRAL, master_seed=master_seed)
    setup = replace(setup, n_train=n_train, n_test=n_test)
    entries = build_dataset(setup)
    labels = np.array([e.class_id for e in entries])
    idx_train, idx_test = split_indices(setup, entries)
    inputs = np.array([[e.point.real, e.point.imag, 1.0] for e in entries])
    best_cfg, _val = lesn_hyperparameter_sweep(
        inputs, labels, idx_train, idx_test, r=r, seed=sweep_seed)
    accs = lesn_ensemble_accuracy(inputs, labels, idx_train, idx_test,
                                  best_cfg, n_instances, seed=sweep_seed)
    return best_cfg, accs


def desk_setup(task: str, master_seed: int = 2024, budgets=None,
               n_fock: int = None) -> TaskSetup:
    """The acceptance-scale configuration of each task."""
    protocol = default_protocol(task, n_fock=n_fock)
    if task == SPIRAL:
        # untruncated moments: at |alpha| = 1 the informative correlations
        # reach across the full record, so the locality cutoff costs real
        # accuracy here (it stays at its default for the streamed tasks)
        return TaskSetup(SPIRAL, 1000, 500, tuple(budgets or (10_000,)), protocol,
                         feature=MomentFeatureSpec(d_h=None),
                         master_seed=master_seed)
    if task == MODULATION:
        return TaskSetup(MODULATION, 1000, 500, tuple(budgets or (10_000,)),
                         protocol, master_seed=master_seed)
    return TaskSetup(FILTERED_NOISE, 600, 300, tuple(budgets or (2_000,)),
                     protocol, master_seed=master_seed)
