"""Classical and component baselines: LESN, cavity-only, qubit-only."""
import numpy as np
import pytest

from aqrc.baselines import (
    LesnConfig, cavity_mean_field_samples, cavity_only_features, lesn_build,
    lesn_run, lesn_states, qubit_only_run, qubit_only_trajectories,
)
from aqrc.engine import ProtocolConfig
from aqrc.errors import DegenerateReservoir
from aqrc.features import MomentFeatureSpec
from aqrc.fock import SystemParams
from aqrc.rng import RandomStream, generator
from aqrc.signals import ComplexSignal


# ---------------------------------------------------------------------------
# LESN
# ---------------------------------------------------------------------------

def test_lesn_build_spectral_norm():
    cfg = LesnConfig(r=100, d=2, rho=0.9, p_s=0.5, seed=4)
    _w_in, w_res = lesn_build(cfg)
    assert np.linalg.svd(w_res, compute_uv=False)[0] == pytest.approx(0.9, abs=1e-8)


def test_lesn_build_sparsity():
    cfg = LesnConfig(r=200, d=2, p_s=0.3, seed=5)
    _w_in, w_res = lesn_build(cfg)
    frac_zero = np.mean(w_res == 0)
    n = 200 * 200
    sigma = np.sqrt(0.3 * 0.7 / n)
    assert abs(frac_zero - 0.7) < 4 * sigma


def test_lesn_build_deterministic():
    cfg = LesnConfig(r=40, d=3, seed=9)
    a = lesn_build(cfg)
    b = lesn_build(cfg)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_lesn_degenerate_reservoir():
    # p_s so small that the 2x2 reservoir matrix comes out all zero
    cfg = LesnConfig(r=2, d=1, p_s=1e-12, seed=1)
    with pytest.raises(DegenerateReservoir):
        lesn_build(cfg)


def test_lesn_zero_inputs_fixed_point():
    cfg = LesnConfig(r=16, d=2, depth=5, seed=2)
    w_in, w_res = lesn_build(cfg)
    x = lesn_run(cfg, w_in, w_res, np.zeros((5, 2)))
    assert np.all(x == 0)


def test_lesn_memoryless_reduction():
    # a = gamma = 1 gives x_n = relu(W_in u_n + W_res x_{n-1})
    cfg = LesnConfig(r=12, d=2, a=1.0, gamma=1.0, depth=1, seed=3)
    w_in, w_res = lesn_build(cfg)
    u = np.array([[0.4, -0.2]])
    x = lesn_run(cfg, w_in, w_res, u)
    assert np.allclose(x, np.maximum(w_in @ u[0], 0))


def test_lesn_batch_matches_sequential():
    cfg = LesnConfig(r=20, d=3, depth=3, a=0.5, gamma=0.75, seed=6)
    w_in, w_res = lesn_build(cfg)
    rng = generator(0, 2)
    pts = rng.standard_normal((7, 3))
    batch = lesn_states(cfg, w_in, w_res, pts)
    for i, p in enumerate(pts):
        seq = lesn_run(cfg, w_in, w_res, np.tile(p, (cfg.depth, 1)))
        assert np.allclose(batch[i], seq, atol=1e-12)


# ---------------------------------------------------------------------------
# cavity-only
# ---------------------------------------------------------------------------

def test_cavity_zero_signal_zero_features():
    cfg = ProtocolConfig(system=SystemParams())
    sig = ComplexSignal.constant(0.0, cfg.shot_exposure)
    fv = cavity_only_features(sig, cfg, n_shots=4, spec=MomentFeatureSpec(),
                              shot_stride=0.0)
    assert np.all(fv.values == 0)


def test_cavity_mean_field_linearity():
    cfg = ProtocolConfig(system=SystemParams())
    rng = generator(1, 3)
    sig = ComplexSignal(0.3 * (rng.standard_normal(300) + 1j * rng.standard_normal(300)),
                        cfg.shot_exposure / 100)
    base = cavity_mean_field_samples(sig, cfg, n_shots=3)
    doubled = cavity_mean_field_samples(
        ComplexSignal(2 * sig.samples, sig.dt), cfg, n_shots=3)
    assert np.allclose(doubled, 2 * base, atol=1e-12)


def test_cavity_sample_layout():
    cfg = ProtocolConfig(system=SystemParams())
    sig = ComplexSignal.constant(1.0j, 2 * cfg.shot_exposure)
    samples = cavity_mean_field_samples(sig, cfg, n_shots=2, shot_stride=0.0)
    assert samples.shape == (2, 8)
    assert np.array_equal(samples[0], samples[1])  # stride 0: same window
    # constant drive: Re alpha(t) grows linearly with the segment count
    ratios = samples[0] / samples[0][0]
    assert np.allclose(ratios, np.arange(1, 9), atol=1e-9)


# ---------------------------------------------------------------------------
# qubit-only
# ---------------------------------------------------------------------------

def test_qubit_only_zero_signal_deterministic():
    cfg = ProtocolConfig(system=SystemParams())
    sig = ComplexSignal.constant(0.0, 2 * cfg.shot_exposure)
    bits, _ = qubit_only_trajectories(sig, cfg, 200, 7, shot_stride=0.0)
    assert bits.shape == (200, 8)
    # X_pi/2 X_pi X_pi/2 = X_2pi = -identity: the measured state repeats
    assert np.all(bits == 0)


def test_qubit_only_single_shot_matches_batch():
    cfg = ProtocolConfig(system=SystemParams())
    rng = generator(2, 4)
    sig = ComplexSignal(0.5 * (rng.standard_normal(500) + 1j * rng.standard_normal(500)),
                        2 * cfg.shot_exposure / 500)
    from aqrc.rng import shot_seeds
    seeds = shot_seeds(11, 0, 1)
    rec = qubit_only_run(sig, cfg, RandomStream(int(seeds[0])))
    bits, _ = qubit_only_trajectories(sig, cfg, 1, 11, stream=0, shot_stride=0.0)
    assert np.array_equal(rec.bits, bits[0])


def test_qubit_only_class_symmetry():
    # opposite drives produce identical outcome distributions, which is
    # why this baseline sits at chance on the spiral
    cfg = ProtocolConfig(system=SystemParams())
    z = 0.31 - 0.12j
    freqs = []
    for sign in (1, -1):
        sig = ComplexSignal.constant(sign * z, 2 * cfg.shot_exposure)
        bits, _ = qubit_only_trajectories(sig, cfg, 30_000, 13, shot_stride=0.0)
        freqs.append(bits.mean(axis=0))
    assert np.max(np.abs(freqs[0] - freqs[1])) < 4 * np.sqrt(0.25 / 30_000) * 3
