"""Vectorized engine: closed-form propagator vs the 4th-order integrator,
bit-level equivalence of the execution paths, determinism."""
import numpy as np
import pytest

from aqrc.engine import (
    DisplacementKernel, ProtocolConfig, constant_signal_trajectories,
    run_trajectories, segment_branch_params,
)
from aqrc.errors import TruncationGuardTripped
from aqrc.fock import (
    HilbertDims, JointState, SystemParams, displacement, evolve, make_vacuum,
)
from aqrc.reservoir import signal_segment_provider
from aqrc.rng import generator
from aqrc.signals import ComplexSignal


def test_displacement_kernel_matches_expm():
    kern = DisplacementKernel(24)
    for alpha in (0.4, -0.3 + 0.7j, 1.1j):
        assert np.max(np.abs(kern.matrix(alpha) - displacement(alpha, 24).matrix)) < 1e-12


def test_displacement_kernel_batched_apply():
    kern = DisplacementKernel(16)
    rng = generator(0, 5)
    psi = rng.standard_normal((6, 16)) + 1j * rng.standard_normal((6, 16))
    betas = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    betas *= 0.3
    out = kern.apply(psi, betas)
    for row in range(6):
        ref = displacement(betas[row], 16).matrix @ psi[row]
        assert np.max(np.abs(out[row] - ref)) < 1e-12


def _rk4_reference(psi0, values, durations, params):
    """Propagate through one segment with the production integrator."""
    dims = HilbertDims(params.n_fock, 1)
    state = JointState(dims, psi0.reshape(-1))
    for v, d in zip(values, durations):
        state = evolve(state, complex(v), None, params, float(d))
    return state.grid()


def test_segment_propagator_matches_integrator():
    params = SystemParams(n_fock=32, dt=2e-4)
    cfg = ProtocolConfig(system=params)
    rng = generator(1, 6)
    n_pieces = 11
    durations = np.full(n_pieces, cfg.seg_time / n_pieces)
    values = 0.7 * (rng.standard_normal(n_pieces) + 1j * rng.standard_normal(n_pieces))
    psi0 = np.zeros((2, 32), dtype=complex)
    psi0[0, 0] = 0.8
    psi0[1, 1] = 0.6
    ref = _rk4_reference(psi0, values, durations, params)

    kern = DisplacementKernel(32)
    out = np.empty_like(psi0)
    for branch, chi_b in ((0, 0.0), (1, params.chi)):
        beta, phi = segment_branch_params(values[None, :], durations, chi_b)
        blk = kern.apply(psi0[branch][None, :], beta)[0] * np.exp(1j * phi[0])
        if branch == 1:
            blk = blk * np.exp(1j * params.chi * cfg.seg_time * np.arange(32))
        out[branch] = blk
    fid = abs(np.vdot(ref.reshape(-1), out.reshape(-1)))
    assert fid > 1 - 1e-8


def test_generic_engine_matches_tree_bits():
    cfg = ProtocolConfig(alpha=0.4, system=SystemParams())
    z = 1j * 0.3 / cfg.seg_time
    sig = ComplexSignal.constant(z, cfg.shot_exposure)
    provider = signal_segment_provider(sig, cfg, shot_stride=0.0)
    bits_g, seeds_g = run_trajectories(cfg, provider, 400, 12, stream=9)
    bits_t, seeds_t = constant_signal_trajectories(cfg, z, 400, 12, stream=9)
    assert np.array_equal(bits_g, bits_t)
    assert np.array_equal(seeds_g, seeds_t)


def test_chunking_and_threads_do_not_change_bits():
    cfg = ProtocolConfig(alpha=0.2, system=SystemParams())
    rng = generator(2, 7)
    n_shots = 30
    n_samp = int(np.ceil(n_shots * cfg.shot_exposure / 0.05)) + 1
    sig = ComplexSignal(0.4 * (rng.standard_normal(n_samp) + 1j * rng.standard_normal(n_samp)),
                        0.05)
    provider = signal_segment_provider(sig, cfg)
    ref, _ = run_trajectories(cfg, provider, n_shots, 5, stream=1, chunk_size=n_shots)
    for chunk, threads in ((7, 1), (13, 3), (n_shots, 2)):
        bits, _ = run_trajectories(cfg, provider, n_shots, 5, stream=1,
                                   chunk_size=chunk, threads=threads)
        assert np.array_equal(ref, bits)


def test_shot_order_independence():
    # simulating shots [0, n) in one call equals two split calls
    cfg = ProtocolConfig(alpha=0.2, system=SystemParams())
    z = 1j * 0.2 / cfg.seg_time
    all_bits, _ = constant_signal_trajectories(cfg, z, 50, 3, stream=2)
    head, _ = constant_signal_trajectories(cfg, z, 30, 3, stream=2)
    assert np.array_equal(all_bits[:30], head)


def test_zero_input_round_parity_even():
    cfg = ProtocolConfig(alpha=0.2, system=SystemParams())
    bits, _ = constant_signal_trajectories(cfg, 0.0, 300, 8, stream=3)
    parity_bits = bits[:, 1::2]
    qubit_bits = bits[:, 0::2]
    assert np.all(parity_bits == 0)
    freq = qubit_bits.mean()
    assert abs(freq - 0.5) < 4 * np.sqrt(0.25 / qubit_bits.size)


def test_engine_guard_trips_on_hot_drive():
    cfg = ProtocolConfig(alpha=0.2, system=SystemParams(n_fock=8))
    sig = ComplexSignal.constant(12.0, cfg.shot_exposure)
    provider = signal_segment_provider(sig, cfg, shot_stride=0.0)
    with pytest.raises(TruncationGuardTripped):
        run_trajectories(cfg, provider, 4, 0, stream=0)


def test_dead_time_windows_consume_signal():
    cfg = ProtocolConfig(alpha=0.2, system=SystemParams(), dead_time_per_round=0.1)
    assert cfg.windows_per_round == 3
    assert cfg.shot_exposure == pytest.approx(4 * (2 * cfg.seg_time + 0.1))
    rng = generator(3, 8)
    n_samp = int(np.ceil(cfg.shot_exposure / 0.05)) + 1
    sig = ComplexSignal(0.3 * (rng.standard_normal(n_samp) + 1j * rng.standard_normal(n_samp)), 0.05)
    provider = signal_segment_provider(sig, cfg, shot_stride=0.0)
    bits, _ = run_trajectories(cfg, provider, 10, 4, stream=4)
    assert bits.shape == (10, 8)


def test_reset_qubit_each_round_ground_prior():
    # with the reset switch on, every round's qubit bit is a fresh draw
    # from the ground-prior probability of that round's CNOD phase
    from aqrc.reservoir import geometric_phase_oracle
    cfg = ProtocolConfig(alpha=0.5, system=SystemParams(),
                         reset_qubit_each_round=True)
    beta = 0.25 * np.exp(0.9j)
    z = 1j * beta / cfg.seg_time
    n = 40_000
    bits, _ = constant_signal_trajectories(cfg, z, n, 5, stream=6)
    for r in range(4):
        want = geometric_phase_oracle(cfg.round_alpha(r), beta, prior="g")
        got = bits[:, 2 * r].mean()
        assert abs(got - want) < 4 * np.sqrt(want * (1 - want) / n)


def test_multiqubit_round_shapes_and_unitarity():
    from aqrc.reservoir import MultiQubitGrid
    grid = MultiQubitGrid.default(2)
    cfg = ProtocolConfig(mode="multiqubit", n_qubits=2,
                         displacement_map=grid.displacement_map,
                         system=SystemParams(n_fock=24), rounds_per_shot=2)
    assert cfg.bits_per_shot == 2 * 3
    sig = ComplexSignal.constant(0.2, cfg.shot_exposure)
    provider = signal_segment_provider(sig, cfg, shot_stride=0.0)
    bits, _ = run_trajectories(cfg, provider, 50, 6, stream=7)
    assert bits.shape == (50, 6)
    assert set(np.unique(bits)) <= {0, 1}
