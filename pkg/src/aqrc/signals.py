"""Task input generation: spiral points, digitally modulated streams, and
kernel-filtered white noise with DC-equalized filters.

All signals are complex baseband envelopes with sample-and-hold semantics:
sample k is the envelope value on [k*dt, (k+1)*dt).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import UnknownScheme

SPIRAL, MODULATION, FILTERED_NOISE = "spiral", "modulation", "filtered_noise"
TASK_CLASS_COUNTS = {SPIRAL: 2, MODULATION: 10, FILTERED_NOISE: 6}

SYMBOL_DURATION = 0.5  # us per symbol (2 symbols per us)
SYMBOLS_PER_SHOT = 8

SPIRAL_R_MAX = np.sqrt(0.3)  # max |point| gives 0.3 photons per round

KERNEL_SHAPES = ("gaussian", "lorentzian", "inverse_power")
KERNEL_WIDTHS = (0.05, 0.6)  # us


@dataclass
class ComplexSignal:
    """Uniformly sampled complex envelope."""

    samples: np.ndarray
    dt: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128).reshape(-1)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(self.samples.view(float))):
            raise ValueError("signal contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) * self.dt

    @classmethod
    def constant(cls, value: complex, duration: float, meta=None):
        return cls(np.full(1, complex(value)), duration, meta or {})


@dataclass
class LabeledExample:
    signal: ComplexSignal
    class_id: int
    task: str

    def __post_init__(self):
        if self.task not in TASK_CLASS_COUNTS:
            raise ValueError(f"unknown task {self.task!r}")
        if not 0 <= self.class_id < TASK_CLASS_COUNTS[self.task]:
            raise ValueError("class_id out of range for task")


# ---------------------------------------------------------------------------
# spiral
# ---------------------------------------------------------------------------

def spiral_point(theta: float, class_id: int) -> complex:
    """Point on arm `class_id` at parameter theta in [pi/2, 5*pi/2]."""
    r = SPIRAL_R_MAX * (theta - np.pi / 2) / (2 * np.pi)
    return r * np.exp(1j * (theta + class_id * np.pi))


def gen_spiral(n_per_class: int, rng, round_duration: float = None, jitter: float = 0.0):
    """Labeled constant-envelope signals from the two spiral arms.

    Each example is one (I, Q) point rendered as a constant signal lasting
    one round of input.  The harness tiles it over a full shot.  jitter
    adds isotropic Gaussian displacement noise (off by default).
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if round_duration is None:
        from .fock import SystemParams
        round_duration = 2.0 * SystemParams().kerr_period
    out = []
    for class_id in (0, 1):
        thetas = rng.uniform(np.pi / 2, 5 * np.pi / 2, size=n_per_class)
        for theta in thetas:
            z = spiral_point(theta, class_id)
            if jitter > 0:
                z += jitter * (rng.standard_normal() + 1j * rng.standard_normal())
            sig = ComplexSignal.constant(
                z, round_duration, {"source": SPIRAL, "theta": float(theta)})
            out.append(LabeledExample(sig, class_id, SPIRAL))
    return out


# ---------------------------------------------------------------------------
# digital modulation
# ---------------------------------------------------------------------------

def _qam_cross(levels, drop_corner):
    pts = [complex(x, y) for x in levels for y in levels
           if not (abs(x) > drop_corner and abs(y) > drop_corner)]
    return np.array(pts)


def _build_constellations():
    grids = {
        "OOK": np.array([0.0, 1.0], dtype=complex),
        "4ASK": np.array([-3.0, -1.0, 1.0, 3.0], dtype=complex),
        "8ASK": np.arange(-7.0, 8.0, 2.0).astype(complex),
        "BPSK": np.array([1.0, -1.0], dtype=complex),
        "QPSK": np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4))),
        "8PSK": np.exp(2j * np.pi * np.arange(8) / 8),
        "16QAM": _qam_cross([-3, -1, 1, 3], np.inf),
        "32QAM": _qam_cross([-5, -3, -1, 1, 3, 5], 3),       # 6x6 minus corners
        "64QAM": _qam_cross([-7, -5, -3, -1, 1, 3, 5, 7], np.inf),
    }
    # average constellation power normalized to 1
    return {k: v / np.sqrt(np.mean(np.abs(v) ** 2)) for k, v in grids.items()}


CONSTELLATIONS = _build_constellations()
SCHEME_NAMES = ("OOK", "4ASK", "8ASK", "BPSK", "QPSK",
                "8PSK", "16QAM", "32QAM", "64QAM", "CPFSK")

CPFSK_SAMPLES_PER_SYMBOL = 8
CPFSK_PHASE_PER_SYMBOL = np.pi / 2  # binary frequency shift, MSK-style


def constellation(scheme_id: int) -> np.ndarray:
    if not 0 <= int(scheme_id) < len(SCHEME_NAMES):
        raise UnknownScheme(f"scheme_id {scheme_id} not in 0..9")
    name = SCHEME_NAMES[int(scheme_id)]
    if name == "CPFSK":
        raise UnknownScheme("CPFSK is frequency keyed; it has no constellation")
    return CONSTELLATIONS[name]


def _render_cpfsk(bits: np.ndarray) -> np.ndarray:
    """Continuous-phase binary FSK at unit envelope.

    Bit b shifts the carrier by +-(phase/symbol)/duration; the phase ramps
    within each symbol and is continuous across symbols, sampled at
    CPFSK_SAMPLES_PER_SYMBOL points per symbol.
    """
    k = CPFSK_SAMPLES_PER_SYMBOL
    slopes = np.repeat(np.where(bits > 0, 1.0, -1.0), k) / k
    phase = np.cumsum(slopes) * CPFSK_PHASE_PER_SYMBOL
    return np.exp(1j * phase)


def gen_modulated(scheme_id: int, n_symbols: int, rng,
                  input_scale: float = 1.0) -> LabeledExample:
    """Random symbol stream of one modulation scheme.

    Constellation schemes render i.i.d. uniform symbols as rectangular
    pulses (power-normalized, 0.5 us per symbol); CPFSK renders the random
    bits as a continuous-phase frequency shift.
    """
    if n_symbols % SYMBOLS_PER_SHOT != 0:
        raise ValueError(f"n_symbols must be a multiple of {SYMBOLS_PER_SHOT}")
    if not 0 <= int(scheme_id) < len(SCHEME_NAMES):
        raise UnknownScheme(f"scheme_id {scheme_id} not in 0..9")
    name = SCHEME_NAMES[int(scheme_id)]
    if name == "CPFSK":
        bits = rng.integers(0, 2, size=n_symbols)
        samples = _render_cpfsk(bits)
        dt = SYMBOL_DURATION / CPFSK_SAMPLES_PER_SYMBOL
    else:
        points = constellation(scheme_id)
        samples = points[rng.integers(0, len(points), size=n_symbols)]
        dt = SYMBOL_DURATION
    sig = ComplexSignal(samples * input_scale, dt,
                        {"source": MODULATION, "scheme": name})
    return LabeledExample(sig, int(scheme_id), MODULATION)


# ---------------------------------------------------------------------------
# filtered noise
# ---------------------------------------------------------------------------

@dataclass
class FilterKernel:
    """Moving-average kernel, DC-normalized so that sum(taps) * dt = 1."""

    shape: str
    width: float
    dt: float
    taps: np.ndarray = None

    def __post_init__(self):
        if self.shape not in KERNEL_SHAPES:
            raise ValueError(f"unknown kernel shape {self.shape!r}")
        if self.width <= 0 or self.dt <= 0:
            raise ValueError("width and dt must be positive")
        if self.taps is None:
            half = int(np.floor(5.0 * self.width / self.dt + 1e-9))
            t = np.arange(-half, half + 1) * self.dt
            if self.shape == "gaussian":
                k = np.exp(-t ** 2 / (2.0 * self.width ** 2))
            elif self.shape == "lorentzian":
                k = 1.0 / (1.0 + (t / self.width) ** 2)
            else:
                k = 1.0 / (1.0 + np.abs(t) / self.width)
            self.taps = k / (k.sum() * self.dt)

    @property
    def support(self) -> float:
        return len(self.taps) * self.dt


def kernel_table(shape: str, width: float, dt: float) -> FilterKernel:
    """Kernel taps on a uniform grid, truncated at +-5 widths."""
    return FilterKernel(shape=shape, width=width, dt=dt)


def noise_class_id(shape: str, width: float) -> int:
    return KERNEL_SHAPES.index(shape) * len(KERNEL_WIDTHS) + KERNEL_WIDTHS.index(width)


def noise_class_kernel(class_id: int, dt: float) -> FilterKernel:
    shape = KERNEL_SHAPES[class_id // len(KERNEL_WIDTHS)]
    width = KERNEL_WIDTHS[class_id % len(KERNEL_WIDTHS)]
    return kernel_table(shape, width, dt)


def white_noise(n_samples: int, rng) -> np.ndarray:
    """I and Q i.i.d. uniform on [-1, 1] per sample."""
    return rng.uniform(-1, 1, n_samples) + 1j * rng.uniform(-1, 1, n_samples)


def gen_filtered_noise(kernel: FilterKernel, duration: float, rng,
                       input_scale: float = 1.0) -> LabeledExample:
    """White noise convolved with a DC-equalized kernel.

    Enough noise is drawn before the window so that every output sample
    sees a fully supported convolution (no edge transient).
    """
    n_out = int(np.round(duration / kernel.dt))
    if duration < 2 * kernel.support:
        raise ValueError("duration must exceed the kernel support")
    pad = len(kernel.taps) - 1
    raw = white_noise(n_out + pad, rng)
    filt = fftconvolve(raw, kernel.taps * kernel.dt, mode="valid")
    sig = ComplexSignal(filt * input_scale, kernel.dt,
                        {"source": FILTERED_NOISE, "shape": kernel.shape,
                         "width": kernel.width})
    return LabeledExample(sig, noise_class_id(kernel.shape, kernel.width),
                          FILTERED_NOISE)


# ---------------------------------------------------------------------------
# binary signal files
# ---------------------------------------------------------------------------

_MAGIC = b"QRCSIG1\x00"


def write_signal(path, signal: ComplexSignal) -> None:
    """Little-endian float64 interleaved (re, im) with a 16-byte header."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", len(signal.samples), 0))
        inter = np.empty(2 * len(signal.samples))
        inter[0::2] = signal.samples.real
        inter[1::2] = signal.samples.imag
        fh.write(inter.astype("<f8").tobytes())


def read_signal(path, dt: float, meta=None) -> ComplexSignal:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"bad magic in {path}")
        length, _reserved = struct.unpack("<II", fh.read(8))
        inter = np.frombuffer(fh.read(16 * length), dtype="<f8")
    return ComplexSignal(inter[0::2] + 1j * inter[1::2], dt, meta or {})
