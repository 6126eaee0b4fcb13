"""Trajectory records to feature vectors: truncated central moments and the
full sample-distribution encoding.

Moment entries are indexed by multisets {i1 <= i2 <= ...} of measurement
positions, kept only when max - min <= d_h (finite reservoir memory), and
flattened in lexicographic multiset order, order-1 block first.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import TooFewShots


@dataclass(frozen=True)
class MomentFeatureSpec:
    """Which central moments make up the feature vector.

    max_order: highest moment order (1..3).
    d_h: maximum index distance between measurements in one entry
         (None = no truncation).
    m: measurement record length.
    orders: optional restriction to a subset of orders, e.g. (3,) trains a
         readout on third-order features alone.
    """

    max_order: int = 3
    d_h: int | None = 3
    m: int = 8
    orders: tuple = None

    def __post_init__(self):
        if not 1 <= self.max_order <= 3:
            raise ValueError("max_order must be in 1..3")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.d_h is not None and self.d_h < 0:
            raise ValueError("d_h must be >= 0")
        if self.orders is not None:
            object.__setattr__(self, "orders", tuple(sorted(set(self.orders))))
            if any(o < 1 or o > self.max_order for o in self.orders):
                raise ValueError("orders must lie within 1..max_order")

    @property
    def active_orders(self) -> tuple:
        return self.orders if self.orders is not None else tuple(
            range(1, self.max_order + 1))


@lru_cache(maxsize=None)
def _index_tuples(m: int, order: int, d_h) -> tuple:
    """Lexicographically ordered multisets of size `order` with span <= d_h."""
    span = m - 1 if d_h is None else d_h

    def extend(prefix, first):
        if len(prefix) == order:
            yield prefix
            return
        for nxt in range(prefix[-1], min(first + span, m - 1) + 1):
            yield from extend(prefix + (nxt,), first)

    out = []
    for i in range(m):
        out.extend(extend((i,), i))
    return tuple(out)


def moment_indices(spec: MomentFeatureSpec) -> list:
    """All retained index multisets in feature order."""
    out = []
    for order in spec.active_orders:
        out.extend(_index_tuples(spec.m, order, spec.d_h))
    return out


def feature_dimension(spec: MomentFeatureSpec) -> int:
    return len(moment_indices(spec))


def feature_names(spec: MomentFeatureSpec) -> list:
    """CSV header names, `p:i[,j[,k]]`."""
    return [f"{len(t)}:" + ",".join(map(str, t)) for t in moment_indices(spec)]


@dataclass
class FeatureVector:
    values: np.ndarray
    spec: MomentFeatureSpec
    n_shots: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(self.values) != feature_dimension(self.spec):
            raise ValueError("feature vector length does not match spec")


def _as_bit_matrix(records) -> np.ndarray:
    """Stack TrajectoryRecord-like objects or raw rows into (N, m) floats."""
    if isinstance(records, np.ndarray) and records.ndim == 2:
        return records.astype(float)
    rows = [r.bits if hasattr(r, "bits") else r for r in records]
    return np.asarray(rows, dtype=float)


def central_moments(records, spec: MomentFeatureSpec,
                    check_bounds: bool = True, center: bool = True) -> FeatureVector:
    """Sample central moments over shots for every retained index multiset.

    Two-pass: means first, then centered products averaged with 1/N.  The
    order-1 block holds the raw means (centering it would be identically
    zero).  center=False keeps the products uncentered; continuous-valued
    baselines use that, since their per-shot samples carry the signal in
    the mean and centering would zero every higher block.
    """
    x = _as_bit_matrix(records)
    n, m = x.shape
    if n < 2:
        raise TooFewShots(f"need at least 2 records, got {n}")
    if m != spec.m:
        raise ValueError(f"records have length {m}, spec.m = {spec.m}")
    means = x.mean(axis=0)
    centered = (x - means) if center else x
    blocks = []
    for order in spec.active_orders:
        tuples = _index_tuples(m, order, spec.d_h)
        if order == 1:
            blocks.append(means[[t[0] for t in tuples]])
            continue
        cols = np.ones((n, len(tuples)))
        for pos in range(order):
            cols = cols * centered[:, [t[pos] for t in tuples]]
        blocks.append(cols.mean(axis=0))
    values = np.concatenate(blocks) if blocks else np.zeros(0)
    if check_bounds and values.size and np.max(np.abs(values)) > 1.0 + 1e-12:
        raise ValueError("central moments of binary outcomes left [-1, 1]")
    return FeatureVector(values, spec, n)


def bit_patterns(m: int) -> np.ndarray:
    """(2^m, m) table of bitstrings; bit 0 is the most significant."""
    idx = np.arange(2 ** m)
    return ((idx[:, None] >> (m - 1 - np.arange(m))[None, :]) & 1).astype(float)


def central_moments_from_counts(counts, spec: MomentFeatureSpec) -> FeatureVector:
    """Same statistic as central_moments, from a histogram over outcomes.

    counts[k] is the number of shots that produced bitstring k (bit 0 most
    significant).  Algebraically identical to the record path on the same
    sample, up to float round-off.
    """
    counts = np.asarray(counts, dtype=float)
    m = spec.m
    if counts.shape != (2 ** m,):
        raise ValueError("counts must have length 2^m")
    n = counts.sum()
    if n < 2:
        raise TooFewShots("need at least 2 recorded shots")
    p = counts / n
    bits = bit_patterns(m)
    means = p @ bits
    raw2 = (bits * p[:, None]).T @ bits  # raw second moments E[x_i x_j]
    blocks = []
    for order in spec.active_orders:
        tuples = _index_tuples(m, order, spec.d_h)
        if order == 1:
            blocks.append(means[[t[0] for t in tuples]])
        elif order == 2:
            blocks.append(np.array(
                [raw2[i, j] - means[i] * means[j] for i, j in tuples]))
        else:
            vals = np.empty(len(tuples))
            for w, (i, j, k) in enumerate(tuples):
                r3 = p @ (bits[:, i] * bits[:, j] * bits[:, k])
                vals[w] = (r3 - means[i] * raw2[j, k] - means[j] * raw2[i, k]
                           - means[k] * raw2[i, j]
                           + 2 * means[i] * means[j] * means[k])
            blocks.append(vals)
    return FeatureVector(np.concatenate(blocks), spec, int(n))


def sample_distribution(records, m: int) -> np.ndarray:
    """Normalized histogram over the 2^m bitstring indices."""
    if m > 16:
        raise ValueError("m > 16 would need a 2^m table; refuse")
    x = _as_bit_matrix(records).astype(np.int64)
    if x.shape[1] != m:
        raise ValueError("record length does not match m")
    idx = np.zeros(len(x), dtype=np.int64)
    for pos in range(m):
        idx = (idx << 1) | x[:, pos]
    hist = np.bincount(idx, minlength=2 ** m).astype(float)
    return hist / hist.sum()


def outcome_counts(records, m: int) -> np.ndarray:
    """Unnormalized histogram over bitstring indices."""
    dist = sample_distribution(records, m)
    return dist * len(_as_bit_matrix(records))


def features_to_csv(path, matrix, spec: MomentFeatureSpec, labels=None,
                    header_comment: str = "") -> None:
    """One row per example; labels, when given, prepend a class column."""
    names = feature_names(spec)
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        cols = (["class"] if labels is not None else []) + names
        fh.write(",".join(cols) + "\n")
        for r, row in enumerate(np.asarray(matrix, dtype=float)):
            lead = [str(int(labels[r]))] if labels is not None else []
            fh.write(",".join(lead + [f"{v:.17g}" for v in row]) + "\n")
