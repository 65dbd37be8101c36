"""Bin-local residual gradient compression with ternary quantization.

A layer's serialized gradient is cut into fixed-length bins. Each step the
fresh gradient is folded into a per-element residue accumulator; an element
is transmitted when its residue plus twice the fresh gradient reaches the
peak magnitude of its bin, and every transmitted element is encoded as
sign * one shared per-layer scale (the mean of the per-bin peaks). Whatever
was not sent, and the quantization error of what was, stays in the residue
and is retried on the next step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# (index within bin, sign code +1/-1)
Entry = tuple[int, int]

# 16-bit wire entries leave 14 bits of index after the 2 code bits
MAX_BIN_SIZE = 16384


@dataclass
class GradientVector:
    """Serialized gradient of one layer.

    Layout is the canonical row-major ravel of the parameter tensor
    (convolutions: out-map, in-map, kernel row, kernel col) with the bias
    appended last.
    """

    layer_id: int
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(self.values, dtype=np.float32)
        if v.ndim != 1:
            raise ValueError("gradient vector must be 1-D")
        if v.size == 0:
            raise ValueError("empty gradient vector")
        self.values = v

    @property
    def length(self) -> int:
        return int(self.values.size)


@dataclass
class BinConfig:
    """Bin length and the soft-threshold multiplier on the fresh gradient.

    ``scale_factor`` stays at 2.0 outside sensitivity experiments; the
    selection test then reduces to |residue + 2*dW| >= bin max.
    """

    bin_size: int
    scale_factor: float = 2.0

    def __post_init__(self) -> None:
        if not 1 <= int(self.bin_size) <= MAX_BIN_SIZE:
            raise ValueError(f"bin_size must be in [1, {MAX_BIN_SIZE}], got {self.bin_size}")
        if not 1.0 <= float(self.scale_factor) <= 4.0:
            raise ValueError(f"scale_factor must be in [1.0, 4.0], got {self.scale_factor}")


@dataclass
class PackedLayer:
    """Sparse ternary selection for one layer.

    ``bins[i]`` lists (index-within-bin, code) entries with strictly
    increasing indices; code +1/-1 reconstructs to +scale/-scale.
    """

    layer_id: int
    element_count: int
    bin_size: int
    scale: float  # float32-representable, >= 0
    bins: list[list[Entry]]

    @property
    def num_bins(self) -> int:
        return len(self.bins)

    def entry_count(self) -> int:
        return sum(len(b) for b in self.bins)


@dataclass
class CodecState:
    """Per-layer error-feedback memory, owned by exactly one learner.

    The residue is held in float64 even though gradients are float32: with a
    float32 accumulator, (G - sent) + sent need not round back to G, so the
    conservation identity residue' + sent == residue + dW would fail by an
    ulp whenever the shared scale dwarfs a selected element.
    """

    residue: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, length: int) -> "CodecState":
        return cls(residue=np.zeros(int(length), dtype=np.float64), step=0)


def _values(g: GradientVector | np.ndarray) -> np.ndarray:
    return g.values if isinstance(g, GradientVector) else np.asarray(g)


def _bin_lengths(n: int, bin_size: int) -> np.ndarray:
    edges = np.arange(0, n, bin_size)
    return np.diff(np.append(edges, n))


def bin_maxima(g: GradientVector | np.ndarray, bin_size: int) -> np.ndarray:
    """Largest absolute value in each bin; the last bin may be partial and is
    reduced over its true extent only."""
    v = _values(g)
    if v.size == 0:
        raise ValueError("empty gradient vector")
    if bin_size < 1:
        raise ValueError("bin_size must be >= 1")
    starts = np.arange(0, v.size, bin_size)
    return np.maximum.reduceat(np.abs(v.astype(np.float64, copy=False)), starts)


def layer_scale(g_max: np.ndarray) -> float:
    """Arithmetic mean of the per-bin maxima, zero bins included.

    Accumulates sequentially in float64 so a plain reference loop reproduces
    the value bit for bit.
    """
    g = np.asarray(g_max, dtype=np.float64)
    if g.size == 0:
        raise ValueError("at least one bin required")
    return float(np.cumsum(g)[-1] / g.size)


def pack(state: CodecState, dw: GradientVector, cfg: BinConfig) -> tuple[PackedLayer, CodecState]:
    """Compress one layer's gradient against its residue.

    Returns the sparse selection and the successor state; the input state is
    not mutated. Element i of bin b is sent iff
    |residue_i + scale_factor * dw_i| >= max|residue + dw| over bin b and the
    bin's max is nonzero; sent elements are quantized to
    sign(residue_i + dw_i) * scale with sign(+-0) = +1.
    """
    w = dw.values.astype(np.float64)
    if state.residue.shape != w.shape:
        raise ValueError("residue/gradient shape mismatch")
    g = state.residue + w
    h = g + (float(cfg.scale_factor) - 1.0) * w
    gmax = bin_maxima(g, cfg.bin_size)
    scale = np.float32(layer_scale(gmax))
    per_elem_max = np.repeat(gmax, _bin_lengths(w.size, cfg.bin_size))
    selected = (np.abs(h) >= per_elem_max) & (per_elem_max > 0.0)
    if scale == 0.0:
        # a layer whose mean peak underflows float32 sends nothing
        selected = np.zeros_like(selected)
    sent = np.where(g >= 0.0, np.float64(scale), -np.float64(scale))
    new_residue = np.where(selected, g - sent, g)
    bins: list[list[Entry]] = []
    for start in range(0, w.size, cfg.bin_size):
        stop = min(start + cfg.bin_size, w.size)
        idx = np.flatnonzero(selected[start:stop])
        bins.append([(int(i), 1 if g[start + i] >= 0.0 else -1) for i in idx])
    packed = PackedLayer(dw.layer_id, int(w.size), int(cfg.bin_size), float(scale), bins)
    return packed, CodecState(residue=new_residue, step=state.step + 1)


def unpack(p: PackedLayer) -> GradientVector:
    """Expand a packed layer to its dense float32 form: code * scale at the
    packed positions, exact zero everywhere else."""
    n = int(p.element_count)
    if n < 1 or p.num_bins != -(-n // p.bin_size):
        raise ValueError("corrupt pack: bin count does not match element count")
    out = np.zeros(n, dtype=np.float32)
    scale = np.float32(p.scale)
    for b, entries in enumerate(p.bins):
        base = b * p.bin_size
        extent = min(p.bin_size, n - base)
        for idx, code in entries:
            if not 0 <= idx < extent:
                raise ValueError("corrupt pack: index outside bin extent")
            out[base + idx] = scale if code > 0 else -scale
    return GradientVector(p.layer_id, out)
