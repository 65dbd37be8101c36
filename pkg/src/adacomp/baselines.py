"""Comparison codecs: per-bin local selection, layer-wide top-k with
per-sign means, and dense 1-bit quantization. All keep the same
error-feedback residue discipline as the adaptive codec."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import CodecState, GradientVector, PackedLayer, bin_maxima, layer_scale, _bin_lengths


@dataclass
class TopKPacked:
    """Layer-wide top-k selection: sorted flat indices, per-entry signs, and
    one reconstruction mean per sign."""

    layer_id: int
    element_count: int
    indices: np.ndarray  # int64, strictly increasing
    signs: np.ndarray    # int8, +1/-1, aligned with indices
    pos_scale: float     # mean of selected G >= 0, or 0.0 if none
    neg_scale: float     # mean of selected G < 0, or 0.0 if none

    def entry_count(self) -> int:
        return int(self.indices.size)


@dataclass
class OneBitPacked:
    """Dense sign plane plus one reconstruction mean per sign."""

    layer_id: int
    element_count: int
    bits: np.ndarray     # bool, True where G >= 0
    pos_scale: float
    neg_scale: float


@dataclass
class DensePacked:
    """Uncompressed payload, used as the no-codec control."""

    layer_id: int
    values: np.ndarray   # float32


def _seq_mean_f32(values: np.ndarray) -> np.float32:
    """Sequential float64 mean rounded once to the transmitted float32."""
    if values.size == 0:
        return np.float32(0.0)
    return np.float32(np.cumsum(values.astype(np.float64))[-1] / values.size)


def ls_pack(state: CodecState, dw: GradientVector, bin_size: int) -> tuple[PackedLayer, CodecState]:
    """Send exactly the peak-|G| element of every nonzero bin (ties to the
    lowest index); quantization, scale and residue update match pack()."""
    w = dw.values.astype(np.float64)
    if state.residue.shape != w.shape:
        raise ValueError("residue/gradient shape mismatch")
    g = state.residue + w
    gmax = bin_maxima(g, bin_size)
    scale = np.float32(layer_scale(gmax))
    selected = np.zeros(w.size, dtype=bool)
    bins: list[list[tuple[int, int]]] = []
    for b, start in enumerate(range(0, w.size, bin_size)):
        stop = min(start + bin_size, w.size)
        if scale == 0.0 or gmax[b] == 0.0:
            bins.append([])
            continue
        i = int(np.argmax(np.abs(g[start:stop])))
        selected[start + i] = True
        bins.append([(i, 1 if g[start + i] >= 0.0 else -1)])
    sent = np.where(g >= 0.0, np.float64(scale), -np.float64(scale))
    new_residue = np.where(selected, g - sent, g)
    packed = PackedLayer(dw.layer_id, int(w.size), int(bin_size), float(scale), bins)
    return packed, CodecState(residue=new_residue, step=state.step + 1)


def topk_pack(state: CodecState, dw: GradientVector, fraction: float) -> tuple[TopKPacked, CodecState]:
    """Send the ceil(fraction * n) largest-|G| elements of the whole layer
    (ties to the lowest index), reconstructed as the mean of the selected
    values of matching sign."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    w = dw.values.astype(np.float64)
    if state.residue.shape != w.shape:
        raise ValueError("residue/gradient shape mismatch")
    g = state.residue + w
    k = math.ceil(fraction * w.size)
    order = np.argsort(-np.abs(g), kind="stable")
    indices = np.sort(order[:k])
    signs = np.where(g[indices] >= 0.0, 1, -1).astype(np.int8)
    pos_scale = _seq_mean_f32(g[indices[signs == 1]])
    neg_scale = _seq_mean_f32(g[indices[signs == -1]])
    recon = np.zeros(w.size, dtype=np.float64)
    recon[indices] = np.where(signs == 1, np.float64(pos_scale), np.float64(neg_scale))
    selected = np.zeros(w.size, dtype=bool)
    selected[indices] = True
    new_residue = np.where(selected, g - recon, g)
    packed = TopKPacked(dw.layer_id, int(w.size), indices.astype(np.int64), signs,
                        float(pos_scale), float(neg_scale))
    return packed, CodecState(residue=new_residue, step=state.step + 1)


def onebit_pack(state: CodecState, dw: GradientVector) -> tuple[OneBitPacked, CodecState]:
    """Quantize every element to its sign bit; each side reconstructs to the
    mean of G over that side. Exact zeros count as positive."""
    w = dw.values.astype(np.float64)
    if state.residue.shape != w.shape:
        raise ValueError("residue/gradient shape mismatch")
    g = state.residue + w
    bits = g >= 0.0
    pos_scale = _seq_mean_f32(g[bits])
    neg_scale = _seq_mean_f32(g[~bits])
    recon = np.where(bits, np.float64(pos_scale), np.float64(neg_scale))
    new_residue = g - recon
    packed = OneBitPacked(dw.layer_id, int(w.size), bits, float(pos_scale), float(neg_scale))
    return packed, CodecState(residue=new_residue, step=state.step + 1)


def identity_pack(state: CodecState, dw: GradientVector) -> tuple[DensePacked, CodecState]:
    """No compression: ship the float32 gradient as-is; the residue never
    accumulates anything."""
    if state.residue.shape != dw.values.shape:
        raise ValueError("residue/gradient shape mismatch")
    packed = DensePacked(dw.layer_id, dw.values.copy())
    return packed, CodecState(residue=state.residue.copy(), step=state.step + 1)


def unpack_topk(p: TopKPacked) -> GradientVector:
    out = np.zeros(p.element_count, dtype=np.float32)
    out[p.indices] = np.where(p.signs == 1, np.float32(p.pos_scale), np.float32(p.neg_scale))
    return GradientVector(p.layer_id, out)


def unpack_onebit(p: OneBitPacked) -> GradientVector:
    out = np.where(p.bits, np.float32(p.pos_scale), np.float32(p.neg_scale)).astype(np.float32)
    return GradientVector(p.layer_id, out)


def unpack_dense(p: DensePacked) -> GradientVector:
    return GradientVector(p.layer_id, p.values.copy())
