"""Naive reference implementations used as independent oracles.

Everything here is deliberately written as plain element-by-element loops
over float64 scalars, mirroring the production code's arithmetic order but
sharing none of its vectorized structure.
"""

from __future__ import annotations

import math

import numpy as np


def _to_f64_list(values) -> list[np.float64]:
    return [np.float64(np.float32(v)) for v in values]


def _seq_mean(values: list[np.float64]) -> np.float64:
    acc = np.float64(0.0)
    for v in values:
        acc = acc + v
    return acc / np.float64(len(values)) if values else np.float64(0.0)


def adacomp_pack_reference(residue, dw, bin_size, scale_factor=2.0):
    """Line-by-line transcription of the bin-wise soft-threshold compressor.

    residue: float64 sequence (prior state), dw: float32-valued sequence.
    Returns (bins, scale, new_residue) with bins as a list per bin of
    (index_within_bin, sign) tuples.
    """
    n = len(dw)
    res = [np.float64(r) for r in residue]
    w = _to_f64_list(dw)
    g = [res[i] + w[i] for i in range(n)]
    h = [g[i] + (np.float64(scale_factor) - np.float64(1.0)) * w[i] for i in range(n)]
    nbins = math.ceil(n / bin_size)
    gmax = []
    for b in range(nbins):
        m = np.float64(0.0)
        for j in range(b * bin_size, min((b + 1) * bin_size, n)):
            if abs(g[j]) > m:
                m = abs(g[j])
        gmax.append(m)
    scale32 = np.float32(_seq_mean(gmax))
    scale = np.float64(scale32)
    bins = []
    new_res = list(g)
    for b in range(nbins):
        entries = []
        for j in range(b * bin_size, min((b + 1) * bin_size, n)):
            if gmax[b] > 0 and scale32 != 0 and abs(h[j]) >= gmax[b]:
                sign = 1 if g[j] >= 0 else -1
                entries.append((j - b * bin_size, sign))
                sent = scale if sign == 1 else -scale
                new_res[j] = g[j] - sent
        bins.append(entries)
    return bins, float(scale32), np.array(new_res, dtype=np.float64)


def ls_pack_reference(residue, dw, bin_size):
    """Top-1-per-bin selection with the same scale and residue rules."""
    n = len(dw)
    res = [np.float64(r) for r in residue]
    w = _to_f64_list(dw)
    g = [res[i] + w[i] for i in range(n)]
    nbins = math.ceil(n / bin_size)
    gmax = []
    for b in range(nbins):
        m = np.float64(0.0)
        for j in range(b * bin_size, min((b + 1) * bin_size, n)):
            if abs(g[j]) > m:
                m = abs(g[j])
        gmax.append(m)
    scale32 = np.float32(_seq_mean(gmax))
    scale = np.float64(scale32)
    bins = []
    new_res = list(g)
    for b in range(nbins):
        if gmax[b] == 0 or scale32 == 0:
            bins.append([])
            continue
        best = None
        for j in range(b * bin_size, min((b + 1) * bin_size, n)):
            if best is None or abs(g[j]) > abs(g[best]):
                best = j
        sign = 1 if g[best] >= 0 else -1
        bins.append([(best - b * bin_size, sign)])
        new_res[best] = g[best] - (scale if sign == 1 else -scale)
    return bins, float(scale32), np.array(new_res, dtype=np.float64)


def topk_pack_reference(residue, dw, fraction):
    """Layer-wide top-k with per-sign reconstruction means."""
    n = len(dw)
    res = [np.float64(r) for r in residue]
    w = _to_f64_list(dw)
    g = [res[i] + w[i] for i in range(n)]
    k = math.ceil(fraction * n)
    order = sorted(range(n), key=lambda i: (-abs(g[i]), i))
    chosen = sorted(order[:k])
    pos = [g[i] for i in chosen if g[i] >= 0]
    neg = [g[i] for i in chosen if g[i] < 0]
    pos_scale = np.float64(np.float32(_seq_mean(pos)))
    neg_scale = np.float64(np.float32(_seq_mean(neg)))
    new_res = list(g)
    signs = []
    for i in chosen:
        s = 1 if g[i] >= 0 else -1
        signs.append(s)
        new_res[i] = g[i] - (pos_scale if s == 1 else neg_scale)
    return (np.array(chosen, dtype=np.int64), np.array(signs, dtype=np.int8),
            float(np.float32(pos_scale)), float(np.float32(neg_scale)),
            np.array(new_res, dtype=np.float64))


def onebit_pack_reference(residue, dw):
    """Dense sign quantization with per-sign reconstruction means."""
    n = len(dw)
    res = [np.float64(r) for r in residue]
    w = _to_f64_list(dw)
    g = [res[i] + w[i] for i in range(n)]
    bits = [g[i] >= 0 for i in range(n)]
    pos_scale = np.float64(np.float32(_seq_mean([g[i] for i in range(n) if bits[i]])))
    neg_scale = np.float64(np.float32(_seq_mean([g[i] for i in range(n) if not bits[i]])))
    new_res = [g[i] - (pos_scale if bits[i] else neg_scale) for i in range(n)]
    return (np.array(bits, dtype=bool), float(np.float32(pos_scale)),
            float(np.float32(neg_scale)), np.array(new_res, dtype=np.float64))


def finite_difference_grads(loss_fn, params: list[np.ndarray], eps: float = 1e-3) -> list[np.ndarray]:
    """Central finite differences of loss_fn() w.r.t. every coordinate of the
    given parameter arrays, perturbing them in place."""
    out = []
    for p in params:
        grad = np.zeros(p.shape, dtype=np.float64)
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + np.float32(eps)
            hi = loss_fn()
            flat[i] = orig - np.float32(eps)
            lo = loss_fn()
            flat[i] = orig
            grad.reshape(-1)[i] = (hi - lo) / (2.0 * eps)
        out.append(grad)
    return out
