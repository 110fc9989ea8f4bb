"""Straight-line reference implementations written from the model equations.

Deliberately scalar and loop-based so they share no code path with the
package: no fused gates, no tape, no batching, no masking tricks.
"""

from __future__ import annotations

import math

import numpy as np


def sig(v: float) -> float:
    return 1.0 / (1.0 + math.exp(-v)) if v >= 0 else math.exp(v) / (1.0 + math.exp(v))


def gates(W, U, b, H):
    """Split fused (e, 4H) / (H, 4H) / (4H,) arrays into per-gate copies, order i, f, o, g."""
    return {
        name: (np.array(W[:, k * H : (k + 1) * H]), np.array(U[:, k * H : (k + 1) * H]), np.array(b[k * H : (k + 1) * H]))
        for k, name in enumerate("ifog")
    }


def cell(g, x, h, c):
    """One LSTM step, one unit at a time."""
    H = len(h)
    e = len(x)
    h_new, c_new = np.zeros(H), np.zeros(H)
    for j in range(H):
        pre = {}
        for name, (Wk, Uk, bk) in g.items():
            z = bk[j]
            for a in range(e):
                z += x[a] * Wk[a, j]
            for a in range(H):
                z += h[a] * Uk[a, j]
            pre[name] = z
        i, f, o, cand = sig(pre["i"]), sig(pre["f"]), sig(pre["o"]), math.tanh(pre["g"])
        c_new[j] = f * c[j] + i * cand
        h_new[j] = o * math.tanh(c_new[j])
    return h_new, c_new


def run(g, xs, H):
    h, c = np.zeros(H), np.zeros(H)
    out = []
    for x in xs:
        h, c = cell(g, x, h, c)
        out.append(h)
    return out


def encode(fwd, bwd, xs, H):
    """BiLSTM over the valid tokens only, then per-dimension max over time."""
    hf = run(fwd, xs, H)
    hb = run(bwd, xs[::-1], H)[::-1]
    rows = [np.concatenate([a, b]) for a, b in zip(hf, hb)]
    return np.array([max(r[d] for r in rows) for d in range(2 * H)])


def score(fwd, bwd, Wd, emb, ref_ids, stu_ids, H):
    eR = encode(fwd, bwd, [emb[i] for i in ref_ids], H)
    eS = encode(fwd, bwd, [emb[i] for i in stu_ids], H)
    f = np.concatenate([eR, eS, eR * eS, np.abs(eR - eS)])
    c = Wd.shape[1]
    return np.array([sum(f[a] * Wd[a, k] for a in range(len(f))) for k in range(c)])


def scorer_oracle(scorer, table_matrix, ref_ids, stu_ids):
    """Oracle scores for a package ScorerParams, reading its raw arrays."""
    enc = scorer.encoder
    H = enc.forward.U.shape[0]
    fwd = gates(enc.forward.W.data, enc.forward.U.data, enc.forward.b.data, H)
    bwd = gates(enc.backward.W.data, enc.backward.U.data, enc.backward.b.data, H)
    return score(fwd, bwd, scorer.W.data, table_matrix, ref_ids, stu_ids, H)
