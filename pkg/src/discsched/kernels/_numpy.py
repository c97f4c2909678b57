from __future__ import annotations

import numpy as np


def _first_in_order(mask: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Per row, the first column of ``mask`` (visited in ``order``) that is set; -1 if none."""
    m = mask[:, order]
    hit = m.argmax(axis=1)
    found = m[np.arange(mask.shape[0]), hit]
    return np.where(found, order[hit], -1)


def simulate_batch(arrival, ttl, fee, weights, code, param, uniforms):
    n = arrival.shape[0]
    n_samples = uniforms.shape[0]
    out = np.zeros(n_samples)
    if n == 0:
        return out
    taken = np.zeros((n_samples, n), dtype=bool)
    rows = np.arange(n_samples)
    for j in range(weights.shape[0]):
        cur = arrival + ttl - j
        live = (arrival <= j) & (cur >= 1)
        if not live.any():
            continue
        avail = live[None, :] & ~taken
        # preference order: fee desc, ttl asc, index asc
        order = np.lexsort((np.arange(n), cur, -fee))
        best = _first_in_order(avail, order)
        if code == 0:
            pick = best
        elif code == 1:
            urgent = cur == 1
            bu = _first_in_order(avail & urgent[None, :], order)
            bl = _first_in_order(avail & ~urgent[None, :], order)
            fu = np.where(bu >= 0, fee[np.maximum(bu, 0)], 0.0)
            fl = np.where(bl >= 0, fee[np.maximum(bl, 0)], 0.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                take_later = np.where(fu > 0.0, fl / fu >= param, True)
            pick = np.where(bu < 0, bl, np.where(bl < 0, bu, np.where(take_later, bl, bu)))
        else:
            e = np.where(avail, cur[None, :], np.iinfo(np.int64).max).min(axis=1)
            early = _first_in_order(avail & (cur[None, :] == e[:, None]), order)
            fe = fee[np.maximum(early, 0)]
            fb = fee[np.maximum(best, 0)]
            if code == 2:
                take_early = fe >= np.exp(-param * uniforms[:, j]) * fb
            else:
                take_early = fe >= fb / param
            pick = np.where(best < 0, -1, np.where(take_early, early, best))
        chosen = pick >= 0
        taken[rows[chosen], pick[chosen]] = True
        out[chosen] += weights[j] * fee[pick[chosen]]
    return out
