"""Pure-numpy implementations of the hot kernels.

These mirror `panelift._ckernels` exactly: same signatures, same
accumulation order for every quantity that feeds a comparison, so the two
backends make identical split/skip decisions. The compiled module is
preferred at import time when present; see `panelift.kernels`.
"""

from __future__ import annotations

import numpy as np

_BLOCK = 64


def ols_moments(offsets, x, y):
    """Per-group two-pass moments for simple regressions.

    ``offsets`` has shape (n_groups + 1,); rows of group g live at
    offsets[g]:offsets[g+1] (every group nonempty). Returns
    (count, mean_x, mean_y, sxx, sxy, syy) where the s-terms are centered
    sums of squares / cross-products.
    """
    offsets = np.asarray(offsets, dtype=np.int64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    counts = np.diff(offsets)
    starts = offsets[:-1]
    fcounts = counts.astype(np.float64)
    mean_x = np.add.reduceat(x, starts) / fcounts
    mean_y = np.add.reduceat(y, starts) / fcounts
    dx = x - np.repeat(mean_x, counts)
    dy = y - np.repeat(mean_y, counts)
    sxx = np.add.reduceat(dx * dx, starts)
    sxy = np.add.reduceat(dx * dy, starts)
    syy = np.add.reduceat(dy * dy, starts)
    return counts, mean_x, mean_y, sxx, sxy, syy


def _block_inversions(block: np.ndarray) -> int:
    m = len(block)
    if m < 2:
        return 0
    gt = block[:, None] > block[None, :]
    return int(np.count_nonzero(np.triu(gt, k=1)))


def count_inversions(values) -> int:
    """Number of pairs i < j with values[i] > values[j].

    Bottom-up mergesort counting; blocks below a small width are counted
    by direct comparison.
    """
    v = np.asarray(values, dtype=np.float64)
    n = len(v)
    if n < 2:
        return 0
    total = 0
    blocks = []
    for s in range(0, n, _BLOCK):
        b = v[s : s + _BLOCK]
        total += _block_inversions(b)
        blocks.append(np.sort(b, kind="stable"))
    width = _BLOCK
    while width < n:
        merged = []
        for k in range(0, len(blocks), 2):
            if k + 1 == len(blocks):
                merged.append(blocks[k])
                continue
            left, right = blocks[k], blocks[k + 1]
            # for each r in right, count left elements strictly greater
            total += int(
                np.sum(len(left) - np.searchsorted(left, right, side="right"))
            )
            merged.append(np.sort(np.concatenate([left, right]), kind="stable"))
        blocks = merged
        width *= 2
    return total


def scan_feature_splits(sort_idx, xvals, node_of, grad, n_nodes, min_leaf):
    """Best variance-reduction split per node for one feature.

    ``sort_idx`` is the global ascending argsort of ``xvals`` (stable);
    ``node_of`` maps samples to their current node, -1 for samples resting
    in finished leaves. Returns per-node arrays
    (gain, threshold, left_count, left_sum); gain is -inf where the node
    has no admissible split on this feature. Prefix sums run in x-sorted
    order so results are bit-identical to the compiled backend.
    """
    sort_idx = np.asarray(sort_idx, dtype=np.int64)
    node_of = np.asarray(node_of, dtype=np.int32)
    xvals = np.asarray(xvals, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)

    best_gain = np.full(n_nodes, -np.inf)
    best_thr = np.zeros(n_nodes)
    best_left_cnt = np.zeros(n_nodes, dtype=np.int64)
    best_left_sum = np.zeros(n_nodes)

    nd = node_of[sort_idx]
    active = nd >= 0
    s = sort_idx[active]
    nd = nd[active]
    if len(s) == 0:
        return best_gain, best_thr, best_left_cnt, best_left_sum

    order = np.argsort(nd, kind="stable")  # group by node, keep x-order inside
    s = s[order]
    nd = nd[order]
    xs = xvals[s]
    gs = grad[s]

    seg_starts = np.flatnonzero(np.diff(nd, prepend=-1))
    seg_ends = np.append(seg_starts[1:], len(nd))
    for st, en in zip(seg_starts, seg_ends):
        node = int(nd[st])
        cnt = en - st
        if cnt < 2 * min_leaf:
            continue
        xseg = xs[st:en]
        gseg = gs[st:en]
        csum = np.cumsum(gseg)
        total = csum[-1]
        left_cnt = np.arange(1, cnt)
        ok = (
            (xseg[1:] != xseg[:-1])
            & (left_cnt >= min_leaf)
            & (cnt - left_cnt >= min_leaf)
        )
        if not ok.any():
            continue
        lc = left_cnt[ok].astype(np.float64)
        ls = csum[:-1][ok]
        rc = cnt - lc
        rs = total - ls
        gain = ls * ls / lc + rs * rs / rc - total * total / cnt
        j = int(np.argmax(gain))
        best_gain[node] = gain[j]
        pos = np.flatnonzero(ok)[j]  # split between pos and pos+1
        best_thr[node] = 0.5 * (xseg[pos] + xseg[pos + 1])
        best_left_cnt[node] = pos + 1
        best_left_sum[node] = csum[pos]
    return best_gain, best_thr, best_left_cnt, best_left_sum
