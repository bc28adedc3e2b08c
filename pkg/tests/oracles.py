"""Independent reference implementations used only by the tests.

These deliberately avoid the vectorised code paths under test.
"""

from collections import deque

import numpy as np


def conv2d_loops(x, kernels, bias, padding):
    """Direct nested-loop cross-correlation on a single [h, w, cin] input."""
    h, w, cin = x.shape
    cout, kh, kw, _ = kernels.shape
    if padding == "same":
        ph, pw = kh // 2, kw // 2
        xp = np.zeros((h + 2 * ph, w + 2 * pw, cin))
        xp[ph : ph + h, pw : pw + w] = x
    else:
        xp = x
    oh, ow = xp.shape[0] - kh + 1, xp.shape[1] - kw + 1
    out = np.zeros((oh, ow, cout))
    for i in range(oh):
        for j in range(ow):
            for co in range(cout):
                acc = bias[co]
                for di in range(kh):
                    for dj in range(kw):
                        for ci in range(cin):
                            acc += xp[i + di, j + dj, ci] * kernels[co, di, dj, ci]
                out[i, j, co] = acc
    return out


def maxpool_scan(x):
    h, w, c = x.shape
    out = np.empty((h // 2, w // 2, c))
    for i in range(h // 2):
        for j in range(w // 2):
            for k in range(c):
                out[i, j, k] = max(x[2 * i + a, 2 * j + b, k] for a in range(2) for b in range(2))
    return out


def mask_by_membership(boxes, width, height):
    """Per-pixel rectangle membership: returns an (h, w, 3) uint8 array."""
    out = np.empty((height, width, 3), dtype=np.uint8)
    for y in range(height):
        for x in range(width):
            inside = any(b.x <= x < b.x + b.w and b.y <= y < b.y + b.h for b in boxes)
            out[y, x] = (255, 0, 0) if inside else (255, 255, 255)
    return out


def union_area(boxes, width, height):
    """Exact integer area of the union of clamped rectangles (coordinate compression)."""
    rects = []
    for b in boxes:
        x0, y0 = min(b.x, width), min(b.y, height)
        x1, y1 = min(b.x + b.w, width), min(b.y + b.h, height)
        if x0 < x1 and y0 < y1:
            rects.append((x0, y0, x1, y1))
    xs = sorted({r[0] for r in rects} | {r[2] for r in rects})
    ys = sorted({r[1] for r in rects} | {r[3] for r in rects})
    area = 0
    for xa, xb in zip(xs, xs[1:]):
        for ya, yb in zip(ys, ys[1:]):
            if any(r[0] <= xa and xb <= r[2] and r[1] <= ya and yb <= r[3] for r in rects):
                area += (xb - xa) * (yb - ya)
    return area


def components_bfs(changed, min_area):
    """4-connected components by BFS in raster discovery order -> (x, y, w, h) list."""
    h, w = changed.shape
    seen = np.zeros_like(changed, dtype=bool)
    boxes = []
    for y in range(h):
        for x in range(w):
            if not changed[y, x] or seen[y, x]:
                continue
            q = deque([(y, x)])
            seen[y, x] = True
            pts = []
            while q:
                cy, cx = q.popleft()
                pts.append((cy, cx))
                for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
                    if 0 <= ny < h and 0 <= nx < w and changed[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        q.append((ny, nx))
            if len(pts) >= min_area:
                ys = [p[0] for p in pts]
                xs = [p[1] for p in pts]
                boxes.append((min(xs), min(ys), max(xs) - min(xs) + 1, max(ys) - min(ys) + 1))
    return boxes


_M64 = (1 << 64) - 1


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _M64


def xoshiro256ss(state, n):
    """Reference xoshiro256** on a 4-word state; returns n outputs."""
    s = [int(v) for v in state]
    out = []
    for _ in range(n):
        out.append((_rotl((s[1] * 5) & _M64, 7) * 9) & _M64)
        t = (s[1] << 17) & _M64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
    return out


def recount(labels, preds):
    tp = tn = fp = fn = 0
    for y, p in zip(labels, preds):
        if y == 1 and p == 1:
            tp += 1
        elif y == 0 and p == 0:
            tn += 1
        elif y == 0 and p == 1:
            fp += 1
        else:
            fn += 1
    return tp, tn, fp, fn


def numeric_grad(f, x, eps=1e-3):
    """Central differences of scalar ``f()`` w.r.t. every element of ``x`` (mutated in place)."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + eps
        fp = f()
        x[idx] = orig - eps
        fm = f()
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * eps)
    return g


def max_rel_error(a, n):
    a, n = np.asarray(a, dtype=float), np.asarray(n, dtype=float)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)))
