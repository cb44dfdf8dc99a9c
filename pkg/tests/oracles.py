"""Straight-loop reference implementations.

Deliberately written pixel by pixel with plain Python arithmetic, sharing
no code with the package, so they can check the vectorized versions.
"""
import itertools
import math
import random
from collections import deque


def rows(a):
    return [[float(v) for v in r] for r in a]


# --- metrics ---------------------------------------------------------------

def mae(Y, G):
    Y, G = rows(Y), rows(G)
    tot = 0.0
    n = 0
    for yr, gr in zip(Y, G):
        for y, g in zip(yr, gr):
            tot += abs(y - g)
            n += 1
    return tot / n


def fg(y, t):
    return y >= t and y > 0


def prf(Y, G, t, beta2=0.3):
    tp = fp = fn = 0
    for yr, gr in zip(rows(Y), rows(G)):
        for y, g in zip(yr, gr):
            pred = fg(y, t)
            if pred and g:
                tp += 1
            elif pred:
                fp += 1
            elif g:
                fn += 1
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn)
    f = (1 + beta2) * p * r / (beta2 * p + r) if beta2 * p + r > 0 else 0.0
    return p, r, f


def e_at(Y, G, t):
    Y, G = rows(Y), rows(G)
    B = [[1.0 if fg(y, t) else 0.0 for y in yr] for yr in Y]
    n = sum(len(r) for r in G)
    gsum = sum(sum(r) for r in G)
    if gsum == 0:
        return sum(1.0 - b for r in B for b in r) / n
    if gsum == n:
        return sum(b for r in B for b in r) / n
    mg = gsum / n
    mb = sum(b for r in B for b in r) / n
    acc = 0.0
    for br, gr in zip(B, G):
        for b, g in zip(br, gr):
            a = g - mg
            c = b - mb
            xi = 2 * a * c / (a * a + c * c)
            acc += (1 + xi) ** 2 / 4
    return acc / n


def e_sweep_mean(Y, G):
    return sum(e_at(Y, G, k / 255) for k in range(256)) / 256


def _mean(v):
    return sum(v) / len(v)


def _std1(v):
    if len(v) < 2:
        return 0.0
    m = _mean(v)
    return math.sqrt(sum((x - m) ** 2 for x in v) / (len(v) - 1))


def _obj(v):
    eps = 2.220446049250313e-16
    m = _mean(v)
    return 2 * m / (m * m + 1 + _std1(v) + eps)


def _ssim(P, Gq):
    eps = 2.220446049250313e-16
    p = [v for r in P for v in r]
    g = [v for r in Gq for v in r]
    n = len(p)
    if n == 0:
        return 0.0
    x, y = _mean(p), _mean(g)
    d = max(n - 1, 1)
    sx = sum((a - x) ** 2 for a in p) / d
    sy = sum((b - y) ** 2 for b in g) / d
    sxy = sum((a - x) * (b - y) for a, b in zip(p, g)) / d
    alpha = 4 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0:
        return alpha / (beta + eps)
    return 1.0 if beta == 0 else 0.0


def s_measure(Y, G, alpha=0.5):
    Y, G = rows(Y), rows(G)
    h, w = len(G), len(G[0])
    flat_g = [g for r in G for g in r]
    u = _mean(flat_g)
    if u == 0:
        return 1 - _mean([y for r in Y for y in r])
    if u == 1:
        return _mean([y for r in Y for y in r])
    fgv = [Y[i][j] for i in range(h) for j in range(w) if G[i][j]]
    bgv = [1 - Y[i][j] for i in range(h) for j in range(w) if not G[i][j]]
    s_obj = u * _obj(fgv) + (1 - u) * _obj(bgv)
    sy = sx = cnt = 0
    for i in range(h):
        for j in range(w):
            if G[i][j]:
                sy += i
                sx += j
                cnt += 1
    cx = round(sx / cnt) + 1
    cy = round(sy / cnt) + 1

    def quad(a, r0, r1, c0, c1):
        return [a[i][c0:c1] for i in range(r0, r1)]

    area = h * w
    w1 = cx * cy / area
    w2 = (w - cx) * cy / area
    w3 = cx * (h - cy) / area
    w4 = 1 - w1 - w2 - w3
    s_reg = (w1 * _ssim(quad(Y, 0, cy, 0, cx), quad(G, 0, cy, 0, cx))
             + w2 * _ssim(quad(Y, 0, cy, cx, w), quad(G, 0, cy, cx, w))
             + w3 * _ssim(quad(Y, cy, h, 0, cx), quad(G, cy, h, 0, cx))
             + w4 * _ssim(quad(Y, cy, h, cx, w), quad(G, cy, h, cx, w)))
    return max(0.0, alpha * s_obj + (1 - alpha) * s_reg)


# --- losses ----------------------------------------------------------------

def bce_terms(Y, G, eps=1e-7):
    out = []
    for yr, gr in zip(rows(Y), rows(G)):
        for y, g in zip(yr, gr):
            y = min(max(y, eps), 1 - eps)
            out.append(-(g * math.log(y) + (1 - g) * math.log(1 - y)))
    return out


def bce(Y, G):
    t = bce_terms(Y, G)
    return sum(t) / len(t)


def pbce(Y, G, J):
    t = bce_terms(Y, G)
    j = [v for r in rows(J) for v in r]
    sel = [a for a, b in zip(t, j) if b]
    return sum(sel) / len(sel)


def iou_loss(Y, G):
    inter = union = 0.0
    for yr, gr in zip(rows(Y), rows(G)):
        for y, g in zip(yr, gr):
            inter += y * g
            union += y + g - y * g
    return 0.0 if union == 0 else 1 - inter / union


def sigmoid(z):
    return 1 / (1 + math.exp(-z))


# --- resampling ------------------------------------------------------------

def bilinear_at(channel, y, x):
    """Sample a 2-D list at real (y, x), clamping coordinates to the border."""
    h, w = len(channel), len(channel[0])
    y = min(max(y, 0.0), h - 1.0)
    x = min(max(x, 0.0), w - 1.0)
    y0, x0 = int(math.floor(y)), int(math.floor(x))
    y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
    dy, dx = y - y0, x - x0
    return (channel[y0][x0] * (1 - dy) * (1 - dx) + channel[y0][x1] * (1 - dy) * dx
            + channel[y1][x0] * dy * (1 - dx) + channel[y1][x1] * dy * dx)


def dynamic_resample(x, offsets, s):
    """x: C x h x w nested lists; offsets[k][a][b][i][j] (k=0 x-shift, 1 y-shift)."""
    C, h, w = len(x), len(x[0]), len(x[0][0])
    out = [[[0.0] * (w * s) for _ in range(h * s)] for _ in range(C)]
    for c in range(C):
        for i in range(h):
            for a in range(s):
                for j in range(w):
                    for b in range(s):
                        yy = i + (a + 0.5) / s - 0.5 + offsets[1][a][b][i][j]
                        xx = j + (b + 0.5) / s - 0.5 + offsets[0][a][b][i][j]
                        out[c][i * s + a][j * s + b] = bilinear_at(x[c], yy, xx)
    return out


# --- connected components / flood fill ------------------------------------

def components(hit):
    """8-connected components of a boolean grid: list of (pixels, bbox)."""
    h, w = len(hit), len(hit[0])
    seen = [[False] * w for _ in range(h)]
    comps = []
    for i in range(h):
        for j in range(w):
            if hit[i][j] and not seen[i][j]:
                q = deque([(i, j)])
                seen[i][j] = True
                pix = []
                while q:
                    y, x = q.popleft()
                    pix.append((y, x))
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            ny, nx = y + dy, x + dx
                            if 0 <= ny < h and 0 <= nx < w and hit[ny][nx] and not seen[ny][nx]:
                                seen[ny][nx] = True
                                q.append((ny, nx))
                ys = [p[0] for p in pix]
                xs = [p[1] for p in pix]
                comps.append((pix, (min(xs), min(ys), max(xs) + 1, max(ys) + 1)))
    return comps


def flood_fill(image, seed, box, tol):
    """4-connected fill from seed over pixels within `tol` (L2) of the seed color, inside box."""
    x1, y1, x2, y2 = box
    h, w = len(image), len(image[0])
    sy, sx = seed
    ref = [int(v) for v in image[sy][sx]]
    out = [[0] * w for _ in range(h)]
    q = deque([(sy, sx)])
    out[sy][sx] = 1
    while q:
        y, x = q.popleft()
        for ny, nx in ((y + 1, x), (y - 1, x), (y, x + 1), (y, x - 1)):
            if y1 <= ny < y2 and x1 <= nx < x2 and not out[ny][nx]:
                d = math.sqrt(sum((int(a) - b) ** 2 for a, b in zip(image[ny][nx], ref)))
                if d <= tol:
                    out[ny][nx] = 1
                    q.append((ny, nx))
    return out


# --- finite differences ----------------------------------------------------

def rel_err(a, n):
    return abs(a - n) / max(abs(a), abs(n), 1e-6)


def grad_check(f, x, analytic, h=1e-6, max_entries=None, seed=0):
    """Max relative error between `analytic` (same shape as x) and central
    differences of the scalar function f at x. x is a float64 numpy array,
    perturbed one entry at a time; optionally a random subset of entries."""
    idx = list(itertools.product(*(range(n) for n in x.shape)))
    if max_entries is not None and len(idx) > max_entries:
        idx = random.Random(seed).sample(idx, max_entries)
    worst = 0.0
    for i in idx:
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        num = (fp - fm) / (2 * h)
        worst = max(worst, rel_err(float(analytic[i]), num))
    return worst
