"""Independent naive-loop reference implementations.

These deliberately avoid the library's vectorized code paths: plain Python
loops, dict histograms and explicit window gathering, so they can serve as
oracles for the fast implementations.
"""

import math

import numpy as np

from evofuse.image import gaussian_kernel


def entropy_oracle(img) -> float:
    counts = {}
    for v in img.data.ravel():
        level = int(math.floor(v * 255.0 + 0.5))
        counts[level] = counts.get(level, 0) + 1
    n = img.data.size
    return -sum((c / n) * math.log2(c / n) for c in counts.values())


def avg_gradient_oracle(img) -> float:
    a = img.data
    h, w = a.shape
    total = 0.0
    for i in range(h - 1):
        for j in range(w - 1):
            dx = ((a[i, j + 1] - a[i, j]) + (a[i + 1, j + 1] - a[i + 1, j])) / 2.0
            dy = ((a[i + 1, j] - a[i, j]) + (a[i + 1, j + 1] - a[i, j + 1])) / 2.0
            total += math.sqrt((dx * dx + dy * dy) / 2.0)
    return total / (h * w)


def brenner_oracle(img) -> float:
    a = img.data
    h, w = a.shape
    total = 0.0
    for i in range(h):
        for j in range(w - 2):
            d = a[i, j + 2] - a[i, j]
            total += d * d
    return total / (h * w)


def mutual_information_oracle(x, y) -> float:
    def levels(img):
        return [int(math.floor(v * 255.0 + 0.5)) for v in img.data.ravel()]

    lx, ly = levels(x), levels(y)
    n = len(lx)
    cx, cy, cxy = {}, {}, {}
    for a, b in zip(lx, ly):
        cx[a] = cx.get(a, 0) + 1
        cy[b] = cy.get(b, 0) + 1
        cxy[(a, b)] = cxy.get((a, b), 0) + 1

    def ent(counts):
        return -sum((c / n) * math.log2(c / n) for c in counts.values())

    return ent(cx) + ent(cy) - ent(cxy)


def psnr_oracle(x, y) -> float:
    diff = (x.data - y.data) * 255.0
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return 100.0
    return min(10.0 * math.log10(255.0**2 / mse), 100.0)


def ssim_oracle(x, y) -> float:
    """Per-window sliding implementation over a symmetric-padded image."""
    win = gaussian_kernel(11, 1.5)
    c1, c2 = 0.01**2, 0.03**2
    r = 5
    a = np.pad(x.data, r, mode="symmetric")
    b = np.pad(y.data, r, mode="symmetric")
    h, w = x.data.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            wa = a[i : i + 11, j : j + 11]
            wb = b[i : i + 11, j : j + 11]
            mu1 = float((win * wa).sum())
            mu2 = float((win * wb).sum())
            s1 = float((win * wa * wa).sum()) - mu1 * mu1
            s2 = float((win * wb * wb).sum()) - mu2 * mu2
            s12 = float((win * wa * wb).sum()) - mu1 * mu2
            total += ((2 * mu1 * mu2 + c1) * (2 * s12 + c2)) / (
                (mu1 * mu1 + mu2 * mu2 + c1) * (s1 + s2 + c2)
            )
    return total / (h * w)


def conv2d_oracle(x, weight, bias, stride=1, pad=0, groups=1) -> np.ndarray:
    """Direct seven-loop grouped cross-correlation."""
    n, cin, h, w = x.shape
    cout, cin_g, k, _ = weight.shape
    out_h = (h + 2 * pad - k) // stride + 1
    out_w = (w + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((n, cout, out_h, out_w))
    cpg_out = cout // groups
    for ni in range(n):
        for co in range(cout):
            g = co // cpg_out
            for oy in range(out_h):
                for ox in range(out_w):
                    acc = 0.0
                    for ci in range(cin_g):
                        for ky in range(k):
                            for kx in range(k):
                                acc += (
                                    xp[ni, g * cin_g + ci, oy * stride + ky, ox * stride + kx]
                                    * weight[co, ci, ky, kx]
                                )
                    out[ni, co, oy, ox] = acc + (bias[co] if bias is not None else 0.0)
    return out


def finite_diff_grad(fn, arr, h=1e-3):
    """Central finite differences of scalar fn() wrt every entry of arr."""
    flat = arr.ravel()
    out = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn()
        flat[i] = orig - h
        fm = fn()
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * h)
    return out.reshape(arr.shape)


def relative_err(a, b, floor=1e-6):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.max(np.abs(a - b) / denom)
