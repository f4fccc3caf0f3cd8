#!/usr/bin/env python3
"""Reference PSNR / SSIM / SAM for a pair of HDC1 cubes, written as a golden JSON.

SSIM comes from scikit-image (Gaussian weights, sigma 1.5, population
covariance), cropped to the region where the 11x11 window fits.

usage: metrics_oracle.py ESTIMATE.hdc TRUTH.hdc OUT.json
"""
import json
import struct
import sys

import numpy as np
from skimage.metrics import structural_similarity


def load(path):
    data = open(path, "rb").read()
    assert data[:8] == b"HDCUBE01", path
    (n,) = struct.unpack("<I", data[8:12])
    h = json.loads(data[12 : 12 + n])
    cube = np.frombuffer(data[12 + n :], dtype="<f4").astype(np.float64)
    return cube.reshape(h["bands"], h["height"], h["width"])


def psnr(x, y, peak):
    out = []
    for xb, yb in zip(x, y):
        mse = np.mean((xb - yb) ** 2)
        out.append(100.0 if mse == 0 else min(100.0, 10 * np.log10(peak**2 / mse)))
    return out


def ssim(x, y, peak):
    out = []
    for xb, yb in zip(x, y):
        _, full = structural_similarity(
            xb, yb, data_range=peak, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, full=True
        )
        out.append(float(full[5:-5, 5:-5].mean()))
    return out


def sam(x, y):
    xs, ys = x.reshape(x.shape[0], -1).T, y.reshape(y.shape[0], -1).T
    nx, ny = np.linalg.norm(xs, axis=1), np.linalg.norm(ys, axis=1)
    ok = (nx > 0) & (ny > 0)
    cos = np.clip(np.sum(xs[ok] * ys[ok], axis=1) / (nx[ok] * ny[ok]), -1, 1)
    return float(np.degrees(np.arccos(cos)).mean())


est, truth = load(sys.argv[1]), load(sys.argv[2])
peak = float(truth.max())
p, s = psnr(est, truth, peak), ssim(est, truth, peak)
golden = {
    "data_peak": peak,
    "per_band_psnr": p,
    "per_band_ssim": s,
    "mean_psnr": float(np.mean(p)),
    "mean_ssim": float(np.mean(s)),
    "mean_sam": sam(est, truth),
}
with open(sys.argv[3], "w") as f:
    json.dump(golden, f, indent=2)
    f.write("\n")
print(json.dumps({k: v for k, v in golden.items() if k.startswith("mean")}))
