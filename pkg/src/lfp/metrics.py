"""Matting error metrics over the unknown region: SAD, MSE, gradient and
connectivity errors, with the scaling conventions of the community
benchmark tables (SAD and Conn reported /1000, MSE x1000, Grad /1000).
Raw (unscaled) sums are retained alongside.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import TRIMAP_UNKNOWN, validate_trimap
from .errors import DimensionError, MattingWarning

CONN_STEP = 0.1
CONN_PHI_THRESHOLD = 0.15  # benchmark constant for the connectivity penalty
GRAD_SIGMA = 1.4


@dataclass(frozen=True)
class MetricReport:
    sad: float
    mse: float
    grad: float
    conn: float
    raw: dict

    def to_dict(self) -> dict:
        return {"sad": self.sad, "mse": self.mse, "grad": self.grad,
                "conn": self.conn, "raw": dict(self.raw)}


def _unknown_mask(pred, gt, trimap):
    pred = np.asarray(pred, np.float64)
    gt = np.asarray(gt, np.float64)
    if pred.shape != gt.shape or pred.shape != trimap.shape:
        raise DimensionError(f"shapes differ: {pred.shape}, {gt.shape}, {trimap.shape}")
    validate_trimap(trimap)
    mask = trimap == TRIMAP_UNKNOWN
    if not mask.any():
        warnings.warn("metrics: empty unknown region, all errors are 0", MattingWarning)
    return pred, gt, mask


def sad(pred: np.ndarray, gt: np.ndarray, trimap: np.ndarray) -> float:
    pred, gt, mask = _unknown_mask(pred, gt, trimap)
    return float(np.abs(pred - gt)[mask].sum()) / 1000.0


def mse(pred: np.ndarray, gt: np.ndarray, trimap: np.ndarray) -> float:
    pred, gt, mask = _unknown_mask(pred, gt, trimap)
    if not mask.any():
        return 0.0
    return float(np.square(pred - gt)[mask].mean()) * 1.0e3


def _gauss(x, sigma):
    return np.exp(-x * x / (2.0 * sigma * sigma)) / (sigma * np.sqrt(2.0 * np.pi))


def _dgauss(x, sigma):
    return -x * _gauss(x, sigma) / (sigma * sigma)


def gaussian_gradient_magnitude(plane: np.ndarray, sigma: float = GRAD_SIGMA) -> np.ndarray:
    """First-derivative-of-Gaussian magnitude map (benchmark kernels)."""
    eps = 1.0e-2
    half = int(np.ceil(sigma * np.sqrt(-2.0 * np.log(np.sqrt(2.0 * np.pi) * sigma * eps))))
    x = np.arange(-half, half + 1, dtype=np.float64)
    hx = _gauss(x, sigma)[:, None] * _dgauss(x, sigma)[None, :]
    hx = hx / np.sqrt(np.sum(hx * hx))
    gx = ndimage.convolve(plane.astype(np.float64), hx, mode="nearest")
    gy = ndimage.convolve(plane.astype(np.float64), hx.T, mode="nearest")
    return np.sqrt(gx * gx + gy * gy)


def grad_error(pred: np.ndarray, gt: np.ndarray, trimap: np.ndarray,
               sigma: float = GRAD_SIGMA) -> float:
    pred, gt, mask = _unknown_mask(pred, gt, trimap)
    gp = gaussian_gradient_magnitude(pred, sigma)
    gg = gaussian_gradient_magnitude(gt, sigma)
    return float(np.square(gp - gg)[mask].sum()) / 1000.0


def _largest_component(mask: np.ndarray) -> np.ndarray:
    labels, n = ndimage.label(mask)  # 4-connectivity
    if n == 0:
        return np.zeros_like(mask, dtype=bool)
    counts = np.bincount(labels.ravel())
    counts[0] = 0
    return labels == counts.argmax()


def connectivity_map_pivot(pred: np.ndarray, gt: np.ndarray,
                           step: float = CONN_STEP) -> np.ndarray:
    """Per-pixel highest threshold at which the pixel is still connected to
    the largest region that is opaque in both mattes."""
    l_map = -np.ones(pred.shape, dtype=np.float64)
    n_steps = int(round(1.0 / step))
    for i in range(1, n_steps + 1):
        th = i * step
        omega = _largest_component((pred >= th) & (gt >= th))
        fresh = (l_map == -1) & ~omega
        l_map[fresh] = (i - 1) * step
    l_map[l_map == -1] = 1.0
    return l_map


def conn_error(pred: np.ndarray, gt: np.ndarray, trimap: np.ndarray,
               step: float = CONN_STEP) -> float:
    pred, gt, mask = _unknown_mask(pred, gt, trimap)
    l_map = connectivity_map_pivot(pred, gt, step)
    pred_d = pred - l_map
    gt_d = gt - l_map
    pred_phi = 1.0 - pred_d * (pred_d >= CONN_PHI_THRESHOLD)
    gt_phi = 1.0 - gt_d * (gt_d >= CONN_PHI_THRESHOLD)
    return float(np.abs(pred_phi - gt_phi)[mask].sum()) / 1000.0


def evaluate(pred: np.ndarray, gt: np.ndarray, trimap: np.ndarray) -> MetricReport:
    pred_a, gt_a, mask = _unknown_mask(pred, gt, trimap)
    diff = pred_a - gt_a
    raw = {
        "sad_sum": float(np.abs(diff)[mask].sum()),
        "mse_mean": float(np.square(diff)[mask].mean()) if mask.any() else 0.0,
        "grad_sum": grad_error(pred, gt, trimap) * 1000.0,
        "conn_sum": conn_error(pred, gt, trimap) * 1000.0,
        "unknown_pixels": int(mask.sum()),
    }
    return MetricReport(
        sad=raw["sad_sum"] / 1000.0,
        mse=raw["mse_mean"] * 1.0e3,
        grad=raw["grad_sum"] / 1000.0,
        conn=raw["conn_sum"] / 1000.0,
        raw=raw,
    )
