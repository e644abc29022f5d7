"""Image-space appearance comparison.

The optimizer consumes the raw per-channel residual / L2 distance; SSIM is
diagnostic only and is computed on linear HDR luminance (Rec.709 weights)
with a Gaussian window.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve

from .errors import DimensionMismatchError
from .render import RenderedImage

REC709 = np.array([0.2126, 0.7152, 0.0722])

SSIM_SIGMA = 1.5
SSIM_WINDOW = 11
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check(a: RenderedImage, b: RenderedImage, check_pass=False):
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatchError(
            f"image sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}")
    if check_pass and a.render_pass != b.render_pass:
        raise DimensionMismatchError(
            f"render passes differ: {a.render_pass} vs {b.render_pass}")


def residual_vector(a: RenderedImage, b: RenderedImage) -> np.ndarray:
    """Flattened per-channel difference a - b; length 3*w*h."""
    _check(a, b)
    return (a.pixels - b.pixels).ravel()


def l2_distance(a: RenderedImage, b: RenderedImage) -> float:
    """Root mean squared per-channel difference over all pixels."""
    _check(a, b, check_pass=True)
    r = a.pixels - b.pixels
    return float(np.sqrt(np.mean(r * r)))


def luminance(img: RenderedImage) -> np.ndarray:
    return img.pixels @ REC709


def _gaussian_kernel(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(r * r) / (2.0 * sigma * sigma))
    k2 = np.outer(k, k)
    return k2 / k2.sum()


_KERNEL = _gaussian_kernel()


def _window_mean(x):
    return convolve(x, _KERNEL, mode="reflect")


@dataclass
class DissimilarityReport:
    l2: float
    mean_ssim: float
    ssim_map: np.ndarray
    mean_dissimilarity: float

    def csv_row(self):
        return [self.l2, self.mean_ssim, self.mean_dissimilarity]

    @staticmethod
    def csv_header():
        return ["l2", "mean_ssim", "mean_dissimilarity"]


def ssim(a: RenderedImage, b: RenderedImage,
         data_range: float | None = None) -> DissimilarityReport:
    """Windowed SSIM of linear HDR luminance plus the L2 distance.

    Gaussian window 11x11 (sigma 1.5); stabilizers C1 = (0.01 L)^2 and
    C2 = (0.03 L)^2 where L defaults to the peak luminance of ``a`` (the
    reference).  Pass ``data_range`` explicitly for a symmetric metric.
    """
    _check(a, b)
    la = luminance(a)
    lb = luminance(b)
    if data_range is None:
        data_range = float(la.max())
    data_range = max(data_range, 1e-30)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    mu_a = _window_mean(la)
    mu_b = _window_mean(lb)
    var_a = _window_mean(la * la) - mu_a * mu_a
    var_b = _window_mean(lb * lb) - mu_b * mu_b
    cov = _window_mean(la * lb) - mu_a * mu_b

    ssim_map = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)))
    mean = float(ssim_map.mean())
    r = a.pixels - b.pixels
    l2 = float(np.sqrt(np.mean(r * r)))
    return DissimilarityReport(l2, mean, ssim_map, 1.0 - mean)


def write_report_csv(path, reports, labels=None):
    """One CSV row per report; optional leading label column."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        header = DissimilarityReport.csv_header()
        writer.writerow((["label"] if labels else []) + header)
        for i, rep in enumerate(reports):
            row = rep.csv_row()
            writer.writerow(([labels[i]] if labels else []) + row)
