"""Image losses and quality metrics with analytic gradients.

SSIM follows the standard 11x11 Gaussian-window formulation (sigma 1.5,
C1 = 0.01^2, C2 = 0.03^2 on a [0, 1] value range). Windows are applied with
zero padding at the borders; the symmetric kernel then makes the filtering
operator self-adjoint, which keeps the hand-written gradient exact.
"""

import numpy as np
from scipy import ndimage

from ..errors import InvalidInputError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def _check_pair(a: np.ndarray, b: np.ndarray):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InvalidInputError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def loss_l1(a: np.ndarray, b: np.ndarray) -> float:
    a, b = _check_pair(a, b)
    return float(np.mean(np.abs(a - b)))


def loss_l1_grad(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """d(mean |a-b|)/da; the sign convention at a == b is 0."""
    a, b = _check_pair(a, b)
    return np.sign(a - b) / a.size


def metric_psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] images; inf when equal."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return -10.0 * np.log10(mse)


def _gauss_kernel():
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=float)
    k = np.exp(-(x**2) / (2.0 * SSIM_SIGMA**2))
    return k / k.sum()


_KERNEL_1D = _gauss_kernel()


def _filt(img: np.ndarray) -> np.ndarray:
    """Separable Gaussian window over the two leading (spatial) axes."""
    out = ndimage.correlate1d(img, _KERNEL_1D, axis=0, mode="constant", cval=0.0)
    return ndimage.correlate1d(out, _KERNEL_1D, axis=1, mode="constant", cval=0.0)


def _ssim_terms(a: np.ndarray, b: np.ndarray):
    mu_a, mu_b = _filt(a), _filt(b)
    pa, pb, pab = _filt(a * a), _filt(b * b), _filt(a * b)
    n1 = 2.0 * mu_a * mu_b + SSIM_C1
    n2 = 2.0 * (pab - mu_a * mu_b) + SSIM_C2
    d1 = mu_a**2 + mu_b**2 + SSIM_C1
    d2 = (pa - mu_a**2) + (pb - mu_b**2) + SSIM_C2
    return mu_a, mu_b, pa, pab, n1, n2, d1, d2


def metric_ssim(a: np.ndarray, b: np.ndarray) -> float:
    a, b = _check_pair(a, b)
    *_, n1, n2, d1, d2 = _ssim_terms(a, b)
    return float(np.mean(n1 * n2 / (d1 * d2)))


def metric_ssim_grad(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """d(mean SSIM)/da, exact for the zero-padded window above."""
    a, b = _check_pair(a, b)
    mu_a, mu_b, pa, pab, n1, n2, d1, d2 = _ssim_terms(a, b)
    s = n1 * n2 / (d1 * d2)
    g = 1.0 / a.size  # upstream of the mean, uniform over pixels/channels

    # partials with respect to the filtered quantities
    d_mu_a = g * (
        2.0 * mu_b * (n2 - n1) / (d1 * d2) + 2.0 * mu_a * s * (1.0 / d2 - 1.0 / d1)
    )
    d_pa = g * (-s / d2)
    d_pab = g * (2.0 * n1 / (d1 * d2))

    # adjoint of each filtering: same correlation (symmetric kernel, zero pad)
    return _filt(d_mu_a) + _filt(d_pa) * 2.0 * a + _filt(d_pab) * b


def loss_dssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural dissimilarity (1 - SSIM) / 2."""
    return (1.0 - metric_ssim(a, b)) / 2.0


def loss_dssim_grad(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return -0.5 * metric_ssim_grad(a, b)


def render_loss(pixels: np.ndarray, gt: np.ndarray, lambda_dssim: float = 0.2) -> float:
    """Training objective (1 - lambda) L1 + lambda DSSIM."""
    if not 0.0 <= lambda_dssim <= 1.0:
        raise InvalidInputError("lambda_dssim must lie in [0, 1]")
    out = (1.0 - lambda_dssim) * loss_l1(pixels, gt)
    if lambda_dssim > 0.0:
        out += lambda_dssim * loss_dssim(pixels, gt)
    return out


def render_loss_grad(
    pixels: np.ndarray, gt: np.ndarray, lambda_dssim: float = 0.2
) -> np.ndarray:
    """d(render_loss)/dpixels."""
    if not 0.0 <= lambda_dssim <= 1.0:
        raise InvalidInputError("lambda_dssim must lie in [0, 1]")
    grad = (1.0 - lambda_dssim) * loss_l1_grad(pixels, gt)
    if lambda_dssim > 0.0:
        grad = grad + lambda_dssim * loss_dssim_grad(pixels, gt)
    return grad
