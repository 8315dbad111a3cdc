"""Dense-CRF segmentation through the unit-vector relaxation.

Pixels are relaxed to unit vectors; pairwise weights come from Gaussian
appearance and smoothness kernels, unaries from log prior probabilities
pulling each pixel toward its class vertex. The relaxation is solved by
simultaneous normalized ascent and rounded with the same two-pass scheme as
the MRF solvers. Kernels are evaluated exactly (dense), which is what bounds
the pixel count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy import ndimage

from ._kernels import dense_crf_kernel
from .core import SimplexFrame, simplex_frame
from .mixing import random_unit_vectors
from .rounding import round_with_directions, sphere_directions

DESK_PIXEL_CAP = 16384
MIN_ALPHA = 1e-12


@dataclass(frozen=True)
class KernelParams:
    w_app: float = 1.0
    theta_alpha: float = 40.0   # position bandwidth of the appearance kernel
    theta_beta: float = 13.0    # color bandwidth
    w_smooth: float = 1.0
    theta_gamma: float = 3.0    # position bandwidth of the smoothness kernel
    truncate: bool = True       # zero beyond 6 * max(theta_alpha, theta_gamma)

    def __post_init__(self):
        for name in ("w_app", "theta_alpha", "theta_beta", "w_smooth", "theta_gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def radius(self) -> float:
        return 6.0 * max(self.theta_alpha, self.theta_gamma)


@dataclass(frozen=True)
class PixelFeatures:
    """Pixel positions (x, y) and RGB colors in [0, 255], row-major over the image."""

    pos: np.ndarray     # (n, 2)
    color: np.ndarray   # (n, 3)
    width: int
    height: int

    @classmethod
    def from_image(cls, img: np.ndarray) -> "PixelFeatures":
        h, w, _ = img.shape
        ys, xs = np.mgrid[0:h, 0:w]
        pos = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(float)
        return cls(pos=pos, color=img.reshape(-1, 3).astype(float), width=w, height=h)

    @property
    def n(self) -> int:
        return self.pos.shape[0]

    def vector(self, i: int) -> np.ndarray:
        return np.concatenate([self.pos[i], self.color[i]])


@dataclass(frozen=True)
class UnaryPrior:
    p: np.ndarray        # (n, k), rows sum to 1, entries > 0
    theta: float = 1.0

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError("theta must be nonnegative")
        if not np.all(self.p > 0):
            raise ValueError("prior probabilities must be positive so their logs are finite")
        if not np.allclose(self.p.sum(axis=1), 1.0, atol=1e-9, rtol=0):
            raise ValueError("prior rows must sum to 1")


def kernel(fi, fj, params: KernelParams) -> float:
    """Kernel between two (x, y, r, g, b) feature vectors."""
    fi, fj = np.asarray(fi, dtype=float), np.asarray(fj, dtype=float)
    dp = float(np.sum((fi[:2] - fj[:2]) ** 2))
    if params.truncate and dp > params.radius ** 2:
        return 0.0
    dc = float(np.sum((fi[2:] - fj[2:]) ** 2))
    return (params.w_app * math.exp(-dp / (2 * params.theta_alpha ** 2) - dc / (2 * params.theta_beta ** 2))
            + params.w_smooth * math.exp(-dp / (2 * params.theta_gamma ** 2)))


def kernel_matrix(features: PixelFeatures, params: KernelParams) -> np.ndarray:
    """Dense float32 n x n kernel with a zero diagonal (entries computed in double)."""
    n = features.n
    K = np.empty((n, n), dtype=np.float32)
    radius2 = params.radius ** 2 if params.truncate else np.inf
    dense_crf_kernel(np.ascontiguousarray(features.pos, dtype=float),
                     np.ascontiguousarray(features.color, dtype=float),
                     params.w_app, 1.0 / (2 * params.theta_alpha ** 2),
                     1.0 / (2 * params.theta_beta ** 2), params.w_smooth,
                     1.0 / (2 * params.theta_gamma ** 2), radius2,
                     float(np.finfo(np.float32).tiny), K)
    return K


def build_unary(annotation, k: int, confidence: float = 0.95) -> np.ndarray:
    """Prior probabilities from a label map where 0 means unannotated.

    Annotated pixels put ``confidence`` on their label and spread the rest
    evenly; unannotated pixels are uniform. Returns an (n, k) array.
    """
    a = np.asarray(annotation).ravel().astype(np.int64)
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    if a.size and (a.min() < 0 or a.max() > k):
        raise ValueError(f"annotation labels must lie in 0..{k}")
    p = np.full((a.size, k), 1.0 / k)
    marked = a > 0
    p[marked] = (1.0 - confidence) / (k - 1)
    p[np.flatnonzero(marked), a[marked] - 1] = confidence
    return p


def _apply(K, v) -> np.ndarray:
    return (K @ v.astype(K.dtype)).astype(float)


def _value(Kv, unary, v) -> float:
    return 0.5 * float(np.sum(Kv * v)) + float(np.sum(unary * v))


def _normalize_rows(x, fallback):
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    ok = norms > 0
    return np.where(ok, x / np.where(ok, norms, 1.0), fallback)


def relaxed_value(K: np.ndarray, unary: np.ndarray, v: np.ndarray) -> float:
    """sum_{i<j} K_ij v_i.v_j + sum_i u_i.v_i for a zero-diagonal K."""
    return _value(_apply(K, v), unary, v)


@dataclass(frozen=True)
class SegmentationResult:
    labels: np.ndarray          # (height, width), 0-based
    v: np.ndarray
    objective_trace: list
    alpha: float
    iterations: int
    converged: bool


def segment(features: PixelFeatures, prior: UnaryPrior, params: KernelParams = KernelParams(),
            d: int | None = None, alpha: float = 0.1, max_iters: int = 100, seed: int = 0,
            rel_tol: float = 1e-6, rounding_iters: int = 16,
            pixel_cap: int = DESK_PIXEL_CAP, kernel: np.ndarray | None = None) -> SegmentationResult:
    """Label every pixel.

    Iterates v_i <- normalize(v_i + alpha G_i) for all i at once, where
    G_i = sum_{j != i} K_ij v_j + theta sum_l log p_il r_l. An iteration that
    lowers the objective is rejected and alpha is halved. The final labels
    are the best of ``rounding_iters`` roundings under the discrete objective.
    ``kernel`` may carry a precomputed ``kernel_matrix`` for these features.
    """
    n, k = prior.p.shape
    if n != features.n:
        raise ValueError(f"prior has {n} rows but the image has {features.n} pixels")
    if n > pixel_cap:
        raise ValueError(f"{n} pixels exceeds the dense-kernel cap of {pixel_cap}")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    log_p = np.log(prior.p)
    if not np.all(np.isfinite(log_p)):
        raise ValueError("prior has non-finite logs")
    d = k if d is None else d
    frame = simplex_frame(k, d)
    unary = prior.theta * (log_p @ frame.r)

    K = kernel_matrix(features, params) if kernel is None else kernel
    if K.shape != (n, n):
        raise ValueError(f"kernel has shape {K.shape}, expected {(n, n)}")
    rng = np.random.default_rng(seed)
    v = random_unit_vectors(rng, n, d)
    Kv = _apply(K, v)
    f = _value(Kv, unary, v)
    trace = [f]
    converged = False
    it = 0
    while it < max_iters:
        it += 1
        G = Kv + unary
        while True:
            cand = _normalize_rows(v + alpha * G, v)
            Kc = _apply(K, cand)
            f_new = _value(Kc, unary, cand)
            if f_new >= f or alpha < MIN_ALPHA:
                break
            alpha /= 2.0
        if f_new < f:
            break
        v, Kv, f_prev, f = cand, Kc, f, f_new
        trace.append(f)
        if abs(f - f_prev) < rel_tol * max(1.0, abs(f)):
            converged = True
            break

    labels = _best_rounding(K, unary, v, frame, rounding_iters, rng)
    return SegmentationResult(labels=labels.reshape(features.height, features.width), v=v,
                              objective_trace=trace, alpha=alpha, iterations=it,
                              converged=converged)


def _best_rounding(K, unary, v, frame: SimplexFrame, iters: int, rng) -> np.ndarray:
    n, d = v.shape
    cands = round_with_directions(v, frame, sphere_directions(rng, max(iters, 1), frame.k, d))
    R = frame.r[cands]                                    # (iters, n, d)
    stacked = R.transpose(1, 0, 2).reshape(n, -1)         # one pass over K for all candidates
    KR = (K @ stacked.astype(K.dtype)).astype(float).reshape(n, len(cands), d).transpose(1, 0, 2)
    values = 0.5 * np.sum(KR * R, axis=(1, 2)) + np.sum(unary[None] * R, axis=(1, 2))
    return cands[int(np.argmax(values))]


# --- bundled test image -----------------------------------------------------

def make_test_image(size: int = 128, seed: int = 7, margin: int = 5, noise: float = 20.0) -> tuple[np.ndarray, np.ndarray]:
    """A three-class scene (sky over two fields) with noise, plus a rough annotation.

    Regions are kept large relative to their boundaries: under the default
    smoothness kernel a thin or small region costs more along its border than
    its annotated pixels gain, and would be merged away by any exact optimizer.

    Returns (rgb uint8 image, annotation uint8 map with 0 = unannotated).
    """
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:size, 0:size]
    horizon = size * 0.38 + size * 0.06 * np.sin(xs / size * 2 * np.pi)
    split = size * 0.5 + (ys - size) * 0.25
    truth = np.where(ys < horizon, 1, np.where(xs < split, 2, 3))
    base = np.array([[110, 160, 225], [70, 150, 60], [170, 110, 60]], dtype=float)
    img = base[truth - 1] + rng.normal(0, noise, size=(size, size, 3))
    img[..., 2] += (ys / size * 30.0) * (truth == 1)      # vertical sky gradient
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)

    # rough annotation: each class painted in, leaving a band around every boundary
    annot = np.zeros((size, size), dtype=np.uint8)
    for label in (1, 2, 3):
        inner = ndimage.binary_erosion(truth == label, iterations=margin, border_value=1)
        annot[inner] = label
    return img, annot


def bundled_test_image() -> tuple[np.ndarray, np.ndarray]:
    from .io import read_pgm, read_ppm

    data = resources.files("mrfsdp") / "data"
    with resources.as_file(data / "seg_test.ppm") as p_img, \
            resources.as_file(data / "seg_test_annotation.pgm") as p_ann:
        return read_ppm(p_img), read_pgm(p_ann)
