"""GKP grid-state model, modular arithmetic and gridded densities."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .errors import ConfigurationError, DomainError
from .phase_space import RngLike, as_generator

SQRT_2PI = float(np.sqrt(2.0 * np.pi))
DEFAULT_POINTS = 2**12


def modulo_reduce(z, s: float = SQRT_2PI):
    """Generalized modulo ``R_s(z) = z - n* s`` with ``n*`` the nearest integer to ``z/s``.

    Exact ties go to the even integer (``numpy.round`` semantics).
    """
    if not s > 0:
        raise DomainError(f"period must be positive, got {s}")
    z = np.asarray(z, dtype=float)
    out = z - s * np.round(z / s)
    return float(out) if out.ndim == 0 else out


def nearest_multiple(z, s: float = SQRT_2PI):
    """The integer ``n*`` used by :func:`modulo_reduce`."""
    return np.round(np.asarray(z, dtype=float) / s)


@dataclass(frozen=True)
class GkpParams:
    """Finitely squeezed GKP state with peak width ``delta``.

    ``delta = 0`` stands for the ideal code state.
    """

    delta: float

    def __post_init__(self):
        if not self.delta >= 0:
            raise DomainError(f"GKP width must be >= 0, got {self.delta}")

    @property
    def peak_variance(self) -> float:
        return self.delta**2 / 2.0

    @property
    def mean_photon_number(self) -> float:
        if self.delta == 0:
            return float("inf")
        return 1.0 / (2.0 * self.delta**2)

    @classmethod
    def from_photon_number(cls, n_photons: float) -> "GkpParams":
        if not n_photons > 0:
            raise DomainError(f"photon number must be positive, got {n_photons}")
        return cls(float(np.sqrt(1.0 / (2.0 * n_photons))))


def _delta(gkp) -> float:
    return gkp.delta if isinstance(gkp, GkpParams) else float(gkp)


def gkp_measure_both(true_shift, gkp, rng: RngLike, shots: int | None = None):
    """Simultaneous modular readout of a displacement using a GKP ancilla.

    Returns ``(q_tilde, p_tilde)`` in ``[-sqrt(pi/2), sqrt(pi/2)]``. Each
    quadrature picks up Gaussian peak noise of variance ``delta^2 / 2`` before
    reduction. ``true_shift`` entries may be arrays (one entry per shot).
    """
    dq, dp = (np.asarray(v, dtype=float) for v in true_shift)
    d = _delta(gkp)
    if d < 0:
        raise DomainError("GKP width must be >= 0")
    if d > 0:
        gen = as_generator(rng)
        sd = d / np.sqrt(2.0)
        size = np.broadcast_shapes(dq.shape, dp.shape) if shots is None else shots
        dq = dq + gen.normal(0.0, sd, size)
        dp = dp + gen.normal(0.0, sd, size)
    elif shots is not None:
        dq = np.broadcast_to(dq, (shots,))
        dp = np.broadcast_to(dp, (shots,))
    return modulo_reduce(dq), modulo_reduce(dp)


def sample_gkp_quadrature(gkp, rng: RngLike, size: int | tuple = None, k_max: int | None = None):
    """Draw quadrature values of a finitely squeezed GKP state.

    Comb model: ``k sqrt(2 pi) + g`` with ``P(k) ~ exp(-2 pi delta^2 k^2)``
    (Gaussian envelope of variance ``1 / (2 delta^2)``) and ``g`` Gaussian with
    variance ``delta^2 / 2``.
    """
    d = _delta(gkp)
    if not d > 0:
        raise DomainError("sampling requires a finite GKP width delta > 0")
    gen = as_generator(rng)
    env_sd_k = 1.0 / (2.0 * d * np.sqrt(np.pi))
    if k_max is None:
        k_max = int(np.ceil(12.0 * env_sd_k)) + 1
    ks = np.arange(-k_max, k_max + 1)
    logw = -2.0 * np.pi * d**2 * ks.astype(float) ** 2
    w = np.exp(logw - logw.max())
    w /= w.sum()
    k = gen.choice(ks, size=size, p=w)
    g = gen.normal(0.0, d / np.sqrt(2.0), size=size)
    return k * SQRT_2PI + g


# ---------------------------------------------------------------------------
# Gridded densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PdfGrid:
    """Probability density sampled on a uniform grid ``lo, lo + step, ..., hi``."""

    lo: float
    hi: float
    step: float
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.size < 2:
            raise ConfigurationError("PdfGrid needs at least two points")
        if not self.step > 0:
            raise ConfigurationError("grid step must be positive")
        expect = (self.hi - self.lo) / self.step + 1
        if abs(expect - w.size) > 1e-6 * max(1.0, expect):
            raise ConfigurationError(f"grid [{self.lo}, {self.hi}] with step {self.step} does not hold {w.size} points")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ConfigurationError("density weights must be finite and non-negative")

    @property
    def x(self) -> np.ndarray:
        return self.lo + self.step * np.arange(self.weights.size)

    @property
    def n(self) -> int:
        return self.weights.size

    def total(self) -> float:
        return _trapezoid(self.weights, self.step)

    def normalized(self) -> "PdfGrid":
        t = self.total()
        if not t > 0:
            raise ConfigurationError("density has zero mass")
        return PdfGrid(self.lo, self.hi, self.step, self.weights / t)

    def masses(self) -> np.ndarray:
        """Trapezoid quadrature weights times density (sums to the total mass)."""
        m = self.weights * self.step
        m[0] *= 0.5
        m[-1] *= 0.5
        return m

    def __call__(self, x):
        return np.interp(x, self.x, self.weights, left=0.0, right=0.0)

    def cdf(self) -> np.ndarray:
        m = 0.5 * (self.weights[1:] + self.weights[:-1]) * self.step
        return np.concatenate([[0.0], np.cumsum(m)])

    def sample(self, rng: RngLike, size) -> np.ndarray:
        """Inverse-CDF sampling, linear between grid nodes."""
        gen = as_generator(rng)
        c = self.cdf()
        c = c / c[-1]
        u = gen.random(size)
        return np.interp(u, c, self.x)

    # -- CSV ---------------------------------------------------------------

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "density"])
        for xi, di in zip(self.x, self.weights):
            w.writerow([repr(float(xi)), repr(float(di))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_csv(cls, path) -> "PdfGrid":
        return cls.from_csv_text(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def from_csv_text(cls, text: str) -> "PdfGrid":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["x", "density"]:
            raise ConfigurationError("expected header 'x,density'")
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        x, d = data[:, 0], data[:, 1]
        step = (x[-1] - x[0]) / (x.size - 1)
        if not np.allclose(np.diff(x), step, rtol=1e-6, atol=1e-12):
            raise ConfigurationError("grid in CSV is not uniform")
        return cls(float(x[0]), float(x[-1]), float(step), d)


def _trapezoid(w: np.ndarray, step: float) -> float:
    return float(step * (w.sum() - 0.5 * (w[0] + w[-1])))


def uniform_grid(half_range: float, n_points: int = DEFAULT_POINTS) -> tuple[float, float, float]:
    if not half_range > 0:
        raise ConfigurationError("grid half-range must be positive")
    step = 2.0 * half_range / (n_points - 1)
    return -half_range, half_range, step


def gaussian_pdf_grid(
    sigma: float,
    mean: float = 0.0,
    n_points: int = DEFAULT_POINTS,
    n_sigma: float = 8.0,
    half_range: float | None = None,
) -> PdfGrid:
    """Gaussian density on a symmetric grid (default range +-8 sigma, 2^12 points)."""
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    if half_range is None:
        half_range = abs(mean) + n_sigma * sigma
    lo, hi, step = uniform_grid(half_range, n_points)
    x = lo + step * np.arange(n_points)
    w = np.exp(-0.5 * ((x - mean) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))
    return PdfGrid(lo, hi, step, w).normalized()


def pdf_moments(p: PdfGrid) -> tuple[float, float]:
    """Mean and variance by the trapezoidal rule."""
    x = p.x
    tot = p.total()
    mean = _trapezoid(p.weights * x, p.step) / tot
    var = _trapezoid(p.weights * (x - mean) ** 2, p.step) / tot
    return mean, var


def pdf_fold_modulo(p: PdfGrid, s: float = SQRT_2PI, n_points: int | None = None) -> PdfGrid:
    """Density of ``R_s(Z)`` for ``Z ~ p``, on ``[-s/2, s/2]``."""
    if not s > 0:
        raise DomainError("period must be positive")
    if p.step > s / 16:
        raise ConfigurationError(f"grid step {p.step:.4g} too coarse for period {s:.4g} (needs <= s/16)")
    if n_points is None:
        n_points = max(int(np.ceil(s / p.step)) + 1, 17)
    lo, hi, step = -s / 2, s / 2, s / (n_points - 1)
    y = lo + step * np.arange(n_points)
    reach = max(abs(p.lo), abs(p.hi))
    n_max = int(np.ceil(reach / s)) + 1
    dens = np.zeros(n_points)
    for k in range(-n_max, n_max + 1):
        dens += p(y + k * s)
    out = PdfGrid(lo, hi, step, dens)
    return out.normalized()


def binned_gaussian_moments(sd: float, s: float, center: float = 0.0, k_max: int | None = None):
    """Per-bin mass and raw moments of ``X ~ N(center, sd^2)``.

    Bins are ``[(k - 1/2) s, (k + 1/2) s)``. Returns ``(k, P_k, M1_k, M2_k)`` with
    ``M1_k = E[X 1_k]`` and ``M2_k = E[X^2 1_k]``.
    """
    if k_max is None:
        k_max = int(np.ceil((abs(center) + 12.0 * sd) / s)) + 1
    k = np.arange(-k_max, k_max + 1)
    if sd == 0:
        idx = np.round(center / s)
        P = (k == idx).astype(float)
        return k, P, P * center, P * center**2
    a = ((k - 0.5) * s - center) / sd
    b = ((k + 0.5) * s - center) / sd
    P = ndtr(b) - ndtr(a)
    phi_a = np.exp(-0.5 * a * a) / np.sqrt(2 * np.pi)
    phi_b = np.exp(-0.5 * b * b) / np.sqrt(2 * np.pi)
    # Moments of the standardized variable on [a, b].
    m1 = phi_a - phi_b
    a_phi = np.where(np.isfinite(a), a * phi_a, 0.0)
    b_phi = np.where(np.isfinite(b), b * phi_b, 0.0)
    m2 = P + a_phi - b_phi
    M1 = center * P + sd * m1
    M2 = center**2 * P + 2 * center * sd * m1 + sd**2 * m2
    return k, P, M1, M2
