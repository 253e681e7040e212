"""GKP-two-mode-squeezing and iterated GKP-stabilizer codes.

Both codes protect one data mode against additive Gaussian noise of rms
``sigma`` per quadrature. After decoding, GKP ancillas are read out modulo
``sqrt(2 pi)`` and a linear counter-displacement is applied to the data mode.
The residual ("logical") noise is non-Gaussian because of the modular readout.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, NumericalPrecisionError
from .gkp import (
    DEFAULT_POINTS,
    SQRT_2PI,
    PdfGrid,
    binned_gaussian_moments,
    gaussian_pdf_grid,
    gkp_measure_both,
    modulo_reduce,
    pdf_moments,
)
from .phase_space import (
    RngLike,
    as_generator,
    conjugate_noise,
    stabilizer_encoder,
    symplectic_inverse,
    symplectic_tms,
)

log = logging.getLogger(__name__)

MIN_SHOTS = 10_000
MAX_LEVEL = 8
TAIL_MASS = 1e-9
TAIL_VAR = 1e-6


@dataclass(frozen=True)
class TmsCodeConfig:
    gain: float
    sigma: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.gain >= 1:
            raise DomainError(f"gain must be >= 1, got {self.gain}")
        if not self.sigma >= 0:
            raise DomainError(f"sigma must be >= 0, got {self.sigma}")
        if not self.delta >= 0:
            raise DomainError(f"delta must be >= 0, got {self.delta}")


@dataclass(frozen=True)
class StabilizerCodeConfig:
    levels: int
    lam: float
    sigma: float
    delta: float = 0.0

    def __post_init__(self):
        if self.levels < 2:
            raise DomainError(f"levels must be >= 2, got {self.levels}")
        if not self.lam > 1:
            raise DomainError(f"lambda must exceed 1, got {self.lam}")
        if not self.sigma >= 0:
            raise DomainError(f"sigma must be >= 0, got {self.sigma}")
        if not self.delta >= 0:
            raise DomainError(f"delta must be >= 0, got {self.delta}")


@dataclass
class LogicalNoise:
    """Residual rms per quadrature, optionally with the full densities."""

    sigma_q: float
    sigma_p: float
    pdf_q: PdfGrid | None = None
    pdf_p: PdfGrid | None = None
    coefficients: list = field(default_factory=list)

    @property
    def worst(self) -> float:
        return max(self.sigma_q, self.sigma_p)


# ---------------------------------------------------------------------------
# GKP-two-mode-squeezing code
# ---------------------------------------------------------------------------


def tms_decoder_coefficients(gain: float, sigma: float, delta: float = 0.0) -> tuple[float, float]:
    """Linear MMSE coefficients ``(c_q, c_p)`` from the decoded noise covariance.

    With an ideal ancilla their magnitude is ``2 sqrt(G (G - 1)) / (2 G - 1)``.
    """
    Sinv = symplectic_inverse(symplectic_tms(gain))
    V = Sinv @ Sinv.T
    extra = delta**2 / 2.0 / sigma**2 if sigma > 0 else 0.0
    return V[0, 2] / (V[2, 2] + extra), V[1, 3] / (V[3, 3] + extra)


def tms_sample_logical(cfg: TmsCodeConfig, shots: int, rng: RngLike, wrap: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Residual ``(q, p)`` noise samples of the TMS code on the data mode."""
    gen = as_generator(rng)
    S = symplectic_tms(cfg.gain)
    eps = gen.normal(0.0, cfg.sigma, size=(4, shots)) if cfg.sigma > 0 else np.zeros((4, shots))
    e = conjugate_noise(S, eps)
    c_q, c_p = tms_decoder_coefficients(cfg.gain, max(cfg.sigma, 1e-300), cfg.delta)
    if wrap:
        zq, zp = gkp_measure_both((e[2], e[3]), cfg.delta, gen)
    else:
        sd = cfg.delta / np.sqrt(2.0)
        zq = e[2] + (gen.normal(0, sd, shots) if sd else 0.0)
        zp = e[3] + (gen.normal(0, sd, shots) if sd else 0.0)
    return e[0] - c_q * zq, e[1] - c_p * zp


def tms_logical_noise(cfg: TmsCodeConfig, shots: int, rng: RngLike, wrap: bool = True) -> LogicalNoise:
    """Monte Carlo estimate of the TMS-code residual noise.

    Ancilla readout is modular unless ``wrap=False``; the counter-displacement
    uses the linear MMSE coefficients of :func:`tms_decoder_coefficients`.
    """
    if shots < MIN_SHOTS:
        raise ConfigurationError(f"need at least {MIN_SHOTS} shots, got {shots}")
    rq, rp = tms_sample_logical(cfg, shots, rng, wrap)
    coeffs = tms_decoder_coefficients(cfg.gain, max(cfg.sigma, 1e-300), cfg.delta)
    return LogicalNoise(float(np.sqrt(np.mean(rq**2))), float(np.sqrt(np.mean(rp**2))), coefficients=[coeffs])


def _linear_modular_residual(vA: float, vB: float, cov: float, c: float, wrap: bool = True) -> float:
    """``E[(A - c R(B))^2]`` for zero-mean jointly Gaussian ``(A, B)``."""
    if vB == 0:
        return vA
    rho = cov / vB
    cond = vA - cov**2 / vB
    if not wrap:
        return cond + (rho - c) ** 2 * vB
    k, P, M1, M2 = binned_gaussian_moments(np.sqrt(vB), SQRT_2PI)
    ks = k * SQRT_2PI
    # A - c R(B) | B  has mean rho B - c (B - k s) on bin k.
    tail = (rho - c) ** 2 * M2 + 2 * (rho - c) * c * ks * M1 + (c * ks) ** 2 * P
    return float(cond + tail.sum())


def tms_logical_noise_exact(cfg: TmsCodeConfig, wrap: bool = True) -> LogicalNoise:
    """Deterministic (quadrature) counterpart of :func:`tms_logical_noise`."""
    if cfg.sigma == 0:
        return LogicalNoise(0.0, 0.0)
    Sinv = symplectic_inverse(symplectic_tms(cfg.gain))
    V = cfg.sigma**2 * (Sinv @ Sinv.T)
    meas = cfg.delta**2 / 2.0
    c_q, c_p = tms_decoder_coefficients(cfg.gain, cfg.sigma, cfg.delta)
    vq = _linear_modular_residual(V[0, 0], V[2, 2] + meas, V[0, 2], c_q, wrap)
    vp = _linear_modular_residual(V[1, 1], V[3, 3] + meas, V[1, 3], c_p, wrap)
    return LogicalNoise(float(np.sqrt(vq)), float(np.sqrt(vp)), coefficients=[(c_q, c_p)])


def default_gain_grid() -> np.ndarray:
    return 1.0 + np.geomspace(1e-5, 50.0, 141)


def tms_optimize_gain(
    sigma: float,
    gains: Sequence[float] | None = None,
    shots: int | None = None,
    rng: RngLike | None = None,
    delta: float = 0.0,
    method: str = "mc",
) -> tuple[float, LogicalNoise]:
    """Gain minimizing ``max(sigma_q, sigma_p)`` over ``gains``.

    ``method="mc"`` uses :func:`tms_logical_noise` (needs ``shots`` and ``rng``);
    ``method="exact"`` uses numerical quadrature.
    """
    gains = default_gain_grid() if gains is None else np.asarray(gains, dtype=float)
    if gains.size == 0:
        raise DomainError("gain grid is empty")
    if method == "mc":
        if shots is None or rng is None:
            raise ConfigurationError("Monte Carlo optimization needs shots and rng")
        gen = as_generator(rng)
        evals = [tms_logical_noise(TmsCodeConfig(g, sigma, delta), shots, gen) for g in gains]
    elif method == "exact":
        evals = [tms_logical_noise_exact(TmsCodeConfig(g, sigma, delta)) for g in gains]
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    best = int(np.argmin([e.worst for e in evals]))
    return float(gains[best]), evals[best]


# ---------------------------------------------------------------------------
# GKP-stabilizer code
# ---------------------------------------------------------------------------


def stabilizer_v_ed(sigma: float, prev: LogicalNoise, n: int, lam: float, encoder: np.ndarray | None = None) -> np.ndarray:
    """Decoded noise covariance at level ``n``.

    Mode 1 carries fresh noise ``sigma``; mode 2 carries the level ``n - 1``
    logical noise. ``encoder`` overrides the level-``n`` encoder matrix.
    """
    if not (np.isfinite(prev.sigma_q) and np.isfinite(prev.sigma_p)):
        raise DomainError("previous logical noise must be finite")
    V0 = np.diag([sigma**2, sigma**2, prev.sigma_q**2, prev.sigma_p**2])
    S = stabilizer_encoder(n, lam) if encoder is None else np.asarray(encoder, dtype=float)
    Sinv = symplectic_inverse(S)
    V = Sinv @ V0 @ Sinv.T
    return 0.5 * (V + V.T)


def stabilizer_coeffs(V_ed: np.ndarray, meas_var: float = 0.0) -> tuple[float, float]:
    """Correction coefficients ``C_q = V[1,3]/V[3,3]``, ``C_p = V[2,4]/V[4,4]`` (1-based)."""
    V = np.asarray(V_ed, dtype=float)
    dq, dp = V[2, 2] + meas_var, V[3, 3] + meas_var
    if dq <= 0 or dp <= 0:
        raise DomainError("degenerate covariance: measured-mode variance is zero")
    return float(V[0, 2] / dq), float(V[1, 3] / dp)


def _atoms(p: PdfGrid, max_atoms: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Point masses representing ``p``; optionally merged to at most ``max_atoms``."""
    m = p.masses()
    x = p.x
    keep = m > 0
    x, m = x[keep], m[keep]
    m = m / m.sum()
    if max_atoms is not None and x.size > max_atoms:
        g = int(np.ceil(x.size / max_atoms))
        # Equal padding on both ends keeps the grouping mirror-symmetric.
        while ((-x.size) % g) % 2:
            g += 1
        half = ((-x.size) % g) // 2
        z = np.zeros(half)
        xm = np.concatenate([z, x * m, z]).reshape(-1, g).sum(1)
        mm = np.concatenate([z, m, z]).reshape(-1, g).sum(1)
        keep = mm > 0
        x, m = xm[keep] / mm[keep], mm[keep]
    return x, m


@dataclass
class _Pushforward:
    grid: PdfGrid
    mean: float
    var: float
    lost_mass: float


def _pushforward(
    p0: PdfGrid,
    p_prev: PdfGrid,
    C: float,
    mix: tuple[float, float, float, float],
    n_points: int,
    max_points: int,
    meas_atoms: tuple[np.ndarray, np.ndarray] | None = None,
    x_atoms: int = 1024,
    y_atoms: int = 2048,
) -> _Pushforward:
    """Density of ``Z = u X + v Y - C R(r X + t Y [+ g])`` on an adaptive grid.

    ``X ~ p0``, ``Y ~ p_prev`` independent; ``g`` is optional readout noise.
    Moments are exact for the atom representation. The grid spans every
    region holding more than ``TAIL_MASS`` probability or ``TAIL_VAR`` of the
    variance; mass is deposited cloud-in-cell so the grid mean is exact and
    the grid variance exceeds the exact one by at most ``step^2 / 4``.
    """
    u, v, r, t = (float(a) for a in mix)
    xa, xm = _atoms(p0, x_atoms)
    ya, ym = _atoms(p_prev, y_atoms)
    ga, gm = meas_atoms if meas_atoms is not None else (np.zeros(1), np.ones(1))

    zs, ws = [], []
    for gv, gw in zip(ga, gm):
        z = u * xa[:, None] + v * ya[None, :] - C * modulo_reduce(r * xa[:, None] + t * ya[None, :] + gv)
        zs.append(z.ravel())
        ws.append((gw * xm[:, None] * ym[None, :]).ravel())
    z = np.concatenate(zs)
    w = np.concatenate(ws)
    w = w / w.sum()
    mean = float(w @ z)
    var = max(float(w @ (z * z)) - mean * mean, 0.0)
    sd = np.sqrt(var)

    # Smallest symmetric half-range whose outside carries negligible mass and variance.
    az = np.abs(z)
    order = np.argsort(az)[::-1]
    tail_m = np.cumsum(w[order])
    tail_v = np.cumsum((w * z * z)[order])
    second = max(var + mean * mean, 1e-300)
    bad = (tail_m > TAIL_MASS) | (tail_v > TAIL_VAR * second)
    first_bad = int(np.argmax(bad)) if bad.any() else order.size - 1
    zmax = float(az[order[first_bad]])
    if zmax == 0.0:
        zmax = max(sd, 1e-300)

    step = min(2 * zmax / (n_points - 9), 0.01 * sd) if sd > 0 else 2 * zmax / (n_points - 9)
    half = zmax + 4 * step
    n = int(np.ceil(2 * half / step)) + 1
    if n > max_points:
        warnings.warn(
            f"density grid capped at {max_points} points; variance resolution degraded",
            RuntimeWarning,
            stacklevel=3,
        )
        n = max_points
    n += (n + 1) % 2  # odd count keeps a node at zero
    step = 2 * half / (n - 1)
    lo = -half

    f = (z - lo) / step
    i0 = np.floor(f).astype(np.int64)
    fr = f - i0
    ok = (i0 >= 0) & (i0 < n - 1)
    lost = float(w[~ok].sum())
    acc = np.bincount(i0[ok], w[ok] * (1 - fr[ok]), minlength=n)[:n]
    acc = acc + np.bincount(i0[ok] + 1, w[ok] * fr[ok], minlength=n)[:n]
    dens = acc / step
    dens[0] *= 2
    dens[-1] *= 2
    grid = PdfGrid(lo, lo + step * (n - 1), step, dens)
    return _Pushforward(grid, mean, var, lost)


def stabilizer_recursion_step(
    p0: PdfGrid,
    p_prev: PdfGrid,
    C: float,
    mix: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 1.0),
    n_points: int = DEFAULT_POINTS,
    max_points: int = 2**21,
) -> PdfGrid:
    """One level of the logical-noise recursion.

    With the default ``mix`` this is the density of ``Z0 - C R(Z_prev)``.
    A general ``mix = (u, v, r, t)`` gives ``u Z0 + v Z_prev - C R(r Z0 + t Z_prev)``,
    which is what the decoded level-``n`` noise actually looks like.
    """
    for name, p in (("p0", p0), ("p_prev", p_prev)):
        if abs(p.total() - 1.0) > 1e-6:
            raise ConfigurationError(f"{name} is not normalized (mass {p.total():.8f})")
    if C == 0 and tuple(mix) == (1.0, 0.0, 0.0, 1.0):
        return p0
    res = _pushforward(p0, p_prev, C, mix, n_points, max_points)
    _check_mass(res)
    return res.grid.normalized()


def _check_mass(res: _Pushforward) -> None:
    if res.lost_mass > 1e-6:
        raise NumericalPrecisionError(f"recursion lost {res.lost_mass:.2e} of probability mass")


def _level_mixes(Sinv: np.ndarray) -> tuple[tuple, tuple]:
    """``(u, v, r, t)`` for the q and p quadratures of a decoded level."""
    mq = (Sinv[0, 0], Sinv[0, 2], Sinv[2, 0], Sinv[2, 2])
    mp = (Sinv[1, 1], Sinv[1, 3], Sinv[3, 1], Sinv[3, 3])
    return mq, mp


def _meas_atoms(delta: float, nodes: int = 16):
    if delta == 0:
        return None
    xh, wh = np.polynomial.hermite_e.hermegauss(nodes)
    return xh * delta / np.sqrt(2.0), wh / wh.sum()


def stabilizer_logical_noise(
    cfg: StabilizerCodeConfig,
    n_points: int = DEFAULT_POINTS,
    max_points: int = 2**21,
    history: bool = False,
):
    """Logical noise of the level-``n`` GKP-stabilizer code by PDF recursion.

    Returns a :class:`LogicalNoise` carrying both densities. With
    ``history=True`` returns the list of per-level results instead (level 1
    first).
    """
    if cfg.levels > MAX_LEVEL:
        raise ConfigurationError(f"levels capped at {MAX_LEVEL} for numerical precision")
    sigma = cfg.sigma
    if sigma == 0:
        out = LogicalNoise(0.0, 0.0)
        return [out] * cfg.levels if history else out
    base = gaussian_pdf_grid(sigma, n_points=n_points)
    cur = LogicalNoise(sigma, sigma, base, base)
    levels = [cur]
    meas_var = cfg.delta**2 / 2.0
    meas = _meas_atoms(cfg.delta)
    for n in range(2, cfg.levels + 1):
        S = stabilizer_encoder(n, cfg.lam)
        V = stabilizer_v_ed(sigma, cur, n, cfg.lam, S)
        cq, cp = stabilizer_coeffs(V, meas_var)
        mq, mp = _level_mixes(symplectic_inverse(S))
        rq = _pushforward(base, cur.pdf_q, cq, mq, n_points, max_points, meas)
        rp = _pushforward(base, cur.pdf_p, cp, mp, n_points, max_points, meas)
        for res in (rq, rp):
            _check_mass(res)
        pq, pp = rq.grid.normalized(), rp.grid.normalized()
        cur = LogicalNoise(
            float(np.sqrt(rq.var + rq.mean**2)),
            float(np.sqrt(rp.var + rp.mean**2)),
            pq,
            pp,
            coefficients=cur.coefficients + [(cq, cp)],
        )
        for pdf, exact in ((pq, rq.var), (pp, rp.var)):
            _, gv = pdf_moments(pdf)
            if exact > 0 and abs(gv - exact) / exact > 1e-4:
                log.debug("level %d grid variance off by %.2e relative", n, abs(gv - exact) / exact)
        levels.append(cur)
    return levels if history else cur


def stabilizer_sample_logical(
    cfg: StabilizerCodeConfig,
    shots: int,
    rng: RngLike,
    coefficients: Sequence[tuple[float, float]] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Direct Monte Carlo of the decoded stabilizer circuit.

    Runs the same encode/decode/correct hierarchy on sampled noise. When
    ``coefficients`` is omitted they are computed level by level from the
    empirical rms of the previous level.
    """
    if shots < 1:
        raise ConfigurationError("shots must be positive")
    gen = as_generator(rng)
    sig = cfg.sigma
    yq = gen.normal(0, sig, shots) if sig > 0 else np.zeros(shots)
    yp = gen.normal(0, sig, shots) if sig > 0 else np.zeros(shots)
    meas_sd = cfg.delta / np.sqrt(2.0)
    for i, n in enumerate(range(2, cfg.levels + 1)):
        S = stabilizer_encoder(n, cfg.lam)
        if coefficients is None:
            prev = LogicalNoise(float(np.sqrt(np.mean(yq**2))), float(np.sqrt(np.mean(yp**2))))
            cq, cp = stabilizer_coeffs(stabilizer_v_ed(sig, prev, n, cfg.lam, S), meas_sd**2)
        else:
            cq, cp = coefficients[i]
        xq = gen.normal(0, sig, shots) if sig > 0 else np.zeros(shots)
        xp = gen.normal(0, sig, shots) if sig > 0 else np.zeros(shots)
        e = conjugate_noise(S, np.stack([xq, xp, yq, yp]))
        mq, mp = e[2], e[3]
        if meas_sd > 0:
            mq = mq + gen.normal(0, meas_sd, shots)
            mp = mp + gen.normal(0, meas_sd, shots)
        yq = e[0] - cq * modulo_reduce(mq)
        yp = e[1] - cp * modulo_reduce(mp)
    return yq, yp


def ideal_noise_evolution(sigma: float, lam: float, n: int) -> tuple[float, float]:
    """Closed-form logical noise when modular readout never fails."""
    if not lam > 1:
        raise DomainError("lambda must exceed 1")
    if n < 2:
        raise DomainError("level must be >= 2")
    vq = sigma**2
    vp = sigma**2
    for k in range(2, n + 1):
        if sigma > 0:
            vq = vq / (lam**2 * (1.0 + lam ** (-2 * k) * vq / sigma**2))
        vp = lam ** (2 - 2 * k) * sigma**2
    return float(np.sqrt(vq)), float(np.sqrt(vp))


# ---------------------------------------------------------------------------
# Thresholds
# ---------------------------------------------------------------------------


def code_threshold(
    code,
    sigma_grid: Sequence[float],
    gains: Sequence[float] | None = None,
    n_points: int = DEFAULT_POINTS,
    table: bool = False,
):
    """Largest ``sigma`` in the grid at which the code still reduces noise.

    ``code`` is ``"tms"`` (gain optimized over ``gains`` by quadrature) or a
    ``(levels, lam)`` pair / :class:`StabilizerCodeConfig` for the stabilizer
    code. Returns ``None`` when the code never helps on the grid. With
    ``table=True`` also returns rows ``(sigma, sigma_q, sigma_p, gain_or_lam)``.
    """
    grid = np.asarray(sigma_grid, dtype=float)
    if grid.size == 0:
        raise DomainError("sigma grid is empty")
    if np.any(np.diff(grid) <= 0):
        raise DomainError("sigma grid must be strictly ascending")
    rows = []
    best = None
    for s in grid:
        if isinstance(code, str) and code.lower() == "tms":
            g, ln = tms_optimize_gain(float(s), gains, method="exact")
            param = g
        else:
            levels, lam = (code.levels, code.lam) if isinstance(code, StabilizerCodeConfig) else code
            ln = stabilizer_logical_noise(StabilizerCodeConfig(int(levels), float(lam), float(s)), n_points=n_points)
            param = float(lam)
        rows.append((float(s), ln.sigma_q, ln.sigma_p, param))
        if ln.worst < s:
            best = float(s)
    return (best, rows) if table else best
