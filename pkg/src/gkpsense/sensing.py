"""Distributed displacement sensing: closed forms and protocol simulations."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .errors import ConfigurationError, DomainError, PreconditionError
from .gkp import SQRT_2PI, GkpParams, modulo_reduce, sample_gkp_quadrature
from .phase_space import (
    VACUUM_VARIANCE,
    Amp,
    Awgn,
    Loss,
    RngLike,
    apply_channel_samples,
    as_generator,
    loss_to_awgn_sigma,
)
from .qec_codes import (
    MIN_SHOTS,
    LogicalNoise,
    StabilizerCodeConfig,
    TmsCodeConfig,
    stabilizer_logical_noise,
    stabilizer_sample_logical,
    tms_optimize_gain,
    tms_sample_logical,
)


# ---------------------------------------------------------------------------
# Network description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SensorNetworkConfig:
    """Weights, transmissivities and total photon budget ``N_S`` of an M-node network."""

    weights: tuple
    etas: tuple
    n_photons: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        e = np.asarray(self.etas, dtype=float)
        object.__setattr__(self, "weights", tuple(w.tolist()))
        object.__setattr__(self, "etas", tuple(e.tolist()))
        if w.ndim != 1 or w.size == 0 or w.shape != e.shape:
            raise DomainError("weights and etas must be nonempty vectors of equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("weights must be non-negative and sum to one")
        if np.any(e <= 0) or np.any(e > 1):
            raise DomainError("transmissivities must lie in (0, 1]")
        if not self.n_photons >= 0:
            raise DomainError("photon number must be >= 0")

    @classmethod
    def uniform(cls, M: int, n_photons: float, eta: float = 1.0) -> "SensorNetworkConfig":
        if M < 1:
            raise DomainError("M must be >= 1")
        return cls(tuple([1.0 / M] * M), tuple([eta] * M), n_photons)

    @property
    def M(self) -> int:
        return len(self.weights)

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights)

    @property
    def eta(self) -> np.ndarray:
        return np.asarray(self.etas)

    @property
    def w_bar(self) -> float:
        return float(np.sqrt(np.sum(self.w**2)))

    @property
    def eta_bar(self) -> float:
        return float(np.sum(self.w**2 * self.eta) / self.w_bar**2)

    @property
    def W_bar(self) -> float:
        return float(np.sqrt(np.sum(self.w**2 * self.eta)))

    @property
    def n_per_node(self) -> float:
        return self.n_photons / self.M


@dataclass(frozen=True)
class PriorModel:
    """Gaussian prior on ``sqrt(2) Re(alpha)`` with rms ``sigma_prior``."""

    sigma_prior: float

    def __post_init__(self):
        if not self.sigma_prior > 0:
            raise DomainError("prior rms must be positive")

    @classmethod
    def from_k(cls, k_prior: float, M: int, n_s: float) -> "PriorModel":
        return cls(float(np.sqrt(k_prior / (4.0 * M**2 * n_s))))


@dataclass
class ProtocolResult:
    estimates: np.ndarray
    rms: float
    rms_se: float
    analytic_rms: float | None = None
    extra: dict = field(default_factory=dict)


def _rms_stats(err: np.ndarray) -> tuple[float, float]:
    sq = err**2
    ms = sq.mean()
    rms = float(np.sqrt(ms))
    se = float(sq.std(ddof=1) / np.sqrt(sq.size) / (2 * rms)) if rms > 0 else 0.0
    return rms, se


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


def _sq_factor(n: float) -> float:
    return (np.sqrt(n + 1.0) + np.sqrt(n)) ** 2


def squeezed_variance(n_photons: float) -> float:
    """Squeezed-quadrature variance of a squeezed vacuum with mean photon number ``n``."""
    return VACUUM_VARIANCE / _sq_factor(n_photons)


def entangled_precision_weighted(cfg: SensorNetworkConfig) -> float:
    """Minimum rms error of the weighted-average estimator, entangled source."""
    eb = cfg.eta_bar
    return 0.5 * cfg.w_bar * float(np.sqrt(eb / _sq_factor(cfg.n_photons) + 1.0 - eb))


def entangled_precision_uniform(M: int, n_photons: float, eta: float) -> float:
    if M < 1:
        raise DomainError("M must be >= 1")
    return 0.5 * float(np.sqrt(eta / (M * _sq_factor(n_photons)) + (1.0 - eta) / M))


def separable_precision_uniform(M: int, n_photons: float, eta: float) -> float:
    """Product-state benchmark with ``N_S / M`` photons per node."""
    if M < 1:
        raise DomainError("M must be >= 1")
    return 0.5 * float(np.sqrt(eta / (M * _sq_factor(n_photons / M)) + (1.0 - eta) / M))


def ec_sensing_precision(M: int, n_photons: float, sigma_ec: float) -> float:
    """Precision when each node's distribution noise is reduced to ``sigma_ec``."""
    if not sigma_ec >= 0:
        raise DomainError("sigma_ec must be >= 0")
    return 0.5 * float(np.sqrt(1.0 / (M * _sq_factor(n_photons)) + 2.0 * sigma_ec**2 / M))


# ---------------------------------------------------------------------------
# Single-quadrature protocol simulation
# ---------------------------------------------------------------------------


def beamsplitter_array(first_row: Sequence[float]) -> np.ndarray:
    """Real orthogonal matrix whose first row is ``first_row`` (Householder completion)."""
    r = np.asarray(first_row, dtype=float)
    nrm = np.linalg.norm(r)
    if nrm == 0:
        raise DomainError("first row must be nonzero")
    r = r / nrm
    e1 = np.zeros_like(r)
    e1[0] = 1.0
    v = e1 - r
    if np.linalg.norm(v) < 1e-15:
        return np.eye(r.size)
    v /= np.linalg.norm(v)
    return np.eye(r.size) - 2.0 * np.outer(v, v)


@dataclass(frozen=True)
class TmsCode:
    """GKP-two-mode-squeezing code; ``gain=None`` picks the best gain per node."""

    gain: float | None = None


@dataclass(frozen=True)
class StabilizerCode:
    levels: int = 7
    lam: float = 2.0


Code = Union[None, TmsCode, StabilizerCode]


def code_logical_noise(code: Code, sigma: float) -> LogicalNoise:
    """Residual noise of ``code`` at physical noise ``sigma`` (no code: ``sigma``)."""
    if code is None:
        return LogicalNoise(sigma, sigma)
    if isinstance(code, TmsCode):
        from .qec_codes import tms_logical_noise_exact

        if code.gain is None:
            return tms_optimize_gain(sigma, method="exact")[1]
        return tms_logical_noise_exact(TmsCodeConfig(code.gain, sigma))
    if isinstance(code, StabilizerCode):
        return stabilizer_logical_noise(StabilizerCodeConfig(code.levels, code.lam, sigma))
    raise TypeError(f"unknown code {code!r}")


def _code_sampler(code: Code, sigma: float):
    """Return ``f(shots, gen)`` drawing residual q-noise of one node's encode / AWGN / decode chain."""
    if sigma == 0:
        return lambda shots, gen: np.zeros(shots)
    if isinstance(code, TmsCode):
        gain = code.gain if code.gain is not None else tms_optimize_gain(sigma, method="exact")[0]
        cfg_t = TmsCodeConfig(gain, sigma)
        return lambda shots, gen: tms_sample_logical(cfg_t, shots, gen)[0]
    if isinstance(code, StabilizerCode):
        cfg_s = StabilizerCodeConfig(code.levels, code.lam, sigma)
        coeffs = stabilizer_logical_noise(cfg_s).coefficients
        return lambda shots, gen: stabilizer_sample_logical(cfg_s, shots, gen, coeffs)[0]
    raise TypeError(f"unknown code {code!r}")


def _simulate_single_quadrature(
    cfg: SensorNetworkConfig,
    field_values,
    code: Code,
    shots: int,
    rng: RngLike,
    modulo: bool,
    offsets=None,
) -> ProtocolResult:
    if np.iscomplexobj(np.asarray(field_values)):
        raise DomainError("single-quadrature protocol needs a real-valued field")
    alpha = np.asarray(field_values, dtype=float)
    if alpha.shape != (cfg.M,):
        raise DomainError(f"field has shape {alpha.shape}, expected ({cfg.M},)")
    if shots < MIN_SHOTS:
        raise ConfigurationError(f"need at least {MIN_SHOTS} shots, got {shots}")
    gen = as_generator(rng)
    M = cfg.M
    w = cfg.w
    # With error correction the amplifier makes every node's channel unit-gain AWGN.
    eta_eff = cfg.eta if code is None else np.ones(M)
    row = w * np.sqrt(eta_eff)
    O = beamsplitter_array(row)

    b = gen.normal(0.0, np.sqrt(VACUUM_VARIANCE), size=(M, shots))
    b[0] *= np.sqrt(squeezed_variance(cfg.n_photons) / VACUUM_VARIANCE)
    a = O.T @ b

    if code is None:
        env = gen.normal(0.0, np.sqrt(VACUUM_VARIANCE), size=(M, shots))
        q = np.sqrt(cfg.eta)[:, None] * a + np.sqrt(1.0 - cfg.eta)[:, None] * env
    else:
        q = a.copy()
        samplers: dict = {}
        for m in range(M):
            sig = loss_to_awgn_sigma(float(cfg.eta[m]))
            if sig not in samplers:
                samplers[sig] = _code_sampler(code, sig)
            q[m] += samplers[sig](shots, gen)
    q += np.sqrt(2.0) * alpha[:, None]
    if offsets is not None:
        q += np.asarray(offsets, dtype=float)[:, None] * SQRT_2PI
    if modulo:
        q = modulo_reduce(q)
    est = (w[:, None] * q).sum(axis=0) / np.sqrt(2.0)
    target = float(w @ alpha)
    rms, se = _rms_stats(est - target)
    analytic = None
    if code is None:
        analytic = entangled_precision_weighted(cfg)
    return ProtocolResult(est, rms, se, analytic, {"target": target, "bias": float(est.mean() - target)})


def mc_single_quadrature(cfg: SensorNetworkConfig, field_values, code: Code = None, shots: int = 100_000, rng: RngLike = 0) -> ProtocolResult:
    """Monte Carlo of the single-quadrature entangled protocol.

    Squeezed vacuum -> beamsplitter array -> per-node loss (or encode / AWGN /
    decode with ``code``) -> displacement -> homodyne -> weighted sum.
    """
    return _simulate_single_quadrature(cfg, field_values, code, shots, rng, modulo=False)


def mc_single_quadrature_modulo_decode(
    cfg: SensorNetworkConfig,
    field_values,
    code: Code = None,
    shots: int = 100_000,
    rng: RngLike = 0,
    offsets=None,
) -> ProtocolResult:
    """As :func:`mc_single_quadrature` but each homodyne outcome is reduced modulo ``sqrt(2 pi)``.

    Integer multiples of ``sqrt(2 pi)`` picked up during decoding (``offsets``
    lets a test inject them) then drop out. Meaningful only while the
    per-node fluctuations stay well inside ``+-sqrt(pi / 2)``.
    """
    alpha = np.asarray(field_values)
    if np.any(np.abs(alpha) >= SQRT_2PI):
        raise PreconditionError("field entries must satisfy |alpha_m| < sqrt(2 pi)")
    return _simulate_single_quadrature(cfg, field_values, code, shots, rng, modulo=True, offsets=offsets)


# ---------------------------------------------------------------------------
# Complex-displacement protocol
# ---------------------------------------------------------------------------


def complex_estimates(q_outcomes, p_outcomes, M: int):
    """Estimators of ``(Re alpha, Im alpha)`` from per-node modular outcomes.

    Outcomes have the node index on axis 0; extra axes (shots) broadcast.
    """
    q = np.asarray(q_outcomes, dtype=float)
    p = np.asarray(p_outcomes, dtype=float)
    if q.shape[0] != M or p.shape[0] != M:
        raise DomainError(f"expected {M} outcomes per quadrature")
    c = SQRT_2PI / M
    return modulo_reduce(q.mean(axis=0), c) / np.sqrt(2.0), modulo_reduce(p.mean(axis=0), c) / np.sqrt(2.0)


def _binned_moments_vec(center: np.ndarray, sd: float, c: float, k: np.ndarray):
    """``P``, ``E[x 1_k]``, ``E[x^2 1_k]`` for ``x ~ N(center, sd^2)``; shape ``(len(center), len(k))``."""
    center = np.asarray(center, dtype=float)[..., None]
    if sd == 0:
        idx = np.round(center / c)
        P = (k == idx).astype(float)
        return P, P * center, P * center**2
    a = ((k - 0.5) * c - center) / sd
    b = ((k + 0.5) * c - center) / sd
    P = ndtr(b) - ndtr(a)
    pa = np.exp(-0.5 * a * a) / np.sqrt(2 * np.pi)
    pb = np.exp(-0.5 * b * b) / np.sqrt(2 * np.pi)
    m1 = pa - pb
    m2 = P + a * pa - b * pb
    M1 = center * P + sd * m1
    M2 = center**2 * P + 2 * center * sd * m1 + sd**2 * m2
    return P, M1, M2


def compute_v1_v2(prior: PriorModel | float, delta_eff_sq: float, c_M: float, k_max: int | None = None) -> tuple[float, float]:
    """Outcome variance ``V1`` and prior cross-correlation ``V2`` of the modular readout.

    The outcome ``x ~ N(-q_prior, delta_eff_sq)`` is referenced to the centre
    ``k c_M`` of the bin it falls in; ``q_prior ~ N(0, sigma_prior^2)``.
    """
    sp = prior.sigma_prior if isinstance(prior, PriorModel) else float(prior)
    if sp < 0 or delta_eff_sq < 0 or not c_M > 0:
        raise DomainError("invalid arguments to compute_v1_v2")
    sd = float(np.sqrt(delta_eff_sq))
    need = int(np.ceil(6.0 * (sp + sd) / c_M))
    if k_max is None:
        k_max = need
    elif k_max < need:
        raise PreconditionError(f"k_max={k_max} below required truncation {need}")
    k = np.arange(-k_max, k_max + 1)
    kc = k * c_M

    def inner(q):
        P, M1, M2 = _binned_moments_vec(np.atleast_1d(-q), sd, c_M, k)
        v1 = (M2 - 2 * kc * M1 + kc**2 * P).sum(-1)
        v2 = (M1 - kc * P).sum(-1)
        return v1, v2, P.sum(-1)

    if sp == 0:
        v1, _, _ = inner(0.0)
        return float(v1[0]), 0.0

    L = 12.0 * sp

    def integrand(q):
        v1, v2, mass = inner(q)
        g = np.exp(-0.5 * (q / sp) ** 2) / (sp * np.sqrt(2 * np.pi))
        return np.array([g * v1[0], g * q * v2[0], g * (1.0 - mass[0])])

    val, _ = integrate.quad_vec(integrand, -L, L, epsabs=1e-16, epsrel=1e-11, limit=400)
    # Probability that the outcome falls outside the summed bins.
    if val[2] > 1e-8:
        warnings.warn(f"bin truncation leaves tail mass {val[2]:.1e} above 1e-8", RuntimeWarning, stacklevel=2)
    return float(val[0]), float(val[1])


def combined_estimator_stats(V1: float, V2: float, sigma_prior: float) -> tuple[float, float, float]:
    """``(zeta*, minimum variance, effective rms precision of the modular readout)``."""
    if not V1 > 0:
        raise DomainError("V1 must be positive")
    zeta = -V2 / V1
    gain = V2 * V2 / V1
    var = sigma_prior**2 - gain
    if gain == 0:
        return zeta, var, float("inf")
    ratio = sigma_prior**2 / gain - 1.0
    dq = sigma_prior * float(np.sqrt(max(ratio, 0.0)))
    return zeta, var, dq


def gkp_precision(M: int, n_s: float, k_prior: float) -> dict:
    """Quadrature-based precision of the complex protocol with prior factor ``k_prior``."""
    prior = PriorModel.from_k(k_prior, M, n_s)
    out = gkp_precision_from_delta(M, GkpParams.from_photon_number(M * n_s).delta, prior.sigma_prior)
    out["sigma_prior"] = prior.sigma_prior
    return out


@dataclass
class ComplexProtocolResult:
    re: ProtocolResult
    im: ProtocolResult
    zeta: float | None = None
    analytic_variance: float | None = None


def _is_square(M: int) -> bool:
    j = int(round(np.sqrt(M)))
    return j * j == M


def mc_complex_protocol(
    M: int,
    n_s: float,
    alpha,
    prior: PriorModel | None,
    shots: int,
    rng: RngLike,
) -> ComplexProtocolResult:
    """Monte Carlo of GKP-source distributed sensing of a complex displacement.

    With a prior, each node is counter-displaced by the prior estimate, the
    modular estimators are fused with the prior at ``zeta*``, and estimates
    target ``Re/Im(alpha)``. Without a prior the raw modular estimators are
    returned. ``alpha`` is a scalar or one complex value per node.
    """
    if M < 1 or not _is_square(M):
        raise PreconditionError(f"M={M} must be a perfect square")
    if shots < MIN_SHOTS:
        raise ConfigurationError(f"need at least {MIN_SHOTS} shots, got {shots}")
    gen = as_generator(rng)
    al = np.broadcast_to(np.asarray(alpha, dtype=complex), (M,))
    gkp = GkpParams.from_photon_number(M * n_s)
    O = beamsplitter_array(np.full(M, 1.0 / np.sqrt(M)))

    def node_quadratures():
        src = gen.normal(0.0, np.sqrt(VACUUM_VARIANCE), size=(M, shots))
        src[0] = sample_gkp_quadrature(gkp, gen, size=shots)
        return O.T @ src

    q = node_quadratures() + np.sqrt(2.0) * al.real[:, None]
    p = node_quadratures() + np.sqrt(2.0) * al.imag[:, None]
    target = (al.real.mean(), al.imag.mean())

    if prior is None:
        re, im = complex_estimates(modulo_reduce(q), modulo_reduce(p), M)
        res = []
        for est, tgt in ((re, target[0]), (im, target[1])):
            rms, se = _rms_stats(est - tgt)
            res.append(ProtocolResult(est, rms, se, extra={"mean": float(est.mean()), "target": tgt}))
        return ComplexProtocolResult(*res)

    sp = prior.sigma_prior
    stats = gkp_precision_from_delta(M, gkp.delta, sp)
    zeta = stats["zeta"]
    res = []
    for quad, tgt in ((q, target[0]), (p, target[1])):
        q_prior = gen.normal(np.sqrt(2.0) * tgt, sp, size=shots)
        out = modulo_reduce(quad - q_prior[None, :])
        q_gkp = modulo_reduce(out.mean(axis=0), SQRT_2PI / M)
        fused = zeta * q_gkp + q_prior
        est = fused / np.sqrt(2.0)
        err = fused - np.sqrt(2.0) * tgt
        rms_q, se_q = _rms_stats(err)
        var_q = float(np.mean(err**2))
        gain = sp**2 - var_q
        dq = sp * np.sqrt(sp**2 / gain - 1.0) if gain > 0 else float("inf")
        rms, se = _rms_stats(est - tgt)
        res.append(
            ProtocolResult(
                est,
                rms,
                se,
                analytic_rms=float(np.sqrt(stats["variance"] / 2.0)),
                extra={"fused_rms": rms_q, "fused_rms_se": se_q, "delta_q": float(dq), "fused_var": var_q},
            )
        )
    return ComplexProtocolResult(res[0], res[1], zeta, stats["variance"])


def gkp_precision_from_delta(M: int, delta: float, sigma_prior: float) -> dict:
    v1, v2 = compute_v1_v2(sigma_prior, delta**2 / (2.0 * M), SQRT_2PI / M)
    zeta, var, dq = combined_estimator_stats(v1, v2, sigma_prior)
    return {"V1": v1, "V2": v2, "zeta": zeta, "variance": var, "delta_q": dq}


# ---------------------------------------------------------------------------
# Unequal weights via loss / gain
# ---------------------------------------------------------------------------


def weighted_channel_decomposition(k: float):
    """Channels realizing displacement gain ``k`` around a fixed displacement.

    Returns ``(pre, post, excess_variance)``; the composition
    ``post . U(alpha) . pre`` equals AWGN of variance ``|k^2 - 1|`` after ``U(k alpha)``.
    """
    if not k > 0:
        raise DomainError(f"rescaled weight must be positive, got {k}")
    if k > 1:
        return Loss(1.0 / k**2), Amp(k**2), k**2 - 1.0
    if k < 1:
        return Amp(1.0 / k**2), Loss(k**2), 1.0 - k**2
    return Awgn(0.0), Awgn(0.0), 0.0


def network_excess_variance(rescaled_weights: Sequence[float]) -> float:
    """Total added variance ``sum |k_m^2 - 1| / M`` of the equal-weight readout."""
    k = np.asarray(rescaled_weights, dtype=float)
    return float(np.sum([weighted_channel_decomposition(x)[2] for x in k]) / k.size)


def simulate_weighted_node(k: float, alpha: float, q, p, rng: RngLike):
    """Push phase-space samples through ``post . U(alpha) . pre`` (real ``alpha``)."""
    gen = as_generator(rng)
    pre, post, _ = weighted_channel_decomposition(k)
    q, p = apply_channel_samples(q, p, pre, gen)
    q = q + np.sqrt(2.0) * alpha
    return apply_channel_samples(q, p, post, gen)
