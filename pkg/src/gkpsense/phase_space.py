"""Quadrature vectors, symplectic maps and Gaussian noise channels.

Conventions used throughout the package:

* quadratures are ordered ``(q1, p1, q2, p2, ..., qn, pn)``;
* vacuum variance is 1/2 per quadrature;
* a displacement by complex ``alpha`` shifts ``(q, p)`` by ``sqrt(2) * (Re alpha, Im alpha)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError

VACUUM_VARIANCE = 0.5
SYMPLECTIC_TOL = 1e-10


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RngStream:
    """Seeded, reproducible random stream.

    Identical ``(seed, stream)`` pairs give identical sequences; distinct
    stream ids are independent children of the same :class:`numpy.random.SeedSequence`.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream),))
        return np.random.default_rng(ss)

    def child(self, index: int) -> "RngStream":
        # Fold the child index into the stream id; stays deterministic.
        return RngStream(self.seed, self.stream * 1_000_003 + index + 1)


RngLike = Union[RngStream, np.random.Generator, int]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    raise TypeError(f"cannot build a random generator from {type(rng).__name__}")


# ---------------------------------------------------------------------------
# Quadrature vectors and symplectic maps
# ---------------------------------------------------------------------------


def quad_vec(values) -> np.ndarray:
    """Validate and return a quadrature vector ``(q1, p1, ..., qn, pn)``."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size % 2:
        raise DomainError(f"quadrature vector must have even length, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DomainError("quadrature vector has non-finite entries")
    return v


def omega(n: int) -> np.ndarray:
    """Standard symplectic form for ``n`` modes in interleaved ordering."""
    return np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def symplectic_error(S: np.ndarray) -> float:
    """Max-norm deviation ``|S Omega S^T - Omega|``."""
    S = np.asarray(S, dtype=float)
    n = S.shape[0] // 2
    W = omega(n)
    return float(np.max(np.abs(S @ W @ S.T - W)))


def is_symplectic(S: np.ndarray, tol: float = SYMPLECTIC_TOL) -> bool:
    S = np.asarray(S)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] % 2:
        return False
    return symplectic_error(S) <= tol


def symplectic_inverse(S: np.ndarray) -> np.ndarray:
    """Inverse via ``-Omega S^T Omega``; exact for symplectic ``S``."""
    n = S.shape[0] // 2
    W = omega(n)
    return -W @ S.T @ W


def symplectic_tms(gain: float) -> np.ndarray:
    """Two-mode squeezer with gain ``G_T`` on modes (1, 2)."""
    if not gain >= 1.0:
        raise DomainError(f"two-mode squeezing gain must be >= 1, got {gain}")
    a = np.sqrt(gain)
    b = np.sqrt(gain - 1.0)
    return np.array(
        [
            [a, 0.0, b, 0.0],
            [0.0, a, 0.0, -b],
            [b, 0.0, a, 0.0],
            [0.0, -b, 0.0, a],
        ]
    )


def symplectic_sum_gate() -> np.ndarray:
    """SUM gate 1 -> 2: ``(q1, p1, q2, p2) -> (q1, p1 - p2, q1 + q2, p2)``."""
    return np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, -1.0],
            [1.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def symplectic_squeeze(mode: int, lam: float, n: int = 1) -> np.ndarray:
    """Single-mode squeezer ``q -> lam q, p -> p / lam`` on ``mode`` of ``n``."""
    if not lam > 0:
        raise DomainError(f"squeeze factor must be positive, got {lam}")
    if not 0 <= mode < n:
        raise DomainError(f"mode {mode} out of range for {n} modes")
    S = np.eye(2 * n)
    S[2 * mode, 2 * mode] = lam
    S[2 * mode + 1, 2 * mode + 1] = 1.0 / lam
    return S


def stabilizer_encoder_general(gamma: float, beta: float, delta: float) -> np.ndarray:
    """``S_1(gamma) S_2(beta) SUM S_1(delta)`` as a 4x4 symplectic matrix."""
    return (
        symplectic_squeeze(0, gamma, 2)
        @ symplectic_squeeze(1, beta, 2)
        @ symplectic_sum_gate()
        @ symplectic_squeeze(0, delta, 2)
    )


def stabilizer_encoder(n: int, lam: float) -> np.ndarray:
    """Level-``n`` encoder on modes (1, 2) of the iterated GKP-stabilizer code."""
    if n < 2:
        raise DomainError(f"stabilizer level must be >= 2, got {n}")
    if not lam > 1.0:
        raise DomainError(f"squeeze factor must exceed 1, got {lam}")
    lo = lam ** (1 - n)
    hi = lam ** (n - 1)
    return np.array(
        [
            [lo, 0.0, 0.0, 0.0],
            [0.0, hi, 0.0, -lam],
            [lam, 0.0, hi, 0.0],
            [0.0, 0.0, 0.0, lo],
        ]
    )


def conjugate_noise(S: np.ndarray, eps) -> np.ndarray:
    """Displacement seen after decoding: ``S^{-1} eps``.

    ``eps`` may be a single vector or a ``(2n, shots)`` array of column vectors.
    """
    S = np.asarray(S, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if eps.shape[0] != S.shape[0]:
        raise DomainError(f"dimension mismatch: S is {S.shape}, eps has leading size {eps.shape[0]}")
    if is_symplectic(S, 1e-8):
        return symplectic_inverse(S) @ eps
    try:
        return np.linalg.solve(S, eps)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - unreachable for valid maps
        raise RuntimeError("singular map in conjugate_noise") from exc


# ---------------------------------------------------------------------------
# Gaussian channels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Loss:
    eta: float

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise DomainError(f"transmissivity must lie in (0, 1], got {self.eta}")


@dataclass(frozen=True)
class Amp:
    gain: float

    def __post_init__(self):
        if not self.gain >= 1.0:
            raise DomainError(f"amplifier gain must be >= 1, got {self.gain}")


@dataclass(frozen=True)
class Awgn:
    sigma: float

    def __post_init__(self):
        if not self.sigma >= 0.0:
            raise DomainError(f"AWGN rms must be >= 0, got {self.sigma}")


GaussianChannel = Union[Loss, Amp, Awgn]


def _channel_xy(ch: GaussianChannel) -> tuple[float, float]:
    """Return ``(scale, added_variance)`` for the mode-local covariance update."""
    if isinstance(ch, Loss):
        return np.sqrt(ch.eta), (1.0 - ch.eta) * VACUUM_VARIANCE
    if isinstance(ch, Amp):
        return np.sqrt(ch.gain), (ch.gain - 1.0) * VACUUM_VARIANCE
    if isinstance(ch, Awgn):
        return 1.0, ch.sigma**2
    raise TypeError(f"unknown channel {ch!r}")


def channel_update_cov(V: np.ndarray, ch: GaussianChannel, mode: int) -> np.ndarray:
    """Apply a single-mode Gaussian channel to covariance matrix ``V``."""
    V = np.array(V, dtype=float, copy=True)
    nq = V.shape[0]
    if V.ndim != 2 or nq != V.shape[1] or nq % 2:
        raise DomainError(f"covariance must be square with even size, got {V.shape}")
    if not 0 <= mode < nq // 2:
        raise DomainError(f"mode {mode} out of range")
    scale, added = _channel_xy(ch)
    sl = slice(2 * mode, 2 * mode + 2)
    V[sl, :] *= scale
    V[:, sl] *= scale
    V[sl, sl] += added * np.eye(2)
    return V


def vacuum_cov(n: int) -> np.ndarray:
    return VACUUM_VARIANCE * np.eye(2 * n)


def satisfies_uncertainty(V: np.ndarray, tol: float = 1e-9) -> bool:
    """Check ``V + i Omega / 2 >= 0`` (Robertson-Schrodinger bound)."""
    V = np.asarray(V, dtype=float)
    if not np.allclose(V, V.T, atol=1e-12):
        return False
    n = V.shape[0] // 2
    M = V + 0.5j * omega(n)
    return bool(np.min(np.linalg.eigvalsh(M)) >= -tol)


def sample_awgn(sigma: float, n_modes: int, rng: RngLike, shots: int | None = None) -> np.ndarray:
    """Additive Gaussian displacement on ``n_modes`` modes.

    Returns a length ``2 n_modes`` vector, or a ``(2 n_modes, shots)`` array
    when ``shots`` is given.
    """
    if not sigma >= 0:
        raise DomainError(f"AWGN rms must be >= 0, got {sigma}")
    gen = as_generator(rng)
    shape = (2 * n_modes,) if shots is None else (2 * n_modes, shots)
    if sigma == 0:
        return np.zeros(shape)
    return gen.normal(0.0, sigma, size=shape)


def apply_channel_samples(q: np.ndarray, p: np.ndarray, ch: GaussianChannel, rng: RngLike):
    """Push phase-space samples of one mode through a channel.

    Samples are Wigner-function draws; the environment mode is vacuum and is
    traced out. Exact for Gaussian inputs.
    """
    gen = as_generator(rng)
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if isinstance(ch, Awgn):
        return q + gen.normal(0, ch.sigma, q.shape), p + gen.normal(0, ch.sigma, p.shape)
    env_sd = np.sqrt(VACUUM_VARIANCE)
    eq = gen.normal(0, env_sd, q.shape)
    ep = gen.normal(0, env_sd, p.shape)
    if isinstance(ch, Loss):
        a, b = np.sqrt(ch.eta), np.sqrt(1.0 - ch.eta)
        return a * q + b * eq, a * p + b * ep
    if isinstance(ch, Amp):
        # a' = sqrt(G) a - sqrt(G-1) e^dagger
        a, b = np.sqrt(ch.gain), np.sqrt(ch.gain - 1.0)
        return a * q - b * eq, a * p + b * ep
    raise TypeError(f"unknown channel {ch!r}")


def loss_to_awgn_sigma(eta: float) -> float:
    """Noise rms of ``Loss(eta)`` preceded by ``Amp(1/eta)``: ``sqrt(1 - eta)``."""
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"transmissivity must lie in (0, 1], got {eta}")
    return float(np.sqrt(1.0 - eta))
