"""Experiment kinds behind the command-line runner.

Each runner maps an :class:`~gkpsense.config.ExperimentConfig` to a fixed
header and a list of rows sorted by the sweep key. Randomized kinds derive one
independent :class:`~gkpsense.phase_space.RngStream` per row, so results do
not depend on evaluation order.
"""

from __future__ import annotations

import csv
import io
import warnings
from pathlib import Path
from typing import Callable

import numpy as np

from .config import ExperimentConfig
from .phase_space import Amp, Loss, RngStream, apply_channel_samples, as_generator, loss_to_awgn_sigma
from .qec_codes import (
    StabilizerCodeConfig,
    TmsCodeConfig,
    stabilizer_logical_noise,
    stabilizer_sample_logical,
    tms_logical_noise,
    tms_logical_noise_exact,
    tms_optimize_gain,
)
from .sensing import (
    PriorModel,
    ec_sensing_precision,
    entangled_precision_uniform,
    gkp_precision,
    mc_complex_protocol,
    separable_precision_uniform,
    weighted_channel_decomposition,
)

HEADERS = {
    "code-noise": ("code", "sigma", "param", "sigma_q", "sigma_p"),
    "threshold": ("code", "param", "sigma", "sigma_q", "sigma_p", "helps"),
    "sensing-sweep": ("eta", "M", "entangled", "separable", "qec1", "qec2", "lossless"),
    "complex-sensing": ("M", "n_s", "k_prior", "delta_q", "heisenberg", "zeta", "mc_delta_q_re", "mc_delta_q_im", "mc_rms_re", "mc_rms_im"),
    "channel-check": ("check", "param", "quantity", "expected", "observed", "stderr", "z"),
}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def to_csv(cfg: ExperimentConfig, rows: list[tuple]) -> str:
    buf = io.StringIO()
    buf.write(f"# config-hash: {cfg.hash()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADERS[cfg.kind])
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Code noise and thresholds
# ---------------------------------------------------------------------------


def _tms_rows(cfg: ExperimentConfig, sigma: float, idx: int):
    gains = cfg.get("gain")
    if cfg.get("method", "pdf") == "mc":
        gains = gains or [float(tms_optimize_gain(sigma, method="exact")[0])]
        return [
            (g, tms_logical_noise(TmsCodeConfig(g, sigma), cfg["shots"], RngStream(cfg.seed, idx * 1000 + j)))
            for j, g in enumerate(gains)
        ]
    if gains:
        return [(g, tms_logical_noise_exact(TmsCodeConfig(g, sigma))) for g in gains]
    g, ln = tms_optimize_gain(sigma, method="exact")
    return [(g, ln)]


def _stab_rows(cfg: ExperimentConfig, sigma: float, idx: int):
    out = []
    for j, lam in enumerate(cfg["lam"]):
        scfg = StabilizerCodeConfig(cfg["levels"], lam, sigma)
        ln = stabilizer_logical_noise(scfg)
        if cfg.get("method", "pdf") == "mc":
            gen = RngStream(cfg.seed, idx * 1000 + j).generator()
            zq, zp = stabilizer_sample_logical(scfg, cfg["shots"], gen, ln.coefficients)
            ln = type(ln)(float(np.sqrt(np.mean(zq**2))), float(np.sqrt(np.mean(zp**2))))
        out.append((lam, ln))
    return out


def run_code_noise(cfg: ExperimentConfig) -> list[tuple]:
    rows = []
    for i, s in enumerate(cfg["sigma"]):
        pairs = _tms_rows(cfg, s, i) if cfg["code"] == "tms" else _stab_rows(cfg, s, i)
        rows += [(cfg["code"], s, p, ln.sigma_q, ln.sigma_p) for p, ln in pairs]
    return sorted(rows, key=lambda r: (r[1], r[2]))


def run_threshold(cfg: ExperimentConfig) -> list[tuple]:
    """One row per (parameter, sigma); ``helps`` marks ``max(sigma_q, sigma_p) < sigma``.

    The two-mode-squeezing code optimizes its gain per sigma and reports it in
    ``param``; the stabilizer code emits one block of rows per ``lam``.
    """
    rows = []
    for s in cfg["sigma"]:
        if cfg["code"] == "tms":
            g, ln = tms_optimize_gain(s, cfg.get("gain"), method="exact")
            rows.append(("tms", g, s, ln.sigma_q, ln.sigma_p, ln.worst < s))
        else:
            for lam in cfg["lam"]:
                ln = stabilizer_logical_noise(StabilizerCodeConfig(cfg["levels"], lam, s))
                rows.append(("stabilizer", lam, s, ln.sigma_q, ln.sigma_p, ln.worst < s))
    if cfg["code"] == "tms":
        return sorted(rows, key=lambda r: r[2])
    return sorted(rows, key=lambda r: (r[1], r[2]))


def threshold_from_rows(rows: list[tuple]) -> dict:
    """Largest helping sigma per parameter (``None`` when the code never helps)."""
    out: dict = {}
    for code, param, s, _, _, helps in rows:
        key = code if code == "tms" else param
        out.setdefault(key, None)
        if helps:
            out[key] = s if out[key] is None else max(out[key], s)
    return out


# ---------------------------------------------------------------------------
# Sensing sweeps
# ---------------------------------------------------------------------------


def best_stabilizer_noise(sigma: float, lams, levels: int = 7):
    """Smallest q-quadrature logical rms over the ``lams`` grid: ``(lam, LogicalNoise)``."""
    best = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for lam in lams:
            ln = stabilizer_logical_noise(StabilizerCodeConfig(levels, lam, sigma))
            if best is None or ln.sigma_q < best[1].sigma_q:
                best = (lam, ln)
    return best


def run_sensing_sweep(cfg: ExperimentConfig) -> list[tuple]:
    rows = []
    n_s = cfg["n_s"]
    for eta in cfg["eta"]:
        sig = loss_to_awgn_sigma(eta)
        if sig > 0:
            s1 = tms_optimize_gain(sig, method="exact")[1].sigma_q
            s2 = best_stabilizer_noise(sig, cfg["lam"], cfg["levels"])[1].sigma_q
        else:
            s1 = s2 = 0.0
        for M in cfg["M"]:
            N = M * n_s
            rows.append(
                (
                    eta,
                    M,
                    entangled_precision_uniform(M, N, eta),
                    separable_precision_uniform(M, N, eta),
                    ec_sensing_precision(M, N, s1),
                    ec_sensing_precision(M, N, s2),
                    entangled_precision_uniform(M, N, 1.0),
                )
            )
    return sorted(rows, key=lambda r: (r[0], r[1]))


def run_complex_sensing(cfg: ExperimentConfig) -> list[tuple]:
    rows = []
    n_s = cfg["n_s"]
    for i, M in enumerate(sorted(cfg["M"])):
        for j, kp in enumerate(sorted(cfg["k_prior"])):
            st = gkp_precision(M, n_s, kp)
            res = mc_complex_protocol(
                M, n_s, 0.0, PriorModel(st["sigma_prior"]), cfg["shots"], RngStream(cfg.seed, i * 1000 + j)
            )
            rows.append(
                (
                    M,
                    n_s,
                    kp,
                    st["delta_q"],
                    1.0 / (2.0 * M * np.sqrt(n_s)),
                    st["zeta"],
                    res.re.extra["delta_q"],
                    res.im.extra["delta_q"],
                    res.re.rms,
                    res.im.rms,
                )
            )
    return rows


# ---------------------------------------------------------------------------
# Channel identities
# ---------------------------------------------------------------------------


def _moment_rows(check: str, param: float, q, p, mean_q: float, var: float) -> list[tuple]:
    n = q.size
    rows = []
    for name, x, mu in (("mean_q", q, mean_q), ("mean_p", p, 0.0)):
        se = float(np.std(x, ddof=1) / np.sqrt(n))
        obs = float(np.mean(x))
        rows.append((check, param, name, mu, obs, se, (obs - mu) / se))
    for name, x in (("var_q", q), ("var_p", p)):
        d = x - x.mean()
        v = float(np.mean(d**2))
        se = float(np.sqrt((np.mean(d**4) - v**2) / n))
        rows.append((check, param, name, var, v, se, (v - var) / se))
    return rows


def loss_amp_samples(eta: float, alpha: float, shots: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Coherent state ``|alpha>`` through ``Amp(1/eta)`` then ``Loss(eta)``."""
    gen = as_generator(rng)
    q = gen.normal(np.sqrt(2.0) * alpha, np.sqrt(0.5), shots)
    p = gen.normal(0.0, np.sqrt(0.5), shots)
    q, p = apply_channel_samples(q, p, Amp(1.0 / eta), gen)
    return apply_channel_samples(q, p, Loss(eta), gen)


def weighted_node_samples(k: float, alpha: float, shots: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Vacuum through ``pre``, displacement ``alpha``, then ``post`` of the weight-``k`` decomposition."""
    gen = as_generator(rng)
    pre, post, _ = weighted_channel_decomposition(k)
    q = gen.normal(0.0, np.sqrt(0.5), shots)
    p = gen.normal(0.0, np.sqrt(0.5), shots)
    q, p = apply_channel_samples(q, p, pre, gen)
    q = q + np.sqrt(2.0) * alpha
    return apply_channel_samples(q, p, post, gen)


CHANNEL_ALPHA = 0.3


def run_channel_check(cfg: ExperimentConfig) -> list[tuple]:
    rows = []
    shots = cfg["shots"]
    a = CHANNEL_ALPHA
    for i, eta in enumerate(sorted(cfg["eta"])):
        q, p = loss_amp_samples(eta, a, shots, RngStream(cfg.seed, i))
        rows += _moment_rows("loss-amp", eta, q, p, np.sqrt(2.0) * a, 0.5 + (1.0 - eta))
    for j, k in enumerate(sorted(cfg["k"])):
        q, p = weighted_node_samples(k, a, shots, RngStream(cfg.seed, 1000 + j))
        excess = weighted_channel_decomposition(k)[2]
        rows += _moment_rows("weighted", k, q, p, np.sqrt(2.0) * k * a, 0.5 + excess)
    return rows


RUNNERS: dict[str, Callable[[ExperimentConfig], list[tuple]]] = {
    "code-noise": run_code_noise,
    "threshold": run_threshold,
    "sensing-sweep": run_sensing_sweep,
    "complex-sensing": run_complex_sensing,
    "channel-check": run_channel_check,
}


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> tuple[list[tuple], str]:
    """Run ``cfg``; returns ``(rows, csv_text)`` and writes ``<kind>.csv`` when ``out_dir`` is set."""
    rows = RUNNERS[cfg.kind](cfg)
    text = to_csv(cfg, rows)
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{cfg.kind}.csv").write_text(text, encoding="utf-8")
    return rows, text
