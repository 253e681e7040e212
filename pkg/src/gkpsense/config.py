"""Flat ``key = value`` experiment configuration with a typed schema.

Syntax::

    # comment
    kind = sensing-sweep
    M = 4, 16, 64          # comma list
    sigma = 0.40:0.70:0.01 # inclusive start:stop:step range
    seed = 7

Keys are case-sensitive. Unknown keys and malformed values are reported with
their line number; :func:`parse_text` collects every problem in one pass.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

KINDS = ("code-noise", "sensing-sweep", "complex-sensing", "channel-check", "threshold")
RANDOMIZED = {"code-noise", "complex-sensing", "channel-check"}
MIN_SHOTS = 10_000
MAX_SEED = 2**64 - 1

# key -> (parser, required kinds, optional kinds)
_FLOAT_LIST = "float-list"
_INT_LIST = "int-list"
_FLOAT = "float"
_INT = "int"
_STR = "str"

_SCHEMA: dict[str, tuple[str, set, set]] = {
    "kind": (_STR, set(KINDS), set()),
    "seed": (_INT, set(), set(KINDS)),
    "shots": (_INT, {"complex-sensing", "channel-check"}, {"code-noise"}),
    "code": (_STR, {"code-noise", "threshold"}, set()),
    "sigma": (_FLOAT_LIST, {"code-noise", "threshold"}, set()),
    "lam": (_FLOAT_LIST, set(), {"code-noise", "threshold", "sensing-sweep"}),
    "levels": (_INT, set(), {"code-noise", "threshold", "sensing-sweep"}),
    "gain": (_FLOAT_LIST, set(), {"code-noise", "threshold"}),
    "method": (_STR, set(), {"code-noise"}),
    "M": (_INT_LIST, {"sensing-sweep", "complex-sensing"}, set()),
    "eta": (_FLOAT_LIST, {"sensing-sweep"}, {"channel-check"}),
    "n_s": (_FLOAT, set(), {"sensing-sweep", "complex-sensing"}),
    "k_prior": (_FLOAT_LIST, set(), {"complex-sensing"}),
    "k": (_FLOAT_LIST, set(), {"channel-check"}),
}

DEFAULTS = {
    "levels": "7",
    "lam": "1.05:2.05:0.1",
    "method": "pdf",
    "n_s": "1",
    "k_prior": "1",
    "eta": "0.5, 0.7, 0.9, 0.95",
    "k": "2, 0.5",
}


@dataclass(frozen=True)
class Diagnostic:
    line: int | None
    field: str | None
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}" if self.line is not None else "config"
        fld = f" [{self.field}]" if self.field else ""
        return f"{where}{fld}: {self.message}"


@dataclass
class ExperimentConfig:
    kind: str
    values: dict
    raw: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def seed(self) -> int | None:
        return self.values.get("seed")

    def with_seed(self, seed: int | None) -> "ExperimentConfig":
        if seed is None:
            return self
        vals = dict(self.values, seed=int(seed))
        raw = dict(self.raw, seed=str(int(seed)))
        return ExperimentConfig(self.kind, vals, raw)

    def canonical(self) -> str:
        return "\n".join(f"{k}={self.raw[k]}" for k in sorted(self.raw))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()[:16]


def _parse_float(text: str) -> float:
    v = float(text)
    if not np.isfinite(v):
        raise ValueError(f"non-finite value {text!r}")
    return v


def _parse_int(text: str) -> int:
    f = float(text)
    if not f.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(f)


def _parse_list(text: str, conv):
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        parts = [p.strip() for p in text.split(":")]
        if len(parts) != 3:
            raise ValueError("range must be start:stop:step")
        start, stop, step = (_parse_float(p) for p in parts)
        if step <= 0:
            raise ValueError("range step must be positive")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        vals = [round(start + i * step, 12) for i in range(max(n, 0))]
        return [conv(repr(v)) for v in vals]
    return [conv(p.strip()) for p in text.split(",") if p.strip() != ""] or []


def _convert(kind: str, text: str):
    if kind == _FLOAT:
        return _parse_float(text)
    if kind == _INT:
        return _parse_int(text)
    if kind == _STR:
        if not text:
            raise ValueError("empty value")
        return text
    if kind == _FLOAT_LIST:
        return _parse_list(text, _parse_float)
    if kind == _INT_LIST:
        return _parse_list(text, _parse_int)
    raise AssertionError(kind)


def _is_square(n: int) -> bool:
    r = int(round(np.sqrt(n)))
    return r * r == n


def _check_semantics(kind: str, vals: dict, lines: dict, seed_override: int | None) -> list[Diagnostic]:
    out: list[Diagnostic] = []

    def err(key, msg):
        out.append(Diagnostic(lines.get(key), key, msg))

    for key, (typ, _, _) in _SCHEMA.items():
        if key in vals and typ in (_FLOAT_LIST, _INT_LIST) and len(vals[key]) == 0:
            err(key, "nonempty range required")

    seed = seed_override if seed_override is not None else vals.get("seed")
    if kind in RANDOMIZED and seed is None:
        err("seed", "seed required for randomized experiments")
    if seed is not None and not 0 <= seed <= MAX_SEED:
        err("seed", "seed must be an unsigned 64-bit integer")

    shots = vals.get("shots")
    if shots is not None and shots < MIN_SHOTS:
        err("shots", f"shots must be >= {MIN_SHOTS}")
    if kind == "code-noise" and vals.get("method") == "mc" and shots is None:
        err("shots", "shots required for method = mc")
    if "method" in vals and vals["method"] not in ("pdf", "mc"):
        err("method", "method must be 'pdf' or 'mc'")

    code = vals.get("code")
    if code is not None and code not in ("tms", "stabilizer"):
        err("code", "code must be 'tms' or 'stabilizer'")
    for key in ("sigma",):
        if any(v <= 0 for v in vals.get(key, [])):
            err(key, "values must be positive")
    if any(v <= 1 for v in vals.get("lam", [])):
        err("lam", "values must exceed 1")
    if any(v < 1 for v in vals.get("gain", [])):
        err("gain", "values must be >= 1")
    if "levels" in vals and not 2 <= vals["levels"] <= 8:
        err("levels", "levels must lie in 2..8")
    if any(not 0 < v <= 1 for v in vals.get("eta", [])):
        err("eta", "values must lie in (0, 1]")
    if any(v <= 0 for v in vals.get("k", [])):
        err("k", "values must be positive")
    if any(v <= 0 for v in vals.get("k_prior", [])):
        err("k_prior", "values must be positive")
    if "n_s" in vals and not vals["n_s"] > 0:
        err("n_s", "n_s must be positive")
    Ms = vals.get("M", [])
    if any(m < 1 for m in Ms):
        err("M", "values must be >= 1")
    elif kind == "complex-sensing" and any(not _is_square(m) for m in Ms):
        err("M", "perfect square required")
    sig = vals.get("sigma", [])
    if kind == "threshold" and len(sig) and np.any(np.diff(sig) <= 0):
        err("sigma", "values must be strictly ascending")
    return out


def parse_text(text: str, seed_override: int | None = None) -> tuple[ExperimentConfig | None, list[Diagnostic]]:
    """Parse and validate; returns ``(config or None, diagnostics)``."""
    diags: list[Diagnostic] = []
    raw: dict[str, str] = {}
    lines: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            diags.append(Diagnostic(lineno, None, "expected 'key = value'"))
            continue
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in _SCHEMA:
            diags.append(Diagnostic(lineno, key, "unknown key"))
            continue
        if key in raw:
            diags.append(Diagnostic(lineno, key, f"duplicate key (first set on line {lines[key]})"))
            continue
        raw[key] = value
        lines[key] = lineno

    kind = raw.get("kind")
    if kind is None:
        diags.append(Diagnostic(None, "kind", "missing required key"))
        return None, diags
    if kind not in KINDS:
        diags.append(Diagnostic(lines["kind"], "kind", f"unknown experiment kind; expected one of {', '.join(KINDS)}"))
        return None, diags

    for key, (_, required, optional) in _SCHEMA.items():
        if key in raw and key != "kind" and kind not in required | optional:
            diags.append(Diagnostic(lines[key], key, f"not a setting of {kind}"))
        if kind in required and key not in raw:
            diags.append(Diagnostic(None, key, "missing required key"))
    for key, dflt in DEFAULTS.items():
        _, required, optional = _SCHEMA[key]
        if kind in optional and key not in raw:
            raw[key] = dflt

    vals: dict = {}
    for key, text_value in raw.items():
        typ = _SCHEMA[key][0]
        try:
            vals[key] = _convert(typ, text_value)
        except ValueError as exc:
            diags.append(Diagnostic(lines.get(key), key, str(exc)))

    diags.extend(_check_semantics(kind, vals, lines, seed_override))
    if diags:
        return None, diags
    cfg = ExperimentConfig(kind, vals, raw).with_seed(seed_override)
    return cfg, []


def load(path, seed_override: int | None = None) -> ExperimentConfig:
    cfg, diags = parse_text(Path(path).read_text(encoding="utf-8"), seed_override)
    if diags:
        raise ConfigurationError("; ".join(str(d) for d in diags))
    return cfg
