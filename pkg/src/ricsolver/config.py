"""Config-file and override parsing.

Format: one `key = value` per line, `#` starts a comment, blank lines are
skipped. Keys not in KNOWN_KEYS raise ConfigError; missing keys fall back
to the baseline calibration and the fallback is recorded so validate() can
surface it. The same keys are accepted by repeated --set key=value flags,
which win over the file.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

from .errors import ConfigError
from .params import (
    ClaimDist,
    Horizon,
    InsuranceParams,
    MarketParams,
    ModelParams,
    PreferenceParams,
)

# key -> (block, attribute); "lambda" is a Python keyword, stored as lam.
KNOWN_KEYS: Dict[str, Tuple[str, str]] = {
    "r": ("market", "r"),
    "a": ("market", "a"),
    "sigma": ("market", "sigma"),
    "beta": ("market", "beta"),
    "alpha": ("market", "alpha"),
    "rho1": ("market", "rho1"),
    "m0": ("market", "m0"),
    "b": ("insurance", "b"),
    "theta1": ("insurance", "theta1"),
    "lambda": ("insurance", "lam"),
    "mu1": ("insurance", "mu1"),
    "mu2": ("insurance", "mu2"),
    "claim_family": ("insurance", "claim_family"),
    "claim_params": ("insurance", "claim_params"),
    "gamma": ("preference", "gamma"),
    "delta": ("preference", "delta"),
    "phi_eis": ("preference", "phi_eis"),
    "Phi": ("preference", "Phi"),
    "t0": ("horizon", "t0"),
    "T": ("horizon", "T"),
    "k_bar": ("top", "k_bar"),
}

# Canonical emission order for resolved-parameter headers.
KEY_ORDER: Tuple[str, ...] = tuple(KNOWN_KEYS)


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Parse `key = value` lines into a raw string map.

    Unknown keys, duplicate keys, and malformed lines raise ConfigError
    with the offending line number.
    """
    raw: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.rstrip()!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"{source}:{lineno}: empty value for {key!r}")
        raw[key] = value
    return raw


def load_config(path: str) -> Dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=path)


def apply_sets(raw: Dict[str, str], sets: List[str]) -> Dict[str, str]:
    """Merge --set key=value overrides (later flags win, also over the file)."""
    merged = dict(raw)
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        key, value = key.strip(), value.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"--set: unknown key {key!r}")
        if not value:
            raise ConfigError(f"--set: empty value for {key!r}")
        merged[key] = value
    return merged


def _parse_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {value!r} as a number") from None


def build_params(raw: Dict[str, str]) -> Tuple[ModelParams, Tuple[str, ...]]:
    """Materialize ModelParams from a raw string map.

    Returns the params and one fallback note per key that was not set and
    took its baseline default.
    """
    defaults = ModelParams()
    values: Dict[str, object] = {}
    fallbacks: List[str] = []

    def default_of(key: str) -> object:
        block, attr = KNOWN_KEYS[key]
        if block == "top":
            return getattr(defaults, attr)
        if attr == "claim_family":
            return defaults.insurance.claim_dist.family
        if attr == "claim_params":
            return defaults.insurance.claim_dist.params
        return getattr(getattr(defaults, block), attr)

    for key in KNOWN_KEYS:
        if key not in raw:
            dv = default_of(key)
            values[key] = dv
            shown = ",".join(f"{p:g}" for p in dv) if key == "claim_params" else (
                "none" if dv is None else f"{dv:g}" if isinstance(dv, float) else str(dv)
            )
            fallbacks.append(f"key {key!r} not set; default {shown} used")
            continue
        text = raw[key]
        if key == "claim_family":
            values[key] = text
        elif key == "claim_params":
            try:
                values[key] = tuple(float(p) for p in text.split(",") if p.strip())
            except ValueError:
                raise ConfigError(f"key 'claim_params': cannot parse {text!r}") from None
            if not values[key]:
                raise ConfigError(f"key 'claim_params': no values in {text!r}")
        elif key == "phi_eis":
            values[key] = None if text.lower() in ("none", "derived") else _parse_float(key, text)
        else:
            values[key] = _parse_float(key, text)

    params = ModelParams(
        market=MarketParams(
            r=values["r"], a=values["a"], sigma=values["sigma"], beta=values["beta"],
            alpha=values["alpha"], rho1=values["rho1"], m0=values["m0"],
        ),
        insurance=InsuranceParams(
            b=values["b"], theta1=values["theta1"], lam=values["lambda"],
            mu1=values["mu1"], mu2=values["mu2"],
            claim_dist=ClaimDist(values["claim_family"], values["claim_params"]),
        ),
        preference=PreferenceParams(
            gamma=values["gamma"], delta=values["delta"],
            phi_eis=values["phi_eis"], Phi=values["Phi"],
        ),
        horizon=Horizon(t0=values["t0"], T=values["T"]),
        k_bar=values["k_bar"],
    )
    return params, tuple(fallbacks)


def resolve(
    config_path: Optional[str], sets: List[str]
) -> Tuple[ModelParams, Tuple[str, ...]]:
    """Full resolution pipeline: file (optional) -> --set overrides -> params."""
    raw = load_config(config_path) if config_path else {}
    raw = apply_sets(raw, sets)
    params, fallbacks = build_params(raw)
    if config_path is None and not sets:
        fallbacks = ("no config given; baseline calibration used",) + fallbacks
    return params, fallbacks


def resolved_items(params: ModelParams) -> List[Tuple[str, str]]:
    """(key, value) pairs of the fully resolved configuration, stable order.

    Values are formatted with %.9g so emitting them into CSV headers is
    deterministic across runs.
    """
    mk, ins, pf, hz = params.market, params.insurance, params.preference, params.horizon
    flat: Dict[str, object] = {
        "r": mk.r, "a": mk.a, "sigma": mk.sigma, "beta": mk.beta, "alpha": mk.alpha,
        "rho1": mk.rho1, "m0": mk.m0,
        "b": ins.b, "theta1": ins.theta1, "lambda": ins.lam,
        "mu1": ins.mu1, "mu2": ins.mu2,
        "claim_family": ins.claim_dist.family,
        "claim_params": ",".join(f"{p:.9g}" for p in ins.claim_dist.params),
        "gamma": pf.gamma, "delta": pf.delta,
        "phi_eis": "none" if pf.phi_eis is None else f"{pf.phi_eis:.9g}",
        "Phi": pf.Phi,
        "t0": hz.t0, "T": hz.T, "k_bar": params.k_bar,
    }
    out: List[Tuple[str, str]] = []
    for key in KEY_ORDER:
        v = flat[key]
        out.append((key, f"{v:.9g}" if isinstance(v, float) else str(v)))
    return out
