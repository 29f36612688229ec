"""Parser for flat ``key = value`` measure-spec files.

Grammar (one statement per line)::

    line    := blank | comment | pair
    comment := '#' anything
    pair    := key '=' value [comment]
    key     := [A-Za-z_][A-Za-z0-9_]*
    value   := number | word | number (',' number)*

Every file must set ``family``; the other admissible keys depend on it (see
``FAMILIES``). Unknown or repeated keys are errors.
"""
from __future__ import annotations

import math
import re
from pathlib import Path

from . import measures as M

_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class SpecError(ValueError):
    """Malformed or inconsistent measure-spec file."""


FAMILIES = {
    "gaussian": {"dim": 1, "sigma": 1.0},
    "anisotropic_gaussian": {"precision": None},
    "quartic": {"dim": 1, "lambda": 1.0, "sigma": 1.0},
    "quartic_radial": {"precision": None, "coef": 0.125},
    "power": {"dim": 1, "coef": 1.0, "power": 4},
    "exponential": {"rate": 1.0},
    "cosine_model": {"A": 1.0},
    "halfline": {"level": 1.0, "slope": 0.0},
    "uniform": {"body": "square", "dim": 2, "halfwidth": 1.0, "radius": 1.0,
                "semi_axes": None},
    "radial": {"psi": "constant", "dim": 2, "coef": 1.0},
}
COMMON = {"label": "", "family": None}
_INT_KEYS = {"dim", "power"}
_WORD_KEYS = {"family", "body", "psi", "label"}
_LIST_KEYS = {"precision", "semi_axes"}


def _parse_value(key: str, raw: str, lineno: int):
    raw = raw.strip()
    if not raw:
        raise SpecError(f"line {lineno}: empty value for {key!r}")
    if key in _WORD_KEYS:
        if not re.fullmatch(r"[A-Za-z0-9_.\-+]+", raw):
            raise SpecError(f"line {lineno}: bad word {raw!r} for {key!r}")
        return raw
    try:
        if key in _LIST_KEYS:
            return [float(v) for v in raw.split(",")]
        if key in _INT_KEYS:
            return int(raw)
        val = float(raw)
    except ValueError:
        raise SpecError(f"line {lineno}: cannot parse {raw!r} for {key!r}") from None
    if not math.isfinite(val):
        raise SpecError(f"line {lineno}: non-finite value for {key!r}")
    return val


def parse_text(text: str) -> dict:
    """Return the key/value mapping of a spec document (defaults filled in)."""
    raw: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not _KEY.match(key):
            raise SpecError(f"line {lineno}: bad key {key!r}")
        if key in raw:
            raise SpecError(f"line {lineno}: repeated key {key!r}")
        raw[key] = (value, lineno)
    if "family" not in raw:
        raise SpecError("missing 'family'")
    family = _parse_value("family", *raw["family"])
    if family not in FAMILIES:
        raise SpecError(f"unknown family {family!r}")
    allowed = {**COMMON, **FAMILIES[family]}
    out = {k: v for k, v in allowed.items()}
    for key, (value, lineno) in raw.items():
        if key not in allowed:
            raise SpecError(f"line {lineno}: unknown key {key!r} for family {family!r}")
        out[key] = _parse_value(key, value, lineno)
    return out


def build(cfg: dict) -> M.MeasureSpec:
    """Construct a measure from a parsed spec mapping."""
    fam = cfg["family"]
    label = cfg.get("label") or fam
    try:
        if fam == "gaussian":
            m = M.make_gaussian(cfg["dim"], cfg["sigma"])
        elif fam == "anisotropic_gaussian":
            prec = _need(cfg, "precision")
            m = M.density_measure(M.quadratic(prec), label=label)
        elif fam == "quartic":
            m = M.density_measure(M.quartic(cfg["dim"], cfg["lambda"], cfg["sigma"]), label=label)
        elif fam == "quartic_radial":
            prec = _need(cfg, "precision")
            pot = M.add_potentials(M.quadratic(prec), M.radial_power(len(prec), cfg["coef"]))
            m = M.density_measure(pot, label=label)
        elif fam == "power":
            m = M.density_measure(M.power_sum(cfg["dim"], cfg["coef"], cfg["power"]), label=label)
        elif fam == "exponential":
            m = M.density_measure(M.exponential(cfg["rate"]), label=label)
        elif fam == "cosine_model":
            m = M.make_model_nu(cfg["A"])
        elif fam == "halfline":
            m = M.make_lebesgue_halfline(cfg["level"], cfg["slope"])
        elif fam == "uniform":
            m = M.make_uniform(_body(cfg))
        elif fam == "radial":
            psi = M.radial_psi(cfg["psi"], cfg["coef"])
            m = M.make_radial(psi, cfg["dim"], label=label,
                              params={"psi": cfg["psi"], "coef": cfg["coef"]})
        else:  # pragma: no cover - guarded by parse_text
            raise SpecError(f"unknown family {fam!r}")
    except SpecError:
        raise
    except ValueError as exc:
        raise SpecError(str(exc)) from exc
    m.params.update({"spec": {k: v for k, v in cfg.items() if k != "label"}})
    return m


def _need(cfg, key):
    if cfg.get(key) is None:
        raise SpecError(f"family {cfg['family']!r} requires {key!r}")
    return cfg[key]


def _body(cfg) -> M.ConvexBody:
    name = cfg["body"]
    if name == "square":
        return M.square(cfg["halfwidth"], cfg["dim"])
    if name == "interval":
        return M.interval(cfg["halfwidth"])
    if name == "disk":
        return M.disk(cfg["radius"], cfg["dim"])
    if name == "ellipse":
        return M.ellipsoid(_need(cfg, "semi_axes"))
    raise SpecError(f"unknown body {name!r}")


def load(path) -> M.MeasureSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read {path}: {exc}") from exc
    return build(parse_text(text))


def loads(text: str) -> M.MeasureSpec:
    return build(parse_text(text))
