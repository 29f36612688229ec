"""Verification report entries with deterministic JSON and CSV serialisation."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

import numpy as np

SCHEMA = "contraction-lab.report.v1"

# theorem label certified by each kind of check (README has the full table)
THEOREM_LABELS = {
    "contraction": "contr1",
    "contraction-pair": "contr2",
    "lipschitz-pairwise": "contr1",
    "calibration": "entropic-budget",
    "incremental-decay": "decay-lemma",
    "holder-modulus": "hoelder",
    "sodin-lemma": "Sodin-lem",
    "ms-modulus": "MS-conc",
    "concentration-transfer": "MS-conc",
    "lp-gradient": "lp-est",
    "lp-hessian": "lp-est",
    "operator-norm-lp": "lp-operator",
    "body-scaling": "set-image",
    "heatflow-agreement": "heat-flow",
    "logconcavity-probe": "heat-flow",
    "pushforward": "heat-flow",
    "radial-criterion": "radial-isoperimetry",
    "nu-image": "nu-image",
    "nu-profile": "nu-profile",
    "exponential-derivative": "exponential-tilt",
    "exponential-inverse": "exponential-tilt",
    "gaussian-correlation": "gcc",
    "b-inequality": "b-inequality",
    "b-log-concavity": "b-inequality",
    "harge-moment": "harge",
    "strong-poincare": "strongPoin",
    "bakry-ledoux": "bakry-ledoux",
    "convexity-audit": "precondition",
}

STATUSES = ("pass", "fail", "not_applicable", "inconclusive", "precondition_failed",
            "not_converged")


def _plain(obj: Any) -> Any:
    """Convert numpy containers/scalars into JSON-friendly Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return _num(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float):
        return _num(obj)
    return obj


def _num(v: float):
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def digest(inputs: Any) -> str:
    """Short sha256 digest of a canonical JSON rendering of ``inputs``."""
    text = json.dumps(_plain(inputs), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class ReportEntry:
    """One checked inequality ``computed <= bound * (1 + tolerance)`` (or its
    mirror image for lower bounds)."""

    name: str
    check: str
    computed: float
    bound: float
    tolerance: float
    passed: bool
    status: str
    inputs_digest: str
    seed: Optional[int] = None
    direction: str = "upper"
    details: dict = field(default_factory=dict)
    theorem: str = ""

    @property
    def label(self) -> str:
        return self.theorem or THEOREM_LABELS.get(self.check, "unlabelled")

    @property
    def ok(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return _plain({
            "name": self.name,
            "check": self.check,
            "theorem": self.label,
            "computed": self.computed,
            "bound": self.bound,
            "tolerance": self.tolerance,
            "direction": self.direction,
            "pass": self.passed,
            "status": self.status,
            "inputs_digest": self.inputs_digest,
            "seed": self.seed,
            "details": self.details,
        })


def passes(computed: float, bound: float, tol: float, direction: str = "upper",
           tol_mode: str = "rel") -> bool:
    if not (math.isfinite(computed) and math.isfinite(bound)):
        return bool(computed <= bound) if direction == "upper" else bool(computed >= bound)
    slack = tol * abs(bound) if tol_mode == "rel" else tol
    if direction == "upper":
        return computed <= bound + slack
    if direction == "lower":
        return computed >= bound - slack
    if direction == "equal":
        return abs(computed - bound) <= slack
    raise ValueError(f"unknown direction {direction!r}")


def make_entry(name: str, check: str, computed: float, bound: float, tol: float, *,
               direction: str = "upper", tol_mode: str = "rel", inputs: Any = None,
               seed: Optional[int] = None, details: Optional[dict] = None,
               status: Optional[str] = None) -> ReportEntry:
    computed = float(computed)
    bound = float(bound)
    ok = passes(computed, bound, tol, direction, tol_mode)
    if status is None:
        status = "pass" if ok else "fail"
    elif status != "pass":
        ok = False
    det = dict(details or {})
    det.setdefault("tol_mode", tol_mode)
    return ReportEntry(name, check, computed, bound, float(tol), bool(ok), status,
                       digest(inputs if inputs is not None else {}), seed, direction, det)


def status_entry(name: str, check: str, status: str, *, inputs: Any = None,
                 seed: Optional[int] = None, details: Optional[dict] = None) -> ReportEntry:
    """An entry that carries only a status (no numeric comparison)."""
    if status not in STATUSES:
        raise ValueError(f"unknown status {status!r}")
    return ReportEntry(name, check, math.nan, math.nan, 0.0, status == "pass", status,
                       digest(inputs if inputs is not None else {}), seed, "upper",
                       dict(details or {}))


@dataclass
class VerificationReport:
    entries: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, entry: ReportEntry) -> ReportEntry:
        self.entries.append(entry)
        return entry

    def extend(self, entries: Iterable[ReportEntry]) -> None:
        self.entries.extend(entries)

    @property
    def all_passed(self) -> bool:
        return all(e.passed for e in self.entries if e.status != "not_applicable")

    @property
    def any_nonconverged(self) -> bool:
        return any(e.status == "not_converged" for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "meta": _plain(self.meta),
            "summary": {
                "n_entries": len(self.entries),
                "n_pass": sum(e.status == "pass" for e in self.entries),
                "n_fail": sum(e.status == "fail" for e in self.entries),
                "n_other": sum(e.status not in ("pass", "fail") for e in self.entries),
            },
            "entries": [e.to_dict() for e in self.entries],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema={SCHEMA}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "check", "theorem", "computed", "bound", "tolerance", "direction",
                    "pass", "status", "inputs_digest", "seed"])
        for e in self.entries:
            w.writerow([e.name, e.check, e.label, repr(e.computed), repr(e.bound), repr(e.tolerance),
                        e.direction, int(e.passed), e.status, e.inputs_digest,
                        "" if e.seed is None else e.seed])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, data: dict) -> "VerificationReport":
        if data.get("schema") != SCHEMA:
            raise ValueError(f"unsupported report schema {data.get('schema')!r}")

        def num(v):
            return float(v) if isinstance(v, str) else (math.nan if v is None else float(v))

        entries = [
            ReportEntry(d["name"], d["check"], num(d["computed"]), num(d["bound"]),
                        float(d["tolerance"]), bool(d["pass"]), d["status"],
                        d["inputs_digest"], d.get("seed"), d.get("direction", "upper"),
                        d.get("details", {}), d.get("theorem", ""))
            for d in data["entries"]
        ]
        return cls(entries, data.get("meta", {}))
