import json
import math

from hypothesis import given, strategies as st

from contraction_lab.report import (SCHEMA, VerificationReport, digest, make_entry, passes,
                                    status_entry)


def test_passes_directions():
    assert passes(1.0, 1.0, 0.0)
    assert passes(1.0 + 1e-9, 1.0, 1e-8)
    assert not passes(1.1, 1.0, 1e-8)
    assert passes(0.9, 1.0, 0.0, direction="lower") is False
    assert passes(0.99, 1.0, 0.05, direction="equal")
    assert passes(0.5, 0.0, 1.0, tol_mode="abs")


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(0, 1))
def test_upper_and_lower_mirror(a, b, tol):
    assert passes(a, b, tol, "upper", "abs") == passes(-a, -b, tol, "lower", "abs")


def test_digest_is_order_independent():
    assert digest({"a": 1, "b": [1.0, 2.0]}) == digest({"b": [1.0, 2.0], "a": 1})


def test_json_roundtrip_and_labels():
    r = VerificationReport(meta={"k": 1})
    r.add(make_entry("x", "contraction", 0.5, 1.0, 1e-6, inputs={"z": 1}))
    r.add(status_entry("y", "lp-gradient", "not_applicable"))
    text = r.to_json()
    data = json.loads(text)
    assert data["schema"] == SCHEMA
    assert [e["theorem"] for e in data["entries"]] == ["contr1", "lp-est"]
    assert data["entries"][1]["computed"] == "nan"
    back = VerificationReport.from_dict(data)
    assert back.to_json() == text
    assert r.all_passed and not r.any_nonconverged
    assert r.to_csv().startswith(f"# schema={SCHEMA}\n")


def test_failures_and_nonconvergence():
    r = VerificationReport()
    r.add(make_entry("x", "contraction", 2.0, 1.0, 1e-6))
    assert not r.all_passed
    r.add(status_entry("s", "contraction", "not_converged"))
    assert r.any_nonconverged
    assert math.isnan(r.entries[1].computed)
