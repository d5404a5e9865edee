import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from cvnoncl import schema
from cvnoncl.cli import main
from cvnoncl.schema import SchemaError

SQUEEZED = '{"kind": "squeezed_gaussian", "s": 4}'


def _raw(vp, vm):
    return json.dumps({"kind": "gaussian_raw", "cov": {"shape": [2, 2], "data": [vp, 0, 0, vm]}})


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_monotones_of_squeezed_state(capsys):
    code, out, _ = _run(capsys, "monotones", SQUEEZED)
    doc = json.loads(out)
    assert code == 0
    m = doc["monotones"]
    assert_allclose(m["v"], [1.5, -0.375])
    assert_allclose(m["w"], [0.5625])
    assert_allclose(m["W_partial"], [1.125])
    assert_allclose(m["f"], [1.5, 0.0])
    assert doc["provenance"]["path"] == "gaussian"


def test_monotones_csv_rows(capsys):
    code, out, _ = _run(capsys, "monotones", SQUEEZED, "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0
    assert {r["family"] for r in rows} == {"v", "w", "f", "g"}
    w = [r for r in rows if r["family"] == "w"]
    assert float(w[0]["partial_sum"]) == pytest.approx(1.125)


def test_monotones_fock_path_matches_gaussian(capsys):
    _, gauss, _ = _run(capsys, "monotones", SQUEEZED)
    _, fock_out, _ = _run(capsys, "monotones", SQUEEZED, "--fock", "--cutoff", "80")
    a, b = json.loads(gauss)["monotones"], json.loads(fock_out)["monotones"]
    for key in ("v", "w", "f", "g"):
        assert_allclose(b[key], a[key], atol=1e-7)


def test_thermal_minus_vacuum_monotones(capsys):
    code, out, _ = _run(capsys, "monotones", '{"kind": "thermal_minus_vacuum", "p": 0.6}')
    doc = json.loads(out)
    assert code == 0
    assert_allclose(doc["monotones"]["f"], [0.0, 0.0])
    assert_allclose(doc["qfi_matrix"]["data"][0], 0.375, atol=1e-9)


@pytest.mark.parametrize("regime, code, certs", [("gpn", 0, []), ("p0", 1, ["N2"])])
def test_convert_worked_example(capsys, regime, code, certs):
    rc, out, _ = _run(capsys, "convert", _raw(1.0, 0.3), _raw(0.8, 0.35), "--regime", regime)
    doc = json.loads(out)
    assert rc == code
    assert [c[0] for c in doc["verdict"]["certificates"]] == certs


def test_convert_multimode_pure(capsys):
    src = '{"kind": "tensor_product", "factors": [{"kind": "squeezed_gaussian", "s": 4}, {"kind": "squeezed_gaussian", "s": 2}]}'
    tgt = '{"kind": "tensor_product", "factors": [{"kind": "squeezed_gaussian", "s": 5}, {"kind": "squeezed_gaussian", "s": 1}]}'
    code, out, _ = _run(capsys, "convert", src, tgt, "--regime", "gpn")
    assert code == 1
    assert json.loads(out)["verdict"]["certificates"][0][0] == "s1"


@pytest.mark.parametrize(
    "argv, code, message",
    [
        (["convert", '{"kind": "cat", "alpha": 1}', SQUEEZED], 2, "source"),
        (["monotones", '{"kind": "cat", "alpha": 1, "sign": 3}'], 2, "state.sign"),
        (["monotones", '{"kind": "thermal_minus_vacuum", "p": 0.9}', "--cutoff", "60"], 3, "truncation"),
        (["monotones", '{"kind": "nope"}'], 2, "state.kind"),
        (["monotones", '{"kind": "squeezed_gaussian", "s": 4, "extra": 1}'], 2, "state.extra"),
        (["region", SQUEEZED, "--vplus", "1:2"], 2, "--vplus"),
        (["selftest", "--only", "nothing"], 2, "unknown criterion"),
    ],
)
def test_exit_codes(capsys, argv, code, message):
    rc, _, err = _run(capsys, *argv)
    assert rc == code
    assert message in err


def test_nested_field_paths_in_errors(capsys):
    doc = '{"kind": "tensor_product", "factors": [{"kind": "coherent", "alpha": 1}, {"kind": "squeezed_gaussian", "s": -1}]}'
    rc, _, err = _run(capsys, "monotones", doc)
    assert rc == 2
    assert "state.factors[1].s" in err


def test_output_file(capsys, tmp_path):
    target = tmp_path / "report.json"
    rc, out, _ = _run(capsys, "monotones", SQUEEZED, "--out", str(target))
    assert rc == 0 and out == ""
    assert json.loads(target.read_text())["monotones"]["w"] == [0.5625]


def test_state_from_file(capsys, tmp_path):
    path = tmp_path / "state.json"
    path.write_text(SQUEEZED)
    _, a, _ = _run(capsys, "monotones", str(path))
    _, b, _ = _run(capsys, "monotones", SQUEEZED)
    assert a == b


def _region(capsys, source, *extra):
    rc, out, _ = _run(capsys, "region", source, *extra)
    assert rc == 0
    return [
        (float(r["v_plus"]), float(r["v_minus"]), r["reachable_p0"] == "true", r["reachable_gpn"] == "true")
        for r in csv.DictReader(io.StringIO(out))
    ]


def test_region_floor_on_v_minus(capsys):
    rows = _region(capsys, _raw(1.0, 0.3), "--vplus", "0.5:3:11", "--vminus", "0.05:1:20")
    assert rows
    for vp, vm, p0, gpn in rows:
        assert vp >= vm and vp * vm >= 0.25 - 1e-12
        if vm < 0.3 - 1e-12:
            assert not p0 and not gpn
        if vm >= 0.5:
            assert p0 and gpn
        if p0:
            assert gpn


def test_region_n3_curve_separates_the_regimes(capsys):
    rows = _region(capsys, _raw(1.0, 0.3), "--vplus", "0.8:0.8:1", "--vminus", "0.35:0.35:1")
    assert rows == [(0.8, 0.35, False, True)]


def test_region_json_format(capsys):
    rc, out, _ = _run(capsys, "region", _raw(1.0, 0.3), "--format", "json", "--vplus", "1:1:1", "--vminus", "0.5:0.5:1")
    doc = json.loads(out)
    assert doc["columns"] == ["v_plus", "v_minus", "reachable_p0", "reachable_gpn"]
    assert doc["rows"] == [[1.0, 0.5, True, True]]


def test_protocol_catgrow(capsys):
    rc, out, _ = _run(capsys, "protocol", "catgrow")
    doc = json.loads(out)
    assert rc == 0
    vac = next(b for b in doc["branches"] if b["record"] == ["vac"])
    assert vac["probability"] == pytest.approx(0.5, abs=1e-3)
    assert vac["W1_ratio"] == pytest.approx(2.0, abs=5e-3)
    assert vac["fidelity_to_target"] > 0.999


def test_protocol_param_override(capsys):
    rc, out, _ = _run(capsys, "protocol", "loss", "--param", "eta=0.64")
    doc = json.loads(out)
    assert rc == 0
    (branch,) = doc["branches"]
    assert branch["fidelity_to_target"] < 0.99


def test_protocol_homodyne_preserves_n3(capsys):
    rc, out, _ = _run(capsys, "protocol", "homodyne-ff")
    doc = json.loads(out)
    assert rc == 0
    assert doc["input"]["measures"]["N3"] == pytest.approx(0.5)
    assert doc["output"]["measures"]["N3"] == pytest.approx(0.5, abs=1e-12)
    assert_allclose(doc["output"]["covariance"]["data"], [0.8, 0.0, 0.0, 0.3125])
    assert doc["output"]["gain"] == pytest.approx(0.6)


def test_protocol_rejects_unknown_param(capsys):
    rc, _, err = _run(capsys, "protocol", "loss", "--param", "gamma=1")
    assert rc == 2


def test_selftest_subset(capsys):
    rc, out, err = _run(capsys, "selftest", "--only", "2,8")
    doc = json.loads(out)
    assert rc == 0
    assert "[PASS] criterion  2" in err and "[PASS] criterion  8" in err
    assert [c["number"] for c in doc["criteria"]] == [2, 8]


def test_selftest_reports_failure(capsys):
    rc, _, err = _run(capsys, "selftest", "--only", "1")
    assert rc == 1
    assert "[FAIL] criterion  1" in err


def test_selftest_is_deterministic(capsys):
    _, a, _ = _run(capsys, "selftest", "--only", "gaussian", "--seed", "7")
    _, b, _ = _run(capsys, "selftest", "--only", "gaussian", "--seed", "7")
    assert a == b


STATE_DOCS = [
    {"kind": "coherent", "alpha": [[1.0, 0.5], [0.0, -0.2]]},
    {"kind": "squeezed_gaussian", "s": 3.0, "theta": 0.2, "d": 0.7},
    {"kind": "thermal", "nbar": 0.4, "n_modes": 2},
    {"kind": "gaussian_raw", "cov": {"shape": [2, 2], "data": [1.0, 0.1, 0.1, 0.4]}},
    {"kind": "fock_superposition", "terms": [{"levels": [0], "amplitude": [0.6, 0.0]}, {"levels": [3], "amplitude": [0.0, 0.8]}]},
    {"kind": "cat", "alpha": [2.0, 0.0], "sign": -1, "cutoff": 30},
    {"kind": "thermal_minus_vacuum", "p": 0.3},
    {"kind": "tensor_product", "factors": [{"kind": "cat", "alpha": [1.0, 0.0], "sign": 1}, {"kind": "coherent", "alpha": [[0.5, 0.0]]}]},
]


@pytest.mark.parametrize("doc", STATE_DOCS, ids=[d["kind"] for d in STATE_DOCS])
def test_state_round_trip(doc):
    spec = schema.parse_state(doc)
    again = schema.parse_state(json.loads(json.dumps(schema.serialize_state(spec))))
    assert again == spec


@settings(max_examples=50, deadline=None)
@given(
    st.floats(0.05, 20.0),
    st.floats(-3.0, 3.0),
    st.floats(0.5, 3.0),
    st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=1, max_size=3),
)
def test_generated_state_round_trip(s, theta, d, alphas):
    doc = {
        "kind": "tensor_product",
        "factors": [
            {"kind": "squeezed_gaussian", "s": s, "theta": theta, "d": d},
            {"kind": "coherent", "alpha": [list(a) for a in alphas]},
        ],
    }
    spec = schema.parse_state(doc)
    text = json.dumps(schema.serialize_state(spec))
    assert schema.parse_state(json.loads(text)) == spec
    assert spec.n_modes == 1 + len(alphas)


@pytest.mark.parametrize("name", sorted(schema.builtin_protocols()))
def test_builtin_protocol_round_trip(name):
    doc = schema.load_protocol(name)
    again = schema.parse_protocol(json.loads(json.dumps(schema.serialize_protocol(doc))))
    assert schema.serialize_protocol(again) == schema.serialize_protocol(doc)


def test_protocol_document_builds_validated_steps():
    doc = schema.load_protocol("photon-subtract")
    step = doc.with_params(eta=0.2).build()
    step.validate(doc.n_in)
    assert_allclose(abs(step.unitary[0, 0]) ** 2, 0.8)


@pytest.mark.parametrize(
    "doc, path",
    [
        ({"kind": "coherent"}, "state.alpha"),
        ({"kind": "fock_superposition", "terms": [{"levels": [0], "amplitude": 0.5}]}, "state.terms"),
        ({"kind": "gaussian_raw", "cov": {"shape": [2, 2], "data": [0.2, 0, 0, 0.2]}}, "state.cov"),
        ({"kind": "thermal_minus_vacuum", "p": 1.5}, "state.p"),
        ({"kind": "tensor_product", "factors": []}, "state.factors"),
    ],
)
def test_schema_errors_name_the_field(doc, path):
    with pytest.raises(SchemaError) as info:
        schema.parse_state(doc)
    assert info.value.path == path


def test_gaussian_raw_has_no_fock_form():
    spec = schema.parse_state({"kind": "gaussian_raw", "cov": {"shape": [2, 2], "data": [1.0, 0, 0, 0.5]}})
    with pytest.raises(SchemaError):
        schema.build_fock(spec, cutoff=10)


def test_gaussian_cov_of_product():
    spec = schema.parse_state({"kind": "tensor_product", "factors": [STATE_DOCS[0], STATE_DOCS[1]]})
    V = schema.gaussian_cov(spec)
    assert_allclose(V[:4, :4], 0.5 * np.eye(4))
    assert V.shape == (6, 6)
