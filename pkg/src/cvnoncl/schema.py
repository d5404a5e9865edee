"""JSON documents for states and protocols.

Complex numbers are [re, im] pairs. Matrices are {"shape": [r, c], "data": [...]}
with row-major data; complex matrices hold [re, im] pairs as entries.
Parsing validates and canonicalises, so serialize(parse(doc)) is a fixed point
and parse(serialize(x)) == x.
"""
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import fock, gaussian
from .errors import CVError
from .protocols import Ancilla, FeedForward, Measurement, MEASUREMENT_KINDS, ProtocolStep
from .symplectic import beam_splitter_unitary, phase_shift_unitary

GAUSSIAN_KINDS = ("coherent", "squeezed_gaussian", "thermal", "gaussian_raw")
FOCK_KINDS = ("fock_superposition", "cat", "thermal_minus_vacuum")
STATE_KINDS = GAUSSIAN_KINDS + FOCK_KINDS + ("tensor_product",)
PROTOCOL_KINDS = ("fock", "gaussian")
GAUSSIAN_PROTOCOLS = ("homodyne_feedforward",)


class SchemaError(CVError):
    """Malformed document; `path` locates the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


# primitive encoders


def encode_complex(z):
    z = complex(z)
    return [z.real, z.imag]


def decode_complex(value, path):
    if isinstance(value, bool):
        raise SchemaError(path, "expected a number or [re, im]")
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        return complex(float(value[0]), float(value[1]))
    raise SchemaError(path, "expected a number or [re, im]")


def encode_matrix(M):
    M = np.asarray(M)
    if np.iscomplexobj(M):
        data = [encode_complex(z) for z in M.ravel()]
    else:
        data = [float(x) for x in M.ravel()]
    return {"shape": list(M.shape), "data": data}


def decode_matrix(doc, path, complex_ok=False):
    if not isinstance(doc, dict) or set(doc) != {"shape", "data"}:
        raise SchemaError(path, "matrix needs exactly the keys 'shape' and 'data'")
    shape = doc["shape"]
    if not (isinstance(shape, list) and len(shape) == 2 and all(isinstance(s, int) and s >= 0 for s in shape)):
        raise SchemaError(f"{path}.shape", "expected [rows, cols]")
    data = doc["data"]
    if not isinstance(data, list) or len(data) != shape[0] * shape[1]:
        raise SchemaError(f"{path}.data", f"expected {shape[0] * shape[1]} entries")
    if complex_ok and any(isinstance(x, list) for x in data):
        vals = [decode_complex(x, f"{path}.data[{i}]") for i, x in enumerate(data)]
        return np.array(vals, dtype=complex).reshape(shape)
    vals = []
    for i, x in enumerate(data):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise SchemaError(f"{path}.data[{i}]", "expected a real number")
        vals.append(float(x))
    return np.array(vals, dtype=float).reshape(shape)


def _number(doc, key, path, default=None, lo=None, hi=None, integer=False):
    if key not in doc:
        if default is None:
            raise SchemaError(f"{path}.{key}", "required field missing")
        return default
    val = doc[key]
    kinds = (int,) if integer else (int, float)
    if isinstance(val, bool) or not isinstance(val, kinds):
        raise SchemaError(f"{path}.{key}", "expected an integer" if integer else "expected a number")
    if lo is not None and val < lo:
        raise SchemaError(f"{path}.{key}", f"must be >= {lo}")
    if hi is not None and val > hi:
        raise SchemaError(f"{path}.{key}", f"must be <= {hi}")
    return int(val) if integer else float(val)


def _check_keys(doc, allowed, path):
    if not isinstance(doc, dict):
        raise SchemaError(path, "expected an object")
    extra = sorted(set(doc) - set(allowed))
    if extra:
        raise SchemaError(f"{path}.{extra[0]}", "unknown field")


# states


@dataclass
class StateSpec:
    """A named state family with its parameters.

    params holds canonical JSON values (complex as [re, im]). For
    tensor_product, params["factors"] is a list of StateSpec.
    """

    kind: str
    params: dict = field(default_factory=dict)
    cutoff: Optional[int] = None

    @property
    def is_gaussian(self):
        if self.kind == "tensor_product":
            return all(f.is_gaussian for f in self.params["factors"])
        return self.kind in GAUSSIAN_KINDS

    @property
    def n_modes(self):
        k, p = self.kind, self.params
        if k == "tensor_product":
            return sum(f.n_modes for f in p["factors"])
        if k == "coherent":
            return len(p["alpha"])
        if k == "thermal":
            return p["n_modes"]
        if k == "gaussian_raw":
            return p["cov"]["shape"][0] // 2
        if k == "fock_superposition":
            return len(p["terms"][0]["levels"])
        return 1


_STATE_FIELDS = {
    "coherent": ("alpha",),
    "squeezed_gaussian": ("s", "theta", "d"),
    "thermal": ("nbar", "n_modes"),
    "gaussian_raw": ("cov",),
    "fock_superposition": ("terms",),
    "cat": ("alpha", "sign"),
    "thermal_minus_vacuum": ("p",),
    "tensor_product": ("factors",),
}


def parse_state(doc, path="state"):
    """Validate a state document and return its canonical StateSpec."""
    if not isinstance(doc, dict):
        raise SchemaError(path, "expected an object")
    kind = doc.get("kind")
    if kind not in STATE_KINDS:
        raise SchemaError(f"{path}.kind", f"must be one of {list(STATE_KINDS)}")
    _check_keys(doc, ("kind", "cutoff") + _STATE_FIELDS[kind], path)
    cutoff = _number(doc, "cutoff", path, default=-1, lo=1, integer=True)
    cutoff = None if cutoff == -1 else cutoff
    p = {}
    if kind == "coherent":
        raw = doc.get("alpha")
        if raw is None:
            raise SchemaError(f"{path}.alpha", "required field missing")
        items = raw if isinstance(raw, list) and raw and isinstance(raw[0], list) else [raw]
        p["alpha"] = [encode_complex(decode_complex(a, f"{path}.alpha[{i}]")) for i, a in enumerate(items)]
    elif kind == "squeezed_gaussian":
        p["s"] = _number(doc, "s", path, lo=1e-12)
        p["theta"] = _number(doc, "theta", path, default=0.0)
        p["d"] = _number(doc, "d", path, default=0.5, lo=0.5)
    elif kind == "thermal":
        p["nbar"] = _number(doc, "nbar", path, lo=0.0)
        p["n_modes"] = _number(doc, "n_modes", path, default=1, lo=1, integer=True)
    elif kind == "gaussian_raw":
        if "cov" not in doc:
            raise SchemaError(f"{path}.cov", "required field missing")
        V = decode_matrix(doc["cov"], f"{path}.cov")
        if V.shape[0] != V.shape[1] or V.shape[0] % 2 or V.shape[0] == 0:
            raise SchemaError(f"{path}.cov.shape", "covariance must be square with even dimension")
        try:
            gaussian.check_physical(V)
        except CVError as exc:
            raise SchemaError(f"{path}.cov", str(exc)) from exc
        p["cov"] = encode_matrix(V)
    elif kind == "fock_superposition":
        terms = doc.get("terms")
        if not isinstance(terms, list) or not terms:
            raise SchemaError(f"{path}.terms", "expected a nonempty list of {levels, amplitude}")
        out, width = [], None
        for i, t in enumerate(terms):
            tp = f"{path}.terms[{i}]"
            _check_keys(t, ("levels", "amplitude"), tp)
            lv = t.get("levels")
            lv = [lv] if isinstance(lv, int) and not isinstance(lv, bool) else lv
            if not isinstance(lv, list) or not lv or not all(
                isinstance(x, int) and not isinstance(x, bool) and x >= 0 for x in lv
            ):
                raise SchemaError(f"{tp}.levels", "expected nonnegative integers, one per mode")
            if width is not None and len(lv) != width:
                raise SchemaError(f"{tp}.levels", "all terms need the same number of modes")
            width = len(lv)
            if "amplitude" not in t:
                raise SchemaError(f"{tp}.amplitude", "required field missing")
            out.append({"levels": list(lv), "amplitude": encode_complex(decode_complex(t["amplitude"], f"{tp}.amplitude"))})
        norm2 = sum(abs(complex(*t["amplitude"])) ** 2 for t in out)
        if abs(norm2 - 1.0) > 1e-10:
            raise SchemaError(f"{path}.terms", f"amplitudes are not normalised (norm^2 = {norm2:.12g})")
        p["terms"] = out
    elif kind == "cat":
        if "alpha" not in doc:
            raise SchemaError(f"{path}.alpha", "required field missing")
        p["alpha"] = encode_complex(decode_complex(doc["alpha"], f"{path}.alpha"))
        sign = doc.get("sign", 1)
        if sign not in (1, -1) or isinstance(sign, bool):
            raise SchemaError(f"{path}.sign", "must be 1 or -1")
        p["sign"] = int(sign)
    elif kind == "thermal_minus_vacuum":
        p["p"] = _number(doc, "p", path)
        if not 0.0 < p["p"] < 1.0:
            raise SchemaError(f"{path}.p", "must lie in (0, 1)")
    else:
        factors = doc.get("factors")
        if not isinstance(factors, list) or not factors:
            raise SchemaError(f"{path}.factors", "expected a nonempty list of states")
        p["factors"] = [parse_state(f, f"{path}.factors[{i}]") for i, f in enumerate(factors)]
    return StateSpec(kind, p, cutoff)


def serialize_state(spec):
    doc = {"kind": spec.kind}
    for key, val in spec.params.items():
        doc[key] = [serialize_state(f) for f in val] if key == "factors" else val
    if spec.cutoff is not None:
        doc["cutoff"] = spec.cutoff
    return doc


def gaussian_cov(spec):
    """Covariance matrix of a Gaussian spec."""
    if not spec.is_gaussian:
        raise SchemaError("state.kind", f"{spec.kind} has no Gaussian representation")
    k, p = spec.kind, spec.params
    if k == "tensor_product":
        return gaussian.direct_sum(*[gaussian_cov(f) for f in p["factors"]])
    if k == "coherent":
        return gaussian.vacuum_cov(len(p["alpha"]))
    if k == "squeezed_gaussian":
        return gaussian.squeezed_thermal_cov(p["s"], p["d"], p["theta"])
    if k == "thermal":
        return gaussian.thermal_cov(p["nbar"] + 0.5, p["n_modes"])
    return decode_matrix(p["cov"], "state.cov")


def _default_cutoff(spec, budget):
    k, p = spec.kind, spec.params
    if k == "coherent":
        return max(fock.coherent_cutoff(complex(*a), budget / len(p["alpha"])) for a in p["alpha"])
    if k == "cat":
        return fock.cat_cutoff(complex(*p["alpha"]), p["sign"], budget)
    if k == "fock_superposition":
        return max(max(t["levels"]) for t in p["terms"]) + 1
    if k == "thermal":
        nb = p["nbar"]
        return 1 if nb == 0 else int(np.ceil(np.log(fock.THERMAL_BUDGET) / np.log(nb / (nb + 1.0)))) + 1
    if k == "thermal_minus_vacuum":
        return int(np.ceil(np.log(fock.THERMAL_BUDGET) / np.log(p["p"]))) + 2
    if k == "squeezed_gaussian":
        return 40
    if k == "tensor_product":
        return max(_default_cutoff(f, budget) for f in p["factors"])
    raise SchemaError("state.cutoff", f"{k} needs an explicit cutoff")


def build_fock(spec, cutoff=None, budget=fock.DEFAULT_BUDGET):
    """Fock representation of a spec.

    The cutoff comes from the argument, else the spec, else a per-kind default.
    """
    cutoff = cutoff or spec.cutoff or _default_cutoff(spec, budget)
    k, p = spec.kind, spec.params
    if k == "coherent":
        return fock.coherent_state([complex(*a) for a in p["alpha"]], cutoff, budget)
    if k == "cat":
        return fock.cat_state(complex(*p["alpha"]), p["sign"], cutoff, budget)
    if k == "fock_superposition":
        terms = [(tuple(t["levels"]), complex(*t["amplitude"])) for t in p["terms"]]
        if max(max(lv) for lv, _ in terms) >= cutoff:
            raise SchemaError("state.cutoff", f"cutoff {cutoff} is below the highest occupied level")
        return fock.fock_superposition(terms, cutoff)
    if k == "thermal":
        rho = fock.thermal_state(p["nbar"], cutoff, max(budget, fock.THERMAL_BUDGET))
        return fock.tensor_product(*[rho] * p["n_modes"]) if p["n_modes"] > 1 else rho
    if k == "thermal_minus_vacuum":
        return fock.thermal_minus_vacuum(p["p"], cutoff, max(budget, fock.THERMAL_BUDGET))
    if k == "squeezed_gaussian":
        return fock.squeezed_thermal_state(p["s"], p["d"], cutoff, p["theta"], budget)
    if k == "tensor_product":
        return fock.tensor_product(*[build_fock(f, cutoff, budget) for f in p["factors"]])
    raise SchemaError("state.kind", "gaussian_raw states have no Fock construction; use a named kind")


# protocols


def _resolve(value, params, path):
    """Substitute "$name" references to the document's params."""
    if isinstance(value, str) and value.startswith("$"):
        key = value[1:]
        if key not in params:
            raise SchemaError(path, f"unknown parameter {value!r}")
        return params[key]
    return value


def _build_unitary(doc, n, params, path):
    if doc is None:
        return None
    _check_keys(doc, ("name", "eta", "modes", "phi", "mode", "matrix"), path)
    name = doc.get("name")
    if name == "identity":
        return np.eye(n, dtype=complex)
    if name == "beam_splitter":
        eta = _resolve(doc.get("eta"), params, f"{path}.eta")
        if isinstance(eta, bool) or not isinstance(eta, (int, float)) or not 0 <= eta <= 1:
            raise SchemaError(f"{path}.eta", "reflectivity must be a number in [0, 1]")
        modes = doc.get("modes", [0, 1])
        if not (isinstance(modes, list) and len(modes) == 2 and all(isinstance(m, int) and 0 <= m < n for m in modes)) or modes[0] == modes[1]:
            raise SchemaError(f"{path}.modes", f"expected two distinct modes below {n}")
        return beam_splitter_unitary(float(eta), modes[0], modes[1], n)
    if name == "phase":
        phi = _resolve(doc.get("phi"), params, f"{path}.phi")
        mode = doc.get("mode", 0)
        if isinstance(phi, bool) or not isinstance(phi, (int, float)):
            raise SchemaError(f"{path}.phi", "expected a number")
        if not isinstance(mode, int) or not 0 <= mode < n:
            raise SchemaError(f"{path}.mode", f"expected a mode below {n}")
        return phase_shift_unitary(float(phi), mode, n)
    if name == "matrix":
        U = decode_matrix(doc.get("matrix"), f"{path}.matrix", complex_ok=True)
        if U.shape != (n, n):
            raise SchemaError(f"{path}.matrix.shape", f"expected [{n}, {n}] for the {n} modes present")
        return U.astype(complex)
    raise SchemaError(f"{path}.name", "unitary name must be identity, beam_splitter, phase or matrix")


def _build_step(doc, n_in, params, path):
    _check_keys(doc, ("ancilla", "unitary", "measurement", "discard", "feed_forward", "allow_large_ancilla"), path)
    ancillas = []
    for i, a in enumerate(doc.get("ancilla", [])):
        ap = f"{path}.ancilla[{i}]"
        _check_keys(a, ("kind", "alpha", "nbar"), ap)
        try:
            ancillas.append(
                Ancilla(
                    a.get("kind", "coherent"),
                    decode_complex(_resolve(a.get("alpha", 0.0), params, f"{ap}.alpha"), f"{ap}.alpha"),
                    _number(a, "nbar", ap, default=0.0, lo=0.0),
                )
            )
        except CVError as exc:
            raise SchemaError(f"{ap}.kind", str(exc)) from exc
    total = n_in + len(ancillas)
    U = _build_unitary(doc.get("unitary"), total, params, f"{path}.unitary")
    meas = None
    if doc.get("measurement") is not None:
        mp = f"{path}.measurement"
        m = doc["measurement"]
        _check_keys(m, ("modes", "kind", "alpha"), mp)
        if m.get("kind", "photon_count") not in MEASUREMENT_KINDS:
            raise SchemaError(f"{mp}.kind", f"must be one of {list(MEASUREMENT_KINDS)}")
        modes = m.get("modes")
        if not isinstance(modes, list) or not modes or not all(isinstance(k, int) and 0 <= k < total for k in modes):
            raise SchemaError(f"{mp}.modes", f"expected a nonempty list of modes below {total}")
        meas = Measurement(modes, m.get("kind", "photon_count"), decode_complex(m.get("alpha", 0.0), f"{mp}.alpha"))
    discard = doc.get("discard", [])
    if not isinstance(discard, list) or not all(isinstance(k, int) and 0 <= k < total for k in discard):
        raise SchemaError(f"{path}.discard", f"expected modes below {total}")
    step = ProtocolStep(ancillas, U, meas, discard, {}, bool(doc.get("allow_large_ancilla", False)))
    n_out = step.n_out(n_in)
    ff = doc.get("feed_forward", {})
    if not isinstance(ff, dict):
        raise SchemaError(f"{path}.feed_forward", "expected an object keyed by outcome")
    for key in sorted(ff):
        fp = f"{path}.feed_forward[{key}]"
        entry = ff[key]
        _check_keys(entry, ("displacement", "gain", "next"), fp)
        vecs = {}
        for name in ("displacement", "gain"):
            if entry.get(name) is None:
                vecs[name] = None
                continue
            vals = entry[name]
            if not isinstance(vals, list) or len(vals) != n_out:
                raise SchemaError(f"{fp}.{name}", f"expected {n_out} complex values")
            vecs[name] = [decode_complex(v, f"{fp}.{name}[{i}]") for i, v in enumerate(vals)]
        nxt = _build_step(entry["next"], n_out, params, f"{fp}.next") if entry.get("next") is not None else None
        step.feed_forward[key] = FeedForward(vecs["displacement"], vecs["gain"], nxt)
    try:
        step.validate(n_in, path)
    except CVError as exc:
        raise SchemaError(path, str(exc)) from exc
    return step


@dataclass
class ProtocolDocument:
    """A named protocol: a Fock step tree or a Gaussian protocol with parameters.

    Attributes:
        steps: the root step document (Fock kind) or {"name": ...} (Gaussian kind).
        default_input, default_target: optional StateSpec used when the caller
            does not supply one.
    """

    name: str
    kind: str
    n_in: int
    params: dict
    steps: dict
    description: str = ""
    default_input: Optional[StateSpec] = None
    default_target: Optional[StateSpec] = None

    def with_params(self, **overrides):
        unknown = sorted(set(overrides) - set(self.params))
        if unknown:
            raise SchemaError(f"protocol.params.{unknown[0]}", "unknown parameter")
        doc = serialize_protocol(self)
        doc["params"] = {**self.params, **{k: float(v) for k, v in overrides.items()}}
        return parse_protocol(doc)

    def build(self):
        """ProtocolStep tree (Fock kind) or (name, params) (Gaussian kind)."""
        if self.kind == "gaussian":
            return self.steps["name"], dict(self.params)
        return _build_step(self.steps, self.n_in, self.params, "protocol.steps")


def parse_protocol(doc, path="protocol"):
    _check_keys(doc, ("name", "kind", "n_in", "params", "steps", "description", "default_input", "default_target"), path)
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise SchemaError(f"{path}.name", "expected a nonempty string")
    kind = doc.get("kind", "fock")
    if kind not in PROTOCOL_KINDS:
        raise SchemaError(f"{path}.kind", f"must be one of {list(PROTOCOL_KINDS)}")
    n_in = _number(doc, "n_in", path, lo=1, integer=True)
    params = doc.get("params", {})
    if not isinstance(params, dict) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in params.values()
    ):
        raise SchemaError(f"{path}.params", "expected an object of numbers")
    params = {k: float(params[k]) for k in sorted(params)}
    steps = doc.get("steps")
    if not isinstance(steps, dict):
        raise SchemaError(f"{path}.steps", "expected an object")
    steps = json.loads(json.dumps(steps))
    description = doc.get("description", "")
    if not isinstance(description, str):
        raise SchemaError(f"{path}.description", "expected a string")
    out = ProtocolDocument(name, kind, n_in, params, steps, description)
    for key in ("default_input", "default_target"):
        if doc.get(key) is not None:
            setattr(out, key, parse_state(doc[key], f"{path}.{key}"))
    if out.default_input is not None and out.default_input.n_modes != n_in:
        raise SchemaError(f"{path}.default_input", f"state has {out.default_input.n_modes} modes, protocol takes {n_in}")
    if kind == "gaussian":
        if steps.get("name") not in GAUSSIAN_PROTOCOLS or set(steps) != {"name"}:
            raise SchemaError(f"{path}.steps.name", f"Gaussian protocols: {list(GAUSSIAN_PROTOCOLS)}")
        if "eta" not in params:
            raise SchemaError(f"{path}.params.eta", "required field missing")
        if n_in != 1:
            raise SchemaError(f"{path}.n_in", "homodyne feed-forward acts on one mode")
    else:
        out.build()
    return out


def serialize_protocol(doc):
    out = {
        "name": doc.name,
        "kind": doc.kind,
        "n_in": doc.n_in,
        "params": dict(doc.params),
        "steps": json.loads(json.dumps(doc.steps)),
        "description": doc.description,
    }
    for key in ("default_input", "default_target"):
        val = getattr(doc, key)
        if val is not None:
            out[key] = serialize_state(val)
    return out


def builtin_protocols():
    """Names of the protocol documents shipped with the package."""
    files = resources.files("cvnoncl") / "protocols_data"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_protocol(name_or_path):
    """Load a built-in protocol by name, or a protocol document from a path."""
    path = Path(name_or_path)
    if path.suffix == ".json" or path.exists():
        try:
            text = path.read_text()
        except OSError as exc:
            raise SchemaError("protocol", f"cannot read {name_or_path}: {exc}") from exc
    else:
        res = resources.files("cvnoncl") / "protocols_data" / f"{name_or_path}.json"
        if not res.is_file():
            raise SchemaError("protocol", f"no built-in protocol {name_or_path!r}; known: {builtin_protocols()}")
        text = res.read_text()
    return parse_protocol(_loads(text, "protocol"))


def _loads(text, path):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(path, f"invalid JSON ({exc})") from exc


def load_state(text_or_path, path="state"):
    """Parse a state from inline JSON or from a file."""
    text = text_or_path.strip()
    if not text.startswith("{"):
        try:
            text = Path(text_or_path).read_text()
        except OSError as exc:
            raise SchemaError(path, f"cannot read {text_or_path}: {exc}") from exc
    return parse_state(_loads(text, path), path)
