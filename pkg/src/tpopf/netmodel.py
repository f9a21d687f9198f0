"""Domain model for unbalanced distribution feeders and the JSON case format.

A case file describes a feeder as buses, series devices (pi-model lines,
two-winding transformers, step voltage regulators), ZIP loads, and
single-phase inverters. Every electrical quantity in a case file carries an
explicit unit tag so that nothing is silently assumed to be per-unit:

* impedance matrices: ``{"unit": "pu" | "ohm", "rows": [[[re, im], ...], ...]}``
* shunt susceptance:  ``{"unit": "pu" | "siemens", "value": [b_a, ...]}``
* device admittance:  ``{"unit": "pu" | "siemens", "value": [re, im]}``
* load coefficients:  ``"unit": "kw" | "pu"`` on the load record
* inverter ratings:   field names carry the unit (``s_kva``, ``p_kw``)

Physical impedances are normalized at load time on the system base
(``base.s_kva``) and the from-bus line-to-ground voltage base:
``z_base_ohm = 1000 * base_kv**2 / s_base_kva``. Load coefficients are
normalized to per-unit power. Inverter ratings and substation limits keep
their physical units on the dataclasses; consumers convert with
``Network.s_base``.

Phases are always written and iterated in the order a < b < c.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

PHASES = ("a", "b", "c")
DELTA_PAIRS = ("ab", "bc", "ca")
CONNECTION_CODES = ("YNyn0", "Yy0", "YNd1", "Yd1", "Dyn1", "Dyn11")

DEFAULT_V_MIN = 0.9
DEFAULT_V_MAX = 1.1


class CaseError(ValueError):
    """Base class for case-file problems."""


class CaseParseError(CaseError):
    """The document is not well-formed (bad JSON or missing/mistyped keys)."""


class CaseValidationError(CaseError):
    """The document parsed but violates a model invariant.

    Attributes:
        violations: list of Violation records that caused the failure.
    """

    def __init__(self, violations: list["Violation"]):
        self.violations = violations
        lines = "; ".join(str(v) for v in violations)
        super().__init__(f"invalid case: {lines}")


@dataclass(frozen=True)
class Violation:
    """One validation failure.

    Attributes:
        code: stable machine-readable identifier, e.g. "multiple-slack".
        subject: path-like hint naming the offending element.
        message: human-readable explanation.
    """

    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.subject}: {self.message}"


@dataclass(frozen=True)
class PhaseSet:
    """Presence flags for phases a, b, c. At least one phase must be present."""

    a: bool = False
    b: bool = False
    c: bool = False

    @staticmethod
    def from_string(s: str) -> "PhaseSet":
        s = s.strip().lower()
        if not s or any(ch not in "abc" for ch in s) or len(set(s)) != len(s):
            raise CaseParseError(f"bad phase string {s!r}")
        return PhaseSet("a" in s, "b" in s, "c" in s)

    def __str__(self) -> str:
        return "".join(p for p in PHASES if getattr(self, p))

    def __iter__(self) -> Iterator[str]:
        return iter(str(self))

    def __contains__(self, phase: str) -> bool:
        return phase in str(self)

    def __len__(self) -> int:
        return self.a + self.b + self.c

    @property
    def is_three_phase(self) -> bool:
        return self.a and self.b and self.c

    def issubset(self, other: "PhaseSet") -> bool:
        return (not self.a or other.a) and (not self.b or other.b) and (not self.c or other.c)

    def indices(self) -> tuple[int, ...]:
        """Positions of the present phases within (a, b, c)."""
        return tuple(i for i, p in enumerate(PHASES) if getattr(self, p))


@dataclass
class Bus:
    """A feeder bus.

    Attributes:
        id: unique identifier.
        phases: phases physically present at the bus.
        kind: "slack" (the substation reference) or "load".
        base_kv: line-to-ground voltage base [kV].
        v_min: lower per-phase voltage magnitude bound [pu].
        v_max: upper per-phase voltage magnitude bound [pu].
    """

    id: str
    phases: PhaseSet
    kind: str = "load"
    base_kv: float = 1.0
    v_min: float = DEFAULT_V_MIN
    v_max: float = DEFAULT_V_MAX


@dataclass
class Branch:
    """A pi-model line section.

    Attributes:
        from_bus, to_bus: endpoint bus ids.
        phases: conductors present on the section (subset of both endpoints).
        z_series: complex series impedance matrix over the present phases [pu],
            symmetric (mutual terms equal) and nonsingular.
        b_shunt: per-phase, per-end shunt susceptance [pu]. The value is
            applied as given at each end; any 1/2 split must already be in
            the data.
    """

    from_bus: str
    to_bus: str
    phases: PhaseSet
    z_series: np.ndarray
    b_shunt: np.ndarray


@dataclass
class Transformer:
    """Two-winding three-phase transformer.

    Attributes:
        from_bus, to_bus: endpoint bus ids (both must be three-phase).
        connection: winding code, one of CONNECTION_CODES.
        y_t: complex leakage admittance [pu].
    """

    from_bus: str
    to_bus: str
    connection: str
    y_t: complex


@dataclass
class Regulator:
    """Per-phase step voltage regulator, modeled as a tap-scaled
    grounded-wye/grounded-wye transformer.

    Attributes:
        from_bus, to_bus: endpoint bus ids.
        taps: (t_a, t_b, t_c) voltage ratios, strictly positive.
        y_t: complex series admittance [pu].
    """

    from_bus: str
    to_bus: str
    taps: tuple[float, float, float]
    y_t: complex


@dataclass
class ZipLoad:
    """Polynomial (ZIP) load on one phase (wye) or one phase pair (delta).

    Coefficients are stored in per-unit power at base voltage; case files may
    specify them in kW/kVAR and they are converted on load. The voltage base
    of the polynomial is 1 pu line-to-ground for wye and sqrt(3) pu
    line-to-line for delta.

    Attributes:
        bus: bus id.
        configuration: "wye" or "delta".
        phase: single phase letter (wye) or pair from DELTA_PAIRS (delta).
        p_power, p_current, p_impedance: active coefficients [pu].
        q_power, q_current, q_impedance: reactive coefficients [pu].
    """

    bus: str
    configuration: str
    phase: str
    p_power: float = 0.0
    p_current: float = 0.0
    p_impedance: float = 0.0
    q_power: float = 0.0
    q_current: float = 0.0
    q_impedance: float = 0.0

    @property
    def v_base(self) -> float:
        """Voltage base of the polynomial [pu]."""
        return math.sqrt(3.0) if self.configuration == "delta" else 1.0


@dataclass
class Inverter:
    """Single-phase inverter with fixed active output and dispatchable Q.

    Attributes:
        id: unique identifier.
        bus: bus id.
        phase: phase letter.
        s_kva: apparent power rating [kVA].
        p_kw: fixed active injection [kW], 0 <= p_kw <= s_kva.
    """

    id: str
    bus: str
    phase: str
    s_kva: float
    p_kw: float


@dataclass
class SubstationLimits:
    """Per-phase substation injection bounds [kW, kVAR]. Defaults unbounded."""

    p_min: tuple[float, float, float] = (-math.inf,) * 3
    p_max: tuple[float, float, float] = (math.inf,) * 3
    q_min: tuple[float, float, float] = (-math.inf,) * 3
    q_max: tuple[float, float, float] = (math.inf,) * 3


@dataclass
class Network:
    """A validated feeder model, normalized to per-unit where noted.

    Attributes:
        s_base: system power base [kVA], used for all pu/physical conversion.
        buses, branches, transformers, regulators, loads, inverters: elements.
        substation_limits: slack injection bounds [kW, kVAR].
        name: optional case name.

    The object is treated as immutable after construction and may be shared
    across threads.
    """

    s_base: float
    buses: list[Bus] = field(default_factory=list)
    branches: list[Branch] = field(default_factory=list)
    transformers: list[Transformer] = field(default_factory=list)
    regulators: list[Regulator] = field(default_factory=list)
    loads: list[ZipLoad] = field(default_factory=list)
    inverters: list[Inverter] = field(default_factory=list)
    substation_limits: SubstationLimits = field(default_factory=SubstationLimits)
    name: str = ""

    @property
    def n_b(self) -> int:
        return len(self.buses)

    @property
    def n_br(self) -> int:
        return len(self.branches)

    @property
    def n_g(self) -> int:
        return len(self.inverters)

    @property
    def n_l(self) -> int:
        return len(self.loads)

    def bus(self, bus_id: str) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(bus_id)

    @property
    def slack_bus(self) -> Bus:
        for b in self.buses:
            if b.kind == "slack":
                return b
        raise CaseError("network has no slack bus")


# ---------------------------------------------------------------------------
# parsing helpers

def _req(record: dict, key: str, where: str):
    if key not in record:
        raise CaseParseError(f"{where}: missing key {key!r}")
    return record[key]


def _complex_matrix(tagged: dict, where: str) -> tuple[str, np.ndarray]:
    unit = _req(tagged, "unit", where)
    rows = _req(tagged, "rows", where)
    try:
        arr = np.array([[complex(re, im) for re, im in row] for row in rows])
    except (TypeError, ValueError) as exc:
        raise CaseParseError(f"{where}: bad impedance rows: {exc}") from None
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise CaseParseError(f"{where}: impedance matrix must be square")
    return unit, arr


def _tagged_vector(tagged: dict, n: int, where: str) -> tuple[str, np.ndarray]:
    unit = _req(tagged, "unit", where)
    value = np.asarray(_req(tagged, "value", where), dtype=float)
    if value.shape != (n,):
        raise CaseParseError(f"{where}: expected {n} values, got shape {value.shape}")
    return unit, value


def _tagged_complex(tagged: dict, where: str) -> tuple[str, complex]:
    unit = _req(tagged, "unit", where)
    value = _req(tagged, "value", where)
    try:
        re, im = value
    except (TypeError, ValueError):
        raise CaseParseError(f"{where}: expected [re, im]") from None
    return unit, complex(re, im)


def _zip_triple(record: dict, key: str, where: str) -> tuple[float, float, float]:
    tri = _req(record, key, where)
    try:
        return (
            float(tri.get("power", 0.0)),
            float(tri.get("current", 0.0)),
            float(tri.get("impedance", 0.0)),
        )
    except (AttributeError, TypeError, ValueError):
        raise CaseParseError(
            f"{where}: {key} must map power/current/impedance to numbers"
        ) from None


def _limit_triple(raw, default: float, where: str) -> tuple[float, float, float]:
    if raw is None:
        return (default,) * 3
    if isinstance(raw, (int, float)):
        return (float(raw),) * 3
    vals = [default if v is None else float(v) for v in raw]
    if len(vals) != 3:
        raise CaseParseError(f"{where}: per-phase limit needs 3 values")
    return tuple(vals)


def z_base_ohm(base_kv: float, s_base_kva: float) -> float:
    """Per-phase impedance base [ohm] from a line-to-ground kV base."""
    return 1000.0 * base_kv * base_kv / s_base_kva


def load_case(text: str) -> Network:
    """Parse and validate a JSON case document.

    Args:
        text: case-file content.

    Returns:
        A validated Network with impedances and load coefficients in pu.

    Raises:
        CaseParseError: malformed JSON or missing/mistyped fields.
        CaseValidationError: structurally valid JSON violating an invariant.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseParseError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise CaseParseError("top level must be an object")

    base = _req(doc, "base", "case")
    s_base = float(_req(base, "s_kva", "base"))

    buses = []
    base_kv_by_id: dict[str, float] = {}
    for k, rec in enumerate(doc.get("buses", [])):
        where = f"buses[{k}]"
        bus = Bus(
            id=str(_req(rec, "id", where)),
            phases=PhaseSet.from_string(_req(rec, "phases", where)),
            kind=str(rec.get("kind", "load")),
            base_kv=float(_req(rec, "base_kv", where)),
            v_min=float(rec.get("v_min", DEFAULT_V_MIN)),
            v_max=float(rec.get("v_max", DEFAULT_V_MAX)),
        )
        buses.append(bus)
        base_kv_by_id[bus.id] = bus.base_kv

    def z_base_for(bus_id: str, where: str) -> float:
        if bus_id not in base_kv_by_id:
            raise CaseParseError(f"{where}: unknown bus {bus_id!r} for unit conversion")
        return z_base_ohm(base_kv_by_id[bus_id], s_base)

    branches = []
    for k, rec in enumerate(doc.get("branches", [])):
        where = f"branches[{k}]"
        from_bus = str(_req(rec, "from", where))
        to_bus = str(_req(rec, "to", where))
        phases = PhaseSet.from_string(_req(rec, "phases", where))
        unit, z = _complex_matrix(_req(rec, "z_series", where), where)
        if z.shape[0] != len(phases):
            raise CaseParseError(
                f"{where}: z_series is {z.shape[0]}x{z.shape[1]} "
                f"but the branch lists {len(phases)} phases"
            )
        if unit == "ohm":
            z = z / z_base_for(from_bus, where)
        elif unit != "pu":
            raise CaseParseError(f"{where}: impedance unit must be pu or ohm")
        if "b_shunt" in rec:
            bunit, b = _tagged_vector(rec["b_shunt"], len(phases), where)
            if bunit == "siemens":
                b = b * z_base_for(from_bus, where)
            elif bunit != "pu":
                raise CaseParseError(f"{where}: susceptance unit must be pu or siemens")
        else:
            b = np.zeros(len(phases))
        branches.append(Branch(from_bus, to_bus, phases, z, b))

    def parse_yt(rec: dict, where: str) -> complex:
        unit, y = _tagged_complex(_req(rec, "y_t", where), where)
        if unit == "siemens":
            return y * z_base_for(str(_req(rec, "from", where)), where)
        if unit != "pu":
            raise CaseParseError(f"{where}: admittance unit must be pu or siemens")
        return y

    transformers = []
    for k, rec in enumerate(doc.get("transformers", [])):
        where = f"transformers[{k}]"
        transformers.append(
            Transformer(
                from_bus=str(_req(rec, "from", where)),
                to_bus=str(_req(rec, "to", where)),
                connection=str(_req(rec, "connection", where)),
                y_t=parse_yt(rec, where),
            )
        )

    regulators = []
    for k, rec in enumerate(doc.get("regulators", [])):
        where = f"regulators[{k}]"
        taps = [float(t) for t in _req(rec, "taps", where)]
        if len(taps) != 3:
            raise CaseParseError(f"{where}: taps must list 3 ratios")
        regulators.append(
            Regulator(
                from_bus=str(_req(rec, "from", where)),
                to_bus=str(_req(rec, "to", where)),
                taps=tuple(taps),
                y_t=parse_yt(rec, where),
            )
        )

    loads = []
    for k, rec in enumerate(doc.get("loads", [])):
        where = f"loads[{k}]"
        unit = str(rec.get("unit", "kw"))
        if unit not in ("kw", "pu"):
            raise CaseParseError(f"{where}: load unit must be kw or pu")
        scale = 1.0 / s_base if unit == "kw" else 1.0
        p = _zip_triple(rec, "p", where)
        q = _zip_triple(rec, "q", where)
        loads.append(
            ZipLoad(
                bus=str(_req(rec, "bus", where)),
                configuration=str(_req(rec, "configuration", where)),
                phase=str(_req(rec, "phases", where)).lower(),
                p_power=p[0] * scale,
                p_current=p[1] * scale,
                p_impedance=p[2] * scale,
                q_power=q[0] * scale,
                q_current=q[1] * scale,
                q_impedance=q[2] * scale,
            )
        )

    inverters = []
    for k, rec in enumerate(doc.get("inverters", [])):
        where = f"inverters[{k}]"
        inverters.append(
            Inverter(
                id=str(rec.get("id", f"inv{k}")),
                bus=str(_req(rec, "bus", where)),
                phase=str(_req(rec, "phase", where)).lower(),
                s_kva=float(_req(rec, "s_kva", where)),
                p_kw=float(_req(rec, "p_kw", where)),
            )
        )

    limits = SubstationLimits()
    if "substation" in doc:
        rec = doc["substation"]
        unit = str(rec.get("unit", "kw"))
        if unit != "kw":
            raise CaseParseError("substation: limits must be given in kw")
        limits = SubstationLimits(
            p_min=_limit_triple(rec.get("p_min"), -math.inf, "substation"),
            p_max=_limit_triple(rec.get("p_max"), math.inf, "substation"),
            q_min=_limit_triple(rec.get("q_min"), -math.inf, "substation"),
            q_max=_limit_triple(rec.get("q_max"), math.inf, "substation"),
        )

    net = Network(
        s_base=s_base,
        buses=buses,
        branches=branches,
        transformers=transformers,
        regulators=regulators,
        loads=loads,
        inverters=inverters,
        substation_limits=limits,
        name=str(doc.get("name", "")),
    )
    violations = validate(net)
    if violations:
        raise CaseValidationError(violations)
    return net


def load_case_file(path) -> Network:
    """Read a case file from disk. See load_case."""
    with open(path, "r", encoding="utf-8") as fh:
        return load_case(fh.read())


def validate(net: Network) -> list[Violation]:
    """Check every model invariant. Returns an empty list iff the network is valid."""
    out: list[Violation] = []

    def add(code: str, subject: str, msg: str) -> None:
        out.append(Violation(code, subject, msg))

    if net.s_base <= 0:
        add("bad-base", "base", f"s_kva must be positive, got {net.s_base}")

    ids = [b.id for b in net.buses]
    seen = set()
    for b in net.buses:
        if b.id in seen:
            add("duplicate-bus", b.id, "bus id appears more than once")
        seen.add(b.id)
    bus_by_id = {b.id: b for b in net.buses}

    slacks = [b for b in net.buses if b.kind == "slack"]
    if len(slacks) == 0:
        add("no-slack", "buses", "exactly one slack bus required, found none")
    elif len(slacks) > 1:
        add("multiple-slack", ",".join(b.id for b in slacks),
            f"exactly one slack bus required, found {len(slacks)}")
    for b in slacks:
        if not b.phases.is_three_phase:
            add("slack-phases", b.id, "slack bus must have all three phases")

    for b in net.buses:
        if len(b.phases) == 0:
            add("empty-phases", b.id, "bus lists no phases")
        if b.kind not in ("slack", "load"):
            add("bad-kind", b.id, f"unknown bus kind {b.kind!r}")
        if not (0.0 < b.v_min <= b.v_max):
            add("bad-voltage-bounds", b.id,
                f"need 0 < v_min <= v_max, got ({b.v_min}, {b.v_max})")
        if b.base_kv <= 0:
            add("bad-base", b.id, f"base_kv must be positive, got {b.base_kv}")

    def endpoints_ok(from_bus: str, to_bus: str, subject: str) -> bool:
        ok = True
        for ref in (from_bus, to_bus):
            if ref not in bus_by_id:
                add("unknown-bus", subject, f"references missing bus {ref!r}")
                ok = False
        return ok

    for k, br in enumerate(net.branches):
        subject = f"branch {br.from_bus}-{br.to_bus}"
        if not endpoints_ok(br.from_bus, br.to_bus, subject):
            continue
        for end in (br.from_bus, br.to_bus):
            if not br.phases.issubset(bus_by_id[end].phases):
                add("phase-mismatch", subject,
                    f"branch phases {br.phases} not present at bus {end}")
        n = len(br.phases)
        if br.z_series.shape != (n, n):
            add("phase-mismatch", subject,
                f"z_series shape {br.z_series.shape} vs {n} phases")
            continue
        if br.b_shunt.shape != (n,):
            add("phase-mismatch", subject, "b_shunt length vs phase count")
        if not np.allclose(br.z_series, br.z_series.T, rtol=1e-9, atol=1e-12):
            add("asymmetric-impedance", subject, "mutual impedances must be equal")
        if abs(np.linalg.det(br.z_series)) < 1e-12:
            add("singular-impedance", subject, "z_series is singular")

    for tr in net.transformers:
        subject = f"transformer {tr.from_bus}-{tr.to_bus}"
        if tr.connection not in CONNECTION_CODES:
            add("unknown-connection", subject,
                f"connection {tr.connection!r} not in {CONNECTION_CODES}")
        if endpoints_ok(tr.from_bus, tr.to_bus, subject):
            for end in (tr.from_bus, tr.to_bus):
                if not bus_by_id[end].phases.is_three_phase:
                    add("phase-mismatch", subject, f"endpoint {end} must be three-phase")
        if tr.y_t == 0:
            add("bad-admittance", subject, "y_t must be nonzero")

    for rg in net.regulators:
        subject = f"regulator {rg.from_bus}-{rg.to_bus}"
        if endpoints_ok(rg.from_bus, rg.to_bus, subject):
            for end in (rg.from_bus, rg.to_bus):
                if not bus_by_id[end].phases.is_three_phase:
                    add("phase-mismatch", subject, f"endpoint {end} must be three-phase")
        if any(t <= 0 for t in rg.taps):
            add("bad-taps", subject, f"taps must be positive, got {rg.taps}")
        if rg.y_t == 0:
            add("bad-admittance", subject, "y_t must be nonzero")

    for k, ld in enumerate(net.loads):
        subject = f"load[{k}] at {ld.bus}"
        if ld.bus not in bus_by_id:
            add("unknown-bus", subject, f"references missing bus {ld.bus!r}")
            continue
        phases_here = bus_by_id[ld.bus].phases
        if ld.configuration == "wye":
            if ld.phase not in PHASES:
                add("phase-mismatch", subject, f"bad wye phase {ld.phase!r}")
            elif ld.phase not in phases_here:
                add("phase-mismatch", subject,
                    f"phase {ld.phase} not present at bus {ld.bus}")
        elif ld.configuration == "delta":
            if ld.phase not in DELTA_PAIRS:
                add("phase-mismatch", subject,
                    f"delta pair must be one of {DELTA_PAIRS}, got {ld.phase!r}")
            elif not all(p in phases_here for p in ld.phase):
                add("phase-mismatch", subject,
                    f"pair {ld.phase} not present at bus {ld.bus}")
        else:
            add("bad-configuration", subject,
                f"configuration must be wye or delta, got {ld.configuration!r}")

    seen_inv = set()
    for inv in net.inverters:
        subject = f"inverter {inv.id}"
        if inv.id in seen_inv:
            add("duplicate-inverter", subject, "inverter id appears more than once")
        seen_inv.add(inv.id)
        if inv.bus not in bus_by_id:
            add("unknown-bus", subject, f"references missing bus {inv.bus!r}")
        elif inv.phase not in PHASES or inv.phase not in bus_by_id[inv.bus].phases:
            add("phase-mismatch", subject,
                f"phase {inv.phase!r} not present at bus {inv.bus}")
        if not (0.0 <= inv.p_kw <= inv.s_kva):
            add("inverter-overload", subject,
                f"need 0 <= p_kw <= s_kva, got p={inv.p_kw}, s={inv.s_kva}")

    lim = net.substation_limits
    for lo, hi, tag in ((lim.p_min, lim.p_max, "p"), (lim.q_min, lim.q_max, "q")):
        if any(a > b for a, b in zip(lo, hi)):
            add("bad-limits", "substation", f"{tag}_min exceeds {tag}_max")

    # connectivity at bus granularity over every series device
    if net.buses and not out:
        adj: dict[str, set[str]] = {b.id: set() for b in net.buses}
        for dev in (*net.branches, *net.transformers, *net.regulators):
            adj[dev.from_bus].add(dev.to_bus)
            adj[dev.to_bus].add(dev.from_bus)
        start = ids[0]
        stack, reached = [start], {start}
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in reached:
                    reached.add(nxt)
                    stack.append(nxt)
        missing = [i for i in ids if i not in reached]
        if missing:
            add("disconnected", ",".join(missing),
                "buses unreachable from the rest of the network")

    return out


def dump_case(net: Network) -> dict:
    """Serialize a Network back to the JSON case schema (everything in pu).

    Loading the result produces a structurally equal Network, which makes the
    dump/load round trip a usable persistence path.
    """

    def cm(z: np.ndarray) -> dict:
        rows = [[[float(v.real), float(v.imag)] for v in row] for row in z]
        return {"unit": "pu", "rows": rows}

    doc: dict = {
        "name": net.name,
        "base": {"s_kva": net.s_base},
        "buses": [
            {
                "id": b.id,
                "phases": str(b.phases),
                "kind": b.kind,
                "base_kv": b.base_kv,
                "v_min": b.v_min,
                "v_max": b.v_max,
            }
            for b in net.buses
        ],
        "branches": [
            {
                "from": br.from_bus,
                "to": br.to_bus,
                "phases": str(br.phases),
                "z_series": cm(br.z_series),
                "b_shunt": {"unit": "pu", "value": [float(v) for v in br.b_shunt]},
            }
            for br in net.branches
        ],
        "transformers": [
            {
                "from": tr.from_bus,
                "to": tr.to_bus,
                "connection": tr.connection,
                "y_t": {"unit": "pu", "value": [tr.y_t.real, tr.y_t.imag]},
            }
            for tr in net.transformers
        ],
        "regulators": [
            {
                "from": rg.from_bus,
                "to": rg.to_bus,
                "taps": list(rg.taps),
                "y_t": {"unit": "pu", "value": [rg.y_t.real, rg.y_t.imag]},
            }
            for rg in net.regulators
        ],
        "loads": [
            {
                "bus": ld.bus,
                "configuration": ld.configuration,
                "phases": ld.phase,
                "unit": "pu",
                "p": {
                    "power": ld.p_power,
                    "current": ld.p_current,
                    "impedance": ld.p_impedance,
                },
                "q": {
                    "power": ld.q_power,
                    "current": ld.q_current,
                    "impedance": ld.q_impedance,
                },
            }
            for ld in net.loads
        ],
        "inverters": [
            {
                "id": inv.id,
                "bus": inv.bus,
                "phase": inv.phase,
                "s_kva": inv.s_kva,
                "p_kw": inv.p_kw,
            }
            for inv in net.inverters
        ],
    }
    lim = net.substation_limits
    if any(math.isfinite(v) for tri in (lim.p_min, lim.p_max, lim.q_min, lim.q_max) for v in tri):
        def tri(vals):
            return [None if not math.isfinite(v) else v for v in vals]
        doc["substation"] = {
            "unit": "kw",
            "p_min": tri(lim.p_min),
            "p_max": tri(lim.p_max),
            "q_min": tri(lim.q_min),
            "q_max": tri(lim.q_max),
        }
    return doc
