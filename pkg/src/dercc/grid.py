"""Radial network data model, CSV ingestion, and the bundled 33-bus fixture.

All power quantities on the data model are in physical units (kW, kVAr,
kWh); line impedances are stored in per-unit on the network base.  File
inputs carry impedances in ohms and are converted at load time using the
network voltage/power base (12.66 kV / 1 MVA by default, the standard base
for the 33-bus feeder).
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    DegenerateLineError,
    ParseError,
    ValidationError,
)

DEFAULT_BASE_MVA = 1.0
DEFAULT_BASE_KV = 12.66


class AssetKind(enum.Enum):
    STORAGE = "storage"
    DEMAND_RESPONSE = "dr"
    CAPACITOR = "capacitor"
    PV1 = "pv1"
    PV2 = "pv2"
    PV3 = "pv3"


PV_KINDS = (AssetKind.PV1, AssetKind.PV2, AssetKind.PV3)


@dataclass(frozen=True)
class Bus:
    """A network node with constant-power demand and voltage limits."""

    id: int
    p_demand_kw: float = 0.0
    q_demand_kvar: float = 0.0
    v_min_pu: float = 0.9
    v_max_pu: float = 1.05
    is_substation: bool = False

    def __post_init__(self):
        if self.id < 1:
            raise ValidationError(f"bus id must be >= 1, got {self.id}")
        if self.p_demand_kw < 0:
            raise ValidationError(f"bus {self.id}: negative active demand")
        if not 0 < self.v_min_pu < self.v_max_pu:
            raise ValidationError(
                f"bus {self.id}: need 0 < v_min < v_max, got "
                f"[{self.v_min_pu}, {self.v_max_pu}]"
            )


@dataclass(frozen=True)
class Line:
    """A series branch between two buses.

    ``resistance``/``reactance`` are per-unit; ``r_ohm``/``x_ohm`` retain the
    source values so that writing a loaded network back to CSV is lossless.
    Shunt charging is not modeled.
    """

    from_bus: int
    to_bus: int
    resistance: float
    reactance: float
    capacity_kw: float
    r_ohm: float = 0.0
    x_ohm: float = 0.0

    def __post_init__(self):
        if self.resistance < 0:
            raise ValidationError(
                f"line {self.from_bus}-{self.to_bus}: negative resistance"
            )
        if self.resistance == 0.0 and self.reactance == 0.0:
            raise ValidationError(
                f"line {self.from_bus}-{self.to_bus}: r and x both zero"
            )
        if self.capacity_kw <= 0:
            raise ValidationError(
                f"line {self.from_bus}-{self.to_bus}: capacity must be > 0"
            )
        if self.from_bus == self.to_bus:
            raise ValidationError(f"line {self.from_bus}-{self.to_bus}: self loop")


@dataclass(frozen=True)
class StorageParams:
    r_min_kw: float
    r_max_kw: float
    soc_min_kwh: float
    soc_max_kwh: float
    available_kwh: float

    def __post_init__(self):
        if self.r_min_kw > self.r_max_kw:
            raise ValidationError("storage: r_min > r_max")
        if self.soc_min_kwh > self.soc_max_kwh:
            raise ValidationError("storage: soc_min > soc_max")


@dataclass(frozen=True)
class DemandResponseParams:
    dr_max: float

    def __post_init__(self):
        if not 0.0 <= self.dr_max <= 1.0:
            raise ValidationError(f"dr_max must be in [0,1], got {self.dr_max}")


@dataclass(frozen=True)
class CapacitorParams:
    q_max_kvar: float

    def __post_init__(self):
        if self.q_max_kvar < 0:
            raise ValidationError("capacitor: q_max < 0")


@dataclass(frozen=True)
class PvParams:
    p_cap_kw: float
    s_cap_kva: float = 0.0  # unused for pv2

    def __post_init__(self):
        if self.p_cap_kw < 0 or self.s_cap_kva < 0:
            raise ValidationError("pv: negative capacity")


@dataclass(frozen=True)
class DerAsset:
    """A DER unit attached to a bus.  ``params`` is kind-specific."""

    bus: int
    kind: AssetKind
    params: object

    def __post_init__(self):
        expected = {
            AssetKind.STORAGE: StorageParams,
            AssetKind.DEMAND_RESPONSE: DemandResponseParams,
            AssetKind.CAPACITOR: CapacitorParams,
            AssetKind.PV1: PvParams,
            AssetKind.PV2: PvParams,
            AssetKind.PV3: PvParams,
        }[self.kind]
        if not isinstance(self.params, expected):
            raise ValidationError(
                f"asset at bus {self.bus}: kind {self.kind.value} expects "
                f"{expected.__name__} params"
            )
        if self.kind in (AssetKind.PV1, AssetKind.PV3):
            if self.params.p_cap_kw > self.params.s_cap_kva:
                raise ValidationError(
                    f"{self.kind.value} at bus {self.bus}: p_cap > s_cap"
                )


@dataclass(frozen=True)
class Prices:
    """Electricity prices in $/kWh: wholesale, PV, and demand response."""

    wholesale: float
    pv: float
    dr: float

    def __post_init__(self):
        if min(self.wholesale, self.pv, self.dr) < 0:
            raise ValidationError("prices must be nonnegative")


@dataclass(frozen=True)
class Network:
    """Validated radial network.  Immutable after construction."""

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    assets: tuple[DerAsset, ...]
    base_mva: float = DEFAULT_BASE_MVA
    base_kv: float = DEFAULT_BASE_KV
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        _validate_network(self)

    @property
    def base_kva(self) -> float:
        return self.base_mva * 1000.0

    @property
    def substation(self) -> Bus:
        return next(b for b in self.buses if b.is_substation)

    def bus_by_id(self, bus_id: int) -> Bus:
        return self._bus_index()[bus_id]

    def assets_of(self, kind: AssetKind) -> list[tuple[int, DerAsset]]:
        """(index in ``assets``, asset) pairs of one kind, in file order."""
        return [(i, a) for i, a in enumerate(self.assets) if a.kind == kind]

    def total_demand_kw(self) -> float:
        return sum(b.p_demand_kw for b in self.buses)

    def total_demand_kvar(self) -> float:
        return sum(b.q_demand_kvar for b in self.buses)

    def asset_label(self, index: int) -> str:
        """Stable diagnostic id, e.g. ``pv1@18`` (``/k`` suffix on duplicates)."""
        a = self.assets[index]
        dup = [
            i
            for i, other in enumerate(self.assets)
            if other.kind == a.kind and other.bus == a.bus
        ]
        base = f"{a.kind.value}@{a.bus}"
        if len(dup) == 1:
            return base
        return f"{base}/{dup.index(index)}"

    def _bus_index(self) -> dict[int, Bus]:
        if "bus_index" not in self._cache:
            self._cache["bus_index"] = {b.id: b for b in self.buses}
        return self._cache["bus_index"]


def _validate_network(net: Network) -> None:
    if not net.buses:
        raise ValidationError("network has no buses")
    ids = [b.id for b in net.buses]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise ValidationError(f"duplicate bus ids: {dup}")
    subs = [b.id for b in net.buses if b.is_substation]
    if len(subs) != 1:
        raise ValidationError(
            f"exactly one substation bus required, found {len(subs)}"
        )
    known = set(ids)
    for ln in net.lines:
        if ln.from_bus not in known or ln.to_bus not in known:
            raise ValidationError(
                f"line {ln.from_bus}-{ln.to_bus} references unknown bus"
            )
    for a in net.assets:
        if a.bus not in known:
            raise ValidationError(
                f"{a.kind.value} asset references unknown bus {a.bus}"
            )
    if len(net.lines) != len(net.buses) - 1:
        raise ValidationError(
            f"not radial: {len(net.lines)} lines for {len(net.buses)} buses"
        )
    # spanning check: BFS from the substation must reach every bus
    adj: dict[int, list[int]] = {i: [] for i in ids}
    for ln in net.lines:
        adj[ln.from_bus].append(ln.to_bus)
        adj[ln.to_bus].append(ln.from_bus)
    seen = {subs[0]}
    frontier = [subs[0]]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        frontier = nxt
    if len(seen) != len(ids):
        raise ValidationError(
            f"not radial: {len(ids) - len(seen)} buses unreachable from substation"
        )


def line_admittance(line: Line) -> tuple[float, float]:
    """Series conductance/susceptance of a line from its per-unit impedance.

    Returns ``(G, B)`` with ``G = r/(r^2+x^2)`` and ``B = -x/(r^2+x^2)``
    (series-branch convention, no shunt elements), so ``G + jB = 1/(r+jx)``.
    """
    r, x = line.resistance, line.reactance
    d = r * r + x * x
    if d == 0.0:
        raise DegenerateLineError(
            f"line {line.from_bus}-{line.to_bus}: r = x = 0"
        )
    return r / d, -x / d


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

BUS_COLUMNS = ["id", "p_demand_kw", "q_demand_kvar", "v_min_pu", "v_max_pu", "is_substation"]
LINE_COLUMNS = ["from", "to", "r_ohm", "x_ohm", "capacity_kw"]
ASSET_COLUMNS = ["bus", "kind", "param1", "param2", "param3", "param4", "param5"]

# positional asset params by kind (see assets.csv header comment)
_ASSET_ARITY = {
    AssetKind.STORAGE: 5,
    AssetKind.DEMAND_RESPONSE: 1,
    AssetKind.CAPACITOR: 1,
    AssetKind.PV1: 2,
    AssetKind.PV2: 1,
    AssetKind.PV3: 2,
}


def _read_rows(path, expected_header):
    path = Path(path)
    if not path.exists():
        raise ParseError(f"file not found: {path}")
    with open(path, newline="") as fh:
        rows = [
            row for row in csv.reader(fh)
            if row and not row[0].lstrip().startswith("#")
        ]
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if header != expected_header:
        raise ParseError(
            f"{path}: expected header {','.join(expected_header)!r}, "
            f"got {','.join(header)!r}"
        )
    return path, rows[1:]


def _to_float(path, lineno, name, text):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"{path}:{lineno}: bad {name} value {text!r}") from None
    if not math.isfinite(v):
        raise ParseError(f"{path}:{lineno}: non-finite {name} value {text!r}")
    return v


def _to_bool(path, lineno, name, text):
    t = text.strip().lower()
    if t in ("1", "true", "yes"):
        return True
    if t in ("0", "false", "no"):
        return False
    raise ParseError(f"{path}:{lineno}: bad {name} flag {text!r}")


def load_network(
    bus_path,
    line_path,
    asset_path=None,
    base_mva: float = DEFAULT_BASE_MVA,
    base_kv: float = DEFAULT_BASE_KV,
) -> Network:
    """Load and validate a network from bus/line/asset CSV files.

    ``asset_path`` may be ``None`` for a passive network.  Raises
    :class:`ParseError` on malformed rows and :class:`ValidationError` when
    the data violates a structural invariant (non-radial topology, dangling
    references, duplicate bus ids, ...).
    """
    path, rows = _read_rows(bus_path, BUS_COLUMNS)
    buses = []
    for k, row in enumerate(rows, start=2):
        if len(row) != len(BUS_COLUMNS):
            raise ParseError(f"{path}:{k}: expected {len(BUS_COLUMNS)} columns")
        try:
            bus = Bus(
                id=int(row[0]),
                p_demand_kw=_to_float(path, k, "p_demand_kw", row[1]),
                q_demand_kvar=_to_float(path, k, "q_demand_kvar", row[2]),
                v_min_pu=_to_float(path, k, "v_min_pu", row[3]),
                v_max_pu=_to_float(path, k, "v_max_pu", row[4]),
                is_substation=_to_bool(path, k, "is_substation", row[5]),
            )
        except ValueError:
            raise ParseError(f"{path}:{k}: bad bus id {row[0]!r}") from None
        buses.append(bus)

    z_base = base_kv * base_kv / base_mva  # ohm
    path, rows = _read_rows(line_path, LINE_COLUMNS)
    lines = []
    for k, row in enumerate(rows, start=2):
        if len(row) != len(LINE_COLUMNS):
            raise ParseError(f"{path}:{k}: expected {len(LINE_COLUMNS)} columns")
        try:
            f, t = int(row[0]), int(row[1])
        except ValueError:
            raise ParseError(f"{path}:{k}: bad bus reference") from None
        r_ohm = _to_float(path, k, "r_ohm", row[2])
        x_ohm = _to_float(path, k, "x_ohm", row[3])
        lines.append(
            Line(
                from_bus=f,
                to_bus=t,
                resistance=r_ohm / z_base,
                reactance=x_ohm / z_base,
                capacity_kw=_to_float(path, k, "capacity_kw", row[4]),
                r_ohm=r_ohm,
                x_ohm=x_ohm,
            )
        )

    assets = []
    if asset_path is not None:
        path, rows = _read_rows(asset_path, ASSET_COLUMNS)
        for k, row in enumerate(rows, start=2):
            if len(row) != len(ASSET_COLUMNS):
                raise ParseError(f"{path}:{k}: expected {len(ASSET_COLUMNS)} columns")
            try:
                bus_id = int(row[0])
            except ValueError:
                raise ParseError(f"{path}:{k}: bad bus reference {row[0]!r}") from None
            kind_text = row[1].strip().lower()
            try:
                kind = AssetKind(kind_text)
            except ValueError:
                raise ParseError(f"{path}:{k}: unknown asset kind {kind_text!r}") from None
            arity = _ASSET_ARITY[kind]
            raw = row[2 : 2 + arity]
            if any(not c.strip() for c in raw):
                raise ParseError(
                    f"{path}:{k}: {kind.value} needs {arity} parameter(s)"
                )
            vals = [_to_float(path, k, f"param{j+1}", c) for j, c in enumerate(raw)]
            if kind == AssetKind.STORAGE:
                params = StorageParams(*vals)
            elif kind == AssetKind.DEMAND_RESPONSE:
                params = DemandResponseParams(*vals)
            elif kind == AssetKind.CAPACITOR:
                params = CapacitorParams(*vals)
            else:
                params = PvParams(*vals) if len(vals) == 2 else PvParams(vals[0], 0.0)
            assets.append(DerAsset(bus=bus_id, kind=kind, params=params))

    return Network(
        buses=tuple(buses),
        lines=tuple(lines),
        assets=tuple(assets),
        base_mva=base_mva,
        base_kv=base_kv,
    )


def write_network(net: Network, bus_path, line_path, asset_path) -> None:
    """Write a network back to the three CSV files (physical units).

    Loading the written files reproduces the original field values exactly:
    floats are emitted with ``repr`` (shortest round-trip form) and lines
    carry their original ohm values.
    """
    with open(bus_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BUS_COLUMNS)
        for b in net.buses:
            w.writerow(
                [
                    b.id,
                    repr(b.p_demand_kw),
                    repr(b.q_demand_kvar),
                    repr(b.v_min_pu),
                    repr(b.v_max_pu),
                    int(b.is_substation),
                ]
            )
    z_base = net.base_kv * net.base_kv / net.base_mva
    with open(line_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LINE_COLUMNS)
        for ln in net.lines:
            r_ohm = ln.r_ohm if ln.r_ohm else ln.resistance * z_base
            x_ohm = ln.x_ohm if ln.x_ohm else ln.reactance * z_base
            w.writerow([ln.from_bus, ln.to_bus, repr(r_ohm), repr(x_ohm), repr(ln.capacity_kw)])
    with open(asset_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ASSET_COLUMNS)
        for a in net.assets:
            if a.kind == AssetKind.STORAGE:
                p = a.params
                vals = [p.r_min_kw, p.r_max_kw, p.soc_min_kwh, p.soc_max_kwh, p.available_kwh]
            elif a.kind == AssetKind.DEMAND_RESPONSE:
                vals = [a.params.dr_max]
            elif a.kind == AssetKind.CAPACITOR:
                vals = [a.params.q_max_kvar]
            elif a.kind == AssetKind.PV2:
                vals = [a.params.p_cap_kw]
            else:
                vals = [a.params.p_cap_kw, a.params.s_cap_kva]
            row = [a.bus, a.kind.value] + [repr(v) for v in vals]
            row += [""] * (len(ASSET_COLUMNS) - len(row))
            w.writerow(row)


_FIXTURE_DIR = Path(__file__).parent / "data" / "ieee33"


def ieee33_fixture() -> Network:
    """The modified IEEE 33-bus feeder used as the standard test system.

    Standard Baran-Wu branch data on a 12.66 kV / 1 MVA base; loads scaled
    so total demand is 3529 kW / 2185 kVAr; augmented with 3 capacitors,
    4 storage units, 6 demand-response resources, and 5 PV units of each
    type.  DER placement is a documented fixture choice (see the bundled
    ``assets.csv``), spread across lateral ends and heavy-load buses.
    """
    return load_network(
        _FIXTURE_DIR / "buses.csv",
        _FIXTURE_DIR / "lines.csv",
        _FIXTURE_DIR / "assets.csv",
    )
