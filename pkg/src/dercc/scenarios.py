"""Monte Carlo realizations of DR and PV uncertainty.

Sampled fractions are relative to the *scheduled* dispatch: a DR fraction of
0.9 means the customer delivers 90% of its scheduled curtailment, a PV
fraction of 0.8 means the unit produces 80% of its scheduled output
(apparent power for the inverter-coupled types 1 and 3, active power for
type 2).  Each scenario first draws the weather, then per-asset fractions
from the matching Gaussian, clipped to [0, 1] (clipping, not resampling:
deterministic, with a small acknowledged bias toward the interior).

Randomness is counter-based: scenario ``k`` and asset ``a`` always consume
the substream keyed by ``(seed, k, a)``, so results are independent of
generation order, batching, and worker count.  Default distribution
parameters are invented (the uncertainty shape is a modeling input, not a
measured quantity); every one of them is configurable.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .grid import AssetKind, Network, PV_KINDS


class Weather(enum.Enum):
    SUNNY = "sunny"
    CLOUDY = "cloudy"


@dataclass(frozen=True)
class UncertaintyModel:
    """Gaussian fraction models for DR delivery and PV output.

    ``dr_overrides`` assigns distinct (mean, std) pairs per bus for DR
    resources; buses without an entry use the shared defaults.
    """

    dr_mean: float = 1.0
    dr_std: float = 0.10
    pv_sunny_mean: float = 1.0
    pv_sunny_std: float = 0.05
    pv_cloudy_mean: float = 0.5
    pv_cloudy_std: float = 0.15
    p_sunny: float = 0.7
    dr_overrides: dict[int, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        stds = [self.dr_std, self.pv_sunny_std, self.pv_cloudy_std]
        stds += [s for _, s in self.dr_overrides.values()]
        if min(stds) < 0:
            raise DomainError("standard deviations must be nonnegative")
        if not 0.0 <= self.p_sunny <= 1.0:
            raise DomainError("p_sunny must lie in [0, 1]")
        means = [self.dr_mean, self.pv_sunny_mean, self.pv_cloudy_mean]
        means += [m for m, _ in self.dr_overrides.values()]
        if min(means) < 0:
            raise DomainError("means must be nonnegative")


@dataclass(frozen=True)
class Scenario:
    """One realization: weather plus per-asset delivery fractions in [0, 1].

    Fraction dicts are keyed by asset index in ``network.assets`` order.
    """

    id: int
    weather: Weather
    dr_fraction: dict[int, float]
    pv_fraction: dict[int, float]


def _uncertain_assets(net: Network) -> list[tuple[int, int]]:
    """(asset index, substream id) pairs for DR and PV assets.

    Substream ids come from a canonical ordering by (kind, bus, duplicate
    ordinal), so permuting the asset list does not move any asset's stream.
    """
    entries = []
    dup_count: dict[tuple[str, int], int] = {}
    for idx, a in enumerate(net.assets):
        if a.kind == AssetKind.DEMAND_RESPONSE or a.kind in PV_KINDS:
            key = (a.kind.value, a.bus)
            ordinal = dup_count.get(key, 0)
            dup_count[key] = ordinal + 1
            entries.append((idx, (a.kind.value, a.bus, ordinal)))
    entries.sort(key=lambda e: e[1])
    return [(idx, stream) for stream, (idx, _) in enumerate(entries)]


_WEATHER_STREAM = 0
_ASSET_STREAM_BASE = 1
_MASK = (1 << 63) - 1


def _rng(seed: int, scenario: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence((seed & _MASK, scenario, stream))
    return np.random.Generator(np.random.PCG64(ss))


def sample_scenarios(
    net: Network,
    model: UncertaintyModel,
    n_s: int,
    seed: int,
) -> list[Scenario]:
    """Draw exactly ``n_s`` scenarios; scenario ``k`` depends only on
    ``(seed, k)`` and the asset identities."""
    if n_s < 1:
        raise DomainError(f"need at least one scenario, got {n_s}")
    uncertain = _uncertain_assets(net)
    scenarios = []
    for k in range(n_s):
        sunny = _rng(seed, k, _WEATHER_STREAM).random() < model.p_sunny
        weather = Weather.SUNNY if sunny else Weather.CLOUDY
        dr_frac: dict[int, float] = {}
        pv_frac: dict[int, float] = {}
        for idx, stream in uncertain:
            a = net.assets[idx]
            if a.kind == AssetKind.DEMAND_RESPONSE:
                mean, std = model.dr_overrides.get(
                    a.bus, (model.dr_mean, model.dr_std)
                )
            elif sunny:
                mean, std = model.pv_sunny_mean, model.pv_sunny_std
            else:
                mean, std = model.pv_cloudy_mean, model.pv_cloudy_std
            g = _rng(seed, k, _ASSET_STREAM_BASE + stream)
            frac = min(1.0, max(0.0, mean + std * g.standard_normal()))
            if a.kind == AssetKind.DEMAND_RESPONSE:
                dr_frac[idx] = frac
            else:
                pv_frac[idx] = frac
        scenarios.append(
            Scenario(id=k, weather=weather, dr_fraction=dr_frac, pv_fraction=pv_frac)
        )
    return scenarios


def empirical_moments(scenarios: list[Scenario]) -> dict[int, tuple[float, float]]:
    """Per-asset (mean, unbiased std) of the realized fractions."""
    if len(scenarios) < 2:
        raise DomainError("need at least two scenarios for moments")
    keys = set(scenarios[0].dr_fraction) | set(scenarios[0].pv_fraction)
    out = {}
    n = len(scenarios)
    for key in sorted(keys):
        vals = np.array(
            [s.dr_fraction.get(key, s.pv_fraction.get(key, math.nan))
             for s in scenarios]
        )
        mean = float(vals.mean())
        std = float(vals.std(ddof=1)) if n > 1 else 0.0
        out[key] = (mean, std)
    return out


def write_scenarios_csv(scenarios, net: Network, path) -> None:
    """Audit export: one row per (scenario, uncertain asset)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario_id", "weather", "asset_id", "fraction"])
        for s in scenarios:
            for idx in sorted({**s.dr_fraction, **s.pv_fraction}):
                frac = s.dr_fraction.get(idx, s.pv_fraction.get(idx))
                w.writerow([s.id, s.weather.value, net.asset_label(idx), repr(frac)])
