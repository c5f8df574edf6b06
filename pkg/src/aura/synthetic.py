"""Seeded bleed-air-like corpus with injectable regulation faults.

Each series is one takeoff segment.  Two exogenous channels (engine speed
``n2`` and intermediate pressure ``ip``) ramp from taxi to takeoff levels and
drive manifold pressure through a first-order recursion

    mp(t) = a1 * mp(t-1) + b1 * n2(t) + b2 * ip(t) - demand * r(t) + noise

where ``r(t)`` is ramp progress and ``demand`` collects the context, asset and
altitude effects (all zero-able).  A fault scales the (b1, b2) response by
``1 - drift`` from the onset step on.

``mode="future_only"`` instead draws history and horizon exogenous values
independently and lets them drive ``mp`` only inside the horizon.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np
from scipy.special import expit

from .context import ContextRecord, DiscretizationRules, discretize_context
from .data import Dataset, Series, StaticAttributes

# name, lat, lon, elevation (m), terrain
AIRPORTS = (
    ("CAN", 23.39, 113.30, 15.0, "coastal"),
    ("PEK", 40.08, 116.58, 35.0, "plain"),
    ("CTU", 30.58, 103.95, 495.0, "plain"),
    ("URC", 43.90, 87.47, 648.0, "plain"),
    ("KMG", 25.10, 102.93, 2103.0, "plateau"),
    ("LXA", 29.30, 90.91, 3570.0, "mountain"),
)

_LEVEL_SIGN = {"low": -1.0, "moderate": 0.0, "high": 1.0, "unknown": 0.0}


@dataclass
class FaultSpec:
    onset: int = 6
    drift: float = 0.5
    fraction: float = 0.15


@dataclass
class SyntheticConfig:
    n_series: int = 4000
    series_len: int = 24
    seed: int = 0
    a1: float = 0.7
    b1: float = 0.2
    b2: float = 0.1
    noise_std: float = 0.05
    fault: FaultSpec = field(default_factory=FaultSpec)
    # faults only appear in series whose chronological rank is past this fraction
    fault_period_start: float = 0.7
    mode: str = "standard"
    # future_only: steps before this index carry no exogenous drive
    history_len: int = 6
    exo_profile: str = "ramp"
    n_aircraft: int = 8
    asset_lag_spread: float = 0.05
    asset_demand_spread: float = 0.015
    context_effect: float = 0.03
    altitude_effect: float = 0.01   # per km of airport elevation
    temp_mean_c: float = 18.0
    temp_std_c: float = 9.0
    humidity_range: tuple[float, float] = (10.0, 95.0)
    load_probs: tuple[float, float, float] = (0.3, 0.4, 0.3)
    holiday_prob: float = 0.05
    step_seconds: int = 10
    span_days: float = 365.0
    start: str = "2023-01-01T00:00:00+00:00"

    def __post_init__(self):
        if self.mode not in ("standard", "future_only"):
            raise ValueError(f"unknown synthetic mode {self.mode!r}")
        if self.exo_profile not in ("ramp", "constant"):
            raise ValueError(f"unknown exo_profile {self.exo_profile!r}")
        if self.series_len < 2 or self.n_series < 1:
            raise ValueError("need n_series >= 1 and series_len >= 2")


def registration(k: int) -> str:
    return f"B-7{k:03d}"


def _ramp(rng, L, profile, history_len):
    """Takeoff ramp inside the history, then a thrust cut to climb power at a random horizon step."""
    t = np.arange(L, dtype=np.float64)
    n_lo, n_hi = rng.uniform(0.3, 0.4), rng.uniform(0.95, 1.05)
    if profile == "constant":
        return np.full(L, n_hi), np.zeros(L)
    center, width = rng.uniform(1.5, 3.5), rng.uniform(0.6, 1.0)
    progress = expit((t - center) / width)
    cut_at = rng.uniform(history_len + 2, max(L - 2, history_len + 3))
    cut = rng.uniform(0.1, 0.25) * expit((t - cut_at) / 0.8)
    return n_lo + (n_hi - n_lo) * progress - cut, progress


def simulate_mp(cfg: SyntheticConfig, n2, ip, progress, a1, demand, onset=None, drift=0.0, rng=None):
    """Run the manifold-pressure recursion from its t=0 fixed point; ``rng=None`` is noise-free."""
    L = len(n2)
    gain = np.ones(L)
    if onset is not None:
        gain[onset:] = 1.0 - drift
    drive = gain * (cfg.b1 * n2 + cfg.b2 * ip) - demand * progress
    mp = np.empty(L)
    prev = drive[0] / (1.0 - a1)
    for t in range(L):
        eps = rng.normal(0.0, cfg.noise_std) if rng is not None else 0.0
        prev = a1 * prev + drive[t] + eps
        mp[t] = prev
    return mp


def _context(rng, cfg, ts, airport, elev):
    season = np.cos(2 * np.pi * (ts.timetuple().tm_yday - 200) / 365.0)
    temp = cfg.temp_mean_c + 10.0 * season - 0.0065 * elev + rng.normal(0.0, cfg.temp_std_c)
    hum = rng.uniform(*cfg.humidity_range)
    load = ("low", "moderate", "high")[rng.choice(3, p=np.asarray(cfg.load_probs))]
    holiday = bool(rng.random() < cfg.holiday_prob)
    return dict(ambient_temp_c=round(float(temp), 2), humidity_pct=round(float(hum), 2),
                terrain=airport[4], airport_elevation_m=elev, is_holiday=holiday, load_level=load)


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    rng = np.random.default_rng(cfg.seed)
    L = cfg.series_len
    start = datetime.fromisoformat(cfg.start).astimezone(timezone.utc)
    offsets = np.sort(rng.uniform(0.0, cfg.span_days * 86400.0, cfg.n_series))
    asset_a1 = cfg.a1 + cfg.asset_lag_spread * rng.uniform(-1.0, 1.0, cfg.n_aircraft)
    asset_demand = cfg.asset_demand_spread * rng.uniform(-1.0, 1.0, cfg.n_aircraft)

    first_fault = int(np.ceil(cfg.fault_period_start * cfg.n_series))
    eligible = np.arange(first_fault, cfg.n_series)
    n_faulty = int(round(cfg.fault.fraction * len(eligible))) if cfg.fault.drift > 0 else 0
    faulty = set(rng.choice(eligible, size=n_faulty, replace=False).tolist()) if n_faulty else set()

    series, static = [], {}
    width = len(str(cfg.n_series))
    for j in range(cfg.n_series):
        sid = f"F{j:0{width}d}"
        t0 = start + timedelta(seconds=float(np.floor(offsets[j])))
        k = int(rng.integers(cfg.n_aircraft))
        airport = AIRPORTS[int(rng.integers(len(AIRPORTS)))]
        _, lat, lon, elev, _ = airport
        timestamps = [t0 + timedelta(seconds=cfg.step_seconds * i) for i in range(L)]
        ctx_fields = _context(rng, cfg, t0, airport, elev)
        ctx0 = ContextRecord(timestamp_utc=t0, **ctx_fields)
        levels = discretize_context(ctx0, DiscretizationRules())
        demand = (cfg.context_effect * (_LEVEL_SIGN[levels.temp_level] + _LEVEL_SIGN[levels.load_level])
                  + asset_demand[k] + cfg.altitude_effect * elev / 1000.0)

        onset = cfg.fault.onset if j in faulty else None
        if cfg.mode == "standard":
            n2, progress = _ramp(rng, L, cfg.exo_profile, cfg.history_len)
            ip = 0.3 + 0.7 * n2 ** 2
            if cfg.exo_profile == "ramp":
                n2 = n2 + rng.normal(0.0, 0.005, L)
                ip = ip + rng.normal(0.0, 0.005, L)
            mp = simulate_mp(cfg, n2, ip, progress, asset_a1[k], demand, onset, cfg.fault.drift, rng)
        else:
            h = cfg.history_len
            n2 = 0.8 + 0.15 * np.concatenate([_smooth_noise(rng, h), _smooth_noise(rng, L - h)])
            ip = 0.7 + 0.15 * np.concatenate([_smooth_noise(rng, h), _smooth_noise(rng, L - h)])
            base = (cfg.b1 * 0.8 + cfg.b2 * 0.7) / (1.0 - cfg.a1)
            mp = np.empty(L)
            prev = base
            for t in range(L):
                drive = (1.0 - cfg.a1) * base if t < h else cfg.b1 * n2[t] + cfg.b2 * ip[t]
                if onset is not None and t >= onset:
                    drive *= 1.0 - cfg.fault.drift
                prev = cfg.a1 * prev + drive + rng.normal(0.0, cfg.noise_std)
                mp[t] = prev

        labels = ["abnormal" if onset is not None and i >= onset else "normal" for i in range(L)]
        contexts = [ContextRecord(timestamp_utc=ts, **ctx_fields) for ts in timestamps]
        series.append(Series(sid, timestamps, mp, np.stack([n2, ip], axis=1), labels, contexts))
        static[sid] = StaticAttributes(registration(k), lat, lon, elev)
    return Dataset(series=series, endo_name="mp", exo_names=["n2", "ip"], static=static)


def _smooth_noise(rng, L, rho: float = 0.6):
    """Zero-mean unit-scale AR(1) path; fresh draw for each call."""
    out = np.empty(L)
    x = rng.normal()
    for t in range(L):
        x = rho * x + np.sqrt(1 - rho ** 2) * rng.normal()
        out[t] = x
    return out
