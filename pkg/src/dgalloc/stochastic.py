"""Stochastic weather models driving the loss objective.

Irradiance is modeled per hour by a Beta distribution fitted from the
profile mean and a configurable standard-deviation rule; wind speed by the
shape-2 Weibull (Rayleigh) whose scale follows c = 1.128 * mean speed.
``build_state_set`` samples both into a weighted set of hourly operating
states. Sampling is driven by one explicitly seeded generator, so a state
set is reproducible bit-for-bit from (profiles, samples_per_hour, seed).
"""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

HOURS_PER_DAY = 24
RAYLEIGH_SCALE_FACTOR = 1.128  # scale over mean speed, i.e. 2 / sqrt(pi)

PROFILE_KINDS = ("wind", "irradiance")
BETA_FIT_MODES = ("moments", "paper")


class InfeasibleMomentsError(ValueError):
    """No Beta distribution exists for the requested mean / standard deviation."""


@dataclass(frozen=True)
class BetaParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("Beta shape parameters must be finite")
        if self.alpha <= 0.0 or self.beta <= 0.0:
            raise ValueError("Beta shape parameters must be strictly positive")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    @property
    def variance(self) -> float:
        a, b = self.alpha, self.beta
        return a * b / ((a + b) ** 2 * (a + b + 1.0))


@dataclass(frozen=True)
class RayleighParams:
    c: float

    def __post_init__(self):
        if not math.isfinite(self.c) or self.c <= 0.0:
            raise ValueError("Rayleigh scale must be a positive finite number")

    @property
    def mean(self) -> float:
        return self.c * math.sqrt(math.pi) / 2.0


def beta_pdf(s: float, params: BetaParams) -> float:
    """Beta density at irradiance s; zero outside the [0, 1] support."""
    if not math.isfinite(s):
        raise ValueError("irradiance must be finite")
    if s < 0.0 or s > 1.0:
        return 0.0
    a, b = params.alpha, params.beta
    log_norm = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    if s == 0.0:
        return 0.0 if a > 1.0 else (math.exp(log_norm) if a == 1.0 else math.inf)
    if s == 1.0:
        return 0.0 if b > 1.0 else (math.exp(log_norm) if b == 1.0 else math.inf)
    return math.exp(log_norm + (a - 1.0) * math.log(s) + (b - 1.0) * math.log1p(-s))


def rayleigh_pdf(v: float, params: RayleighParams) -> float:
    """Rayleigh (shape-2 Weibull) density at wind speed v >= 0 m/s."""
    if not math.isfinite(v):
        raise ValueError("wind speed must be finite")
    if v < 0.0:
        raise ValueError("wind speed must be non-negative")
    ratio = v / params.c
    return (2.0 * v / (params.c * params.c)) * math.exp(-(ratio * ratio))


def fit_beta_moments(mu: float, sigma: float, mode: str = "moments") -> BetaParams:
    """Fit Beta shape parameters from a mean in (0, 1) and a standard deviation.

    The default "moments" mode is exact moment matching: the fitted
    distribution reproduces (mu, sigma^2). The "paper" mode instead applies
    an alternative published relation that replaces (1 - mu) with (1 + mu)
    inside the bracket; it does not reproduce the input variance and is kept
    only for comparison runs.
    """
    if not (math.isfinite(mu) and math.isfinite(sigma)):
        raise ValueError("moments must be finite")
    if not (0.0 < mu < 1.0):
        raise ValueError(f"mean must lie strictly inside (0, 1), got {mu}")
    if sigma <= 0.0:
        raise ValueError("standard deviation must be positive")
    var = sigma * sigma
    if mode == "moments":
        if var >= mu * (1.0 - mu):
            raise InfeasibleMomentsError(
                f"no Beta distribution has mean {mu} and std {sigma}: "
                f"need sigma^2 < mu*(1-mu) = {mu * (1.0 - mu):.6g}"
            )
        b = (1.0 - mu) * (mu * (1.0 - mu) / var - 1.0)
    elif mode == "paper":
        b = (1.0 - mu) * (mu * (1.0 + mu) / var - 1.0)
    else:
        raise ValueError(f"unknown beta fit mode {mode!r}; expected one of {BETA_FIT_MODES}")
    a = mu * b / (1.0 - mu)
    if b <= 0.0 or a <= 0.0:
        raise InfeasibleMomentsError(
            f"mode {mode!r} yields non-positive shape parameters for mean {mu}, std {sigma}"
        )
    return BetaParams(alpha=a, beta=b)


def fit_rayleigh(v_m: float) -> RayleighParams:
    """Scale parameter from the historical mean wind speed, c = 1.128 * v_m."""
    if not math.isfinite(v_m) or v_m <= 0.0:
        raise ValueError("mean wind speed must be a positive finite number")
    return RayleighParams(c=RAYLEIGH_SCALE_FACTOR * v_m)


def sample_rayleigh(params: RayleighParams, size: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF samples v = c * sqrt(-ln(1 - u)); always >= 0."""
    u = rng.random(size)
    return params.c * np.sqrt(-np.log1p(-u))


def sample_beta(params: BetaParams, size: int, rng: np.random.Generator) -> np.ndarray:
    """Gamma-ratio construction: X/(X+Y) with X~Gamma(alpha), Y~Gamma(beta)."""
    g1 = rng.standard_gamma(params.alpha, size)
    g2 = rng.standard_gamma(params.beta, size)
    return g1 / (g1 + g2)


@dataclass(frozen=True)
class HourlyProfile:
    """24 hourly values: wind speed in m/s or irradiance in kW/m^2.

    Irradiance values live on the Beta support and are clamped to [0, 1] by
    the factory constructors (1 kW/m^2 is the standard-test-conditions level).
    """

    values: tuple
    kind: str

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"profile kind must be one of {PROFILE_KINDS}")
        if len(self.values) != HOURS_PER_DAY:
            raise ValueError(f"profile needs exactly {HOURS_PER_DAY} values, got {len(self.values)}")
        for h, v in enumerate(self.values):
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"hour {h}: profile values must be finite and non-negative")
            if self.kind == "irradiance" and v > 1.0:
                raise ValueError(f"hour {h}: irradiance above 1 kW/m^2; normalize first")

    @classmethod
    def wind(cls, values) -> "HourlyProfile":
        return cls(values=tuple(float(v) for v in values), kind="wind")

    @classmethod
    def irradiance(cls, values) -> "HourlyProfile":
        return cls(values=tuple(min(float(v), 1.0) for v in values), kind="irradiance")

    @classmethod
    def from_csv(cls, path, kind: str) -> "HourlyProfile":
        """Read a hour,value CSV covering hours 0..23 exactly once."""
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None or [c.strip() for c in header] != ["hour", "value"]:
                raise ValueError(f"{path}: expected header 'hour,value'")
            by_hour: dict[int, float] = {}
            for lineno, row in enumerate(reader, start=2):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                if len(row) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
                try:
                    hour = int(row[0])
                    value = float(row[1])
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: bad row {row!r}") from None
                if hour < 0 or hour >= HOURS_PER_DAY:
                    raise ValueError(f"{path}:{lineno}: hour {hour} out of range 0..23")
                if hour in by_hour:
                    raise ValueError(f"{path}:{lineno}: duplicate hour {hour}")
                by_hour[hour] = value
        missing = sorted(set(range(HOURS_PER_DAY)) - set(by_hour))
        if missing:
            raise ValueError(f"{path}: missing hours {missing}")
        ordered = [by_hour[h] for h in range(HOURS_PER_DAY)]
        return cls.wind(ordered) if kind == "wind" else cls.irradiance(ordered)


@dataclass(frozen=True)
class SigmaRule:
    """Standard deviation for the hourly Beta fit: max(fraction * mean, floor)."""

    fraction: float = 0.1
    floor: float = 0.02

    def __post_init__(self):
        if self.fraction <= 0.0 or self.floor <= 0.0:
            raise ValueError("sigma rule parameters must be positive")

    def sigma_for(self, mu: float) -> float:
        return max(self.fraction * mu, self.floor)


@dataclass(frozen=True)
class State:
    """One sampled operating condition with its probability weight."""

    hour: int
    wind_speed_ms: float
    irradiance_kw_m2: float
    weight: float

    def __post_init__(self):
        if not 0 <= self.hour < HOURS_PER_DAY:
            raise ValueError(f"hour {self.hour} out of range")
        if self.weight <= 0.0:
            raise ValueError("state weight must be positive")
        if self.wind_speed_ms < 0.0 or self.irradiance_kw_m2 < 0.0:
            raise ValueError("sampled weather values must be non-negative")


@dataclass(frozen=True)
class StateSet:
    """Weighted hourly operating states plus the seed that produced them."""

    states: tuple
    seed: int

    def __post_init__(self):
        total = math.fsum(s.weight for s in self.states)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"state weights must sum to 1, got {total!r}")

    def __len__(self):
        return len(self.states)

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "states": [
                {
                    "hour": s.hour,
                    "wind_speed_ms": s.wind_speed_ms,
                    "irradiance_kw_m2": s.irradiance_kw_m2,
                    "weight": s.weight,
                }
                for s in self.states
            ],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "StateSet":
        states = tuple(
            State(
                hour=int(s["hour"]),
                wind_speed_ms=float(s["wind_speed_ms"]),
                irradiance_kw_m2=float(s["irradiance_kw_m2"]),
                weight=float(s["weight"]),
            )
            for s in obj["states"]
        )
        return cls(states=states, seed=int(obj["seed"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_json_dict(), handle, indent=2)
            handle.write("\n")

    @classmethod
    def load(cls, path) -> "StateSet":
        with open(path, encoding="utf-8") as handle:
            return cls.from_json_dict(json.load(handle))


def build_state_set(
    wind_profile: HourlyProfile,
    solar_profile: HourlyProfile,
    sigma_rule: SigmaRule | None = None,
    samples_per_hour: int = 1,
    seed: int = 0,
    beta_fit: str = "moments",
) -> StateSet:
    """Sample the hourly distributions into 24 * samples_per_hour states.

    Hours whose profile mean is zero bypass fitting and emit zero
    deterministically (a zero-mean fit is undefined for both models). Every
    state carries weight 1 / (24 * samples_per_hour).
    """
    if wind_profile.kind != "wind":
        raise ValueError("wind_profile must have kind 'wind'")
    if solar_profile.kind != "irradiance":
        raise ValueError("solar_profile must have kind 'irradiance'")
    if samples_per_hour < 1:
        raise ValueError("samples_per_hour must be at least 1")

    sigma_rule = sigma_rule if sigma_rule is not None else SigmaRule()
    rng = np.random.default_rng(seed)
    m = samples_per_hour
    weight = 1.0 / (HOURS_PER_DAY * m)
    states = []
    for hour in range(HOURS_PER_DAY):
        v_mean = wind_profile.values[hour]
        if v_mean == 0.0:
            winds = np.zeros(m)
        else:
            winds = sample_rayleigh(fit_rayleigh(v_mean), m, rng)

        s_mean = solar_profile.values[hour]
        if s_mean == 0.0:
            irradiances = np.zeros(m)
        else:
            try:
                params = fit_beta_moments(s_mean, sigma_rule.sigma_for(s_mean), mode=beta_fit)
            except (InfeasibleMomentsError, ValueError) as exc:
                raise InfeasibleMomentsError(f"hour {hour}: {exc}") from None
            irradiances = sample_beta(params, m, rng)

        for j in range(m):
            states.append(
                State(
                    hour=hour,
                    wind_speed_ms=float(winds[j]),
                    irradiance_kw_m2=float(irradiances[j]),
                    weight=weight,
                )
            )
    return StateSet(states=tuple(states), seed=seed)
