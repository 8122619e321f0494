"""Near-field ULA geometry, channels and scenario generation."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Invalid scenario or solver configuration."""


def dbm_to_watts(x):
    return 10.0 ** ((np.asarray(x, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(x, dtype=float)) + 30.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical parameters of one ISAC scenario.

    Powers are in watts and angles in degrees. ``rate_thresholds`` are in
    bits/s/Hz and are converted to SINR floors by :attr:`sinr_thresholds`.
    """

    carrier_frequency: float = 54e9
    num_antennas: int = 257
    num_users: int = 2
    num_targets: int = 4
    noise_power: float = 1e-12
    max_power: float = 1.0
    beampattern_thresholds: tuple[float, ...] = (1e-2,) * 4
    rate_thresholds: tuple[float, ...] = (15.0,) * 2
    user_center: tuple[float, float] = (40.0, 10.0)
    user_radius: float = 10.0
    target_angles: tuple[float, ...] = (-65.0, -45.0, 30.0, 60.0)
    target_range_interval: tuple[float, float] = (10.0, 30.0)
    rng_seed: int = 0

    def __post_init__(self):
        # normalise sequences so configs hash and compare by value
        for name in ("beampattern_thresholds", "rate_thresholds", "target_angles"):
            object.__setattr__(self, name, tuple(float(v) for v in np.atleast_1d(getattr(self, name))))
        for name in ("user_center", "target_range_interval"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        self.validate()

    def validate(self):
        M = self.num_antennas
        if M < 3 or M % 2 == 0:
            raise ConfigError(f"num_antennas must be odd and >= 3, got {M}")
        if self.num_users < 1:
            raise ConfigError(f"num_users must be >= 1, got {self.num_users}")
        if self.num_targets < 0:
            raise ConfigError(f"num_targets must be >= 0, got {self.num_targets}")
        if self.carrier_frequency <= 0:
            raise ConfigError("carrier_frequency must be positive")
        if self.noise_power <= 0:
            raise ConfigError("noise_power must be positive")
        if self.max_power <= 0:
            raise ConfigError("max_power must be positive")
        if len(self.beampattern_thresholds) != self.num_targets:
            raise ConfigError(
                f"beampattern_thresholds has {len(self.beampattern_thresholds)} entries, "
                f"expected num_targets={self.num_targets}"
            )
        if any(t <= 0 for t in self.beampattern_thresholds):
            raise ConfigError("beampattern_thresholds must be positive")
        if len(self.rate_thresholds) != self.num_users:
            raise ConfigError(
                f"rate_thresholds has {len(self.rate_thresholds)} entries, "
                f"expected num_users={self.num_users}"
            )
        if any(t < 0 for t in self.rate_thresholds):
            raise ConfigError("rate_thresholds must be non-negative")
        if len(self.target_angles) != self.num_targets:
            raise ConfigError(
                f"target_angles has {len(self.target_angles)} entries, "
                f"expected num_targets={self.num_targets}"
            )
        if any(abs(a) > 90 for a in self.target_angles):
            raise ConfigError("target_angles must lie in [-90, 90] degrees")
        lo, hi = self.target_range_interval
        if not 0 < lo <= hi:
            raise ConfigError("target_range_interval must satisfy 0 < min <= max")
        if self.user_radius < 0:
            raise ConfigError("user_radius must be non-negative")
        if self.rng_seed < 0:
            raise ConfigError("rng_seed must be non-negative")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def antenna_spacing(self) -> float:
        return self.wavelength / 2

    @property
    def half_aperture_index(self) -> int:
        return (self.num_antennas - 1) // 2

    @property
    def sinr_thresholds(self) -> np.ndarray:
        return 2.0 ** np.asarray(self.rate_thresholds) - 1.0


def _check_range(r):
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("range must be positive")
    return r


def element_distances(r, theta_deg, M, wavelength):
    """Exact distance from every ULA element to a node at ``(r, theta)``.

    Elements sit at offsets ``(m - (M-1)/2) * d`` along the array axis with
    ``d = wavelength / 2``; ``theta`` is measured from broadside.
    """
    if M < 1 or M % 2 == 0:
        raise ValueError(f"M must be a positive odd integer, got {M}")
    r = _check_range(r)
    d = wavelength / 2
    delta = np.arange(M) - (M - 1) // 2
    s = np.sin(np.deg2rad(theta_deg))
    return np.sqrt(r**2 + (delta * d) ** 2 - 2.0 * r * delta * d * s)


def array_response(r, theta_deg, M, wavelength):
    """Near-field steering vector with entries ``exp(-j 2pi/lambda (r_m - r))``."""
    rm = element_distances(r, theta_deg, M, wavelength)
    return np.exp(-2j * np.pi / wavelength * (rm - r))


def path_gain(r, wavelength):
    """Complex free-space gain ``sqrt(lambda/4pi) / r * exp(-j 2pi r / lambda)``."""
    r = _check_range(r)
    amplitude = np.sqrt(wavelength / (4 * np.pi)) / r
    return amplitude * np.exp(-2j * np.pi * r / wavelength)


def build_channel(r, theta_deg, cfg: ScenarioConfig) -> np.ndarray:
    lam = cfg.wavelength
    return path_gain(r, lam) * array_response(r, theta_deg, cfg.num_antennas, lam)


@dataclass(frozen=True)
class NodePlacement:
    """Polar coordinates (range in metres, angle in degrees) from the array centre."""

    user_ranges: np.ndarray
    user_angles: np.ndarray
    target_ranges: np.ndarray
    target_angles: np.ndarray

    def __post_init__(self):
        _check_range(self.user_ranges)
        _check_range(self.target_ranges)


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """User channels ``H`` (M x K) and target channels ``G`` (M x N), one column per node.

    The lifted channels append a zero entry and scale by ``sqrt(max_power)`` so
    that metrics on a unit-norm lifted beamformer equal metrics on the
    physical one.
    """

    H: np.ndarray
    G: np.ndarray
    max_power: float

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        G = np.asarray(self.G, dtype=complex)
        if H.ndim != 2:
            raise ValueError("H must be a 2-D array (M x K)")
        if G.ndim != 2 or G.shape[0] != H.shape[0]:
            G = G.reshape(H.shape[0], -1)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "G", G)

    @property
    def num_antennas(self) -> int:
        return self.H.shape[0]

    @property
    def num_users(self) -> int:
        return self.H.shape[1]

    @property
    def num_targets(self) -> int:
        return self.G.shape[1]

    @cached_property
    def H_lifted(self) -> np.ndarray:
        return _lift_channels(self.H, self.max_power)

    @cached_property
    def G_lifted(self) -> np.ndarray:
        return _lift_channels(self.G, self.max_power)


def _lift_channels(F, max_power):
    out = np.zeros((F.shape[0] + 1, F.shape[1]), dtype=complex)
    out[:-1] = np.sqrt(max_power) * F
    return out


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything the solver needs: channels, noise and constraint thresholds.

    Decoupled from :class:`ScenarioConfig` so that tiny synthetic instances
    (any antenna count, arbitrary channels) can be solved directly.
    """

    channels: ChannelSet
    noise_power: float
    beampattern_thresholds: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sinr_thresholds: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        Omega = np.asarray(self.beampattern_thresholds, dtype=float).reshape(-1)
        Gamma = np.asarray(self.sinr_thresholds, dtype=float).reshape(-1)
        if Omega.size == 0 and self.channels.num_targets:
            Omega = np.zeros(self.channels.num_targets)
        if Gamma.size == 0:
            Gamma = np.zeros(self.channels.num_users)
        if Omega.shape != (self.channels.num_targets,):
            raise ValueError("beampattern_thresholds must have one entry per target")
        if Gamma.shape != (self.channels.num_users,):
            raise ValueError("sinr_thresholds must have one entry per user")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")
        object.__setattr__(self, "beampattern_thresholds", Omega)
        object.__setattr__(self, "sinr_thresholds", Gamma)

    @property
    def max_power(self) -> float:
        return self.channels.max_power

    @property
    def num_users(self) -> int:
        return self.channels.num_users

    @property
    def num_targets(self) -> int:
        return self.channels.num_targets

    @property
    def num_antennas(self) -> int:
        return self.channels.num_antennas

    @property
    def num_beams(self) -> int:
        return self.num_users + self.num_targets

    @property
    def lifted_shape(self) -> tuple[int, int]:
        return self.num_antennas + 1, self.num_beams


@dataclass(frozen=True, eq=False)
class Scenario:
    config: ScenarioConfig
    placement: NodePlacement
    channels: ChannelSet

    @cached_property
    def problem(self) -> Problem:
        return Problem(
            channels=self.channels,
            noise_power=self.config.noise_power,
            beampattern_thresholds=np.asarray(self.config.beampattern_thresholds),
            sinr_thresholds=self.config.sinr_thresholds,
        )


def sample_disc(rng, center, radius, n):
    """Uniform-by-area samples in a disc, returned as (x, y) arrays."""
    rad = radius * np.sqrt(rng.random(n))
    phi = rng.uniform(0.0, 2 * np.pi, n)
    return center[0] + rad * np.cos(phi), center[1] + rad * np.sin(phi)


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    """Draw user/target positions from ``cfg.rng_seed`` and build their channels.

    Users are uniform over the user disc. Targets keep the configured angles
    and get ranges uniform over ``target_range_interval``.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.rng_seed)
    x, y = sample_disc(rng, cfg.user_center, cfg.user_radius, cfg.num_users)
    user_ranges = np.hypot(x, y)
    user_angles = np.rad2deg(np.arctan2(y, x))
    lo, hi = cfg.target_range_interval
    target_ranges = rng.uniform(lo, hi, cfg.num_targets)
    target_angles = np.asarray(cfg.target_angles, dtype=float)
    placement = NodePlacement(user_ranges, user_angles, target_ranges, target_angles)

    M = cfg.num_antennas
    H = np.empty((M, cfg.num_users), dtype=complex)
    for k in range(cfg.num_users):
        H[:, k] = build_channel(user_ranges[k], user_angles[k], cfg)
    G = np.empty((M, cfg.num_targets), dtype=complex)
    for n in range(cfg.num_targets):
        G[:, n] = build_channel(target_ranges[n], target_angles[n], cfg)
    return Scenario(cfg, placement, ChannelSet(H, G, cfg.max_power))
