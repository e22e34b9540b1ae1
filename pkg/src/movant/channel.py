"""Field-response channel model for movable-antenna links.

Positions are planar ``(..., n, 2)`` arrays in meters, measured from the
lower-left corner of the antenna's region.  Path angles are stored per user as
``(K, L)`` arrays of elevation/azimuth in radians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig, dbm_to_watt

__all__ = [
    "RegionSpec",
    "PathAngles",
    "StatisticalState",
    "ChannelSample",
    "Link",
    "propagation_delta",
    "field_response",
    "field_matrix",
    "channel_matrix",
    "draw_angles",
    "draw_statistical_state",
    "draw_channel_sample",
    "dbm_to_watt",
    "transmit_region",
    "receive_region",
    "upa_positions",
]


@dataclass(frozen=True)
class RegionSpec:
    """Axis-aligned rectangles an array of antennas may occupy.

    ``rects`` is ``(R, 4)`` with rows ``(x_min, x_max, y_min, y_max)``.  With
    ``per_antenna`` set, antenna ``m`` is confined to ``rects[m]``; otherwise
    every antenna shares ``rects[0]``.
    """

    kind: str
    rects: np.ndarray
    per_antenna: bool = False

    def __post_init__(self):
        rects = np.atleast_2d(np.asarray(self.rects, dtype=float))
        object.__setattr__(self, "rects", rects)
        if rects.shape[1] != 4:
            raise ValueError("rects must have shape (R, 4)")
        if np.any(rects[:, 1] <= rects[:, 0]) or np.any(rects[:, 3] <= rects[:, 2]):
            raise ValueError("degenerate rectangle in region")
        if not self.per_antenna and len(rects) != 1:
            raise ValueError("a shared region holds exactly one rectangle")

    def bounds(self, n_antennas: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-antenna lower and upper corners, each ``(n_antennas, 2)``."""
        if self.per_antenna:
            if len(self.rects) != n_antennas:
                raise ValueError(
                    f"region has {len(self.rects)} rectangles for {n_antennas} antennas"
                )
            rects = self.rects
        else:
            rects = np.repeat(self.rects, n_antennas, axis=0)
        return rects[:, [0, 2]], rects[:, [1, 3]]

    def project(self, positions: np.ndarray) -> np.ndarray:
        positions = np.asarray(positions, dtype=float)
        lo, hi = self.bounds(positions.shape[-2])
        return np.clip(positions, lo, hi)

    def contains(self, positions: np.ndarray, atol: float = 0.0) -> bool:
        positions = np.asarray(positions, dtype=float)
        lo, hi = self.bounds(positions.shape[-2])
        return bool(np.all(positions >= lo - atol) and np.all(positions <= hi + atol))

    def min_separation(self) -> float:
        """Smallest Euclidean gap between distinct rectangles (inf if one)."""
        best = np.inf
        r = self.rects
        for i in range(len(r)):
            for j in range(i + 1, len(r)):
                dx = max(r[j, 0] - r[i, 1], r[i, 0] - r[j, 1], 0.0)
                dy = max(r[j, 2] - r[i, 3], r[i, 2] - r[j, 3], 0.0)
                best = min(best, float(np.hypot(dx, dy)))
        return best


def transmit_region(config: SystemConfig) -> RegionSpec:
    x, d = config.tx_region_m, config.min_distance_m
    return RegionSpec("transmit-GMM", [[0.0, 4 * x + 3 * d, 0.0, 2 * x + d]])


def receive_region(config: SystemConfig, mode: str) -> RegionSpec:
    """Receive region for ``mode`` in {"gmm", "pmm"}.

    GMM: one ``(M X_r + (M-1) D) x X_r`` rectangle.  PMM: ``M`` squares of
    side ``X_r`` placed left to right with gap ``D``.  For ``M = 2`` these are
    the ``(2X_r + D) x X_r`` and two-square layouts of the simulation setup.
    """
    x, d, m = config.rx_region_m, config.min_distance_m, config.n_rx
    if mode == "gmm":
        return RegionSpec("receive-GMM", [[0.0, m * x + (m - 1) * d, 0.0, x]])
    if mode == "pmm":
        rects = [[i * (x + d), i * (x + d) + x, 0.0, x] for i in range(m)]
        return RegionSpec("receive-PMM", rects, per_antenna=True)
    raise ValueError(f"unknown receive mode {mode!r}")


def upa_positions(n: int, spacing: float, center: tuple[float, float],
                  rows: int | None = None) -> np.ndarray:
    """Uniform planar array centred at ``center``.

    By default two rows when ``n`` is even and at least 4 (so 8 -> 4x2,
    4 -> 2x2), otherwise a single row.
    """
    if rows is None:
        rows = 2 if (n >= 4 and n % 2 == 0) else 1
    if n % rows:
        raise ValueError(f"{n} antennas do not fill {rows} rows")
    cols = n // rows
    xs = (np.arange(cols) - (cols - 1) / 2) * spacing + center[0]
    ys = (np.arange(rows) - (rows - 1) / 2) * spacing + center[1]
    grid = np.array([(x, y) for y in ys for x in xs], dtype=float)
    return grid


@dataclass(frozen=True)
class PathAngles:
    """Elevation and azimuth per path, each ``(..., L)`` in ``[0, pi]``."""

    elevation: np.ndarray
    azimuth: np.ndarray

    def __post_init__(self):
        el = np.asarray(self.elevation, dtype=float)
        az = np.asarray(self.azimuth, dtype=float)
        if el.shape != az.shape:
            raise ValueError("elevation and azimuth shapes differ")
        if np.any(el < 0) or np.any(el > np.pi) or np.any(az < 0) or np.any(az > np.pi):
            raise ValueError("path angles must lie in [0, pi]")
        object.__setattr__(self, "elevation", el)
        object.__setattr__(self, "azimuth", az)

    @property
    def n_paths(self) -> int:
        return self.elevation.shape[-1]

    def direction(self) -> np.ndarray:
        """Coefficients ``(sin(el) cos(az), cos(el))`` stacked as ``(..., L, 2)``."""
        el, az = self.elevation, self.azimuth
        return np.stack([np.sin(el) * np.cos(az), np.cos(el)], axis=-1)

    def __getitem__(self, idx) -> "PathAngles":
        return PathAngles(self.elevation[idx], self.azimuth[idx])


@dataclass(frozen=True)
class StatisticalState:
    """Long-term channel law of every user (the statistical CSI)."""

    distance: np.ndarray  # (K,) meters
    gain: np.ndarray  # (K,) linear average channel gain
    tx_angles: PathAngles  # (K, L)
    rx_angles: PathAngles  # (K, L)

    @property
    def n_users(self) -> int:
        return len(self.gain)

    @property
    def n_paths(self) -> int:
        return self.tx_angles.n_paths

    @property
    def path_variance(self) -> np.ndarray:
        return self.gain / self.n_paths


@dataclass(frozen=True)
class ChannelSample:
    """One channel realization: diagonal path responses plus the angles used."""

    path_gains: np.ndarray  # (K, L) complex, diagonal of Sigma_k
    tx_angles: PathAngles
    rx_angles: PathAngles

    @property
    def sigma(self) -> np.ndarray:
        """Path-response matrices ``(K, L, L)``."""
        g = self.path_gains
        out = np.zeros(g.shape + (g.shape[-1],), dtype=complex)
        idx = np.arange(g.shape[-1])
        out[..., idx, idx] = g
        return out


def propagation_delta(pos, elevation, azimuth):
    """Path-length difference of ``pos`` relative to the region origin.

    ``pos`` is ``(..., 2)``; angles broadcast against the trailing path axis,
    so a ``(L,)`` angle set gives ``(..., L)``.
    """
    pos = np.asarray(pos, dtype=float)
    x = pos[..., 0, None]
    y = pos[..., 1, None]
    return x * np.sin(elevation) * np.cos(azimuth) + y * np.cos(elevation)


def field_response(pos, angles: PathAngles, wavelength: float) -> np.ndarray:
    """Unit-modulus phase vector(s) ``exp(j 2pi/lambda * delta_l)``."""
    delta = propagation_delta(pos, angles.elevation, angles.azimuth)
    return np.exp(1j * (2 * np.pi / wavelength) * delta)


def field_matrix(positions, angles: PathAngles, wavelength: float) -> np.ndarray:
    """Field-response matrix with one column per antenna, ``(L, n)``."""
    positions = np.asarray(positions, dtype=float)
    return np.swapaxes(field_response(positions, angles, wavelength), -1, -2)


def channel_matrix(t, r, sigma, tx_angles: PathAngles, rx_angles: PathAngles,
                   wavelength: float) -> np.ndarray:
    """``F(r)^H Sigma G(t)`` for one user; ``sigma`` may be any ``L_r x L_t`` matrix."""
    sigma = np.asarray(sigma)
    G = field_matrix(t, tx_angles, wavelength)
    F = field_matrix(r, rx_angles, wavelength)
    if sigma.shape[-2:] != (F.shape[-2], G.shape[-2]):
        raise ValueError(
            f"path-response shape {sigma.shape[-2:]} does not match "
            f"{F.shape[-2]} receive and {G.shape[-2]} transmit paths"
        )
    return np.conj(np.swapaxes(F, -1, -2)) @ sigma @ G


@dataclass(frozen=True)
class Link:
    """Geometry of one or a batch of user links with diagonal path responses.

    ``gains`` is ``(..., L)``; ``tx_dir``/``rx_dir`` are ``(..., L, 2)``
    wavenumber-scaled direction coefficients, so the phase of path ``l`` at
    position ``p`` is ``dir[l] @ p``.
    """

    gains: np.ndarray
    tx_dir: np.ndarray
    rx_dir: np.ndarray

    @classmethod
    def from_sample(cls, sample: ChannelSample, wavelength: float) -> "Link":
        k = 2 * np.pi / wavelength
        return cls(
            np.asarray(sample.path_gains, dtype=complex),
            k * sample.tx_angles.direction(),
            k * sample.rx_angles.direction(),
        )

    def __getitem__(self, idx) -> "Link":
        return Link(self.gains[idx], self.tx_dir[idx], self.rx_dir[idx])

    def tx_field(self, t) -> np.ndarray:
        """``G(t)``, shape ``(..., L, N)``."""
        return np.exp(1j * (self.tx_dir @ np.swapaxes(np.asarray(t, dtype=float), -1, -2)))

    def rx_field(self, r) -> np.ndarray:
        """``F(r)``, shape ``(..., L, M)``."""
        return np.exp(1j * (self.rx_dir @ np.swapaxes(np.asarray(r, dtype=float), -1, -2)))

    def weighted_tx(self, t) -> np.ndarray:
        """``Sigma G(t)``."""
        return self.gains[..., :, None] * self.tx_field(t)

    def matrix(self, t, r) -> np.ndarray:
        """Channel ``F(r)^H Sigma G(t)``, shape ``(..., M, N)``."""
        F = self.rx_field(r)
        return np.conj(np.swapaxes(F, -1, -2)) @ self.weighted_tx(t)


def draw_angles(shape, rng: np.random.Generator) -> PathAngles:
    """Elevation uniform on [0, pi]; azimuth with density sin/2 on [0, pi]."""
    elevation = rng.uniform(0.0, np.pi, size=shape)
    azimuth = np.arccos(1.0 - 2.0 * rng.uniform(0.0, 1.0, size=shape))
    return PathAngles(elevation, azimuth)


def draw_statistical_state(config: SystemConfig, rng: np.random.Generator) -> StatisticalState:
    K, L = config.n_users, config.n_paths
    distance = rng.uniform(config.distance_min_m, config.distance_max_m, size=K)
    gain = config.pathloss_ref * distance ** (-config.pathloss_exp)
    tx = draw_angles((K, L), rng)
    rx = draw_angles((K, L), rng)
    return StatisticalState(distance, gain, tx, rx)


def draw_channel_sample(stat: StatisticalState, rng: np.random.Generator,
                        redraw_angles: bool = False) -> ChannelSample:
    """Redraw the path responses ``CN(0, g_k / L)``; angles are reused unless asked."""
    K, L = stat.n_users, stat.n_paths
    scale = np.sqrt(stat.path_variance / 2.0)[:, None]
    z = rng.standard_normal((K, L, 2))
    gains = scale * (z[..., 0] + 1j * z[..., 1])
    if redraw_angles:
        return ChannelSample(gains, draw_angles((K, L), rng), draw_angles((K, L), rng))
    return ChannelSample(gains, stat.tx_angles, stat.rx_angles)
