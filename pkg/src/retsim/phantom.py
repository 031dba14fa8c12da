"""Eye phantom: a spherical-cap tissue surface with seeded height bumps and
optional quasi-periodic patient motion.

The cap opens upward with its apex at the origin, matching a probe that
approaches from above through the opening.  All heights are metres; the
surface is only defined over a lateral scanning disc.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

NORMAL_FD_STEP_M = 10e-6  # central-difference step for surface normals

_WALK_RATE_HZ = 2.0  # knot rate of the patient-motion drift component


@dataclass(frozen=True)
class PatientMotion:
    """Vertical physiological drift: a breathing sinusoid plus a bounded,
    seeded random walk.  Disabled by default."""

    enabled: bool = False
    amplitude_m: float = 100e-6
    freq_hz: float = 0.2
    seed: int = 0
    max_duration_s: float = 600.0

    def __post_init__(self) -> None:
        if self.amplitude_m < 0.0 or self.freq_hz <= 0.0:
            raise ValueError("amplitude_m must be >= 0 and freq_hz > 0")

    def offset_z(self, t: float) -> float:
        if not self.enabled or self.amplitude_m == 0.0:
            return 0.0
        knots = _walk_knots(self.seed, self.max_duration_s)
        phase = 2.0 * np.pi * _phase_of(self.seed)
        sine = 0.7 * self.amplitude_m * np.sin(2.0 * np.pi * self.freq_hz * t + phase)
        # Piecewise-linear interpolation keeps the drift a pure function of t.
        pos = min(max(t, 0.0), self.max_duration_s) * _WALK_RATE_HZ
        i = int(pos)
        frac = pos - i
        i = min(i, knots.size - 2)
        walk = knots[i] * (1.0 - frac) + knots[i + 1] * frac
        return float(sine + 0.3 * self.amplitude_m * walk)


@lru_cache(maxsize=32)
def _walk_knots(seed: int, max_duration_s: float) -> np.ndarray:
    rng = np.random.default_rng(seed * 7919 + 13)
    n = int(max_duration_s * _WALK_RATE_HZ) + 2
    steps = rng.standard_normal(n) * 0.25
    return np.clip(np.cumsum(steps), -1.0, 1.0)


@lru_cache(maxsize=32)
def _phase_of(seed: int) -> float:
    return float(np.random.default_rng(seed * 104729 + 7).random())


@dataclass(frozen=True)
class TissueModel:
    """Scannable tissue surface.

    `sphere_inner_radius_m = None` degenerates to a flat plane at z = 0,
    useful for controlled focus experiments.  Bump parameters perturb the
    surface with seeded Gaussian bosses/dents whose peak magnitude is scaled
    to exactly `bump_amplitude_m`.
    """

    sphere_inner_radius_m: float | None = 14e-3
    disc_radius_m: float = 5e-3
    bump_count: int = 20
    bump_amplitude_m: float = 50e-6
    bump_min_width_m: float = 0.5e-3
    bump_max_width_m: float = 2e-3
    bump_seed: int = 3
    patient: PatientMotion = field(default_factory=PatientMotion)

    def __post_init__(self) -> None:
        if self.disc_radius_m <= 0.0:
            raise ValueError("disc_radius_m must be positive")
        r = self.sphere_inner_radius_m
        if r is not None and r <= self.disc_radius_m:
            raise ValueError("sphere radius must exceed the scanning disc radius")
        if self.bump_count < 0 or self.bump_amplitude_m < 0.0:
            raise ValueError("bump_count and bump_amplitude_m must be non-negative")
        if not (0.0 < self.bump_min_width_m <= self.bump_max_width_m):
            raise ValueError("bump widths must satisfy 0 < min <= max")

    @property
    def bumps(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return _bump_table(
            self.bump_seed, self.bump_count, self.bump_amplitude_m,
            self.bump_min_width_m, self.bump_max_width_m, self.disc_radius_m,
        )


@lru_cache(maxsize=64)
def _bump_table(
    bump_seed: int,
    bump_count: int,
    bump_amplitude_m: float,
    bump_min_width_m: float,
    bump_max_width_m: float,
    disc_radius_m: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(centers, widths, amplitudes) with the summed field rescaled so its
    extremum over the disc equals bump_amplitude_m."""
    if bump_count == 0 or bump_amplitude_m == 0.0:
        return np.zeros((0, 2)), np.zeros(0), np.zeros(0)
    rng = np.random.default_rng(bump_seed)
    # Rejection-free placement: uniform over a disc slightly inside the edge.
    radii = 0.9 * disc_radius_m * np.sqrt(rng.random(bump_count))
    angles = rng.uniform(0.0, 2.0 * np.pi, bump_count)
    centers = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    widths = rng.uniform(bump_min_width_m, bump_max_width_m, bump_count)
    signs = rng.choice([-1.0, 1.0], bump_count)
    amps = signs * rng.uniform(0.5, 1.0, bump_count)
    # Probe the raw field on a grid to find its extremum, then rescale.
    g = np.linspace(-disc_radius_m, disc_radius_m, 161)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    raw = np.zeros_like(gx)
    for (cx, cy), w, a in zip(centers, widths, amps):
        raw += a * np.exp(-((gx - cx) ** 2 + (gy - cy) ** 2) / (2.0 * w * w))
    peak = float(np.max(np.abs(raw)))
    scale = bump_amplitude_m / peak if peak > 0.0 else 0.0
    return centers, widths, amps * scale


def _bump_height(model: TissueModel, x: float, y: float) -> float:
    centers, widths, amps = model.bumps
    if centers.shape[0] == 0:
        return 0.0
    dx = x - centers[:, 0]
    dy = y - centers[:, 1]
    return float(np.sum(amps * np.exp(-(dx * dx + dy * dy) / (2.0 * widths * widths))))


def surface_height(model: TissueModel, xy, t: float = 0.0) -> float:
    """Height z of the tissue surface at lateral position `xy` and time `t`.

    Raises ValueError outside the scanning disc.
    """
    x, y = float(xy[0]), float(xy[1])
    rr = x * x + y * y
    if rr > model.disc_radius_m**2 + 1e-12:
        raise ValueError("lateral position outside the scanning disc")
    if model.sphere_inner_radius_m is None:
        base = 0.0
    else:
        r = model.sphere_inner_radius_m
        base = r - float(np.sqrt(r * r - rr))  # bowl with apex at the origin
    return base + _bump_height(model, x, y) + model.patient.offset_z(t)


def surface_normal(model: TissueModel, xy, t: float = 0.0) -> np.ndarray:
    """Unit normal pointing away from the tissue (positive z component).

    Uses central differences; the step shrinks near the disc edge so both
    probe points stay on the surface.
    """
    x, y = float(xy[0]), float(xy[1])
    r_here = float(np.hypot(x, y))
    margin = model.disc_radius_m - r_here
    if margin < 0.0:
        raise ValueError("lateral position outside the scanning disc")
    h = min(NORMAL_FD_STEP_M, max(margin / 2.0, 1e-9))
    dzdx = (surface_height(model, (x + h, y), t) - surface_height(model, (x - h, y), t)) / (2 * h)
    dzdy = (surface_height(model, (x, y + h), t) - surface_height(model, (x, y - h), t)) / (2 * h)
    n = np.array([-dzdx, -dzdy, 1.0])
    return n / float(np.linalg.norm(n))


def probe_distance(model: TissueModel, tip, t: float = 0.0) -> float:
    """Signed distance from the probe tip to the surface along the local
    normal (positive above the tissue, non-positive means contact).

    Finds the foot point whose normal line passes through the tip by
    fixed-point iteration on the lateral coordinates; the surface slopes are
    gentle enough (spherical cap plus small bumps) for fast convergence.
    """
    tip = np.asarray(tip, dtype=float)
    if tip.shape != (3,):
        raise ValueError("tip must be a 3-vector")
    xy = tip[:2].copy()
    s = 0.0
    for _ in range(40):
        n = surface_normal(model, xy, t)
        p = np.array([xy[0], xy[1], surface_height(model, xy, t)])
        s = float(n @ (tip - p))
        foot = tip - s * n
        shift = float(np.hypot(foot[0] - xy[0], foot[1] - xy[1]))
        xy = foot[:2]
        rr = float(np.hypot(xy[0], xy[1]))
        if rr > model.disc_radius_m:  # keep the iterate on the surface domain
            xy *= model.disc_radius_m / rr
        if shift < 1e-10:
            break
    return s
