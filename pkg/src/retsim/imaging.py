"""Synthetic pCLE frames and the no-reference sharpness metric driving the
auto-focus loop.

The metric follows the accumulated-difference construction of Crete et al.:
re-blurring a sharp frame removes most of its neighbour-to-neighbour
variation, while re-blurring an already blurred frame changes little.  The
score is 1 minus the worse of the two directional blur ratios, so 1.0 is
perfectly sharp and 0.0 is structureless.

Rendering maps probe-to-tissue distance to a Gaussian defocus width that is
calibrated once against the metric so the default focus profile reproduces
the measured curve: peak score at the optimal working distance and the
in-focus threshold crossed half a focus band away.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

CR_FILTER_LEN = 9  # low-pass support of the blur metric, in pixels
MIN_FRAME_PX = 16

# Intensity falls with distance (dim when the probe is too far, bright and
# saturating when too close), a secondary focus cue alongside sharpness.
GAIN_SLOPE = 0.25
GAIN_MIN, GAIN_MAX = 0.6, 1.4

# Additive detector noise, smoothed well below the metric's pass band so a
# fully defocused frame keeps a small positive score floor.
NOISE_AMP = 0.006
NOISE_SIGMA_PX = 12.0


@dataclass(frozen=True)
class PcleFrame:
    """One grayscale confocal frame with pixels in [0, 1]."""

    pixels: np.ndarray
    timestamp: float = 0.0
    truth_distance_m: float | None = None

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=float)
        if px.ndim != 2 or min(px.shape) < MIN_FRAME_PX:
            raise ValueError(f"frame must be 2-D with min side >= {MIN_FRAME_PX}, got {px.shape}")
        if float(px.min()) < -1e-9 or float(px.max()) > 1.0 + 1e-9:
            raise ValueError("frame pixels must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)


@dataclass(frozen=True)
class FocusProfile:
    """Distance-to-quality law of the probe optics."""

    optimal_distance_m: float = 690e-6
    focus_band_m: float = 200e-6  # score stays above the in-focus threshold inside +/- band/2
    out_of_range_m: float = 1.8e-3  # beyond this the score sits at the floor
    peak_cr: float = 0.61
    floor_cr: float = 0.05

    def __post_init__(self) -> None:
        if not (0.0 < self.optimal_distance_m < self.out_of_range_m):
            raise ValueError("need 0 < optimal_distance_m < out_of_range_m")
        if not (0.0 < self.focus_band_m < 2.0 * self.optimal_distance_m):
            raise ValueError("focus_band_m out of range")
        if not (0.0 <= self.floor_cr < self.peak_cr <= 1.0):
            raise ValueError("need 0 <= floor_cr < peak_cr <= 1")


def _pixels_of(frame) -> np.ndarray:
    if isinstance(frame, PcleFrame):
        return frame.pixels
    return np.asarray(frame, dtype=float)


def _box_filter_axis(img: np.ndarray, axis: int, length: int) -> np.ndarray:
    """Centered running average along one axis with edge-clamped padding.

    Taps are accumulated in ascending offset order; the nested-loop reference
    implementation mirrors that order so the two agree bitwise.
    """
    half = length // 2
    idx = np.arange(img.shape[axis])
    acc: np.ndarray | None = None
    for k in range(-half, half + 1):
        take = np.clip(idx + k, 0, img.shape[axis] - 1)
        sl = np.take(img, take, axis=axis)
        acc = sl if acc is None else acc + sl
    assert acc is not None
    return acc / length


def _directional_blur_ratio(px: np.ndarray, axis: int, filter_len: int) -> tuple[float, float]:
    """Return (d_total, blur_ratio) for backward differences along `axis`."""
    if axis == 0:
        diff = np.abs(px[1:, :] - px[:-1, :])
    else:
        diff = np.abs(px[:, 1:] - px[:, :-1])
    d_total = float(np.sum(diff))
    if d_total == 0.0:
        return 0.0, 0.0
    blurred = _box_filter_axis(px, axis, filter_len)
    if axis == 0:
        bdiff = np.abs(blurred[1:, :] - blurred[:-1, :])
    else:
        bdiff = np.abs(blurred[:, 1:] - blurred[:, :-1])
    d_kept = float(np.sum(np.maximum(0.0, diff - bdiff)))
    return d_total, (d_total - d_kept) / d_total


def cr_score(frame, filter_len: int = CR_FILTER_LEN) -> float:
    """No-reference sharpness score in [0, 1]; higher is sharper.

    A direction with zero total variation carries no blur information and is
    ignored; a fully constant frame scores 0 by definition.
    """
    px = _pixels_of(frame)
    if px.ndim != 2:
        raise ValueError("frame must be 2-D")
    if min(px.shape) < filter_len:
        raise ValueError(f"frame smaller than the metric's filter support ({filter_len})")
    dx, blur_x = _directional_blur_ratio(px, 0, filter_len)
    dy, blur_y = _directional_blur_ratio(px, 1, filter_len)
    if dx == 0.0 and dy == 0.0:
        return 0.0
    return 1.0 - max(blur_x, blur_y)


def lowpass(frame, filter_len: int = CR_FILTER_LEN) -> PcleFrame:
    """Apply the metric's own averaging filter along both axes."""
    px = _pixels_of(frame)
    out = _box_filter_axis(_box_filter_axis(px, 0, filter_len), 1, filter_len)
    ts = frame.timestamp if isinstance(frame, PcleFrame) else 0.0
    td = frame.truth_distance_m if isinstance(frame, PcleFrame) else None
    return PcleFrame(np.clip(out, 0.0, 1.0), timestamp=ts, truth_distance_m=td)


def intensity(frame) -> float:
    """Mean pixel value; dims in back-focus, brightens in front-focus."""
    return float(np.mean(_pixels_of(frame)))


# ---------------------------------------------------------------------------
# tissue texture and rendering


@dataclass(frozen=True)
class TissueTexture:
    """Periodic grayscale tile standing in for the retinal micro-structure.

    The tile repeats over the plane; `half_extent_m` bounds the lateral region
    a probe is allowed to image.  `key` identifies procedurally generated
    textures so calibration results can be cached.
    """

    tile: np.ndarray
    pitch_m: float = 2.5e-6
    half_extent_m: float = 6e-3
    key: str | None = None

    def __post_init__(self) -> None:
        tile = np.asarray(self.tile, dtype=float)
        if tile.ndim != 2 or min(tile.shape) < 64:
            raise ValueError("texture tile must be 2-D with min side >= 64")
        if self.pitch_m <= 0.0 or self.half_extent_m <= 0.0:
            raise ValueError("pitch_m and half_extent_m must be positive")
        object.__setattr__(self, "tile", tile)


COARSE_WEIGHT = 0.6
COARSE_SIGMA_PX = 6.0


def make_default_texture(
    seed: int = 7,
    size: int = 1024,
    pitch_m: float = 2.5e-6,
    half_extent_m: float = 6e-3,
    contrast: float = 0.16,
) -> TissueTexture:
    """Seeded speckle texture around mid-gray, clipped to [0, 1].

    Fine speckle carries the sharpness signal; a weaker coarse component
    keeps some gradient energy alive under heavy defocus so the score decays
    gradually instead of collapsing straight to the floor.
    """
    rng = np.random.default_rng(seed)
    fine = rng.standard_normal((size, size))
    coarse = gaussian_filter(rng.standard_normal((size, size)), COARSE_SIGMA_PX, mode="wrap")
    coarse = coarse / coarse.std()
    tile = np.clip(0.5 + contrast * (fine + COARSE_WEIGHT * coarse), 0.0, 1.0)
    key = f"speckle:{seed}:{size}:{pitch_m:.3e}:{half_extent_m:.3e}:{contrast:.4f}"
    return TissueTexture(tile, pitch_m=pitch_m, half_extent_m=half_extent_m, key=key)


def sample_window(texture: TissueTexture, center_xy, frame_px: int, fov_m: float) -> np.ndarray:
    """Bilinear sample of a square window centred at `center_xy` (metres).

    The tile wraps periodically, but the window centre plus half the field of
    view must stay inside the texture's lateral extent.
    """
    cx, cy = float(center_xy[0]), float(center_xy[1])
    half_fov = fov_m / 2.0
    if max(abs(cx), abs(cy)) + half_fov > texture.half_extent_m:
        raise ValueError("sample window exceeds texture extent")
    pitch_w = fov_m / frame_px
    offsets = (np.arange(frame_px) - (frame_px - 1) / 2.0) * pitch_w
    rows = (cx + offsets) / texture.pitch_m
    cols = (cy + offsets) / texture.pitch_m
    h, w = texture.tile.shape
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    r0m, r1m = r0 % h, (r0 + 1) % h
    c0m, c1m = c0 % w, (c0 + 1) % w
    t = texture.tile
    top = t[np.ix_(r0m, c0m)] * (1.0 - fc) + t[np.ix_(r0m, c1m)] * fc
    bot = t[np.ix_(r1m, c0m)] * (1.0 - fc) + t[np.ix_(r1m, c1m)] * fc
    return top * (1.0 - fr[:, 0])[:, None] + bot * fr[:, 0][:, None]


@dataclass(frozen=True)
class SigmaLaw:
    """Distance-to-defocus mapping: sigma = sigma_min + k * |d - d_opt|, clamped."""

    sigma_min_px: float
    gain_px_per_m: float
    sigma_max_px: float

    def sigma_for(self, distance_m: float, profile: FocusProfile) -> float:
        s = self.sigma_min_px + self.gain_px_per_m * abs(distance_m - profile.optimal_distance_m)
        return float(np.clip(s, self.sigma_min_px, self.sigma_max_px))


# Calibrated once against the default texture/profile at 128 px / 300 um FOV;
# see calibrate_sigma_law and the regression test that re-derives these.
DEFAULT_SIGMA_LAW = SigmaLaw(
    sigma_min_px=1.168553387204156,
    gain_px_per_m=4068.4031994071443,
    sigma_max_px=7.396822671805825,
)

_LAW_CACHE: dict[tuple, SigmaLaw] = {}


def _noise_field(shape: tuple[int, int], seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = gaussian_filter(rng.standard_normal(shape), NOISE_SIGMA_PX, mode="reflect")
    std = float(n.std())
    if std <= 0.0:
        return np.zeros(shape)
    return n * (NOISE_AMP / std)


def _apply_optics(window: np.ndarray, sigma_px: float, gain: float, seed: int) -> np.ndarray:
    img = window
    if sigma_px > 1e-3:
        img = gaussian_filter(img, sigma_px, mode="reflect")
    img = img * gain + _noise_field(img.shape, seed)
    return np.clip(img, 0.0, 1.0)


def _calibration_score(
    texture: TissueTexture, sigma_px: float, frame_px: int, fov_m: float
) -> float:
    centers = [(0.0, 0.0), (0.35e-3, 0.2e-3), (-0.4e-3, 0.15e-3)]
    scores = []
    for i, c in enumerate(centers):
        window = sample_window(texture, c, frame_px, fov_m)
        scores.append(cr_score(_apply_optics(window, sigma_px, 1.0, 101 + i)))
    return float(np.mean(scores))


def _solve_sigma(texture: TissueTexture, target: float, lo: float, hi: float,
                 frame_px: int, fov_m: float) -> float:
    f_lo = _calibration_score(texture, lo, frame_px, fov_m)
    f_hi = _calibration_score(texture, hi, frame_px, fov_m)
    if f_lo < target:
        raise ValueError(f"texture too soft: score {f_lo:.3f} at sigma {lo} below target {target}")
    if f_hi > target:
        raise ValueError(f"defocus range too small: score {f_hi:.3f} at sigma {hi} above {target}")
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if _calibration_score(texture, mid, frame_px, fov_m) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate_sigma_law(
    texture: TissueTexture,
    profile: FocusProfile,
    frame_px: int = 128,
    fov_m: float = 300e-6,
    in_focus_score: float = 0.47,
) -> SigmaLaw:
    """Solve the defocus law so rendered frames reproduce the focus profile.

    Three scores pin the law: the peak score at the optimal distance, the
    in-focus threshold half a band away, and the floor at the edge of range.
    """
    sigma_peak = _solve_sigma(texture, profile.peak_cr, 0.0, 8.0, frame_px, fov_m)
    sigma_edge = _solve_sigma(texture, in_focus_score, sigma_peak, 14.0, frame_px, fov_m)
    gain = (sigma_edge - sigma_peak) / (profile.focus_band_m / 2.0)
    floor_target = max(profile.floor_cr + 0.01, profile.floor_cr * 1.2)
    try:
        sigma_floor = _solve_sigma(texture, floor_target, sigma_edge, 30.0, frame_px, fov_m)
    except ValueError:
        sigma_floor = 30.0
    return SigmaLaw(sigma_min_px=sigma_peak, gain_px_per_m=gain, sigma_max_px=sigma_floor)


def sigma_law_for(
    texture: TissueTexture,
    profile: FocusProfile,
    frame_px: int = 128,
    fov_m: float = 300e-6,
) -> SigmaLaw:
    """Cached defocus law for a texture/profile pair (calibrates on first use)."""
    if texture.key is None:
        return calibrate_sigma_law(texture, profile, frame_px, fov_m)
    cache_key = (
        texture.key, frame_px, round(fov_m, 9),
        profile.optimal_distance_m, profile.focus_band_m, profile.out_of_range_m,
        profile.peak_cr, profile.floor_cr,
    )
    law = _LAW_CACHE.get(cache_key)
    if law is None:
        if cache_key == _DEFAULT_LAW_KEY:
            law = DEFAULT_SIGMA_LAW
        else:
            law = calibrate_sigma_law(texture, profile, frame_px, fov_m)
        _LAW_CACHE[cache_key] = law
    return law


_DEFAULT_PROFILE = FocusProfile()
_DEFAULT_LAW_KEY = (
    f"speckle:7:1024:{2.5e-6:.3e}:{6e-3:.3e}:{0.16:.4f}", 128, round(300e-6, 9),
    _DEFAULT_PROFILE.optimal_distance_m, _DEFAULT_PROFILE.focus_band_m,
    _DEFAULT_PROFILE.out_of_range_m, _DEFAULT_PROFILE.peak_cr, _DEFAULT_PROFILE.floor_cr,
)


def render_frame(
    texture: TissueTexture,
    lateral_pos,
    distance_m: float,
    profile: FocusProfile,
    noise_seed: int,
    *,
    frame_px: int = 128,
    fov_m: float = 300e-6,
    law: SigmaLaw | None = None,
    timestamp: float = 0.0,
) -> PcleFrame:
    """Render one frame for a probe at `distance_m` above the tissue.

    Deterministic for identical arguments: the same texture window is blurred
    by the calibrated defocus width, scaled by the distance-dependent
    intensity gain, and perturbed by noise drawn from `noise_seed`.
    """
    if frame_px < MIN_FRAME_PX:
        raise ValueError(f"frame_px must be >= {MIN_FRAME_PX}")
    if law is None:
        law = sigma_law_for(texture, profile, frame_px, fov_m)
    window = sample_window(texture, lateral_pos, frame_px, fov_m)
    sigma = law.sigma_for(distance_m, profile)
    rel = (profile.optimal_distance_m - distance_m) / profile.optimal_distance_m
    gain = float(np.clip(1.0 + GAIN_SLOPE * rel, GAIN_MIN, GAIN_MAX))
    img = _apply_optics(window, sigma, gain, noise_seed)
    return PcleFrame(img, timestamp=timestamp, truth_distance_m=distance_m)


def focus_sweep(
    texture: TissueTexture,
    profile: FocusProfile,
    distances_m,
    *,
    frame_px: int = 128,
    fov_m: float = 300e-6,
    law: SigmaLaw | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Score a stationary probe over a range of distances.

    Returns an (N, 2) array of (distance_m, cr_score).  Distances must be
    strictly increasing and non-empty.
    """
    d = np.asarray(distances_m, dtype=float)
    if d.ndim != 1 or d.size == 0:
        raise ValueError("distances_m must be a non-empty 1-D sequence")
    if np.any(np.diff(d) <= 0.0):
        raise ValueError("distances_m must be strictly increasing")
    if law is None:
        law = sigma_law_for(texture, profile, frame_px, fov_m)
    out = np.empty((d.size, 2))
    for i, dist in enumerate(d):
        frame = render_frame(
            texture, (0.0, 0.0), float(dist), profile, seed * 100003 + i,
            frame_px=frame_px, fov_m=fov_m, law=law,
        )
        out[i, 0] = dist
        out[i, 1] = cr_score(frame)
    return out


# ---------------------------------------------------------------------------
# frame I/O


def write_pgm(frame, path) -> None:
    """Write a frame as binary 8-bit PGM (P5, maxval 255)."""
    px = _pixels_of(frame)
    data = np.clip(np.rint(px * 255.0), 0, 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary 8-bit PGM back into a float array in [0, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    if fields[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError("only maxval 255 supported")
    pos += 1  # single whitespace after the header
    data = np.frombuffer(blob, dtype=np.uint8, count=w * h, offset=pos)
    return data.reshape((h, w)).astype(float) / 255.0
