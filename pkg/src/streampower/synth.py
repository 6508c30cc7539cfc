"""Seeded synthetic session logs.

The real crowdsourced logs are not redistributable, so tests and demos run
on a generated stand-in whose shape is controlled by :class:`SyntheticSpec`.
Output depends only on the SyntheticSpec (numpy PCG64 streams are stable across
platforms and versions).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidSpec
from .session import DESKTOP_PC, H264, LAPTOP, VP9, Impairments, Session, VideoParams

SHARE_TOL = 1e-9


@dataclass(frozen=True)
class Rung:
    width: int
    height: int
    fps: float
    bitrate: float  # bits/second, nominal
    weight: float = 1.0


@dataclass(frozen=True)
class SyntheticSpec:
    n_sessions: int
    device_shares: dict
    codec_shares: dict
    ladder: tuple
    seed: int = 0
    online_share: float = 0.95
    bitrate_jitter: float = 0.35       # sigma of a lognormal multiplier on the rung bitrate
    duration_median_s: float = 240.0
    duration_sigma: float = 0.9
    duration_bounds_s: tuple = (10.0, 3600.0)
    loading_delay_mean_s: float = 1.5
    stall_rate_per_min: float = 0.08
    stall_mean_s: float = 2.5

    def __post_init__(self):
        if isinstance(self.n_sessions, bool) or not isinstance(self.n_sessions, int) or self.n_sessions < 0:
            raise InvalidSpec("n_sessions must be a non-negative integer")
        for name in ("device_shares", "codec_shares"):
            shares = getattr(self, name)
            if not shares:
                raise InvalidSpec(f"{name} is empty")
            if any(not (v >= 0) for v in shares.values()):
                raise InvalidSpec(f"{name} has a negative share")
            if abs(sum(shares.values()) - 1.0) > SHARE_TOL:
                raise InvalidSpec(f"{name} must sum to 1 (got {sum(shares.values())!r})")
        if not self.ladder:
            raise InvalidSpec("ladder is empty")
        for r in self.ladder:
            if r.width <= 0 or r.height <= 0 or r.fps <= 0 or r.bitrate < 0 or r.weight < 0:
                raise InvalidSpec(f"invalid ladder rung {r}")
        if sum(r.weight for r in self.ladder) <= 0:
            raise InvalidSpec("ladder weights sum to zero")
        if not 0.0 <= self.online_share <= 1.0:
            raise InvalidSpec("online_share must be in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpec("seed must be a 64-bit unsigned integer")
        lo, hi = self.duration_bounds_s
        if not 0 < lo <= hi:
            raise InvalidSpec("duration bounds must satisfy 0 < lo <= hi")
        for name in ("bitrate_jitter", "duration_sigma", "loading_delay_mean_s", "stall_rate_per_min", "stall_mean_s"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidSpec(f"{name} must be >= 0")
        if not self.duration_median_s > 0:
            raise InvalidSpec("duration_median_s must be > 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ladder"] = [asdict(r) for r in self.ladder]
        d["duration_bounds_s"] = list(self.duration_bounds_s)
        return d


# (width, height, bits per pixel at 30 fps, selection weight). The QoE model
# rates quality by bits per pixel alone, so bpp rises with resolution here to
# make lower rungs score lower, as they do under a full P.1203 model.
_RESOLUTIONS = (
    (256, 144, 0.010, 0.04),
    (426, 240, 0.012, 0.08),
    (640, 360, 0.014, 0.16),
    (854, 480, 0.017, 0.17),
    (1280, 720, 0.021, 0.20),
    (1920, 1080, 0.026, 0.22),
    (2560, 1440, 0.031, 0.08),
    (3840, 2160, 0.037, 0.05),
)
# (fps, weight, bitrate multiplier relative to the same rung at 30 fps)
_FRAME_RATES = ((24, 0.20, 0.85), (25, 0.15, 0.88), (30, 0.35, 1.0), (50, 0.10, 1.4), (60, 0.20, 1.5))


def youtube_like_ladder() -> tuple:
    """144p..2160p at 24/25/30/50/60 fps.

    High frame rates cost more bitrate, but not proportionally more, so
    their bits per pixel (and modeled quality) is lower.
    """
    rungs = []
    for w, h, bpp30, res_weight in _RESOLUTIONS:
        for fps, fps_weight, mult in _FRAME_RATES:
            bitrate = round(w * h * 30 * bpp30 * mult, -2)
            rungs.append(Rung(w, h, float(fps), float(bitrate), res_weight * fps_weight))
    return tuple(rungs)


DEFAULT_SEED = 20230620
DEFAULT_LAPTOP_SHARE = 0.85


def desktop_mix_spec(n_sessions: int = 100_000, seed: int = DEFAULT_SEED,
                    laptop_share: float = DEFAULT_LAPTOP_SHARE, vp9_share: float = 0.5) -> SyntheticSpec:
    """Two devices, two codecs, a YouTube-style ladder; device mix is tunable."""
    return SyntheticSpec(
        n_sessions=n_sessions,
        device_shares={LAPTOP: laptop_share, DESKTOP_PC: 1.0 - laptop_share},
        codec_shares={H264: 1.0 - vp9_share, VP9: vp9_share},
        ladder=youtube_like_ladder(),
        seed=seed,
    )


def _pick(rng: np.random.Generator, options: list, weights, n: int) -> np.ndarray:
    p = np.asarray(weights, dtype=float)
    return rng.choice(len(options), size=n, p=p / p.sum())


def generate_synthetic(spec: SyntheticSpec) -> list[Session]:
    n = spec.n_sessions
    if n == 0:
        return []
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    devices = list(spec.device_shares)
    codecs = list(spec.codec_shares)
    dev_idx = _pick(rng, devices, list(spec.device_shares.values()), n)
    codec_idx = _pick(rng, codecs, list(spec.codec_shares.values()), n)
    rung_idx = _pick(rng, spec.ladder, [r.weight for r in spec.ladder], n)

    jitter = rng.lognormal(0.0, spec.bitrate_jitter, n) if spec.bitrate_jitter > 0 else np.ones(n)
    lo, hi = spec.duration_bounds_s
    duration = np.clip(np.round(rng.lognormal(math.log(spec.duration_median_s), spec.duration_sigma, n), 1), lo, hi)
    loading = np.round(rng.exponential(spec.loading_delay_mean_s, n), 3) if spec.loading_delay_mean_s > 0 else np.zeros(n)
    stall_count = rng.poisson(spec.stall_rate_per_min * duration / 60.0)
    # sum of `count` exponential stall lengths ~ Gamma(count, mean)
    stall_total = np.where(stall_count > 0, rng.gamma(np.maximum(stall_count, 1), spec.stall_mean_s), 0.0)
    stall_total = np.round(np.minimum(stall_total, duration), 3)
    stall_total = np.where(stall_count > 0, np.maximum(stall_total, 0.001), 0.0)
    online = rng.random(n) < spec.online_share

    ladder = spec.ladder
    sessions = []
    width_digits = max(6, len(str(n - 1)))
    for i in range(n):
        r = ladder[rung_idx[i]]
        bitrate = float(round(r.bitrate * jitter[i]))
        sessions.append(Session(
            id=f"s{i:0{width_digits}d}",
            device=devices[dev_idx[i]],
            codec=codecs[codec_idx[i]],
            params=VideoParams(int(r.width), int(r.height), float(r.fps), bitrate),
            impairments=Impairments(float(loading[i]), int(stall_count[i]), float(stall_total[i])),
            duration=float(duration[i]),
            online=bool(online[i]),
        ))
    return sessions
