"""Simplified parametric QoE estimator producing a MOS on the 1..5 scale.

This is a smooth stand-in for a full P.1203 implementation, not a
conformant one. Quality is driven by bits per pixel, scaled per codec,
with no credit for frame rates above 24 fps. Stalling and initial loading
shrink the distance above the floor of 1. Users with a real P.1203 run can
bypass all of this via :func:`attach_external_mos`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import InvalidConfig, MosOutOfRange, UnknownCodec, UnreadableFile
from .session import CODECS, H264, QOE_WINDOW_S, VP9, Impairments, Session, VideoParams, truncate_for_qoe

MOS_MIN = 1.0
MOS_MAX = 5.0
FPS_REFERENCE = 24.0


@dataclass(frozen=True, slots=True)
class MosScore:
    value: float

    def __post_init__(self):
        if not (MOS_MIN <= self.value <= MOS_MAX):
            raise MosOutOfRange(f"MOS {self.value!r} outside [{MOS_MIN}, {MOS_MAX}]")

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class QoeModelConfig:
    bpp_scale: float = 60.0
    codec_efficiency: dict = field(default_factory=lambda: {H264: 1.0, VP9: 1.3})
    stall_count_penalty: float = 0.15
    stall_ratio_penalty: float = 2.0
    loading_penalty: float = 0.02
    fps_reference: float = FPS_REFERENCE

    def __post_init__(self):
        if not (math.isfinite(self.bpp_scale) and self.bpp_scale > 0):
            raise InvalidConfig("bpp_scale must be > 0")
        for name in ("stall_count_penalty", "stall_ratio_penalty", "loading_penalty"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidConfig(f"{name} must be >= 0")
        if self.fps_reference != FPS_REFERENCE:
            raise InvalidConfig(f"fps_reference is fixed at {FPS_REFERENCE:g}")
        eff = {}
        for codec, value in dict(self.codec_efficiency).items():
            try:
                tag = CODECS.canonical(codec)
            except KeyError as exc:
                raise InvalidConfig(exc.args[0]) from None
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise InvalidConfig(f"codec_efficiency[{codec}] must be > 0")
            eff[tag] = float(value)
        object.__setattr__(self, "codec_efficiency", eff)

    def efficiency(self, codec: str) -> float:
        try:
            return self.codec_efficiency[codec]
        except KeyError:
            raise UnknownCodec(codec) from None

    def to_dict(self) -> dict:
        return {f.name: (dict(getattr(self, f.name)) if f.name == "codec_efficiency" else getattr(self, f.name))
                for f in fields(self)}


DEFAULT_CONFIG = QoeModelConfig()


def qoe_config_from_json(doc) -> QoeModelConfig:
    if not isinstance(doc, dict):
        raise InvalidConfig("QoE config must be a JSON object")
    known = {f.name for f in fields(QoeModelConfig)}
    unknown = set(doc) - known
    if unknown:
        raise InvalidConfig(f"unknown QoE config fields {sorted(unknown)}")
    return QoeModelConfig(**doc)


def load_qoe_config(path) -> QoeModelConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UnreadableFile(f"cannot read QoE config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: invalid JSON ({exc})") from exc
    return qoe_config_from_json(doc)


def core_video_quality(p: VideoParams, codec: str, cfg: QoeModelConfig = DEFAULT_CONFIG) -> float:
    eff = cfg.efficiency(codec)
    bpp = p.bitrate / (p.width * p.height * p.fps)
    q = 1.0 + 4.0 * (1.0 - math.exp(-cfg.bpp_scale * eff * bpp))
    if p.fps < cfg.fps_reference:
        q = 1.0 + (q - 1.0) * (p.fps / cfg.fps_reference)
    return min(MOS_MAX, max(MOS_MIN, q))


def impairment_degradation(i: Impairments, duration: float, cfg: QoeModelConfig = DEFAULT_CONFIG) -> float:
    """Multiplier in (0, 1] applied to the quality headroom above MOS 1."""
    return math.exp(
        -cfg.stall_ratio_penalty * (i.stall_total / duration)
        - cfg.stall_count_penalty * i.stall_count
        - cfg.loading_penalty * i.loading_delay
    )


def _mos_value(s: Session, cfg: QoeModelConfig) -> float:
    t = truncate_for_qoe(s)
    q = core_video_quality(t.params, t.codec, cfg)
    m = impairment_degradation(t.impairments, t.duration, cfg)
    return min(MOS_MAX, max(MOS_MIN, 1.0 + (q - 1.0) * m))


def estimate_mos(s: Session, cfg: QoeModelConfig = DEFAULT_CONFIG) -> MosScore:
    return MosScore(_mos_value(s, cfg))


def attach_external_mos(s: Session, mos: float) -> MosScore:
    """Wrap a MOS computed elsewhere; out-of-range values are rejected, never clamped."""
    if isinstance(mos, bool) or not isinstance(mos, (int, float)) or not math.isfinite(mos):
        raise MosOutOfRange(f"session {s.id!r}: MOS {mos!r} is not a finite number")
    if not (MOS_MIN <= mos <= MOS_MAX):
        raise MosOutOfRange(f"session {s.id!r}: MOS {mos!r} outside [{MOS_MIN}, {MOS_MAX}]")
    return MosScore(float(mos))


def mos_arrays(width, height, fps, bitrate, efficiency, stall_count, stall_total, loading_delay, duration,
               cfg: QoeModelConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Vectorized form of :func:`estimate_mos` over column arrays.

    ``efficiency`` is the per-row codec efficiency. Truncation to the QoE
    window is applied here as well.
    """
    fps = np.asarray(fps, dtype=float)
    dur = np.minimum(np.asarray(duration, dtype=float), QOE_WINDOW_S)
    stall = np.minimum(np.asarray(stall_total, dtype=float), dur)
    pps = np.asarray(width, dtype=float) * np.asarray(height, dtype=float) * fps
    bpp = np.asarray(bitrate, dtype=float) / pps
    q = 1.0 + 4.0 * (1.0 - np.exp(-cfg.bpp_scale * np.asarray(efficiency, dtype=float) * bpp))
    q = np.where(fps < cfg.fps_reference, 1.0 + (q - 1.0) * (fps / cfg.fps_reference), q)
    q = np.clip(q, MOS_MIN, MOS_MAX)
    m = np.exp(
        -cfg.stall_ratio_penalty * (stall / dur)
        - cfg.stall_count_penalty * np.asarray(stall_count, dtype=float)
        - cfg.loading_penalty * np.asarray(loading_delay, dtype=float)
    )
    return np.clip(1.0 + (q - 1.0) * m, MOS_MIN, MOS_MAX)
