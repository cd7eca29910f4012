"""Effect-chain parameter set and its normalized [0,1] encoding.

The search operates on 26 coordinates: 15 equalizer band gains, one scalar
per optional effect (distortion drive, bitcrush depth, pitch shift, delay
time), three reverb settings, and four activation coordinates thresholded
at 0.5.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParamValidationError

PARAMS_SCHEMA_VERSION = 1

NUM_EQ_BANDS = 15
NUM_PARAMS = 26

# ISO 2/3-octave graphic-EQ centers, Hz.
EQ_BAND_HZ = (
    25, 40, 63, 100, 160, 250, 400, 630, 1000, 1600, 2500, 4000, 6300, 10000, 16000,
)

EQ_GAIN_DB_RANGE = (-12.0, 12.0)
DISTORTION_DRIVE_DB_RANGE = (0.0, 30.0)
BITCRUSH_BIT_DEPTH_RANGE = (4.0, 16.0)
PITCH_SHIFT_SEMITONES_RANGE = (-12.0, 12.0)
DELAY_SECONDS_RANGE = (0.05, 1.0)
REVERB_RANGE = (0.0, 1.0)

# Chain execution order; equalizer and reverb have no activation flag.
STAGE_EQUALIZER = "equalizer"
STAGE_DISTORTION = "distortion"
STAGE_BITCRUSH = "bitcrush"
STAGE_PITCH_SHIFT = "pitch_shift"
STAGE_DELAY = "delay"
STAGE_REVERB = "reverb"
ALL_STAGES = (
    STAGE_EQUALIZER,
    STAGE_DISTORTION,
    STAGE_BITCRUSH,
    STAGE_PITCH_SHIFT,
    STAGE_DELAY,
    STAGE_REVERB,
)

# Scalar coordinate ranges in unit-vector order (indices 0..21).
_SCALAR_RANGES = tuple(
    [EQ_GAIN_DB_RANGE] * NUM_EQ_BANDS
    + [
        DISTORTION_DRIVE_DB_RANGE,
        BITCRUSH_BIT_DEPTH_RANGE,
        PITCH_SHIFT_SEMITONES_RANGE,
        DELAY_SECONDS_RANGE,
        REVERB_RANGE,
        REVERB_RANGE,
        REVERB_RANGE,
    ]
)
_SCALAR_LO = np.array([lo for lo, _ in _SCALAR_RANGES])
_SCALAR_HI = np.array([hi for _, hi in _SCALAR_RANGES])
ACTIVATION_THRESHOLD = 0.5


def _check_range(name: str, value: float, lo: float, hi: float) -> float:
    value = float(value)
    if not np.isfinite(value) or not lo <= value <= hi:
        raise ParamValidationError(f"{name}={value!r} outside [{lo}, {hi}]")
    return value


@dataclass(frozen=True)
class FxParams:
    """Concrete settings for the six-effect chain: 22 scalars + 4 flags."""

    eq_gain_db: tuple
    distortion_drive_db: float
    bitcrush_bit_depth: float
    pitch_shift_semitones: float
    delay_seconds: float
    reverb_room_size: float
    reverb_damping: float
    reverb_wet_level: float
    enable_distortion: bool
    enable_bitcrush: bool
    enable_pitch_shift: bool
    enable_delay: bool

    def __post_init__(self):
        gains = tuple(float(g) for g in self.eq_gain_db)
        if len(gains) != NUM_EQ_BANDS:
            raise ParamValidationError(
                f"eq_gain_db must hold {NUM_EQ_BANDS} values, got {len(gains)}"
            )
        lo, hi = EQ_GAIN_DB_RANGE
        for i, g in enumerate(gains):
            _check_range(f"eq_gain_db[{i}]", g, lo, hi)
        object.__setattr__(self, "eq_gain_db", gains)
        for name, rng in (
            ("distortion_drive_db", DISTORTION_DRIVE_DB_RANGE),
            ("bitcrush_bit_depth", BITCRUSH_BIT_DEPTH_RANGE),
            ("pitch_shift_semitones", PITCH_SHIFT_SEMITONES_RANGE),
            ("delay_seconds", DELAY_SECONDS_RANGE),
            ("reverb_room_size", REVERB_RANGE),
            ("reverb_damping", REVERB_RANGE),
            ("reverb_wet_level", REVERB_RANGE),
        ):
            object.__setattr__(self, name, _check_range(name, getattr(self, name), *rng))
        for name in ("enable_distortion", "enable_bitcrush", "enable_pitch_shift", "enable_delay"):
            object.__setattr__(self, name, bool(getattr(self, name)))

    def to_dict(self) -> dict:
        return {
            "schema_version": PARAMS_SCHEMA_VERSION,
            "eq_gain_db": list(self.eq_gain_db),
            "distortion_drive_db": self.distortion_drive_db,
            "bitcrush_bit_depth": self.bitcrush_bit_depth,
            "pitch_shift_semitones": self.pitch_shift_semitones,
            "delay_seconds": self.delay_seconds,
            "reverb_room_size": self.reverb_room_size,
            "reverb_damping": self.reverb_damping,
            "reverb_wet_level": self.reverb_wet_level,
            "enable_distortion": self.enable_distortion,
            "enable_bitcrush": self.enable_bitcrush,
            "enable_pitch_shift": self.enable_pitch_shift,
            "enable_delay": self.enable_delay,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FxParams":
        if not isinstance(payload, dict):
            raise ParamValidationError("parameter payload must be a JSON object")
        version = payload.get("schema_version")
        if version != PARAMS_SCHEMA_VERSION:
            raise ParamValidationError(
                f"schema_version {version!r} does not match expected {PARAMS_SCHEMA_VERSION}"
            )
        fields = {k: v for k, v in payload.items() if k != "schema_version"}
        expected = {
            "eq_gain_db", "distortion_drive_db", "bitcrush_bit_depth",
            "pitch_shift_semitones", "delay_seconds", "reverb_room_size",
            "reverb_damping", "reverb_wet_level", "enable_distortion",
            "enable_bitcrush", "enable_pitch_shift", "enable_delay",
        }
        missing = expected - fields.keys()
        extra = fields.keys() - expected
        if missing:
            raise ParamValidationError(f"missing parameter fields: {sorted(missing)}")
        if extra:
            raise ParamValidationError(f"unknown parameter fields: {sorted(extra)}")
        fields["eq_gain_db"] = tuple(fields["eq_gain_db"])
        return cls(**fields)


def neutral_params() -> FxParams:
    """Settings under which the full chain is an identity transform."""
    return FxParams(
        eq_gain_db=(0.0,) * NUM_EQ_BANDS,
        distortion_drive_db=0.0,
        bitcrush_bit_depth=16.0,
        pitch_shift_semitones=0.0,
        delay_seconds=DELAY_SECONDS_RANGE[0],
        reverb_room_size=0.0,
        reverb_damping=0.0,
        reverb_wet_level=0.0,
        enable_distortion=False,
        enable_bitcrush=False,
        enable_pitch_shift=False,
        enable_delay=False,
    )


def as_unit_vector(coords) -> np.ndarray:
    """Validate and return a read-only point in [0,1]^26."""
    u = np.asarray(coords, dtype=np.float64)
    if u.shape != (NUM_PARAMS,):
        raise ParamValidationError(f"unit vector must have shape ({NUM_PARAMS},), got {u.shape}")
    if not np.all(np.isfinite(u)) or np.any(u < 0.0) or np.any(u > 1.0):
        raise ParamValidationError("unit vector coordinates must lie in [0, 1]")
    u = np.ascontiguousarray(u)
    u.setflags(write=False)
    return u


def decode_params(u) -> FxParams:
    """Map a unit vector to concrete settings (affine scalars, thresholded flags)."""
    u = as_unit_vector(u)
    scalars = _SCALAR_LO + u[:22] * (_SCALAR_HI - _SCALAR_LO)
    flags = u[22:] >= ACTIVATION_THRESHOLD
    return FxParams(
        eq_gain_db=tuple(scalars[:NUM_EQ_BANDS]),
        distortion_drive_db=scalars[15],
        bitcrush_bit_depth=scalars[16],
        pitch_shift_semitones=scalars[17],
        delay_seconds=scalars[18],
        reverb_room_size=scalars[19],
        reverb_damping=scalars[20],
        reverb_wet_level=scalars[21],
        enable_distortion=bool(flags[0]),
        enable_bitcrush=bool(flags[1]),
        enable_pitch_shift=bool(flags[2]),
        enable_delay=bool(flags[3]),
    )


def encode_params(p: FxParams) -> np.ndarray:
    """Inverse of :func:`decode_params`; flags encode as exactly 0.0 / 1.0."""
    scalars = np.array(
        list(p.eq_gain_db)
        + [
            p.distortion_drive_db,
            p.bitcrush_bit_depth,
            p.pitch_shift_semitones,
            p.delay_seconds,
            p.reverb_room_size,
            p.reverb_damping,
            p.reverb_wet_level,
        ]
    )
    coords = np.empty(NUM_PARAMS)
    coords[:22] = (scalars - _SCALAR_LO) / (_SCALAR_HI - _SCALAR_LO)
    coords[22] = 1.0 if p.enable_distortion else 0.0
    coords[23] = 1.0 if p.enable_bitcrush else 0.0
    coords[24] = 1.0 if p.enable_pitch_shift else 0.0
    coords[25] = 1.0 if p.enable_delay else 0.0
    # affine inversion can land a hair outside [0,1]
    np.clip(coords, 0.0, 1.0, out=coords)
    return as_unit_vector(coords)


def validate_stages(stages) -> tuple:
    """Normalize a stage subset, preserving chain order."""
    requested = list(stages)
    unknown = [s for s in requested if s not in ALL_STAGES]
    if unknown:
        raise ParamValidationError(
            f"unknown stages {unknown}; valid: {', '.join(ALL_STAGES)}"
        )
    if not requested:
        raise ParamValidationError("at least one stage must be enabled")
    return tuple(s for s in ALL_STAGES if s in requested)
