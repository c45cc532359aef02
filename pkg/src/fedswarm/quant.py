"""Subtractively dithered uniform scalar quantization with a bit-exact codec.

The quantizer clips each coordinate to [-clip, clip], adds uniform dither of
one step's width, rounds to the code grid, and the receiver subtracts the
same dither after reconstruction. Dither is regenerated from a seed carried
in the payload header, so only codes and the seed cross the wire.

Three modes are supported:

* ``dithered_iid`` -- a fresh dither draw per coordinate; reconstruction
  error is mean-zero, symmetric, variance step^2/12, independent across
  coordinates.
* ``dithered_shared`` -- one dither draw reused by every coordinate of the
  payload; marginals are unchanged but coordinates become correlated.
* ``round_nearest`` -- no dither; the error is a deterministic function of
  the input, bounded by half a step, and not symmetric in distribution.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MODES",
    "DecodeError",
    "QuantizerConfig",
    "QuantizedPayload",
    "quantize",
    "dequantize",
    "quantize_reconstruct",
    "pack_bits",
    "unpack_bits",
    "serialize_payload",
    "deserialize_payload",
]

MODES = ("dithered_iid", "dithered_shared", "round_nearest")

_HEADER = struct.Struct(">HIQ")  # config_id:16, num_coords:32, dither_seed:64
HEADER_BITS = _HEADER.size * 8


class DecodeError(ValueError):
    """Raised when a serialized payload cannot be decoded."""


@dataclass(frozen=True)
class QuantizerConfig:
    """Fixed-rate scalar quantizer: bits per coordinate, clip half-width, mode."""

    bits_per_coord: int
    clip: float
    mode: str = "dithered_iid"

    def __post_init__(self):
        if self.bits_per_coord < 1 or self.bits_per_coord > 62:
            raise ValueError(f"bits_per_coord must be in [1, 62], got {self.bits_per_coord}")
        if not (self.clip > 0):
            raise ValueError(f"clip must be positive, got {self.clip}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def step(self) -> float:
        """Grid step: 2 * clip / 2^bits, always positive."""
        return 2.0 * self.clip / float(2 ** self.bits_per_coord)

    @property
    def config_id(self) -> int:
        """Stable 16-bit identifier used in the wire header."""
        key = f"{self.bits_per_coord}|{self.clip!r}|{self.mode}".encode()
        h = 2166136261
        for b in key:
            h = ((h ^ b) * 16777619) & 0xFFFFFFFF
        return h & 0xFFFF


def _code_dtype(bits: int):
    if bits <= 8:
        return np.uint8
    if bits <= 16:
        return np.uint16
    if bits <= 32:
        return np.uint32
    return np.uint64


def _draw_dither(cfg: QuantizerConfig, n: int, seed: int) -> np.ndarray | float:
    """Dither for an n-coordinate payload; must match between both endpoints."""
    if cfg.mode == "round_nearest":
        return 0.0
    rng = np.random.default_rng(seed)
    half = cfg.step / 2.0
    if cfg.mode == "dithered_shared":
        return float(rng.uniform(-half, half))
    return rng.uniform(-half, half, size=n)


@dataclass(frozen=True)
class QuantizedPayload:
    """Codes plus the dither seed needed to reconstruct; the only uplink object.

    ``codes`` are the unsigned grid indices (offset-binary). The payload
    charges exactly ``num_coords * bits_per_coord`` bits; the fixed header
    and any byte-alignment padding are accounted separately by the transport.
    ``_dither`` is an in-process cache of the sender's draw; it never crosses
    the wire, and a receiver reproduces it exactly from ``dither_seed``.
    """

    codes: np.ndarray
    dither_seed: int
    config: QuantizerConfig
    n_saturated: int = 0
    _dither: np.ndarray | float | None = field(default=None, repr=False, compare=False)

    @property
    def num_coords(self) -> int:
        return int(self.codes.size)

    @property
    def payload_bits(self) -> int:
        return self.num_coords * self.config.bits_per_coord

    @property
    def header_bits(self) -> int:
        pad = 8 * _packed_len(self.num_coords, self.config.bits_per_coord) - self.payload_bits
        return HEADER_BITS + pad


def quantize(v: np.ndarray, cfg: QuantizerConfig, seed: int) -> QuantizedPayload:
    """Clip, dither, and round a vector onto the code grid.

    Out-of-range coordinates saturate at the clip boundary and are tallied in
    ``n_saturated`` (saturated coordinates fall outside the mean-zero error
    model). Non-finite input is rejected.
    """
    x = np.asarray(v, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("input vector must be finite")
    n_sat = int(np.count_nonzero(np.abs(x) > cfg.clip))
    x = np.clip(x, -cfg.clip, cfg.clip)
    u = _draw_dither(cfg, x.size, seed)
    half_range = 2 ** (cfg.bits_per_coord - 1)
    signed = np.round((x + u) / cfg.step)
    signed = np.clip(signed, -half_range, half_range - 1)
    codes = (signed + half_range).astype(_code_dtype(cfg.bits_per_coord))
    return QuantizedPayload(codes=codes, dither_seed=int(seed) & 0xFFFFFFFFFFFFFFFF,
                            config=cfg, n_saturated=n_sat, _dither=u)


def dequantize(p: QuantizedPayload) -> np.ndarray:
    """Reconstruct the vector: grid value minus the regenerated dither."""
    cfg = p.config
    half_range = 2 ** (cfg.bits_per_coord - 1)
    signed = p.codes.astype(np.float64) - half_range
    u = p._dither if p._dither is not None else _draw_dither(cfg, p.num_coords, p.dither_seed)
    return signed * cfg.step - u


def quantize_reconstruct(x: np.ndarray, cfg: QuantizerConfig, seed: int) -> np.ndarray:
    """One-shot quantize-then-dequantize of an array, preserving its shape.

    For 2-D input in ``dithered_shared`` mode each row gets its own single
    draw (a row is one transmitted vector); ``dithered_iid`` draws per entry.
    This is the in-process shortcut used by diagnostics; the wire-exact path
    is quantize/dequantize on payload objects.
    """
    a = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("input array must be finite")
    rng = np.random.default_rng(seed)
    half = cfg.step / 2.0
    if cfg.mode == "round_nearest":
        u = 0.0
    elif cfg.mode == "dithered_shared":
        u = rng.uniform(-half, half, size=a.shape[:-1] + (1,))
    else:
        u = rng.uniform(-half, half, size=a.shape)
    half_range = 2 ** (cfg.bits_per_coord - 1)
    clipped = np.clip(a, -cfg.clip, cfg.clip)
    signed = np.clip(np.round((clipped + u) / cfg.step), -half_range, half_range - 1)
    return signed * cfg.step - u


def _packed_len(n: int, bits: int) -> int:
    return (n * bits + 7) // 8


def pack_bits(codes: np.ndarray, bits: int) -> bytes:
    """Pack unsigned codes into a big-endian bitstream, MSB first.

    Packed length is ceil(n * bits / 8) bytes; trailing pad bits are zero.
    """
    if bits < 1 or bits > 62:
        raise ValueError(f"bits must be in [1, 62], got {bits}")
    arr = np.asarray(codes)
    if arr.size and (np.any(arr < 0) or np.any(arr.astype(np.uint64) >= (1 << bits))):
        raise ValueError(f"codes must fit in {bits} bits")
    arr = arr.astype(np.uint64).reshape(-1, 1)
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint64)
    bitmat = ((arr >> shifts) & 1).astype(np.uint8)
    return np.packbits(bitmat.ravel()).tobytes()


def unpack_bits(data: bytes, bits: int, n: int) -> np.ndarray:
    """Inverse of pack_bits: recover n codes of `bits` bits each."""
    if bits < 1 or bits > 62:
        raise ValueError(f"bits must be in [1, 62], got {bits}")
    need = _packed_len(n, bits)
    if len(data) < need:
        raise DecodeError(f"bitstream too short: {len(data)} bytes for {n}x{bits} bits")
    flat = np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=n * bits)
    bitmat = flat.reshape(n, bits).astype(np.uint64)
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint64)
    return (bitmat << shifts).sum(axis=1, dtype=np.uint64)


def serialize_payload(p: QuantizedPayload) -> bytes:
    """Wire format: header {config_id:16, num_coords:32, dither_seed:64} + codes."""
    header = _HEADER.pack(p.config.config_id, p.num_coords, p.dither_seed)
    return header + pack_bits(p.codes, p.config.bits_per_coord)


def deserialize_payload(data: bytes, registry: dict[int, QuantizerConfig]) -> QuantizedPayload:
    """Decode a serialized payload; the config is looked up by its 16-bit id."""
    if len(data) < _HEADER.size:
        raise DecodeError("payload shorter than fixed header")
    config_id, n, seed = _HEADER.unpack_from(data)
    if config_id not in registry:
        raise DecodeError(f"unknown config id {config_id}")
    cfg = registry[config_id]
    body = data[_HEADER.size:]
    expected = _packed_len(n, cfg.bits_per_coord)
    if len(body) != expected:
        raise DecodeError(f"corrupted bit-length: got {len(body)} bytes, expected {expected}")
    codes = unpack_bits(body, cfg.bits_per_coord, n).astype(_code_dtype(cfg.bits_per_coord))
    return QuantizedPayload(codes=codes, dither_seed=seed, config=cfg)
