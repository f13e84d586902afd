"""Dataset generation and ingestion, checkpoint persistence, sample export.

All binary formats are little-endian with a trailing crc32 so corruption is
caught on read.  Data entering the pipeline is linearly scaled to [-1, 1] with
the affine record kept alongside, so original units can always be recovered
exactly.
"""

import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .metrics import SampleSet
from .predictor import PredictorNet

__all__ = [
    "ScalingRecord",
    "Dataset",
    "Checkpoint",
    "IdxFormatError",
    "IdxMagicError",
    "IdxTruncatedError",
    "IdxDimensionError",
    "CheckpointFormatError",
    "CheckpointVersionError",
    "CheckpointChecksumError",
    "CheckpointShapeError",
    "SYNTHETIC_KINDS",
    "gen_synthetic",
    "read_idx",
    "write_checkpoint",
    "read_checkpoint",
    "write_samples",
    "read_samples",
    "write_sample_grid",
    "derived_rng",
]

CHECKPOINT_MAGIC = b"GPFN"
SAMPLES_MAGIC = b"GPFS"
FORMAT_VERSION = 1

SYNTHETIC_KINDS = ("two_gaussians", "eight_mode_ring", "checkerboard")

_REGIME_CODES = {"gpfn": 0, "bfn": 1}
_REGIME_NAMES = {v: k for k, v in _REGIME_CODES.items()}

RING_RADIUS = 1.0
RING_STD = 0.05
BLOB_OFFSET = 2.0
BLOB_STD = 0.4


class IdxFormatError(ValueError):
    """Base for malformed IDX input."""


class IdxMagicError(IdxFormatError):
    pass


class IdxTruncatedError(IdxFormatError):
    pass


class IdxDimensionError(IdxFormatError):
    pass


class CheckpointFormatError(ValueError):
    """Base for malformed checkpoint files."""


class CheckpointVersionError(CheckpointFormatError):
    pass


class CheckpointChecksumError(CheckpointFormatError):
    pass


class CheckpointShapeError(CheckpointFormatError):
    pass


def derived_rng(seed: int, *labels) -> np.random.Generator:
    """Independent generator keyed on (seed, labels); stable across runs."""
    key = tuple(zlib.crc32(str(l).encode()) for l in labels)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class ScalingRecord:
    """Affine map scaled = (raw - offset) / scale; inverts exactly."""

    offset: float
    scale: float

    def apply(self, raw: np.ndarray) -> np.ndarray:
        return (np.asarray(raw, dtype=np.float64) - self.offset) / self.scale

    def invert(self, scaled: np.ndarray) -> np.ndarray:
        return np.asarray(scaled, dtype=np.float64) * self.scale + self.offset


@dataclass
class Dataset:
    """Samples scaled to [-1, 1] plus labels, optional image shape, and scaling."""

    samples: np.ndarray
    scaling: ScalingRecord
    labels: np.ndarray | None = None
    image_shape: tuple | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError("samples must be an (n, d) matrix")
        if np.any(np.abs(self.samples) > 1.0 + 1e-12):
            raise ValueError("samples must lie in [-1, 1]")

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def sample_set(self) -> SampleSet:
        return SampleSet(data=self.samples, image_shape=self.image_shape, labels=self.labels)


def _scaled_dataset(raw: np.ndarray, labels: np.ndarray) -> Dataset:
    scale = max(float(np.max(np.abs(raw))), 1e-12)
    rec = ScalingRecord(offset=0.0, scale=scale)
    return Dataset(samples=rec.apply(raw), scaling=rec, labels=labels)


def gen_synthetic(kind: str, n: int, rng: np.random.Generator) -> Dataset:
    """Labeled 2-D toy datasets; mode labels feed the feature extractor.

    Modes are assigned round-robin so every label is present whenever n
    reaches the mode count.
    """
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown synthetic dataset {kind!r}; expected one of {SYNTHETIC_KINDS}")
    if n < 1:
        raise ValueError("n must be >= 1")
    idx = np.arange(n)
    if kind == "two_gaussians":
        labels = idx % 2
        centers = np.array([[-BLOB_OFFSET, 0.0], [BLOB_OFFSET, 0.0]])
        raw = centers[labels] + BLOB_STD * rng.standard_normal((n, 2))
    elif kind == "eight_mode_ring":
        labels = idx % 8
        angles = 2.0 * np.pi * labels / 8
        centers = RING_RADIUS * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        raw = centers + RING_STD * rng.standard_normal((n, 2))
    else:  # checkerboard: the 8 "black" cells of a 4x4 board on [-2, 2]^2
        cells = [(i, j) for i in range(4) for j in range(4) if (i + j) % 2 == 0]
        labels = idx % 8
        corners = np.array([cells[l] for l in labels], dtype=np.float64) - 2.0
        raw = corners + rng.uniform(0.0, 1.0, size=(n, 2))
    return _scaled_dataset(raw, labels.astype(int))


# --- IDX ingestion ----------------------------------------------------------

_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801
_MAX_IDX_ELEMENTS = 1 << 31


def _read_idx_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise IdxTruncatedError(f"{path}: too short for an IDX header")
    magic = int.from_bytes(blob[0:4], "big")
    if magic == _IDX_IMAGES_MAGIC:
        ndim = 3
    elif magic == _IDX_LABELS_MAGIC:
        ndim = 1
    else:
        raise IdxMagicError(f"{path}: bad magic 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise IdxTruncatedError(f"{path}: header truncated")
    dims = [int.from_bytes(blob[4 + 4 * i : 8 + 4 * i], "big") for i in range(ndim)]
    total = 1
    for d in dims:
        total *= d
    if total <= 0 or total > _MAX_IDX_ELEMENTS:
        raise IdxDimensionError(f"{path}: implausible dimensions {dims}")
    if len(blob) != header + total:
        raise IdxTruncatedError(
            f"{path}: payload is {len(blob) - header} bytes, expected {total}"
        )
    return np.frombuffer(blob, dtype=np.uint8, offset=header).reshape(dims)


def read_idx(images_path, labels_path=None, downsample: int = 1) -> Dataset:
    """Load a big-endian IDX image file (and optional label file).

    Pixels map linearly onto [-1, 1] (0 -> -1, 255 -> +1).  downsample of 2
    or 4 block-averages before scaling; the image side must divide evenly.
    """
    imgs = _read_idx_array(images_path)
    if imgs.ndim != 1 and imgs.ndim != 3:
        raise IdxDimensionError(f"{images_path}: unexpected rank {imgs.ndim}")
    if imgs.ndim == 1:
        raise IdxMagicError(f"{images_path}: is a label file, expected images")
    n, rows, cols = imgs.shape
    if downsample not in (1, 2, 4):
        raise ValueError(f"downsample must be 1, 2, or 4, got {downsample}")
    if rows % downsample or cols % downsample:
        raise IdxDimensionError(
            f"{images_path}: {rows}x{cols} images cannot be block-averaged by {downsample}"
        )
    pix = imgs.astype(np.float64)
    if downsample > 1:
        rows, cols = rows // downsample, cols // downsample
        pix = pix.reshape(n, rows, downsample, cols, downsample).mean(axis=(2, 4))
    rec = ScalingRecord(offset=127.5, scale=127.5)
    labels = None
    if labels_path is not None:
        lab = _read_idx_array(labels_path)
        if lab.ndim != 1:
            raise IdxMagicError(f"{labels_path}: is an image file, expected labels")
        if lab.shape[0] != n:
            raise IdxDimensionError(f"label count {lab.shape[0]} does not match {n} images")
        labels = lab.astype(int)
    return Dataset(
        samples=rec.apply(pix.reshape(n, rows * cols)),
        scaling=rec,
        labels=labels,
        image_shape=(rows, cols),
    )


# --- checkpoints ------------------------------------------------------------


@dataclass
class Checkpoint:
    """Everything needed to restore a trained model and resume sampling."""

    regime: str
    T: int
    shift: float
    sigma1: float
    data_dim: int
    time_dim: int
    hidden: tuple
    params: list
    ema_params: list
    step: int
    seed: int
    version: int = FORMAT_VERSION

    @classmethod
    def from_nets(cls, net: PredictorNet, ema: PredictorNet, regime: str, T: int,
                  shift: float, sigma1: float, step: int, seed: int) -> "Checkpoint":
        return cls(
            regime=regime,
            T=T,
            shift=shift,
            sigma1=sigma1,
            data_dim=net.data_dim,
            time_dim=net.time_dim,
            hidden=tuple(net.hidden),
            params=[np.ascontiguousarray(p, dtype="<f4") for p in net.params()],
            ema_params=[np.ascontiguousarray(p, dtype="<f4") for p in ema.params()],
            step=step,
            seed=seed,
        )

    def _param_shapes(self) -> list:
        sizes = [self.data_dim + self.time_dim, *self.hidden, self.data_dim]
        shapes = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            shapes.extend([(fan_out, fan_in), (fan_out,)])
        return shapes

    def to_net(self, use_ema: bool = True) -> PredictorNet:
        arrays = self.ema_params if use_ema else self.params
        net = PredictorNet(
            data_dim=self.data_dim,
            time_dim=self.time_dim,
            hidden=tuple(self.hidden),
            weights=[np.array(a, dtype=np.float64) for a in arrays[0::2]],
            biases=[np.array(a, dtype=np.float64) for a in arrays[1::2]],
        )
        return net


def _encode_checkpoint(ckpt: Checkpoint) -> bytes:
    if ckpt.regime not in _REGIME_CODES:
        raise ValueError(f"unknown regime {ckpt.regime!r}")
    shapes = ckpt._param_shapes()
    for name, arrays in (("params", ckpt.params), ("ema_params", ckpt.ema_params)):
        got = [np.asarray(a).shape for a in arrays]
        if got != shapes:
            raise CheckpointShapeError(f"{name} shapes {got} do not match widths {shapes}")
    head = bytearray()
    head += CHECKPOINT_MAGIC
    head += struct.pack("<IBI", ckpt.version, _REGIME_CODES[ckpt.regime], ckpt.T)
    head += struct.pack("<dd", ckpt.shift, ckpt.sigma1)
    head += struct.pack("<III", ckpt.data_dim, ckpt.time_dim, len(ckpt.hidden))
    head += struct.pack(f"<{len(ckpt.hidden)}I", *ckpt.hidden) if ckpt.hidden else b""
    head += struct.pack("<QQ", ckpt.step, ckpt.seed)
    body = bytearray(head)
    for arr in (*ckpt.params, *ckpt.ema_params):
        body += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    return bytes(body)


def write_checkpoint(path, ckpt: Checkpoint) -> None:
    _atomic_write(path, _encode_checkpoint(ckpt))


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint file")
    if len(blob) < 8:
        raise CheckpointFormatError(f"{path}: header truncated")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: unknown format version {version}")
    stored_crc = struct.unpack_from("<I", blob, len(blob) - 4)[0]
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise CheckpointChecksumError(f"{path}: checksum mismatch")
    off = 8
    regime_code, T = struct.unpack_from("<BI", blob, off)
    off += 5
    shift, sigma1 = struct.unpack_from("<dd", blob, off)
    off += 16
    data_dim, time_dim, n_hidden = struct.unpack_from("<III", blob, off)
    off += 12
    hidden = struct.unpack_from(f"<{n_hidden}I", blob, off) if n_hidden else ()
    off += 4 * n_hidden
    step, seed = struct.unpack_from("<QQ", blob, off)
    off += 16
    if regime_code not in _REGIME_NAMES:
        raise CheckpointFormatError(f"{path}: unknown regime code {regime_code}")
    ckpt = Checkpoint(
        regime=_REGIME_NAMES[regime_code],
        T=T,
        shift=shift,
        sigma1=sigma1,
        data_dim=data_dim,
        time_dim=time_dim,
        hidden=tuple(hidden),
        params=[],
        ema_params=[],
        step=step,
        seed=seed,
        version=version,
    )
    shapes = ckpt._param_shapes()
    n_floats = sum(int(np.prod(s)) for s in shapes)
    expected = off + 2 * 4 * n_floats + 4
    if len(blob) != expected:
        raise CheckpointShapeError(
            f"{path}: size {len(blob)} inconsistent with widths (expected {expected})"
        )
    for dest in (ckpt.params, ckpt.ema_params):
        for shape in shapes:
            count = int(np.prod(shape))
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(shape)
            dest.append(arr.copy())
            off += 4 * count
    return ckpt


# --- sample files -----------------------------------------------------------

_SAMPLER_CODES = {"gpfn-det": 0, "gpfn-stoch": 1, "bfn-stoch": 2, "bfn-det": 3}
_SAMPLER_NAMES = {v: k for k, v in _SAMPLER_CODES.items()}
_NO_SAMPLER = 255


def write_samples(
    path,
    samples: SampleSet,
    seed: int,
    config_hash: str = "",
    sampler: str | None = None,
    nfe: int = 0,
) -> None:
    """Raw little-endian f32 matrix with provenance header and crc."""
    code = _NO_SAMPLER if sampler is None else _SAMPLER_CODES[sampler]
    h, w = samples.image_shape if samples.image_shape else (0, 0)
    digest = config_hash.encode()[:16].ljust(16, b"\0")
    body = bytearray()
    body += SAMPLES_MAGIC
    body += struct.pack("<IQ16sBI", FORMAT_VERSION, seed, digest, code, nfe)
    body += struct.pack("<IIII", samples.n, samples.dim, h, w)
    body += np.ascontiguousarray(samples.data, dtype="<f4").tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    _atomic_write(path, bytes(body))


def read_samples(path) -> tuple:
    """Returns (SampleSet, meta dict with seed/config_hash/sampler/nfe)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != SAMPLES_MAGIC:
        raise CheckpointFormatError(f"{path}: not a samples file")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: unknown format version {version}")
    if zlib.crc32(blob[:-4]) != struct.unpack_from("<I", blob, len(blob) - 4)[0]:
        raise CheckpointChecksumError(f"{path}: checksum mismatch")
    seed, digest, code, nfe = struct.unpack_from("<Q16sBI", blob, 8)
    off = 8 + 29
    n, d, h, w = struct.unpack_from("<IIII", blob, off)
    off += 16
    expected = off + 4 * n * d + 4
    if len(blob) != expected:
        raise CheckpointShapeError(f"{path}: size {len(blob)} inconsistent (expected {expected})")
    data = np.frombuffer(blob, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    meta = {
        "seed": seed,
        "config_hash": digest.rstrip(b"\0").decode(),
        "sampler": _SAMPLER_NAMES.get(code),
        "nfe": nfe,
    }
    shape = (h, w) if h and w else None
    return SampleSet(data=data.astype(np.float64), image_shape=shape), meta


# --- image grids ------------------------------------------------------------


def write_sample_grid(samples: SampleSet, path, grid: tuple) -> None:
    """Tile image-shaped samples into one binary graymap (P5) file.

    Values map from [-1, 1] onto 0..255 with clamping: px = floor((x + 1) *
    127.5 + 0.5).
    """
    if samples.image_shape is None:
        raise ValueError("sample set has no image shape; cannot render a grid")
    rows, cols = grid
    if rows < 1 or cols < 1 or rows * cols > samples.n:
        raise ValueError(f"grid {grid} needs between 1 and {samples.n} tiles")
    h, w = samples.image_shape
    canvas = np.zeros((rows * h, cols * w), dtype=np.uint8)
    clipped = np.clip(samples.data, -1.0, 1.0)
    px = np.floor((clipped + 1.0) * 127.5 + 0.5).astype(np.uint8)
    for k in range(rows * cols):
        r, c = divmod(k, cols)
        canvas[r * h : (r + 1) * h, c * w : (c + 1) * w] = px[k].reshape(h, w)
    header = f"P5\n{cols * w} {rows * h}\n255\n".encode()
    _atomic_write(path, header + canvas.tobytes())


def _atomic_write(path, data: bytes) -> None:
    path = os.fspath(path)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
