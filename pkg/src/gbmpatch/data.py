"""Image ingestion, preprocessing, and the synthetic 9-class patch generator.

Images are binary PPM (P6, maxval 255): dependency-free and bit-exact,
which keeps round-trip and determinism contracts testable. The
preprocessing chain is resize (bilinear, half-pixel centers) -> scale to
[0, 1] channel-major -> per-channel normalization with ImageNet statistics.

The synthetic generator renders each class with its own texture family
(base hue, blob density, stripe frequency) so a dataset with a long-tailed
class profile can stand in for real histology patches.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, DimensionError, PpmParseError

CLASS_CODES = ("CT", "PN", "MP", "NC", "IC", "WM", "LI", "DM", "PL")
N_CLASSES = len(CLASS_CODES)

# invented long-tailed profile: CT/NC head, LI/DM/PL tail; configurable
DEFAULT_PROFILE = (600, 150, 100, 450, 250, 200, 40, 25, 15)

MANIFEST_NAME = "manifest.json"


def class_index(code: str) -> int:
    try:
        return CLASS_CODES.index(code)
    except ValueError:
        raise DataError(f"unknown class code {code!r}; expected one of {CLASS_CODES}")


@dataclass(frozen=True)
class NormalizationStats:
    """Per-channel mean/std applied after the [0, 1] rescale."""

    mean: tuple = (0.485, 0.456, 0.406)
    std: tuple = (0.229, 0.224, 0.225)

    def __post_init__(self):
        if len(self.mean) != 3 or len(self.std) != 3:
            raise DataError("normalization stats need 3 channels")
        if any(s <= 0 for s in self.std):
            raise DataError(f"std entries must be positive, got {self.std}")


IMAGENET_STATS = NormalizationStats()


@dataclass
class ImagePatch:
    """RGB byte image, pixels stored H x W x 3 row-major."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.shape != (self.height, self.width, 3):
            raise DimensionError(
                f"pixel block {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x3")


# ----------------------------------------------------------------------
# PPM (P6) round trip

_WHITESPACE = b" \t\r\n\v\f"


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(data):
        if data[pos:pos + 1] in (b"#",):
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        elif data[pos:pos + 1] in _WHITESPACE:
            pos += 1
        else:
            break
    start = pos
    while pos < len(data) and data[pos:pos + 1] not in _WHITESPACE:
        pos += 1
    if start == pos:
        raise PpmParseError(f"expected header token at byte {start}, found end of file")
    return data[start:pos], pos


def load_ppm(path) -> ImagePatch:
    """Parse a binary P6 PPM with maxval 255."""
    data = Path(path).read_bytes()
    magic, pos = _next_token(data, 0)
    if magic != b"P6":
        raise PpmParseError(f"bad magic {magic!r} at byte 0, expected P6")
    fields = []
    for name in ("width", "height", "maxval"):
        token, pos = _next_token(data, pos)
        if not token.isdigit():
            raise PpmParseError(
                f"non-numeric {name} {token!r} at byte {pos - len(token)}")
        fields.append(int(token))
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise PpmParseError(f"zero-sized image {width}x{height} in header")
    if maxval != 255:
        raise PpmParseError(
            f"unsupported maxval {maxval} at byte {pos - len(str(maxval))}, "
            "only 255 is handled")
    pos += 1  # single whitespace byte separates header from raster
    expected = width * height * 3
    raster = data[pos:pos + expected]
    if len(raster) != expected:
        raise PpmParseError(
            f"raster truncated at byte {pos + len(raster)}, "
            f"expected {expected} bytes from byte {pos}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return ImagePatch(width=width, height=height, pixels=pixels.copy())


def save_ppm(img: ImagePatch, path):
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.pixels.tobytes())


# ----------------------------------------------------------------------
# preprocessing chain


def resize_bilinear(img: ImagePatch, width: int = 224, height: int = 224) -> ImagePatch:
    """Bilinear resample with half-pixel-centered sampling.

    A same-size call returns an identical copy, so the resize is a no-op
    on already-conforming inputs.
    """
    if img.width < 1 or img.height < 1:
        raise DimensionError("source image must be at least 1x1")
    if (img.width, img.height) == (width, height):
        return ImagePatch(width=width, height=height, pixels=img.pixels.copy())

    src = img.pixels.astype(np.float64)
    xs = np.clip((np.arange(width) + 0.5) * (img.width / width) - 0.5,
                 0.0, img.width - 1.0)
    ys = np.clip((np.arange(height) + 0.5) * (img.height / height) - 0.5,
                 0.0, img.height - 1.0)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, img.width - 1)
    y1 = np.minimum(y0 + 1, img.height - 1)
    fx = (xs - x0)[None, :, None]
    fy = (ys - y0)[:, None, None]

    out = (src[np.ix_(y0, x0)] * (1 - fy) * (1 - fx)
           + src[np.ix_(y0, x1)] * (1 - fy) * fx
           + src[np.ix_(y1, x0)] * fy * (1 - fx)
           + src[np.ix_(y1, x1)] * fy * fx)
    pixels = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return ImagePatch(width=width, height=height, pixels=pixels)


def to_tensor(img: ImagePatch, size: int = 224) -> np.ndarray:
    """Bytes to float32 in [0, 1], rearranged channel-major (3, size, size)."""
    if (img.width, img.height) != (size, size):
        raise DimensionError(
            f"expected a {size}x{size} image, got {img.width}x{img.height}")
    return (img.pixels.astype(np.float32) / 255.0).transpose(2, 0, 1)


def normalize(t: np.ndarray, stats: NormalizationStats = IMAGENET_STATS) -> np.ndarray:
    if t.ndim != 3 or t.shape[0] != 3:
        raise DimensionError(f"expected a (3, H, W) tensor, got {t.shape}")
    mean = np.asarray(stats.mean, dtype=t.dtype).reshape(3, 1, 1)
    std = np.asarray(stats.std, dtype=t.dtype).reshape(3, 1, 1)
    return (t - mean) / std


def denormalize(t: np.ndarray, stats: NormalizationStats = IMAGENET_STATS) -> np.ndarray:
    mean = np.asarray(stats.mean, dtype=t.dtype).reshape(3, 1, 1)
    std = np.asarray(stats.std, dtype=t.dtype).reshape(3, 1, 1)
    return t * std + mean


def preprocess(img: ImagePatch, size: int = 224,
               stats: NormalizationStats = IMAGENET_STATS) -> np.ndarray:
    """resize -> to_tensor -> normalize, in that order."""
    return normalize(to_tensor(resize_bilinear(img, size, size), size), stats)


# ----------------------------------------------------------------------
# dataset manifest


@dataclass
class DatasetManifest:
    """On-disk description of a labeled patch dataset."""

    root: Path
    entries: list = field(default_factory=list)   # (relative path, class index)
    seed: Optional[int] = None

    @property
    def labels(self) -> np.ndarray:
        return np.asarray([label for _, label in self.entries], dtype=np.int64)

    def class_counts(self) -> np.ndarray:
        counts = np.zeros(N_CLASSES, dtype=np.int64)
        for _, label in self.entries:
            counts[label] += 1
        return counts

    def save(self):
        payload = {
            "seed": self.seed,
            "entries": [{"path": rel, "label": CLASS_CODES[label]}
                        for rel, label in self.entries],
        }
        # written last and swapped in atomically: a half-finished dataset
        # never carries a valid-looking manifest
        path = Path(self.root) / MANIFEST_NAME
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(payload, indent=1) + "\n")
        os.replace(tmp, path)
        return path

    @classmethod
    def load(cls, root) -> "DatasetManifest":
        root = Path(root)
        path = root / MANIFEST_NAME
        if not path.is_file():
            raise DataError(f"no {MANIFEST_NAME} under {root}")
        try:
            payload = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"malformed manifest {path}: {exc}")
        entries = []
        for item in payload.get("entries", []):
            rel = item["path"]
            label = class_index(item["label"])
            if not (root / rel).is_file():
                raise DataError(f"manifest lists missing file {root / rel}")
            entries.append((rel, label))
        return cls(root=root, entries=entries, seed=payload.get("seed"))


def load_preprocessed(manifest: DatasetManifest, size: int = 224,
                      stats: NormalizationStats = IMAGENET_STATS):
    """Load every manifest entry into (N, 3, size, size) float32 + labels."""
    images = np.empty((len(manifest.entries), 3, size, size), dtype=np.float32)
    for i, (rel, _) in enumerate(manifest.entries):
        images[i] = preprocess(load_ppm(Path(manifest.root) / rel), size, stats)
    return images, manifest.labels


# ----------------------------------------------------------------------
# synthetic long-tailed generator

# base hue per class, chosen well apart so classes are linearly separable
_BASE_COLORS = np.array([
    [196, 120, 160],   # CT
    [120, 60, 130],    # PN
    [200, 60, 60],     # MP
    [240, 200, 190],   # NC
    [140, 170, 210],   # IC
    [230, 230, 215],   # WM
    [90, 140, 90],     # LI
    [160, 110, 60],    # DM
    [70, 80, 170],     # PL
], dtype=np.float64)

_BLOB_COUNTS = (18, 10, 26, 4, 12, 6, 20, 30, 14)
_STRIPE_FREQS = (0.0, 6.0, 2.5, 0.0, 4.0, 1.5, 8.0, 3.0, 10.0)


def _render_patch(label: int, rng: np.random.Generator, size: int) -> ImagePatch:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    color = _BASE_COLORS[label] + rng.normal(0.0, 8.0, size=3)
    canvas = np.tile(color, (size, size, 1))

    freq = _STRIPE_FREQS[label]
    if freq > 0:
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta))
                      + phase)
        canvas += wave[:, :, None] * rng.uniform(10.0, 25.0)

    blob_color = _BASE_COLORS[label] * 0.55 + rng.normal(0.0, 10.0, size=3)
    for _ in range(_BLOB_COUNTS[label]):
        cy, cx = rng.uniform(0, 1, size=2)
        radius = rng.uniform(0.02, 0.08)
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 < radius ** 2
        canvas[mask] = blob_color

    canvas += rng.normal(0.0, 6.0, size=canvas.shape)
    pixels = np.clip(np.rint(canvas), 0, 255).astype(np.uint8)
    return ImagePatch(width=size, height=size, pixels=pixels)


def generate_synthetic(root, counts: Sequence[int] = DEFAULT_PROFILE,
                       seed: int = 0, size: int = 224) -> DatasetManifest:
    """Write a labeled synthetic dataset under root/<class_code>/<seq>.ppm.

    Each class draws from its own texture family; per-sample jitter comes
    from a generator seeded by (seed, class, index), so the same seed
    reproduces every file bit for bit.
    """
    counts = list(counts)
    if len(counts) != N_CLASSES:
        raise DataError(f"need {N_CLASSES} class counts, got {len(counts)}")
    if any(c < 0 for c in counts):
        raise DataError(f"counts must be nonnegative, got {counts}")
    root = Path(root)
    manifest = DatasetManifest(root=root, entries=[], seed=seed)
    for label, count in enumerate(counts):
        class_dir = root / CLASS_CODES[label]
        if count > 0:
            class_dir.mkdir(parents=True, exist_ok=True)
        for i in range(count):
            rng = np.random.default_rng([seed, label, i])
            try:
                rel = f"{CLASS_CODES[label]}/{i:04d}.ppm"
                save_ppm(_render_patch(label, rng, size), root / rel)
            except OSError as exc:
                raise DataError(f"failed writing {root / rel}: {exc}")
            manifest.entries.append((rel, label))
    root.mkdir(parents=True, exist_ok=True)
    manifest.save()
    return manifest
