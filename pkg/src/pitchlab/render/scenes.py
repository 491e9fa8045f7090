"""Static scene variants: baked cylindrical panoramas plus per-scene palettes.

Panorama file layout (little endian)::

    bytes 0-3   b"PANO"
    uint16      format version (1)
    uint32      width   (azimuth samples, column 0 = azimuth 0, increasing CCW)
    uint32      height  (elevation samples, row 0 = top, matches camera rows)
    uint8[height*width*3]   row-major RGB
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import AssetLoadError

PANO_MAGIC = b"PANO"
PANO_VERSION = 1
_HEADER = struct.Struct("<4sHII")
NUM_VARIANTS = 4


@dataclass(frozen=True)
class ScenePalette:
    floor: tuple
    line: tuple
    wall: tuple
    target_goal: tuple
    own_goal: tuple
    light_scale: float


# Four "rooms" standing in for radiance fields captured under different
# lighting and furniture layouts.
PALETTES = (
    ScenePalette((52, 120, 58), (225, 225, 215), (200, 200, 195), (40, 70, 200), (185, 30, 40), 1.00),
    ScenePalette((46, 108, 54), (210, 210, 200), (185, 185, 190), (35, 60, 185), (170, 25, 35), 0.85),
    ScenePalette((60, 128, 64), (235, 235, 225), (210, 205, 195), (45, 80, 210), (195, 35, 45), 1.10),
    ScenePalette((50, 112, 62), (215, 220, 215), (190, 195, 200), (40, 65, 195), (180, 28, 38), 0.70),
)


@dataclass(frozen=True)
class SceneVariant:
    id: int
    background: np.ndarray  # (rows, azimuth, 3) uint8
    palette: ScenePalette

    @property
    def floor_palette(self):
        return (self.palette.floor, self.palette.line)

    @property
    def light_scale(self) -> float:
        return self.palette.light_scale


def write_panorama(path, image: np.ndarray) -> None:
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("panorama must be (height, width, 3)")
    h, w, _ = image.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(PANO_MAGIC, PANO_VERSION, w, h))
        fh.write(image.tobytes())


def read_panorama(path) -> np.ndarray:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise AssetLoadError(f"cannot read panorama {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise AssetLoadError(f"truncated panorama header: {path}")
    magic, version, w, h = _HEADER.unpack_from(blob)
    if magic != PANO_MAGIC or version != PANO_VERSION:
        raise AssetLoadError(f"not a v{PANO_VERSION} panorama file: {path}")
    payload = blob[_HEADER.size:]
    if len(payload) != w * h * 3:
        raise AssetLoadError(f"panorama payload size mismatch in {path}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).copy()


def bake_panorama(variant_id: int, width: int = 720, height: int = 30) -> np.ndarray:
    """Procedural room panorama; features are placed modulo ``width`` so the
    texture wraps seamlessly at azimuth 2*pi."""
    rng = np.random.default_rng(1000 + variant_id)
    az = np.arange(width) / width * 2 * np.pi
    rows = np.arange(height)[:, None]
    base = np.array([150.0, 145.0, 135.0]) + rng.uniform(-25, 25, size=3)
    img = np.empty((height, width, 3))
    shade = 1.0 - 0.35 * rows / height
    for k in range(1, 4):
        shade = shade + 0.04 * np.cos(k * az + rng.uniform(0, 2 * np.pi))[None, :]
    img[:] = base[None, None, :] * shade[..., None]
    cols = np.arange(width)
    for _ in range(rng.integers(5, 9)):
        center = rng.integers(0, width)
        half = rng.integers(12, 60)
        top = rng.integers(2, height // 2 + 4)
        color = rng.uniform(20, 235, size=3)
        dist = (cols - center + width // 2) % width - width // 2
        mask_cols = np.abs(dist) <= half
        img[top:, mask_cols, :] = color
    # Window: a bright band high up, different azimuth per variant.
    center = int(width * (0.15 + 0.2 * variant_id)) % width
    dist = (cols - center + width // 2) % width - width // 2
    img[1:8, np.abs(dist) <= 40, :] = np.array([240.0, 245.0, 250.0])
    img *= PALETTES[variant_id].light_scale
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def default_scene_dir() -> Path:
    return Path(str(resources.files("pitchlab") / "assets"))


def bake_scene_assets(directory=None, width: int = 720, height: int = 30) -> list[Path]:
    directory = Path(directory) if directory else default_scene_dir()
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for vid in range(NUM_VARIANTS):
        path = directory / f"scene_{vid}.pano"
        write_panorama(path, bake_panorama(vid, width, height))
        paths.append(path)
    return paths


def load_scene_variants(directory=None, ids=(0, 1, 2, 3)) -> list[SceneVariant]:
    directory = Path(directory) if directory else default_scene_dir()
    variants = []
    for vid in ids:
        if not 0 <= int(vid) < NUM_VARIANTS:
            raise AssetLoadError(f"unknown scene variant {vid}")
        path = directory / f"scene_{int(vid)}.pano"
        if not path.is_file():
            raise AssetLoadError(f"missing scene asset: {path}")
        variants.append(SceneVariant(int(vid), read_panorama(path), PALETTES[int(vid)]))
    if not variants:
        raise AssetLoadError("no scene variants configured")
    return variants


def sample_scene(rng: np.random.Generator, variants) -> SceneVariant:
    """Uniform draw over the loaded variants (call once per episode)."""
    if not variants:
        raise AssetLoadError("no scene variants loaded")
    return variants[int(rng.integers(len(variants)))]
