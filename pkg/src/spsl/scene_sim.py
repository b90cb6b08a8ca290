"""Synthetic scenes, triangulation, depth metrics and the end-to-end pipeline.

Geometry is rectified: camera row y sees projector row y, and a camera pixel x
at depth z corresponds to projector column ``c = x + f*b/z`` (rounded). One
column of disparity error at z changes depth by about z^2 / (f*b). The
resolution mismatch only widens the footprint a camera pixel integrates over.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import BinaryFrameStack, render_frames
from .codebook import Codebook
from .decode import FAILED, Decoder, make_decoder
from .photon_stats import FluxCondition

INLIER_MM = 5.0
INVALID_PGM = 65535
KINDS = ("plane", "sphere-on-plane", "v-groove")


@dataclass(frozen=True)
class Geometry:
    f: float = 900.0
    b: float = 0.14
    mismatch: int = 1

    def __post_init__(self):
        if self.f <= 0 or self.b <= 0:
            raise ValueError("focal length and baseline must be positive")
        if int(self.mismatch) != self.mismatch or self.mismatch < 1:
            raise ValueError("mismatch must be a positive integer")

    @property
    def fb(self) -> float:
        return self.f * self.b

    def mm_per_column(self, z: float) -> float:
        return 1000.0 * z * z / self.fb


@dataclass(frozen=True, eq=False)
class SceneSpec:
    kind: str
    geometry: Geometry
    depth: np.ndarray
    columns: np.ndarray
    albedo: np.ndarray
    num_columns: int = 1024
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        z = np.asarray(self.depth, dtype=np.float64)
        if z.ndim != 2 or not np.all(z > 0):
            raise ValueError("depth must be a positive 2-D map")
        c = np.asarray(self.columns, dtype=np.int64)
        if c.shape != z.shape:
            raise ValueError("column map and depth map differ in shape")
        if c.min() < 0 or c.max() >= self.num_columns:
            raise ValueError(
                f"scene needs projector columns {c.min()}..{c.max()}, only 0..{self.num_columns - 1} exist"
            )
        a = np.broadcast_to(np.asarray(self.albedo, dtype=np.float64), z.shape).copy()
        if not np.all((a > 0) & (a <= 1)):
            raise ValueError("albedo must lie in (0, 1]")
        for name, arr in (("depth", z), ("columns", c), ("albedo", a)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def mismatch(self) -> int:
        return self.geometry.mismatch

    def quantized_depth(self) -> np.ndarray:
        """Depth implied by the integer column map (what a perfect decode yields)."""
        return reconstruct_depth(self.columns, self.geometry)


@dataclass(frozen=True)
class DepthMetrics:
    """Depth errors in mm over valid pixels; inliers are counted over all pixels."""

    rmse_all: float
    inlier_fraction: float
    rmse_inliers: float
    empty_inliers: bool = False
    valid_fraction: float = 1.0

    def as_dict(self) -> dict:
        return {
            "rmse_all": self.rmse_all,
            "inlier_fraction": self.inlier_fraction,
            "rmse_inliers": self.rmse_inliers,
        }


def columns_from_depth(z, geometry: Geometry) -> np.ndarray:
    x = np.arange(z.shape[1])[None, :]
    return x + np.rint(geometry.fb / z).astype(np.int64)


def sphere_depth(width, height, geometry: Geometry, z_plane, center, radius) -> np.ndarray:
    """Depth of a sphere resting in front of a fronto-parallel plane.

    ``center`` is (X, Y, Z) in meters in camera coordinates, the principal
    point sits at the image center. Pixels that miss the sphere see the plane.
    """
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    dx = (x - (width - 1) / 2) / geometry.f
    dy = (y - (height - 1) / 2) / geometry.f
    cx, cy, cz = center
    # Ray (dx, dy, 1) * t against |p - center| = radius.
    a = dx * dx + dy * dy + 1.0
    bq = -2.0 * (dx * cx + dy * cy + cz)
    cq = cx * cx + cy * cy + cz * cz - radius * radius
    disc = bq * bq - 4 * a * cq
    hit = disc >= 0
    t = np.where(hit, (-bq - np.sqrt(np.where(hit, disc, 0.0))) / (2 * a), np.inf)
    return np.where(hit & (t > 0) & (t < z_plane), t, z_plane)


def make_scene(
    kind: str = "plane",
    width: int = 640,
    height: int = 32,
    geometry: Geometry | None = None,
    albedo=1.0,
    num_columns: int = 1024,
    z0: float = 0.5,
    depth_range: float = 0.1,
    sphere_radius: float = 0.06,
) -> SceneSpec:
    """Analytic test scenes.

    plane: constant depth z0. sphere-on-plane: plane at z0 + depth_range/2 with
    a sphere of ``sphere_radius`` centered on the optical axis, bulging towards
    the camera. v-groove: z = z_apex - k*|x - x0|, deepest at the center column,
    spanning ``depth_range``.
    """
    geometry = geometry or Geometry()
    if width < 1 or height < 1:
        raise ValueError("scene dimensions must be positive")
    if kind == "plane":
        z = np.full((height, width), float(z0))
        meta = {"z0": z0}
    elif kind == "sphere-on-plane":
        zp = z0 + depth_range / 2
        center = (0.0, 0.0, zp)
        z = sphere_depth(width, height, geometry, zp, center, sphere_radius)
        meta = {"z_plane": zp, "radius": sphere_radius}
    elif kind == "v-groove":
        x0 = (width - 1) / 2
        z_apex = z0 + depth_range / 2
        k = depth_range / max(width - 1, 1)
        x = np.arange(width, dtype=np.float64)
        z = np.tile(z_apex - 2 * k * np.abs(x - x0), (height, 1))
        meta = {"z_apex": z_apex, "slope": 2 * k}
    else:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    cols = columns_from_depth(z, geometry)
    meta.update(f=geometry.f, b=geometry.b, mismatch=geometry.mismatch)
    return SceneSpec(kind, geometry, z, cols, albedo, num_columns, meta)


def reconstruct_depth(corr, geometry: Geometry) -> np.ndarray:
    """z = f*b / disparity; pixels with a failed decode or disparity <= 0 become NaN."""
    c = np.asarray(corr, dtype=np.int64)
    x = np.arange(c.shape[-1])
    disp = (c - x).astype(np.float64)
    valid = (c != FAILED) & (disp > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(valid, geometry.fb / np.where(valid, disp, 1.0), np.nan)
    return z


def evaluate(depth, scene: SceneSpec, reference: str = "analytic") -> DepthMetrics:
    """RMSE over valid pixels, inlier share over all pixels (|error| < 5 mm)."""
    z = np.asarray(depth, dtype=np.float64)
    if z.shape != scene.depth.shape:
        raise ValueError(f"depth map {z.shape} does not match scene {scene.depth.shape}")
    ref = scene.depth if reference == "analytic" else scene.quantized_depth()
    valid = np.isfinite(z)
    err = np.abs(z - ref)[valid] * 1000.0
    if err.size == 0:
        return DepthMetrics(0.0, 0.0, 0.0, True, 0.0)
    rmse = math.sqrt(float(np.mean(err**2)))
    inl = err < INLIER_MM
    frac = float(inl.sum()) / z.size
    if inl.any():
        rmse_in = math.sqrt(float(np.mean(err[inl] ** 2)))
    else:
        rmse_in = 0.0
    return DepthMetrics(rmse, frac, rmse_in, not inl.any(), float(valid.mean()))


def decode_stack(stack: BinaryFrameStack, decoder: Decoder, start: int = 0, rng=None) -> np.ndarray:
    """Correspondence map from frames start..start+T-1."""
    T = decoder.book.T
    seqs = stack.sequences(start, T)
    return decoder.decode(seqs, rng=rng).reshape(stack.height, stack.width)


def run_pipeline(scene: SceneSpec, book: Codebook, cond: FluxCondition, defocus_sigma: float = 0.0, decoder: Decoder | None = None, seed: int = 0):
    """Render, decode, triangulate and score; deterministic in ``seed``."""
    decoder = decoder or make_decoder(book)
    stack = render_frames(scene, book, cond, defocus_sigma, seed)
    corr = decode_stack(stack, decoder, rng=np.random.default_rng(seed))
    metrics = evaluate(reconstruct_depth(corr, scene.geometry), scene)
    return corr, metrics


def sliding_window_decode(stack: BinaryFrameStack, decoder: Decoder, stride: int, rng=None) -> list:
    """Decode overlapping windows of T frames taken every ``stride`` frames.

    The projector cycles through the T patterns without pause, so a window
    starting at frame o holds patterns o, o+1, ... (mod T); it is rotated back
    into schedule order before decoding.
    """
    T = decoder.book.T
    if int(stride) != stride or not 0 < stride <= T:
        raise ValueError(f"stride must be in [1, T={T}], got {stride}")
    if stack.T < T:
        raise ValueError(f"stack holds {stack.T} frames, a window needs {T}")
    maps = []
    for o in range(0, stack.T - T + 1, stride):
        seqs = stack.sequences(o, T)
        aligned = np.roll(seqs, o % T, axis=1)
        maps.append(decoder.decode(aligned, rng=rng).reshape(stack.height, stack.width))
    return maps


def concat_stacks(*stacks: BinaryFrameStack) -> BinaryFrameStack:
    return BinaryFrameStack(np.concatenate([s.frames for s in stacks], axis=0), stacks[0].columns, stacks[0].seed)


def sliding_window_fps(pattern_rate: float, stride: int) -> float:
    """Depth maps per second from a sliding window over a continuous pattern stream."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return pattern_rate / stride


# ---- file formats ---------------------------------------------------------------


def write_correspondence_pgm(path, corr) -> None:
    """16-bit binary PGM; failed pixels are stored as 65535."""
    c = np.asarray(corr, dtype=np.int64)
    if c.max(initial=0) >= INVALID_PGM:
        raise ValueError("column index does not fit a 16-bit PGM")
    out = np.where(c < 0, INVALID_PGM, c).astype(">u2")
    h, w = out.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode())
        f.write(out.tobytes())


def read_correspondence_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5" or int(parts[3]) != 65535:
        raise ValueError(f"{path}: expected a 16-bit P5 PGM")
    w, h = int(parts[1]), int(parts[2])
    raw = np.frombuffer(parts[4][: 2 * w * h], dtype=">u2").reshape(h, w).astype(np.int64)
    raw[raw == INVALID_PGM] = FAILED
    return raw


def write_depth_text(path, depth_m) -> None:
    """Header ``depth-mm <w> <h>`` then one row per line; NaN marks invalid pixels."""
    z = np.asarray(depth_m, dtype=np.float64) * 1000.0
    h, w = z.shape
    with open(path, "w") as f:
        f.write(f"depth-mm {w} {h}\n")
        for row in z:
            f.write(" ".join("nan" if not np.isfinite(v) else f"{v:.4f}" for v in row) + "\n")


def read_depth_text(path) -> np.ndarray:
    with open(path) as f:
        head = f.readline().split()
        if len(head) != 3 or head[0] != "depth-mm":
            raise ValueError(f"{path}: missing 'depth-mm w h' header")
        w, h = int(head[1]), int(head[2])
        z = np.loadtxt(f, ndmin=2)
    if z.shape != (h, w):
        raise ValueError(f"{path}: header says {w}x{h}, payload is {z.shape[1]}x{z.shape[0]}")
    return z / 1000.0


def write_metrics_csv(path, rows) -> None:
    """Rows of (phi_a, phi_p, strategy, DepthMetrics, seed) in the sweep CSV layout."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("phi_a", "phi_p", "strategy", "metric", "value", "n_iter", "seed"))
        for phi_a, phi_p, strategy, m, seed in rows:
            for name, value in m.as_dict().items():
                w.writerow([repr(float(phi_a)), repr(float(phi_p)), strategy, name, repr(float(value)), 1, seed])
