"""Stochastic SPAD channel: bit flips on codewords and full frame rendering."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .codebook import Codebook
from .photon_stats import FlipProbs, FluxCondition

MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Independent random stream; (seed, stream, draw index) fixes every value.

    Streams are keyed through ``SeedSequence`` spawn keys, so stream ids can be
    structured (grid point, strategy, message) without overlapping.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= MASK64 and 0 <= self.stream <= MASK64):
            raise ValueError("seed and stream must fit in 64 bits")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.SFC64(ss))

    def child(self, stream: int) -> "RngStream":
        return RngStream(self.seed, stream)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def uniform_u32(gen: np.random.Generator, shape) -> np.ndarray:
    """Raw 32-bit draws; two per 64-bit output of the bit generator."""
    shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    count = int(np.prod(shape, dtype=np.int64))
    raw = gen.bit_generator.random_raw((count + 1) // 2)
    return raw.view(np.uint32)[:count].reshape(shape)


def flip_threshold(p) -> np.ndarray:
    """Integer threshold so that ``u32 < threshold`` has probability p (to 2^-32)."""
    return np.rint(np.asarray(p, dtype=np.float64) * 2.0**32).astype(np.uint64)


def flip_mask(codewords, probs: FlipProbs, rng) -> np.ndarray:
    """Boolean mask of flipped bits for words of any shape."""
    cw = np.asarray(codewords, dtype=np.uint8)
    thr = flip_threshold(np.where(cw == 1, probs.p_bright, probs.p_dark))
    return uniform_u32(as_generator(rng), cw.shape) < thr


def corrupt_codeword(codeword, probs: FlipProbs, rng) -> np.ndarray:
    """Ones drop to zero with p_bright, zeros rise to one with p_dark, independently."""
    cw = np.asarray(codeword, dtype=np.uint8)
    return cw ^ flip_mask(cw, probs, rng).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class BinaryFrameStack:
    """``frames`` has shape (T, height, width); ``columns`` is the optional truth."""

    frames: np.ndarray
    columns: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.uint8)
        if f.ndim != 3:
            raise ValueError("frames must be (T, height, width)")
        object.__setattr__(self, "frames", f)
        if self.columns is not None and np.shape(self.columns) != f.shape[1:]:
            raise ValueError("ground-truth map does not match frame size")

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    def sequences(self, start: int = 0, length: int | None = None) -> np.ndarray:
        """Per-pixel temporal words ``(height*width, length)`` in raster order."""
        length = self.T - start if length is None else length
        if start < 0 or start + length > self.T:
            raise ValueError("window exceeds the stack")
        win = self.frames[start:start + length]
        return win.reshape(length, -1).T.copy()

    def average(self) -> np.ndarray:
        """Per-pixel mean over all frames (the long-exposure view)."""
        return self.frames.mean(axis=0)


def blur_pattern(row, sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian defocus along the projector columns."""
    r = np.asarray(row, dtype=np.float64)
    if sigma <= 0:
        return r
    return gaussian_filter1d(r, sigma, mode="nearest")


def pattern_intensity(pattern_row, columns, mismatch: int = 1, sigma: float = 0.0) -> np.ndarray:
    """Intensity seen by each camera pixel for one projected pattern.

    A camera pixel mapped to projector column c integrates ``mismatch``
    defocused columns centered on c (the extra one lies left for even counts).
    """
    blurred = blur_pattern(pattern_row, sigma)
    C = blurred.size
    cols = np.asarray(columns, dtype=np.int64)
    acc = np.zeros(cols.shape)
    for j in range(mismatch):
        acc += blurred[np.clip(cols - (mismatch // 2) + j, 0, C - 1)]
    return acc / mismatch


def render_frames(scene, book: Codebook, cond: FluxCondition, defocus_sigma: float = 0.0, rng=0) -> BinaryFrameStack:
    """Sample one binary frame per pattern.

    A pixel reads 0 with probability exp(-(phi_a + I*phi_p*albedo + r_q)*t_exp).
    Frame t draws from its own stream so rendering order does not matter.
    """
    seed = rng.seed if isinstance(rng, RngStream) else int(rng)
    cols = np.asarray(scene.columns)
    if cols.min() < 0 or cols.max() >= book.num_columns:
        raise ValueError("scene maps pixels outside the codebook's columns")
    albedo = np.asarray(scene.albedo, dtype=np.float64)
    mismatch = int(getattr(scene, "mismatch", 1))
    frames = np.empty((book.T,) + cols.shape, dtype=np.uint8)
    for t, row in enumerate(book.patterns):
        inten = pattern_intensity(row, cols, mismatch, defocus_sigma)
        rate = cond.phi_a + inten * cond.phi_p * albedo + cond.r_q
        p_one = -np.expm1(-rate * cond.t_exp)
        u = RngStream(seed, t).generator().random(cols.shape)
        frames[t] = u < p_one
    return BinaryFrameStack(frames=frames, columns=cols.copy(), seed=seed)


# ---- PBM export ---------------------------------------------------------------


def write_pbm(path, image) -> None:
    img = np.asarray(image, dtype=np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P4\n{w} {h}\n".encode())
        f.write(np.packbits(img, axis=1).tobytes())


def read_pbm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    tokens = []
    pos = 0
    while len(tokens) < 3:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end].decode())
        pos = end
    pos += 1
    if tokens[0] != "P4":
        raise ValueError(f"{path}: not a binary PBM")
    w, h = int(tokens[1]), int(tokens[2])
    rowbytes = -(-w // 8)
    raw = np.frombuffer(data[pos:pos + rowbytes * h], dtype=np.uint8)
    if raw.size != rowbytes * h:
        raise ValueError(f"{path}: truncated PBM payload")
    return np.unpackbits(raw.reshape(h, rowbytes), axis=1)[:, :w]


def write_stack(stack: BinaryFrameStack, directory) -> list[str]:
    """frame_0000.pbm ... plus ``manifest.txt`` holding ``width height T seed``."""
    os.makedirs(directory, exist_ok=True)
    names = []
    for t in range(stack.T):
        name = f"frame_{t:04d}.pbm"
        write_pbm(os.path.join(directory, name), stack.frames[t])
        names.append(name)
    with open(os.path.join(directory, "manifest.txt"), "w") as f:
        f.write(f"{stack.width} {stack.height} {stack.T} {stack.seed}\n")
    return names + ["manifest.txt"]


def read_stack(directory) -> BinaryFrameStack:
    with open(os.path.join(directory, "manifest.txt")) as f:
        parts = f.read().split()
    if len(parts) != 4:
        raise ValueError("manifest must read 'width height T seed'")
    w, h, T, seed = map(int, parts)
    frames = np.empty((T, h, w), dtype=np.uint8)
    for t in range(T):
        img = read_pbm(os.path.join(directory, f"frame_{t:04d}.pbm"))
        if img.shape != (h, w):
            raise ValueError(f"frame {t} has shape {img.shape}, manifest says {(h, w)}")
        frames[t] = img
    return BinaryFrameStack(frames=frames, seed=seed)
