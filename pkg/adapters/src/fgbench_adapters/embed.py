"""A miniature two-tower image/text embedder with a shared feature space.

Plays the pretrained vision-language model's role at desk scale. The
image tower reads actual pixels: cell-mean colors over a coarse grid
plus a global mean, centered and normalized. The text tower projects
color words onto the exact vectors those pixels would produce for a
solid image of that color, so an image and a caption naming its true
colors land close together without any learned weights.

Words outside the color lexicon contribute a small hashed direction,
which keeps distinct texts distinct and the whole tower deterministic
under a seed.
"""

from __future__ import annotations

import hashlib
import re
from pathlib import Path

import numpy as np
from PIL import Image

GRID = 4
SIDE = 64  # images resize to SIDE x SIDE, so grid cells are exact
BIAS = 0.25  # constant component; keeps mid-gray away from the zero vector
DIM = GRID * GRID * 3 + 3 + 1

COLOR_RGB = {
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 0.6, 0.0),
    "blue": (0.0, 0.0, 1.0),
    "yellow": (1.0, 1.0, 0.0),
    "orange": (1.0, 0.55, 0.0),
    "purple": (0.5, 0.0, 0.5),
    "pink": (1.0, 0.6, 0.75),
    "brown": (0.55, 0.27, 0.07),
    "black": (0.0, 0.0, 0.0),
    "white": (1.0, 1.0, 1.0),
    "gray": (0.5, 0.5, 0.5),
    "grey": (0.5, 0.5, 0.5),
    "cyan": (0.0, 1.0, 1.0),
    "magenta": (1.0, 0.0, 1.0),
}

_WORD_RE = re.compile(r"[a-z0-9']+")


def _unit(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("zero vector cannot be normalized")
    return (v / norm).astype(np.float32)


def _features(pixels: np.ndarray) -> np.ndarray:
    """Grid cell means plus the global mean, centered at mid-gray."""
    cell = SIDE // GRID
    cells = pixels.reshape(GRID, cell, GRID, cell, 3).mean(axis=(1, 3))
    feats = np.concatenate([cells.reshape(-1), pixels.mean(axis=(0, 1))]) - 0.5
    return np.concatenate([feats, [BIAS]])


def embed_image_file(path: Path | str) -> np.ndarray:
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((SIDE, SIDE), Image.Resampling.BILINEAR)
    pixels = np.asarray(rgb, dtype=np.float64) / 255.0
    return _unit(_features(pixels))


def composite_anchor(colors) -> np.ndarray:
    """Feature-space rendering of named colors as a figure over a ground.

    The first color fills the central grid block, the rest average into
    the surround. Averaging solid-color vectors instead would cancel
    complementary pairs (blue on yellow) into nothing; a composite keeps
    the spatial layout a photographed subject actually has.
    """
    colors = [np.asarray(c, dtype=np.float64) for c in colors]
    cells = np.empty((GRID, GRID, 3), dtype=np.float64)
    cells[:] = np.mean(colors[1:], axis=0) if len(colors) > 1 else colors[0]
    lo, hi = GRID // 4, GRID - GRID // 4
    cells[lo:hi, lo:hi] = colors[0]
    feats = np.concatenate([cells.reshape(-1), cells.mean(axis=(0, 1))]) - 0.5
    return _unit(np.concatenate([feats, [BIAS]]))


def color_anchor(rgb: tuple[float, float, float]) -> np.ndarray:
    """The image-tower vector a solid image of this color would produce."""
    return composite_anchor([rgb])


def _hash_direction(seed: int, key: str) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}:{key}".encode("utf-8")).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:16], "little")))
    return _unit(rng.standard_normal(DIM))


def embed_text(text: str, seed: int = 0) -> np.ndarray:
    """Composite of the colors the text names, plus a hashed residue.

    Color words keep their sentence order; the first one is read as the
    figure. Texts naming no color at all fall back to the pure hashed
    direction, which is deterministic but carries no visual signal.
    """
    words = _WORD_RE.findall(text.lower())
    colors = [COLOR_RGB[w] for w in words if w in COLOR_RGB]
    residue = _hash_direction(seed, text)
    if not colors:
        return residue
    v = composite_anchor(colors) + 0.05 * residue.astype(np.float64)
    return _unit(v)


def embed_images(paths, seed: int = 0) -> np.ndarray:
    del seed  # the pixel tower has no random component
    return np.stack([embed_image_file(p) for p in paths])


def embed_texts(texts, seed: int = 0) -> np.ndarray:
    return np.stack([embed_text(t, seed) for t in texts])


def pair_score(image_vec: np.ndarray, text_vec: np.ndarray) -> float:
    """Cosine compatibility; both towers emit unit rows."""
    return float(np.dot(image_vec.astype(np.float64), text_vec.astype(np.float64)))
