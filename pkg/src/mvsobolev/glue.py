"""Vectorized assignment of points to per-face blocks of one skeleton level.

Blocks at the same level have disjoint moving sets, so a point belongs to at
most one face's support; ownership is resolved by integer lattice arithmetic
(nearest key of the right parity per axis pattern) plus a box membership test.
"""
from __future__ import annotations

import numpy as np

from .cubication import Cubication, Face

_KEY_SHIFT = 1 << 17
_KEY_BASE = 1 << 18


def encode_keys(keys: np.ndarray) -> np.ndarray:
    """Pack small integer vectors into int64 scalars for fast lookup."""
    keys = np.asarray(keys, dtype=np.int64)
    if np.any(np.abs(keys) >= _KEY_SHIFT):
        raise ValueError("lattice key out of encodable range")
    out = np.zeros(keys.shape[:-1], dtype=np.int64)
    for i in range(keys.shape[-1]):
        out = out * _KEY_BASE + (keys[..., i] + _KEY_SHIFT)
    return out


def nearest_key_with_parity(r: np.ndarray, parity: np.ndarray) -> np.ndarray:
    """Nearest integers to r (componentwise) with the prescribed parity."""
    return (2.0 * np.rint((r - parity) / 2.0) + parity).astype(np.int64)


class GluedLevel:
    """Apply per-face local maps where each face owns points, identity elsewhere.

    ``block_of_face`` maps a face to a callable acting on local coordinates
    (free axes first, centered at the face); ``own_radii`` gives the sup-norm
    ownership half-widths (free part, fixed part) in local coordinates.
    """

    def __init__(self, K: Cubication, faces: list[Face], blocks: list,
                 own_free: float, own_fixed: float):
        self.m = K.m
        self.eta = K.eta
        self.parity = K.parity
        self.faces = faces
        self.blocks = blocks
        self.own_free = own_free
        self.own_fixed = own_fixed
        self.patterns = sorted({f.free_axes for f in faces}, key=sorted)
        self._lookup: dict[frozenset, tuple[np.ndarray, np.ndarray]] = {}
        for axes in self.patterns:
            idx = np.array([i for i, f in enumerate(faces) if f.free_axes == axes],
                           dtype=np.int64)
            codes = encode_keys(np.stack([np.asarray(faces[i].key) for i in idx]))
            order = np.argsort(codes)
            self._lookup[axes] = (codes[order], idx[order])
        self._perms = {}
        for axes in self.patterns:
            perm = sorted(axes) + [j for j in range(self.m) if j not in axes]
            self._perms[axes] = (np.array(perm), np.argsort(perm))

    def assign(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(owner_index, pattern_id) per point; -1 when unowned."""
        n = x.shape[0]
        owner = np.full(n, -1, dtype=np.int64)
        pat = np.full(n, -1, dtype=np.int64)
        r = x / self.eta
        for pid, axes in enumerate(self.patterns):
            free_mask = np.zeros(self.m, dtype=bool)
            free_mask[list(axes)] = True
            want = np.where(free_mask, self.parity, 1 - self.parity)
            keys = nearest_key_with_parity(r, want[None, :])
            codes = encode_keys(keys)
            sorted_codes, idx = self._lookup[axes]
            pos = np.searchsorted(sorted_codes, codes)
            pos = np.clip(pos, 0, len(sorted_codes) - 1)
            hit = sorted_codes[pos] == codes
            if not np.any(hit):
                continue
            # membership in the per-face ownership box
            local = x - self.eta * keys.astype(float)
            within_free = np.all(
                np.where(free_mask[None, :], np.abs(local) <= self.own_free, True),
                axis=-1,
            )
            within_fixed = np.all(
                np.where(~free_mask[None, :], np.abs(local) <= self.own_fixed, True),
                axis=-1,
            )
            claim = hit & within_free & within_fixed & (owner < 0)
            owner[claim] = idx[pos[claim]]
            pat[claim] = pid
        return owner, pat

    def __call__(self, x: np.ndarray) -> np.ndarray:
        out = x.copy()
        owner, _ = self.assign(x)
        for fi in np.unique(owner):
            if fi < 0:
                continue
            rows = np.nonzero(owner == fi)[0]
            f = self.faces[fi]
            perm, inv = self._perms[f.free_axes]
            local = (x[rows] - f.center)[:, perm]
            out[rows] = self.blocks[fi](local)[:, inv] + f.center
        return out
