"""Texture basis learning from sparse texture estimates.

Nonzero texture pixels are grouped by directional seed growth (KNBN
clustering); each emitted patch yields one window of the texture estimate,
and the windows are orthonormalised into the dictionary ``B_t``.  Images are
covered by a grid of patch-sized tiles so that ``C_tex = B_t theta_t`` can be
evaluated tile by tile.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from scipy import ndimage

from .quasi_detect import DirectionSet

CONE_HALF_ANGLE = np.pi / 8  # 22.5 degrees


@dataclass(frozen=True)
class TexturePatch:
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    direction: float

    @property
    def size(self) -> int:
        return int(self.rows.size)

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        """Inclusive ``(r0, c0, r1, c1)``."""
        return int(self.rows.min()), int(self.cols.min()), int(self.rows.max()), int(self.cols.max())

    @property
    def center(self) -> tuple[float, float]:
        r0, c0, r1, c1 = self.bbox
        return (r0 + r1) / 2, (c0 + c1) / 2


def neighbor_offsets(direction: float, l: int) -> list[tuple[int, int]]:
    """Offsets within Chebyshev distance ``l`` lying in the +-22.5 degree cone about +-direction."""
    offs = []
    for dr in range(-l, l + 1):
        for dc in range(-l, l + 1):
            if dr == 0 and dc == 0:
                continue
            ang = np.arctan2(-dr, dc)  # y-up
            dev = abs((ang - direction + np.pi / 2) % np.pi - np.pi / 2)
            if dev <= CONE_HALF_ANGLE + 1e-9:
                offs.append((dr, dc))
    # nearest first so growth stays compact
    offs.sort(key=lambda o: (max(abs(o[0]), abs(o[1])), o))
    return offs


def knbn_cluster(texture, directions, K: int = 20, l: int = 1, return_leftover: bool = False):
    """Group nonzero texture pixels into patches of exactly ``K`` pixels.

    ``directions`` is a sequence of growth angles in radians, or a
    :class:`DirectionSet`, in which case the patches for each expansion
    direction are grown along its texture elements, i.e. along the paired
    extension direction.  Every direction starts from a fresh
    copy of the nonzero pixels.  Seeds are visited in row-major order; from a
    seed, pixels within ``l`` along the direction are absorbed breadth-first
    until the patch reaches ``K`` pixels, at which point it is emitted and its
    pixels leave the working set.  Components that stall short of ``K`` go to
    the leftover set.
    """
    if K < 2 or l < 1:
        raise ValueError("need K >= 2 and l >= 1")
    T = np.asarray(texture, dtype=float)
    angles = directions.extension if isinstance(directions, DirectionSet) else tuple(directions)
    m, n = T.shape
    nz = T != 0
    seeds = np.argwhere(nz)
    patches: list[TexturePatch] = []
    leftovers: list[tuple[float, np.ndarray]] = []
    for d in angles:
        offs = neighbor_offsets(float(d), l)
        work = nz.copy()
        left = []
        for r0, c0 in seeds:
            if not work[r0, c0]:
                continue
            work[r0, c0] = False
            members = [(r0, c0)]
            queue = deque(members)
            while queue and len(members) < K:
                r, c = queue.popleft()
                for dr, dc in offs:
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < m and 0 <= cc < n and work[rr, cc]:
                        work[rr, cc] = False
                        members.append((rr, cc))
                        queue.append((rr, cc))
                        if len(members) == K:
                            break
            idx = np.array(members)
            if len(members) == K:
                patches.append(TexturePatch(idx[:, 0], idx[:, 1], T[idx[:, 0], idx[:, 1]], float(d)))
            else:
                left.extend(members)
        leftovers.append((float(d), np.array(left, dtype=int).reshape(-1, 2)))
    if return_leftover:
        return patches, leftovers
    return patches


def rasterize_patch(patch: TexturePatch, patch_shape, source=None, shift=(0, 0)) -> np.ndarray:
    """Window of ``patch_shape`` centred on the patch bounding box.

    With ``source`` the window is cut from that image (zero outside it),
    optionally displaced by ``shift``; otherwise only the patch's own pixels
    are drawn.
    """
    h, w = patch_shape
    top, left = _window_origin(patch, patch_shape)
    top, left = top + int(shift[0]), left + int(shift[1])
    win = np.zeros((h, w))
    if source is not None:
        S = np.asarray(source, dtype=float)
        m, n = S.shape
        r0, r1 = max(top, 0), min(top + h, m)
        c0, c1 = max(left, 0), min(left + w, n)
        if r0 < r1 and c0 < c1:
            win[r0 - top : r1 - top, c0 - left : c1 - left] = S[r0:r1, c0:c1]
        return win
    rr = patch.rows - top
    cc_ = patch.cols - left
    ok = (rr >= 0) & (rr < h) & (cc_ >= 0) & (cc_ < w)
    win[rr[ok], cc_[ok]] = patch.values[ok]
    return win


@dataclass
class TextureBasis:
    """Orthonormal columns ``atoms`` (``p x K_t``) over ``h x w`` windows."""

    atoms: np.ndarray
    patch_shape: tuple[int, int]
    directions_deg: tuple[float, ...] = ()
    source: str = ""

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=float)
        h, w = (int(v) for v in self.patch_shape)
        self.patch_shape = (h, w)
        if self.atoms.ndim != 2 or self.atoms.shape[0] != h * w:
            raise ValueError(f"atoms must have {h * w} rows, got shape {self.atoms.shape}")
        self.directions_deg = tuple(float(a) for a in self.directions_deg)

    @property
    def n_atoms(self) -> int:
        return int(self.atoms.shape[1])

    def orthonormality_error(self) -> float:
        G = self.atoms.T @ self.atoms
        return float(np.max(np.abs(G - np.eye(self.n_atoms)))) if self.n_atoms else 0.0

    def project(self, vectors: np.ndarray) -> np.ndarray:
        """Coefficients ``B_t^T v`` for rows of ``vectors`` (tiles x p)."""
        return vectors @ self.atoms


def orthonormalize(vectors, tol: float = 1e-10, max_atoms: int | None = None) -> np.ndarray:
    """Pivoted modified Gram-Schmidt on the columns of ``vectors``.

    At every step the candidate with the largest remaining norm becomes the
    next atom; candidates whose residual falls to ``tol`` times the largest
    input norm are dropped.
    """
    V = np.array(vectors, dtype=float)
    if V.ndim != 2:
        raise ValueError("expected a 2D array of column vectors")
    scale = np.linalg.norm(V, axis=0).max(initial=0.0)
    atoms = []
    limit = V.shape[1] if max_atoms is None else min(max_atoms, V.shape[1])
    while len(atoms) < limit and scale > 0:
        norms = np.linalg.norm(V, axis=0)
        j = int(np.argmax(norms))
        if norms[j] <= tol * scale:
            break
        q = V[:, j] / norms[j]
        # second pass keeps the atoms orthogonal to machine precision
        for a in atoms:
            q -= (a @ q) * a
        q /= np.linalg.norm(q)
        atoms.append(q)
        V -= np.outer(q, q @ V)
        V[:, j] = 0.0
    p = V.shape[0]
    return np.column_stack(atoms) if atoms else np.zeros((p, 0))


def _window_origin(patch: TexturePatch, patch_shape) -> tuple[int, int]:
    h, w = patch_shape
    cr, cc = patch.center
    return int(np.floor(cr - (h - 1) / 2 + 0.5)), int(np.floor(cc - (w - 1) / 2 + 0.5))


def _shifted_windows(patches, patch_shape, source, radius, max_candidates):
    """Windows around every patch centre displaced by up to ``radius``, kept only when inside ``source``."""
    h, w = patch_shape
    m, n = source.shape
    if m < h or n < w:
        raise ValueError("image is smaller than the patch window")
    grid = np.zeros((m - h + 1 + 2 * radius, n - w + 1 + 2 * radius), bool)
    for p in patches:
        top, left = _window_origin(p, patch_shape)
        r, c = top + radius, left + radius
        if 0 <= r < grid.shape[0] and 0 <= c < grid.shape[1]:
            grid[r, c] = True
    grid = ndimage.binary_dilation(grid, np.ones((2 * radius + 1, 2 * radius + 1), bool))
    org = np.argwhere(grid[radius : radius + m - h + 1, radius : radius + n - w + 1])
    if len(org) == 0:
        raise ValueError("no patch window fits inside the image")
    if len(org) > max_candidates:
        org = org[np.linspace(0, len(org) - 1, max_candidates).round().astype(int)]
    view = np.lib.stride_tricks.sliding_window_view(np.asarray(source, float), (h, w))
    V = view[org[:, 0], org[:, 1]].reshape(len(org), h * w).T
    return V[:, np.linalg.norm(V, axis=0) > 0]


def deduplicate(vectors, cos_max: float = 0.995, return_index: bool = False):
    """Drop columns whose cosine with an earlier kept column exceeds ``cos_max``."""
    V = np.asarray(vectors, dtype=float)
    norms = np.linalg.norm(V, axis=0)
    units = np.empty_like(V)
    keep = []
    for j in range(V.shape[1]):
        if norms[j] == 0:
            continue
        u = V[:, j] / norms[j]
        k = len(keep)
        if k and np.max(u @ units[:, :k]) > cos_max:
            continue
        units[:, k] = u
        keep.append(j)
    if return_index:
        return V[:, keep], keep
    return V[:, keep]


def build_texture_basis(
    patches,
    patch_shape=(17, 17),
    source=None,
    directions_deg=(),
    max_atoms: int | None = None,
    method: str = "mgs",
    tol: float = 1e-10,
    provenance: str = "",
    shift_radius: int = 0,
    max_candidates: int = 4000,
) -> TextureBasis:
    """Rasterise, deduplicate and orthonormalise patches into a basis.

    ``shift_radius > 0`` also cuts windows displaced by up to that many
    pixels around every distinct patch, so the basis covers the texture at
    any offset relative to the tile grid.

    ``method='mgs'`` keeps the pivoted Gram-Schmidt atoms; ``'svd'`` keeps the
    leading left singular vectors of the window matrix, which minimise the
    squared reconstruction error of the windows for a given atom count.
    """
    if len(patches) == 0:
        raise ValueError("no texture patches to build a basis from")
    if shift_radius > 0:
        if source is None:
            raise ValueError("shifted windows need a source texture")
        V = _shifted_windows(patches, patch_shape, np.asarray(source, float), shift_radius, max_candidates)
    else:
        V = np.column_stack([rasterize_patch(p, patch_shape, source).ravel() for p in patches])
    V = deduplicate(V)
    if V.shape[1] == 0:
        raise ValueError("all texture patches are zero")
    if method == "mgs":
        atoms = orthonormalize(V, tol, max_atoms)
    elif method == "svd":
        U, s, _ = np.linalg.svd(V, full_matrices=False)
        r = int(np.sum(s > tol * s[0]))
        if max_atoms is not None:
            r = min(r, max_atoms)
        atoms = U[:, :r]
    else:
        raise ValueError(f"unknown method {method!r}")
    return TextureBasis(atoms, tuple(patch_shape), tuple(directions_deg), provenance)


def _axis_starts(length: int, size: int, offset: int, edge: str) -> np.ndarray:
    """Tile origins along one axis; may be negative in ``'pad'`` mode."""
    if edge == "pad" or length < size:
        first = -offset if offset else 0
        return np.arange(first, length, size)
    starts = list(range(offset, length - size + 1, size))
    if offset:
        starts.insert(0, 0)
    if starts[-1] + size < length:
        starts.append(length - size)
    return np.array(sorted(set(starts)))


@dataclass(frozen=True)
class TileLayout:
    """Patch-sized tiles covering an image.

    With ``edge='pad'`` the tiles form a regular grid and tiles hanging over
    the border see zeros there.  With ``edge='inside'`` the last tile of a row
    or column is pulled back inside the image, and where tiles of one layer
    overlap their reconstructions are averaged.  ``layers=2`` adds a second
    grid shifted by half a tile, so every pixel is reconstructed twice and
    :meth:`assemble` returns the sum of both layers.
    """

    shape: tuple[int, int]
    patch_shape: tuple[int, int]
    layers: int = 1
    edge: str = "pad"
    origins: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.layers not in (1, 2):
            raise ValueError("layers must be 1 or 2")
        if self.edge not in ("pad", "inside"):
            raise ValueError("edge must be 'pad' or 'inside'")
        m, n = self.shape
        h, w = self.patch_shape
        offs = [(0, 0)] if self.layers == 1 else [(0, 0), (h // 2, w // 2)]
        origins = []
        for oy, ox in offs:
            rs = _axis_starts(m, h, oy, self.edge)
            cs = _axis_starts(n, w, ox, self.edge)
            origins.append(np.array([(r, c) for r in rs for c in cs], dtype=int))
        object.__setattr__(self, "origins", tuple(origins))

    @property
    def n_tiles(self) -> int:
        return sum(len(o) for o in self.origins)

    def _pad(self):
        h, w = self.patch_shape
        lo = [max(0, -min(int(o[:, k].min()) for o in self.origins)) for k in (0, 1)]
        hi = [
            max(0, max(int(o[:, 0].max()) for o in self.origins) + h - self.shape[0]),
            max(0, max(int(o[:, 1].max()) for o in self.origins) + w - self.shape[1]),
        ]
        return lo, hi

    def extract(self, image) -> np.ndarray:
        """Tiles as rows of a ``(n_tiles, h*w)`` matrix."""
        Y = np.asarray(image, dtype=float)
        if Y.shape != tuple(self.shape):
            raise ValueError(f"image shape {Y.shape} does not match layout {self.shape}")
        h, w = self.patch_shape
        lo, hi = self._pad()
        P = np.pad(Y, ((lo[0], hi[0]), (lo[1], hi[1])))
        view = np.lib.stride_tricks.sliding_window_view(P, (h, w))
        org = np.concatenate(self.origins)
        return view[org[:, 0] + lo[0], org[:, 1] + lo[1]].reshape(len(org), h * w)

    def assemble(self, tiles) -> np.ndarray:
        """Place tile rows back into the image, averaging overlaps within a layer and summing layers."""
        V = np.asarray(tiles, dtype=float)
        if V.shape[0] != self.n_tiles:
            raise ValueError(f"expected {self.n_tiles} tiles, got {V.shape[0]}")
        m, n = self.shape
        h, w = self.patch_shape
        lo, hi = self._pad()
        out = np.zeros((m, n))
        start = 0
        for org in self.origins:
            acc = np.zeros((m + lo[0] + hi[0], n + lo[1] + hi[1]))
            cnt = np.zeros_like(acc)
            block = V[start : start + len(org)].reshape(-1, h, w)
            for (r, c), tile in zip(org, block):
                acc[r + lo[0] : r + lo[0] + h, c + lo[1] : c + lo[1] + w] += tile
                cnt[r + lo[0] : r + lo[0] + h, c + lo[1] : c + lo[1] + w] += 1
            start += len(org)
            acc = acc[lo[0] : lo[0] + m, lo[1] : lo[1] + n]
            cnt = cnt[lo[0] : lo[0] + m, lo[1] : lo[1] + n]
            out += acc / np.maximum(cnt, 1)
        return out


def reconstruct_texture(basis: TextureBasis, coeffs, layout: TileLayout) -> np.ndarray:
    """``B_t theta_t`` placed tile by tile; ``coeffs`` is ``(n_tiles, K_t)`` or flat."""
    if tuple(layout.patch_shape) != tuple(basis.patch_shape):
        raise ValueError("layout and basis patch shapes differ")
    c = np.asarray(coeffs, dtype=float)
    if c.size != layout.n_tiles * basis.n_atoms:
        raise ValueError(
            f"expected {layout.n_tiles} x {basis.n_atoms} coefficients, got {c.size}"
        )
    c = c.reshape(layout.n_tiles, basis.n_atoms)
    return layout.assemble(c @ basis.atoms.T)


@dataclass(frozen=True)
class LearnConfig:
    lam: float = 0.1
    gamma: float = 0.2
    iter_times: int = 1
    knots: int | None = None
    degree: int = 3
    K: int = 20
    l: int = 2
    patch_shape: tuple[int, int] = (41, 41)
    max_atoms: int | None = 32
    method: str = "svd"
    q: float = 0.5
    shift_radius: int = 20
    max_candidates: int = 4000


@dataclass
class LearnResult:
    basis: TextureBasis
    directions: DirectionSet
    texture: np.ndarray
    patches: list


def learn_texture_basis(Y, config: LearnConfig = LearnConfig(), sampling=None,
                        directions_deg=None, provenance: str = "") -> LearnResult:
    """Decompose a defect-free image, find texture directions and learn ``B_t``.

    With ``directions_deg`` the expansion directions are taken as known and
    detection is skipped.  Raises ``ValueError`` when no direction or no
    patch is found.
    """
    from .decompose import low_rank_decompose
    from .quasi_detect import SamplingConfig, find_directions
    from .smooth_basis import SmoothBasis

    sampling = sampling or SamplingConfig()
    Y = np.asarray(Y, dtype=float)
    smooth = SmoothBasis.for_shape(Y.shape, config.knots, config.degree)
    dec = low_rank_decompose(Y, smooth, config.lam, config.gamma, config.iter_times)
    if directions_deg is None:
        dirs = find_directions(dec.texture, sampling, config.q)
    else:
        dirs = DirectionSet.from_expansion_deg(directions_deg, sampling.max_rotate)
    if not dirs.expansion:
        raise ValueError("no texture direction detected")
    patches = knbn_cluster(dec.texture, dirs, config.K, config.l)
    if not patches:
        raise ValueError("no texture patch reached the minimum size")
    basis = build_texture_basis(patches, config.patch_shape, dec.texture, dirs.expansion_deg,
                                config.max_atoms, config.method, provenance=provenance,
                                shift_radius=config.shift_radius,
                                max_candidates=config.max_candidates)
    return LearnResult(basis, dirs, dec.texture, patches)
