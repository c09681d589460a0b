"""Spatial queries: AABB trees, triangle proxies, closest points on patches.

The AABB tree is a median-split bounding volume hierarchy over item boxes;
all queries return exactly the brute-force answer sets over the stored
primitives.  Closest points on a Bezier patch come from projected Newton
seeded at the best cell of a coarse parameter grid, with a dense-grid
fallback when Newton stalls.
"""

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .geometry import bezier
from .geometry.patches import PatchSet, SurfacePatch


@dataclass(frozen=True)
class BoundingBox:
    lo: np.ndarray
    hi: np.ndarray

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def intersects(self, other: "BoundingBox") -> bool:
        return bool(np.all(self.lo <= other.hi) and np.all(other.lo <= self.hi))

    def inflated(self, margin: float) -> "BoundingBox":
        return BoundingBox(self.lo - margin, self.hi + margin)


def patch_bounding_box(patch: SurfacePatch) -> BoundingBox:
    """Control points bound the patch, so their box does too."""
    lo, hi = patch.control_box()
    return BoundingBox(lo, hi)


@dataclass(frozen=True)
class NearZoneBox:
    """Patch box inflated by 2 L(P); contains all points within L(P)."""

    base: BoundingBox
    inflation: float

    @property
    def box(self) -> BoundingBox:
        return self.base.inflated(self.inflation)


_LEAF_SIZE = 8


class AABBTree:
    """Median-split AABB tree over (box, id) items.

    kind is "patch-box", "near-zone-box" or "proxy-triangle"; triangle trees
    additionally carry the vertex array used by nearest_triangle.
    """

    def __init__(self, lo, hi, ids, kind="patch-box", triangles=None):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.ids = np.asarray(ids, dtype=np.int64)
        self.kind = kind
        self.triangles = triangles
        n = len(self.ids)
        if n == 0:
            raise UsageError("AABB tree needs at least one item")
        centers = 0.5 * (self.lo + self.hi)
        # flat arrays; children indices, -1 marks leaf nodes
        self._node_lo = []
        self._node_hi = []
        self._left = []
        self._right = []
        self._leaf_start = []
        self._leaf_count = []
        self.order = np.arange(n)
        self._build(0, n, centers)
        self._node_lo = np.asarray(self._node_lo)
        self._node_hi = np.asarray(self._node_hi)
        self._left = np.asarray(self._left)
        self._right = np.asarray(self._right)
        self._leaf_start = np.asarray(self._leaf_start)
        self._leaf_count = np.asarray(self._leaf_count)

    def _build(self, start, end, centers) -> int:
        idx = self.order[start:end]
        node = len(self._node_lo)
        self._node_lo.append(self.lo[idx].min(axis=0))
        self._node_hi.append(self.hi[idx].max(axis=0))
        self._left.append(-1)
        self._right.append(-1)
        self._leaf_start.append(start)
        self._leaf_count.append(0)
        if end - start <= _LEAF_SIZE:
            self._leaf_count[node] = end - start
            return node
        c = centers[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        mid = (end - start) // 2
        part = np.argpartition(c[:, axis], mid)
        self.order[start:end] = idx[part]
        left = self._build(start, start + mid, centers)
        right = self._build(start + mid, end, centers)
        self._left[node] = left
        self._right[node] = right
        return node

    def query_point(self, x) -> np.ndarray:
        """ids of all item boxes containing x."""
        x = np.asarray(x, dtype=float)
        out = []
        stack = [0]
        while stack:
            node = stack.pop()
            if np.any(x < self._node_lo[node]) or np.any(x > self._node_hi[node]):
                continue
            if self._left[node] < 0:
                s = self._leaf_start[node]
                items = self.order[s : s + self._leaf_count[node]]
                inside = np.all(
                    (self.lo[items] <= x) & (x <= self.hi[items]), axis=1
                )
                out.extend(self.ids[items[inside]])
            else:
                stack.append(self._left[node])
                stack.append(self._right[node])
        return np.asarray(sorted(out), dtype=np.int64)

    def query_box(self, lo, hi) -> np.ndarray:
        """ids of all item boxes intersecting the box [lo, hi]."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        out = []
        stack = [0]
        while stack:
            node = stack.pop()
            if np.any(hi < self._node_lo[node]) or np.any(lo > self._node_hi[node]):
                continue
            if self._left[node] < 0:
                s = self._leaf_start[node]
                items = self.order[s : s + self._leaf_count[node]]
                ok = np.all(
                    (self.lo[items] <= hi) & (lo <= self.hi[items]), axis=1
                )
                out.extend(self.ids[items[ok]])
            else:
                stack.append(self._left[node])
                stack.append(self._right[node])
        return np.asarray(sorted(out), dtype=np.int64)

    def _expand_leaves(self, rows, nodes):
        """(row, item-slot) pairs for leaf frontier entries, vectorized."""
        counts = self._leaf_count[nodes]
        total = int(counts.sum())
        if total == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        rep_rows = np.repeat(rows, counts)
        offsets = np.repeat(self._leaf_start[nodes], counts)
        within = np.arange(total) - np.repeat(
            np.concatenate([[0], np.cumsum(counts)[:-1]]), counts
        )
        items = self.order[offsets + within]
        return rep_rows, items

    def query_points_bulk(self, points):
        """Containing-box ids for many points: (point rows, id rows) arrays.

        Level-synchronous traversal; equivalent to query_point per row but
        vectorized over the whole frontier including leaf expansion.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        rows_out: list[np.ndarray] = []
        ids_out: list[np.ndarray] = []
        frontier_pts = np.arange(len(points))
        frontier_nodes = np.zeros(len(points), dtype=np.int64)
        while len(frontier_pts):
            x = points[frontier_pts]
            inside = np.all(
                (x >= self._node_lo[frontier_nodes])
                & (x <= self._node_hi[frontier_nodes]),
                axis=1,
            )
            frontier_pts = frontier_pts[inside]
            frontier_nodes = frontier_nodes[inside]
            if not len(frontier_pts):
                break
            leaf = self._left[frontier_nodes] < 0
            if leaf.any():
                rep_rows, items = self._expand_leaves(
                    frontier_pts[leaf], frontier_nodes[leaf]
                )
                p = points[rep_rows]
                hit = np.all((self.lo[items] <= p) & (p <= self.hi[items]), axis=1)
                rows_out.append(rep_rows[hit])
                ids_out.append(self.ids[items[hit]])
            inner_pts = frontier_pts[~leaf]
            inner_nodes = frontier_nodes[~leaf]
            frontier_pts = np.concatenate([inner_pts, inner_pts])
            frontier_nodes = np.concatenate(
                [self._left[inner_nodes], self._right[inner_nodes]]
            )
        if rows_out:
            return np.concatenate(rows_out), np.concatenate(ids_out)
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)

    def query_boxes_bulk(self, los, his):
        """Intersecting-box ids for many query boxes, as (row, id) arrays."""
        los = np.atleast_2d(np.asarray(los, dtype=float))
        his = np.atleast_2d(np.asarray(his, dtype=float))
        rows_out: list[np.ndarray] = []
        ids_out: list[np.ndarray] = []
        frontier_rows = np.arange(len(los))
        frontier_nodes = np.zeros(len(los), dtype=np.int64)
        while len(frontier_rows):
            meet = np.all(
                (his[frontier_rows] >= self._node_lo[frontier_nodes])
                & (los[frontier_rows] <= self._node_hi[frontier_nodes]),
                axis=1,
            )
            frontier_rows = frontier_rows[meet]
            frontier_nodes = frontier_nodes[meet]
            if not len(frontier_rows):
                break
            leaf = self._left[frontier_nodes] < 0
            if leaf.any():
                rep_rows, items = self._expand_leaves(
                    frontier_rows[leaf], frontier_nodes[leaf]
                )
                hit = np.all(
                    (self.lo[items] <= his[rep_rows]) & (los[rep_rows] <= self.hi[items]),
                    axis=1,
                )
                rows_out.append(rep_rows[hit])
                ids_out.append(self.ids[items[hit]])
            inner_rows = frontier_rows[~leaf]
            inner_nodes = frontier_nodes[~leaf]
            frontier_rows = np.concatenate([inner_rows, inner_rows])
            frontier_nodes = np.concatenate(
                [self._left[inner_nodes], self._right[inner_nodes]]
            )
        if rows_out:
            return np.concatenate(rows_out), np.concatenate(ids_out)
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)

    def _box_sqdist(self, node, x):
        d = np.maximum(self._node_lo[node] - x, 0.0) + np.maximum(
            x - self._node_hi[node], 0.0
        )
        return float(d @ d)

    def nearest_triangle(self, x):
        """(triangle id, distance) of the closest stored proxy triangle."""
        if self.kind != "proxy-triangle" or self.triangles is None:
            raise UsageError("nearest_triangle requires a proxy-triangle tree")
        x = np.asarray(x, dtype=float)
        best_d2 = np.inf
        best_id = -1
        stack = [(self._box_sqdist(0, x), 0)]
        while stack:
            d2, node = stack.pop()
            if d2 >= best_d2:
                continue
            if self._left[node] < 0:
                s = self._leaf_start[node]
                items = self.order[s : s + self._leaf_count[node]]
                tri = self.triangles[items]
                d2s = point_triangle_sqdist(x, tri)
                for k in np.argsort(d2s):
                    cand_d2, cand_id = d2s[k], int(self.ids[items[k]])
                    if cand_d2 < best_d2 - 1e-300 or (
                        cand_d2 <= best_d2 and cand_id < best_id
                    ):
                        best_d2, best_id = cand_d2, cand_id
            else:
                children = sorted(
                    (
                        (self._box_sqdist(self._left[node], x), self._left[node]),
                        (self._box_sqdist(self._right[node], x), self._right[node]),
                    ),
                    reverse=True,
                )
                stack.extend(children)
        return best_id, float(np.sqrt(best_d2))


def build_tree(items, kind="patch-box", triangles=None) -> AABBTree:
    """Build an AABB tree from (BoundingBox, id) pairs."""
    if not items:
        raise UsageError("cannot build an AABB tree from no items")
    lo = np.stack([b.lo for b, _ in items])
    hi = np.stack([b.hi for b, _ in items])
    ids = [i for _, i in items]
    return AABBTree(lo, hi, ids, kind=kind, triangles=triangles)


def point_triangle_sqdist(p, tri) -> np.ndarray:
    """Squared distances from p to triangles, tri shape (T, 3, 3)."""
    tri = np.asarray(tri, dtype=float).reshape(-1, 3, 3)
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("tk,tk->t", ab, ap)
    d2 = np.einsum("tk,tk->t", ac, ap)
    bp = p - b
    d3 = np.einsum("tk,tk->t", ab, bp)
    d4 = np.einsum("tk,tk->t", ac, bp)
    cp = p - c
    d5 = np.einsum("tk,tk->t", ab, cp)
    d6 = np.einsum("tk,tk->t", ac, cp)

    closest = np.empty_like(tri[:, 0])
    done = np.zeros(len(tri), dtype=bool)

    def set_closest(mask, pts):
        m = mask & ~done
        closest[m] = pts[m] if pts.ndim == 2 else pts
        done[m] = True

    set_closest((d1 <= 0) & (d2 <= 0), a)
    set_closest((d3 >= 0) & (d4 <= d3), b)
    set_closest((d6 >= 0) & (d5 <= d6), c)

    vc = d1 * d4 - d3 * d2
    mask = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    v = np.where(np.abs(d1 - d3) > 0, d1 / np.where(d1 - d3 == 0, 1.0, d1 - d3), 0.0)
    set_closest(mask, a + v[:, None] * ab)

    vb = d5 * d2 - d1 * d6
    mask = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    w = np.where(np.abs(d2 - d6) > 0, d2 / np.where(d2 - d6 == 0, 1.0, d2 - d6), 0.0)
    set_closest(mask, a + w[:, None] * ac)

    va = d3 * d6 - d5 * d4
    mask = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    denom = (d4 - d3) + (d5 - d6)
    w = np.where(denom != 0, (d4 - d3) / np.where(denom == 0, 1.0, denom), 0.0)
    set_closest(mask, b + w[:, None] * (c - b))

    denom = va + vb + vc
    denom = np.where(denom == 0, 1.0, denom)
    v = vb / denom
    w = vc / denom
    set_closest(np.ones(len(tri), dtype=bool), a + v[:, None] * ab + w[:, None] * ac)

    d = closest - p
    return np.einsum("tk,tk->t", d, d)


def points_triangles_min_sqdist(points, tris, return_closest: bool = False):
    """Min squared distance from each point to a shared triangle set.

    points (M, 3), tris (T, 3, 3) -> (M,); fully vectorized Ericson
    point-triangle projection over the M x T pair grid.  With
    return_closest the (M, 3) argmin positions are returned as well.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    tris = np.asarray(tris, dtype=float).reshape(-1, 3, 3)
    a = tris[None, :, 0]
    b = tris[None, :, 1]
    c = tris[None, :, 2]
    p = points[:, None, :]
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.sum(ab * ap, axis=-1)
    d2 = np.sum(ac * ap, axis=-1)
    bp = p - b
    d3 = np.sum(ab * bp, axis=-1)
    d4 = np.sum(ac * bp, axis=-1)
    cp = p - c
    d5 = np.sum(ab * cp, axis=-1)
    d6 = np.sum(ac * cp, axis=-1)

    m, t = d1.shape
    closest = np.empty((m, t, 3))
    done = np.zeros((m, t), dtype=bool)

    def fill(mask, pts):
        mask = mask & ~done
        if mask.any():
            closest[mask] = np.broadcast_to(pts, closest.shape)[mask]
            done[mask] = True

    fill((d1 <= 0) & (d2 <= 0), a)
    fill((d3 >= 0) & (d4 <= d3), b)
    fill((d6 >= 0) & (d5 <= d6), c)

    vc = d1 * d4 - d3 * d2
    denom = np.where(d1 - d3 == 0, 1.0, d1 - d3)
    fill((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + (d1 / denom)[..., None] * ab)

    vb = d5 * d2 - d1 * d6
    denom = np.where(d2 - d6 == 0, 1.0, d2 - d6)
    fill((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + (d2 / denom)[..., None] * ac)

    va = d3 * d6 - d5 * d4
    denom = (d4 - d3) + (d5 - d6)
    denom = np.where(denom == 0, 1.0, denom)
    fill(
        (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0),
        b + ((d4 - d3) / denom)[..., None] * (c - b),
    )

    denom = np.where(va + vb + vc == 0, 1.0, va + vb + vc)
    fill(
        np.ones((m, t), dtype=bool),
        a + (vb / denom)[..., None] * ab + (vc / denom)[..., None] * ac,
    )
    diff = closest - p
    d2 = np.einsum("mtk,mtk->mt", diff, diff)
    if not return_closest:
        return d2.min(axis=1)
    arg = np.argmin(d2, axis=1)
    rows = np.arange(m)
    return d2[rows, arg], closest[rows, arg]


# ---------------------------------------------------------------------------
# Closest point on a patch: projected Newton with grid seeding
# ---------------------------------------------------------------------------


@dataclass
class ClosestPointResult:
    params: np.ndarray  # (M, 2)
    distance: np.ndarray  # (M,)
    converged: np.ndarray  # (M,) bool


def _patch_state(patch, su, tu, X):
    n = patch.degree
    b0s = bezier.bernstein_matrix(n, su)
    b0t = bezier.bernstein_matrix(n, tu)
    pos = bezier.eval_points(patch.coeffs, b0s, b0t)
    diff = pos - X
    f = 0.5 * np.einsum("mk,mk->m", diff, diff)
    return b0s, b0t, pos, diff, f


def closest_point_on_patch(
    patch: SurfacePatch,
    points,
    eps_opt: float = 1e-14,
    max_iter: int = 50,
    seed: int = 5,
) -> ClosestPointResult:
    """Minimize |P(s, t) - x|^2 over the parameter square for each x.

    Projected (box-constrained) Newton started from the best cell of a
    seed x seed parameter grid; points that fail to converge fall back to a
    dense 64 x 64 grid scan plus polish and are flagged.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    m = X.shape[0]
    n = patch.degree
    grid = np.linspace(-1.0, 1.0, seed)
    bg = bezier.bernstein_matrix(n, grid)
    gp = bezier.eval_grid(patch.coeffs, bg, bg).reshape(-1, 3)
    d2 = ((gp[None, :, :] - X[:, None, :]) ** 2).sum(axis=2)
    best = np.argmin(d2, axis=1)
    cur = np.stack([grid[best // seed], grid[best % seed]], axis=1)

    cur, f, conv = _projected_newton(patch, cur, X, eps_opt, max_iter)

    # value-checked fallback: a dense grid scan catches Newton runs that
    # converged into the wrong basin as well as outright stalls
    dense = np.linspace(-1.0, 1.0, 64)
    dp = getattr(patch, "_dense_grid", None)
    if dp is None:
        bd = bezier.bernstein_matrix(n, dense)
        dp = bezier.eval_grid(patch.coeffs, bd, bd).reshape(-1, 3)
        patch._dense_grid = dp
    d2 = ((dp[None, :, :] - X[:, None, :]) ** 2).sum(axis=2)
    bestd = np.argmin(d2, axis=1)
    grid_f = 0.5 * d2[np.arange(m), bestd]
    bad = (~conv) | (grid_f < f * (1.0 - 1e-12))
    if bad.any():
        seeds = np.stack([dense[bestd[bad] // 64], dense[bestd[bad] % 64]], axis=1)
        cur2, f2, conv2 = _projected_newton(patch, seeds, X[bad], eps_opt, max_iter)
        better = f2 <= f[bad]
        rows = np.flatnonzero(bad)[better]
        cur[rows] = cur2[better]
        f[rows] = f2[better]
        conv[np.flatnonzero(bad)[conv2 & better]] = True

    return ClosestPointResult(
        params=cur, distance=np.sqrt(2.0 * f), converged=conv
    )


def _projected_newton(patch, cur, X, eps_opt, max_iter):
    n = patch.degree
    m = X.shape[0]
    cur = cur.copy()
    active = np.ones(m, dtype=bool)
    converged = np.zeros(m, dtype=bool)
    _, _, _, _, f = _patch_state(patch, cur[:, 0], cur[:, 1], X)
    tol = max(eps_opt, 1e-15)
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        s, t = cur[idx, 0], cur[idx, 1]
        b0s = bezier.bernstein_matrix(n, s)
        b1s = bezier.bernstein_matrix(n, s, 1)
        b2s = bezier.bernstein_matrix(n, s, 2)
        b0t = bezier.bernstein_matrix(n, t)
        b1t = bezier.bernstein_matrix(n, t, 1)
        b2t = bezier.bernstein_matrix(n, t, 2)
        C = patch.coeffs
        pos = bezier.eval_points(C, b0s, b0t)
        ps = bezier.eval_points(C, b1s, b0t)
        pt = bezier.eval_points(C, b0s, b1t)
        pss = bezier.eval_points(C, b2s, b0t)
        pst = bezier.eval_points(C, b1s, b1t)
        ptt = bezier.eval_points(C, b0s, b2t)
        diff = pos - X[idx]
        g1 = np.einsum("mk,mk->m", ps, diff)
        g2 = np.einsum("mk,mk->m", pt, diff)
        h11 = np.einsum("mk,mk->m", ps, ps) + np.einsum("mk,mk->m", pss, diff)
        h12 = np.einsum("mk,mk->m", ps, pt) + np.einsum("mk,mk->m", pst, diff)
        h22 = np.einsum("mk,mk->m", pt, pt) + np.einsum("mk,mk->m", ptt, diff)
        det = h11 * h22 - h12 * h12
        ok = (det > 1e-300) & (h11 > 0)
        det_safe = np.where(ok, det, 1.0)
        ds = np.where(ok, (-g1 * h22 + g2 * h12) / det_safe, 0.0)
        dt = np.where(ok, (-g2 * h11 + g1 * h12) / det_safe, 0.0)
        scale = np.maximum(np.einsum("mk,mk->m", ps, ps) + np.einsum("mk,mk->m", pt, pt), 1e-300)
        ds = np.where(ok, ds, -g1 / scale)
        dt = np.where(ok, dt, -g2 / scale)
        # active box constraints: bound reached with the gradient pushing
        # outward; Newton then acts in the free coordinate only
        act_s = ((s <= -1.0) & (g1 > 0)) | ((s >= 1.0) & (g1 < 0))
        act_t = ((t <= -1.0) & (g2 > 0)) | ((t >= 1.0) & (g2 < 0))
        h11_safe = np.where(h11 > 1e-300, h11, 1.0)
        h22_safe = np.where(h22 > 1e-300, h22, 1.0)
        edge_dt = np.where(h22 > 0, -g2 / h22_safe, -g2 / scale)
        edge_ds = np.where(h11 > 0, -g1 / h11_safe, -g1 / scale)
        ds = np.where(act_s, 0.0, np.where(act_t, edge_ds, ds))
        dt = np.where(act_t, 0.0, np.where(act_s, edge_dt, dt))

        # backtracking with projection onto the parameter box
        fcur = f[idx]
        alpha = np.ones(len(idx))
        newp = np.empty((len(idx), 2))
        fnew = np.empty(len(idx))
        pending = np.ones(len(idx), dtype=bool)
        for _bt in range(25):
            trial_s = np.clip(cur[idx, 0] + alpha * ds, -1.0, 1.0)
            trial_t = np.clip(cur[idx, 1] + alpha * dt, -1.0, 1.0)
            _, _, _, _, ftrial = _patch_state(patch, trial_s, trial_t, X[idx])
            improve = pending & (ftrial <= fcur)
            newp[improve, 0] = trial_s[improve]
            newp[improve, 1] = trial_t[improve]
            fnew[improve] = ftrial[improve]
            pending &= ~improve
            if not pending.any():
                break
            alpha[pending] *= 0.5
        newp[pending] = cur[idx][pending]
        fnew[pending] = fcur[pending]

        step = np.max(np.abs(newp - cur[idx]), axis=1)
        # done when the projected step stalls at machine scale or no
        # decrease was possible (already at a numerical minimum)
        done = (step <= tol) | pending
        cur[idx] = newp
        f[idx] = fnew
        converged[idx[done]] = True
        active[idx[done]] = False
    return cur, f, converged


# ---------------------------------------------------------------------------
# Triangle proxies and the global closest-point search
# ---------------------------------------------------------------------------


@dataclass
class TriangleProxies:
    vertices: np.ndarray  # (T, 3, 3)
    patch_ids: np.ndarray  # (T,)


def triangle_proxies(patchset: PatchSet, k: int = 8) -> TriangleProxies:
    """k x k sample grid per patch triangulated into 2 (k-1)^2 triangles."""
    grid = np.linspace(-1.0, 1.0, k)
    verts = []
    pids = []
    for n, (idx, coeffs) in patchset.degree_groups().items():
        b = bezier.bernstein_matrix(n, grid)
        pos = bezier.eval_grid(coeffs, b, b)  # (P, k, k, 3)
        p00 = pos[:, :-1, :-1].reshape(len(idx), -1, 3)
        p10 = pos[:, 1:, :-1].reshape(len(idx), -1, 3)
        p01 = pos[:, :-1, 1:].reshape(len(idx), -1, 3)
        p11 = pos[:, 1:, 1:].reshape(len(idx), -1, 3)
        tri1 = np.stack([p00, p10, p11], axis=2)
        tri2 = np.stack([p00, p11, p01], axis=2)
        tri = np.concatenate([tri1, tri2], axis=1)
        verts.append(tri.reshape(-1, 3, 3))
        pids.append(np.repeat(idx, tri.shape[1]))
    return TriangleProxies(
        vertices=np.concatenate(verts), patch_ids=np.concatenate(pids)
    )


class SurfaceIndex:
    """Patch-box and triangle-proxy trees for one patch set."""

    def __init__(self, patchset: PatchSet, proxy_k: int = 8):
        self.patchset = patchset
        lo, hi = patchset.control_boxes()
        self.box_lo, self.box_hi = lo, hi
        self.tree_boxes = AABBTree(lo, hi, np.arange(len(patchset)), kind="patch-box")
        self.proxies = triangle_proxies(patchset, proxy_k)
        tlo = self.proxies.vertices.min(axis=1)
        thi = self.proxies.vertices.max(axis=1)
        self.tree_triangles = AABBTree(
            tlo,
            thi,
            np.arange(len(self.proxies.patch_ids)),
            kind="proxy-triangle",
            triangles=self.proxies.vertices,
        )


def surface_index(patchset: PatchSet, proxy_k: int = 8) -> SurfaceIndex:
    if patchset._index is None:
        patchset._index = SurfaceIndex(patchset, proxy_k)
    return patchset._index


def closest_point_global_bulk(
    patchset: PatchSet, points, eps_opt: float = 1e-14, index: SurfaceIndex | None = None
):
    """Global closest points: (patch ids, params (M, 2), distances (M,)).

    Candidate patch from the nearest proxy triangle, Newton-refined distance,
    then a box gather of every patch that could be closer; ties broken by
    the lowest patch id.
    """
    if len(patchset) == 0:
        raise UsageError("empty patch set")
    X = np.atleast_2d(np.asarray(points, dtype=float))
    m = X.shape[0]
    if index is None:
        index = surface_index(patchset)

    cand0 = np.empty(m, dtype=np.int64)
    for j in range(m):
        tri_id, _ = index.tree_triangles.nearest_triangle(X[j])
        cand0[j] = index.proxies.patch_ids[tri_id]

    best_pid = cand0.copy()
    best_params = np.zeros((m, 2))
    best_dist = np.full(m, np.inf)
    for pid in np.unique(cand0):
        rows = np.flatnonzero(cand0 == pid)
        res = closest_point_on_patch(patchset[pid], X[rows], eps_opt)
        best_params[rows] = res.params
        best_dist[rows] = res.distance

    pair_rows: dict[int, list[int]] = {}
    for j in range(m):
        d0 = best_dist[j]
        ids = index.tree_boxes.query_box(X[j] - d0, X[j] + d0)
        for pid in ids:
            if pid != best_pid[j]:
                pair_rows.setdefault(int(pid), []).append(j)

    for pid, rows in pair_rows.items():
        rows = np.asarray(rows)
        res = closest_point_on_patch(patchset[pid], X[rows], eps_opt)
        better = (res.distance < best_dist[rows] - 1e-300) | (
            np.isclose(res.distance, best_dist[rows], rtol=1e-12, atol=1e-15)
            & (pid < best_pid[rows])
        )
        upd = rows[better]
        best_pid[upd] = pid
        best_params[upd] = res.params[better]
        best_dist[upd] = np.minimum(best_dist[upd], res.distance[better])

    return best_pid, best_params, best_dist


def closest_point_global(patchset: PatchSet, x, eps_opt: float = 1e-14, index=None):
    """Single-point variant: (patch id, s, t, distance)."""
    pids, params, dists = closest_point_global_bulk(patchset, [x], eps_opt, index)
    return int(pids[0]), float(params[0, 0]), float(params[0, 1]), float(dists[0])
