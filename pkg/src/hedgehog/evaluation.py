"""Singular/near-singular evaluation by off-surface extrapolation.

Near-surface potentials are computed at p + 1 collinear check points placed
along the surface normal at the target's closest surface point, using smooth
quadrature on the upsampled patch set, then extrapolated back to the target
with the first-kind barycentric formula.  Far and intermediate targets
dispatch to plain smooth quadrature on the coarse and fine sets.
"""

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .backends import default_backend
from .chebyshev import extrapolation_weights
from .errors import DegenerateGeometryError, UsageError
from .geometry.patches import PatchSet, SurfacePatch, characteristic_length
from .geometry.patches import evaluate as patch_evaluate
from .geometry.patches import normal as patch_normal
from .kernels import LAPLACE, KernelFamily
from .quadrature import QuadratureNodeSet, smooth_potential, upsample_density
from .spatial import closest_point_global_bulk, surface_index


@dataclass
class EvalOptions:
    """Extrapolation order, check-point spacing and accuracy targets."""

    p: int = 6
    b: float = 0.125
    a: float | None = None  # defaults to b / 6
    q: int = 20
    eps_target: float = 1e-6
    sqrtL_scaling: bool = False
    eps_opt: float = 1e-14

    def __post_init__(self):
        if self.a is None:
            self.a = self.b / 6.0
        if not (0.0 < self.a < 1.0 and 0.0 < self.b < 1.0):
            raise UsageError("spacing factors must satisfy 0 < a, b < 1")
        if self.p < 1:
            raise UsageError("extrapolation order must be at least 1")

    def spacings(self, length):
        scale = np.sqrt(length) if self.sqrtL_scaling else length
        return self.b * scale, self.a * scale


@dataclass
class CheckPointSet:
    """The p + 1 collinear off-surface points for one target anchor."""

    points: np.ndarray  # (p + 1, 3)
    first_distance: float  # R
    spacing: float  # r
    anchor: np.ndarray  # closest surface point y*
    normal: np.ndarray  # unit exterior normal at y*
    side: str  # "interior" or "exterior"

    @property
    def p(self) -> int:
        return len(self.points) - 1

    @property
    def center(self) -> np.ndarray:
        """Check center: anchor offset by R + r (p + 1) / 2 along the line."""
        sgn = -1.0 if self.side == "interior" else 1.0
        dist = self.first_distance + self.spacing * (self.p + 1) / 2.0
        return self.anchor + sgn * dist * self.normal

    def t_coordinate(self, x) -> float:
        """Extrapolation coordinate t_x = (|x - y*| - R) / r."""
        return (np.linalg.norm(np.asarray(x) - self.anchor) - self.first_distance) / self.spacing


def generate_check_points(
    patch: SurfacePatch, s: float, t: float, opts: EvalOptions, side: str = "interior"
) -> CheckPointSet:
    """Check points along the normal at P(s, t), spaced by the patch length."""
    anchor = patch_evaluate(patch, s, t)
    nrm = patch_normal(patch, s, t)
    if not np.all(np.isfinite(nrm)):
        raise DegenerateGeometryError("degenerate normal for check points")
    length = characteristic_length(patch)
    ray, step = opts.spacings(length)
    sgn = -1.0 if side == "interior" else 1.0
    offs = ray + step * np.arange(opts.p + 1)
    pts = anchor[None, :] + sgn * offs[:, None] * nrm[None, :]
    return CheckPointSet(
        points=pts,
        first_distance=float(ray),
        spacing=float(step),
        anchor=anchor,
        normal=nrm,
        side=side,
    )


class Zone(IntEnum):
    FAR = 0
    INTERMEDIATE = 1
    NEAR = 2


@dataclass
class ZoneLabels:
    """Per-target classification; closest-point data only where zone = NEAR."""

    inside: np.ndarray  # (M,) bool
    zone: np.ndarray  # (M,) Zone values
    patch_ids: np.ndarray  # (M,), -1 when not computed
    params: np.ndarray  # (M, 2)
    distance: np.ndarray  # (M,), inf when not computed
    winding: np.ndarray  # (M,)

    def __len__(self):
        return len(self.inside)


def mark_points(
    targets,
    coarse_nodes: QuadratureNodeSet,
    eps_target: float,
    backend=None,
    index=None,
) -> ZoneLabels:
    """Classify targets into far/intermediate/near and inside/outside.

    The generalized winding number (Laplace double layer of unit density on
    the coarse nodes) culls far-inside and outside points; remaining points
    get a closest-point query.  Points near the surface can in principle be
    mismarked by the winding cull; the near/intermediate split uses the
    patch length at the closest point.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    m = len(targets)
    backend = backend or default_backend()
    winding = smooth_potential(
        LAPLACE, "double", coarse_nodes, np.ones(len(coarse_nodes)), targets, backend
    )[:, 0]
    inside = np.zeros(m, dtype=bool)
    zone = np.full(m, Zone.FAR, dtype=np.int64)
    pids = np.full(m, -1, dtype=np.int64)
    params = np.zeros((m, 2))
    dist = np.full(m, np.inf)

    far_inside = np.abs(winding - 1.0) < eps_target
    outside = np.abs(winding) < eps_target
    inside[far_inside] = True
    rest = ~(far_inside | outside)
    if rest.any():
        patchset = coarse_nodes.patchset
        idx = surface_index(patchset) if index is None else index
        rp, rpar, rd = closest_point_global_bulk(patchset, targets[rest], index=idx)
        rows = np.flatnonzero(rest)
        pids[rows] = rp
        params[rows] = rpar
        dist[rows] = rd
        lengths = patchset.lengths[rp]
        zone[rows[rd <= lengths]] = Zone.NEAR
        zone[rows[rd > lengths]] = Zone.INTERMEDIATE
        anchors = np.empty((len(rows), 3))
        normals = np.empty((len(rows), 3))
        for k, row in enumerate(rows):
            patch = patchset[pids[row]]
            anchors[k] = patch_evaluate(patch, params[row, 0], params[row, 1])
            normals[k] = patch_normal(patch, params[row, 0], params[row, 1])
        inside[rows] = np.einsum("mk,mk->m", normals, targets[rest] - anchors) < 0.0
    return ZoneLabels(
        inside=inside, zone=zone, patch_ids=pids, params=params,
        distance=dist, winding=winding,
    )


def surface_node_labels(nodes: QuadratureNodeSet, inside: bool = True) -> ZoneLabels:
    """Labels for on-surface targets: each node anchors its own evaluation."""
    m = len(nodes)
    return ZoneLabels(
        inside=np.full(m, inside),
        zone=np.full(m, Zone.NEAR, dtype=np.int64),
        patch_ids=nodes.patch_ids.copy(),
        params=nodes.params.copy(),
        distance=np.zeros(m),
        winding=np.full(m, 0.5),
    )


def _near_geometry(labels: ZoneLabels, rows, patchset: PatchSet):
    """Anchors, normals and lengths for near targets from their labels."""
    anchors = np.empty((len(rows), 3))
    normals = np.empty((len(rows), 3))
    by_patch: dict[int, list[int]] = {}
    for k, row in enumerate(rows):
        by_patch.setdefault(int(labels.patch_ids[row]), []).append(k)
    for pid, ks in by_patch.items():
        patch = patchset[pid]
        ks = np.asarray(ks)
        prm = labels.params[rows[ks]]
        anchors[ks] = patch_evaluate(patch, prm[:, 0], prm[:, 1])
        normals[ks] = patch_normal(patch, prm[:, 0], prm[:, 1])
    lengths = patchset.lengths[labels.patch_ids[rows]]
    return anchors, normals, lengths


def _check_point_block(anchors, normals, lengths, opts: EvalOptions, sign):
    """Stacked check points; row layout (target, s) -> target * (p+1) + s."""
    scale = np.sqrt(lengths) if opts.sqrtL_scaling else lengths
    ray = opts.b * scale
    step = opts.a * scale
    offs = ray[:, None] + step[:, None] * np.arange(opts.p + 1)[None, :]
    pts = anchors[:, None, :] + sign[:, None, None] * offs[:, :, None] * normals[:, None, :]
    return pts.reshape(-1, 3), ray, step


def _extrapolate_rows(values, t_x, p):
    """Extrapolate stacked check values: values (M*(p+1), d), t_x (M,).

    The contraction runs in long double; the cardinal weights are large and
    alternating, and the cancellation noise would otherwise cap the scheme
    near 1e-11.
    """
    d = values.shape[1]
    vals = values.reshape(-1, p + 1, d).astype(np.longdouble)
    w = extrapolation_weights(p, np.asarray(t_x, dtype=float))
    return np.einsum("ms,msd->md", w, vals).astype(float)


def evaluate_one_sided(
    targets,
    labels: ZoneLabels,
    kernel: KernelFamily,
    density,
    coarse_nodes: QuadratureNodeSet,
    fine_nodes: QuadratureNodeSet,
    opts: EvalOptions,
    backend=None,
    layer: str = "double",
    fine_density=None,
    domain_side: str = "interior",
):
    """Zone-dispatched evaluation of a layer potential at marked targets.

    Far targets use coarse smooth quadrature, intermediate targets the fine
    (upsampled) quadrature, near/on-surface targets the extrapolated
    evaluation with the limit taken from the domain side.  Targets on the
    wrong side of the surface get value 0 and a False entry in the returned
    mask.

    Returns (values (M, d), evaluated_mask (M,)).
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    backend = backend or default_backend()
    m = len(targets)
    d = kernel.d
    values = np.zeros((m, d))
    in_domain = labels.inside if domain_side == "interior" else ~labels.inside
    mask = in_domain.copy()

    if layer == "combined":
        density = (
            np.asarray(density[0], float).reshape(len(coarse_nodes), -1),
            np.asarray(density[1], float).reshape(len(coarse_nodes), -1),
        )
        if fine_density is None:
            fine_density = (
                upsample_density(coarse_nodes, density[0], fine_nodes),
                upsample_density(coarse_nodes, density[1], fine_nodes),
            )
    else:
        density = np.asarray(density, float).reshape(len(coarse_nodes), -1)
        if fine_density is None:
            fine_density = upsample_density(coarse_nodes, density, fine_nodes)

    far = np.flatnonzero((labels.zone == Zone.FAR) & in_domain)
    if len(far):
        values[far] = smooth_potential(
            kernel, layer, coarse_nodes, density, targets[far], backend
        )
    mid = np.flatnonzero((labels.zone == Zone.INTERMEDIATE) & in_domain)
    if len(mid):
        values[mid] = smooth_potential(
            kernel, layer, fine_nodes, fine_density, targets[mid], backend
        )
    near = np.flatnonzero((labels.zone == Zone.NEAR) & in_domain)
    if len(near):
        anchors, normals, lengths = _near_geometry(labels, near, coarse_nodes.patchset)
        side_sign = -1.0 if domain_side == "interior" else 1.0
        sign = np.full(len(near), side_sign)
        pts, ray, step = _check_point_block(anchors, normals, lengths, opts, sign)
        cvals = smooth_potential(kernel, layer, fine_nodes, fine_density, pts, backend)
        t_x = (np.linalg.norm(targets[near] - anchors, axis=1) - ray) / step
        values[near] = _extrapolate_rows(cvals, t_x, opts.p)
    return values, mask


def evaluate_two_sided(
    nodes: QuadratureNodeSet,
    kernel: KernelFamily,
    density,
    fine_nodes: QuadratureNodeSet,
    opts: EvalOptions,
    backend=None,
    interior: bool = True,
):
    """Interior-limit operator values (1/2 I + D)[phi] at the surface nodes.

    Extrapolates the double layer to the surface from both sides, averages
    (the principal value), then adds +phi/2 for the interior limit or
    -phi/2 for the exterior one.
    """
    backend = backend or default_backend()
    density = np.asarray(density, float).reshape(len(nodes), -1)
    fine_density = upsample_density(nodes, density, fine_nodes)
    lengths = nodes.patchset.lengths[nodes.patch_ids]
    pv = average_limits(
        nodes.positions, nodes.normals, lengths, kernel, fine_nodes,
        fine_density, opts, backend,
    )
    half = 0.5 * density if interior else -0.5 * density
    return pv + half


def average_limits(
    anchors, normals, lengths, kernel, fine_nodes, fine_density, opts, backend=None
):
    """Average of interior and exterior extrapolated limits (the PV)."""
    backend = backend or default_backend()
    m = len(anchors)
    both = np.concatenate(
        [
            _check_point_block(anchors, normals, lengths, opts, np.full(m, -1.0))[0],
            _check_point_block(anchors, normals, lengths, opts, np.full(m, +1.0))[0],
        ]
    )
    cvals = smooth_potential(kernel, "double", fine_nodes, fine_density, both, backend)
    t_x = -opts.b / opts.a * np.ones(m)  # on-surface targets: |x - y*| = 0
    interior = _extrapolate_rows(cvals[: m * (opts.p + 1)], t_x, opts.p)
    exterior = _extrapolate_rows(cvals[m * (opts.p + 1) :], t_x, opts.p)
    return 0.5 * (interior + exterior)


def read_targets(path) -> np.ndarray:
    """Read target points from a text file with `x y z` lines."""
    pts = np.loadtxt(path, ndmin=2)
    if pts.shape[1] != 3:
        raise UsageError("target files carry three columns: x y z")
    return pts


def write_target_values(path, targets, labels: ZoneLabels, values):
    """Write `x y z inside zone v_1..v_d` lines."""
    zone_names = {Zone.FAR: "far", Zone.INTERMEDIATE: "intermediate", Zone.NEAR: "near"}
    values = np.atleast_2d(values)
    with open(path, "w") as fh:
        for j, (x, y, z) in enumerate(np.atleast_2d(targets)):
            vals = " ".join(f"{v:.17g}" for v in values[j])
            fh.write(
                f"{x:.17g} {y:.17g} {z:.17g} "
                f"{int(labels.inside[j])} {zone_names[Zone(labels.zone[j])]} {vals}\n"
            )
