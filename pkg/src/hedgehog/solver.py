"""Nystrom solver: assemble the admissible discretization and run GMRES.

The discrete operator is applied matrix-free: each matvec upsamples the
density, extrapolates the double layer to the surface from both sides and
averages, then adds the +phi/2 identity term (interior problems).  The
exterior Laplace problem on a single closed surface adds the standard
rank-one completion (a point charge at an interior anchor scaled by the
weighted density mean).
"""

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .backends import default_backend
from .errors import UsageError
from .evaluation import (
    EvalOptions,
    ZoneLabels,
    evaluate_one_sided,
    evaluate_two_sided,
    mark_points,
)
from .geometry.embeddings import BoundaryCondition, QuadMesh
from .geometry.patches import PatchSet
from .kernels import LAPLACE, Family, KernelFamily, point_source_field
from .quadrature import QuadratureNodeSet, discretize, upsample_density
from .refinement import (
    AdmissibilityConfig,
    RefinementReport,
    UpsamplingConfig,
    adaptive_upsample,
    enforce_admissibility,
    refine_for_boundary_condition,
    refine_for_geometry,
    uniform_upsample,
)

EPS_GMRES = 1e-12
MAX_GMRES_ITERATIONS = 300


@dataclass
class BVProblem:
    """Dirichlet boundary value problem on a closed quad-mesh surface."""

    kernel: KernelFamily
    geometry: QuadMesh
    boundary_condition: BoundaryCondition
    side: str = "interior"
    degree: int = 8
    admissibility: AdmissibilityConfig = field(default_factory=AdmissibilityConfig)
    upsampling: UpsamplingConfig = field(default_factory=UpsamplingConfig)
    options: EvalOptions = field(default_factory=EvalOptions)
    uniform_levels: int | None = None  # fixed-level upsampling when set

    def __post_init__(self):
        if self.side not in ("interior", "exterior"):
            raise UsageError("side must be interior or exterior")
        if self.side == "exterior" and self.kernel.family is not Family.LAPLACE:
            raise UsageError(
                "exterior problems are supported for the Laplace kernel only"
            )


@dataclass
class SolveReport:
    """GMRES outcome.

    final_residual is the relative recurrence (Arnoldi) residual the
    stopping rule uses; true_residual is ||b - A x|| / ||b|| recomputed
    once, which is floored by the matrix-free operator's floating-point
    accuracy and can sit above the recurrence value.
    """

    iterations: int = 0
    final_residual: float = np.nan
    true_residual: float = np.nan
    residual_history: list = field(default_factory=list)
    coarse_patches: int = 0
    fine_patches: int = 0
    wall_time: float = 0.0
    converged: bool = False


@dataclass
class AssembledSystem:
    problem: BVProblem
    coarse: PatchSet
    fine: PatchSet
    nodes: QuadratureNodeSet
    fine_nodes: QuadratureNodeSet
    rhs: np.ndarray  # (N, d)
    refinement_report: RefinementReport
    interior_anchor: np.ndarray | None = None

    @property
    def n_unknowns(self) -> int:
        return self.rhs.size


def assemble(problem: BVProblem, backend=None) -> AssembledSystem:
    """Run the refinement pipeline and sample the boundary condition."""
    report = RefinementReport()
    adm = problem.admissibility
    coarse = refine_for_geometry(
        problem.geometry,
        problem.degree,
        adm.eps_geometry,
        max_depth=adm.max_depth,
        min_length=adm.min_length,
        report=report,
    )
    coarse = refine_for_boundary_condition(
        coarse,
        problem.boundary_condition,
        adm.eps_boundary,
        q=adm.q,
        max_depth=adm.max_depth,
        min_length=adm.min_length,
        report=report,
    )
    coarse = enforce_admissibility(coarse, adm, report=report)
    if problem.uniform_levels is not None:
        fine = uniform_upsample(coarse, problem.uniform_levels)
    else:
        fine = adaptive_upsample(coarse, problem.upsampling, adm, report=report)
    nodes = discretize(coarse, adm.q)
    fine_nodes = discretize(fine, adm.q)
    rhs = problem.boundary_condition(nodes.positions)
    anchor = None
    if problem.side == "exterior":
        # interior anchor for the rank-one completion: centroid of the
        # bounded complement, estimated from the surface nodes
        anchor = np.average(nodes.positions, axis=0, weights=nodes.weights)
    return AssembledSystem(
        problem=problem,
        coarse=coarse,
        fine=fine,
        nodes=nodes,
        fine_nodes=fine_nodes,
        rhs=rhs,
        refinement_report=report,
        interior_anchor=anchor,
    )


def assemble_from_sets(
    problem: BVProblem, coarse: PatchSet, fine: PatchSet, backend=None
) -> AssembledSystem:
    """Assemble with prebuilt coarse/fine sets (level-sweep experiments)."""
    nodes = discretize(coarse, problem.admissibility.q)
    fine_nodes = discretize(fine, problem.admissibility.q)
    rhs = problem.boundary_condition(nodes.positions)
    anchor = None
    if problem.side == "exterior":
        anchor = np.average(nodes.positions, axis=0, weights=nodes.weights)
    return AssembledSystem(
        problem=problem,
        coarse=coarse,
        fine=fine,
        nodes=nodes,
        fine_nodes=fine_nodes,
        rhs=rhs,
        refinement_report=RefinementReport(),
        interior_anchor=anchor,
    )


def matvec(system: AssembledSystem, density, backend=None) -> np.ndarray:
    """Apply the discrete boundary operator to a density vector.

    Interior: (1/2 I + D) phi via the two-sided extrapolated double layer.
    Exterior Laplace: (-1/2 I + D + M) phi with the rank-one completion M.
    """
    backend = backend or default_backend()
    problem = system.problem
    density = np.asarray(density, float).reshape(len(system.nodes), -1)
    out = evaluate_two_sided(
        system.nodes,
        problem.kernel,
        density,
        system.fine_nodes,
        problem.options,
        backend,
        interior=problem.side == "interior",
    )
    if problem.side == "exterior":
        moment = np.sum(density * system.nodes.weights[:, None], axis=0)
        charge_val = point_source_field(
            problem.kernel,
            system.interior_anchor[None, :],
            moment[None, :],
            system.nodes.positions,
        )
        out = out + charge_val
    return out


@dataclass
class DensityField:
    values: np.ndarray  # (N, d)
    kernel: KernelFamily


def solve(
    problem_or_system, backend=None, x0=None, max_iterations: int = MAX_GMRES_ITERATIONS
):
    """Solve A phi = f with restart-free GMRES at the 1e-12 tolerance.

    Accepts a BVProblem (assembled here) or a prebuilt AssembledSystem.
    Returns (DensityField, SolveReport); non-convergence keeps the best
    iterate and reports converged=False.
    """
    backend = backend or default_backend()
    system = (
        problem_or_system
        if isinstance(problem_or_system, AssembledSystem)
        else assemble(problem_or_system, backend)
    )
    n = system.n_unknowns
    d = system.problem.kernel.d
    history = []

    def apply(v):
        return matvec(system, v.reshape(-1, d), backend).reshape(-1)

    op = LinearOperator((n, n), matvec=apply, dtype=float)
    b = system.rhs.reshape(-1)
    t0 = time.perf_counter()
    x, info = gmres(
        op,
        b,
        x0=None if x0 is None else np.asarray(x0, float).reshape(-1),
        rtol=EPS_GMRES,
        atol=0.0,
        restart=max_iterations,
        maxiter=1,
        callback=lambda rk: history.append(float(rk)),
        callback_type="pr_norm",
    )
    wall = time.perf_counter() - t0
    bnorm = float(np.linalg.norm(b))
    true_res = float(np.linalg.norm(b - op @ x)) / (bnorm if bnorm > 0 else 1.0)
    final = history[-1] if history else true_res
    report = SolveReport(
        iterations=len(history),
        final_residual=final,
        true_residual=true_res,
        residual_history=history,
        coarse_patches=len(system.coarse),
        fine_patches=len(system.fine),
        wall_time=wall,
        converged=info == 0 or final <= EPS_GMRES,
    )
    return DensityField(values=x.reshape(-1, d), kernel=system.problem.kernel), report


def evaluate_solution(
    system: AssembledSystem,
    density: DensityField,
    targets,
    backend=None,
    labels: ZoneLabels | None = None,
):
    """Evaluate the solved potential at arbitrary targets.

    Marks the targets (winding-number cull plus closest-point search) and
    dispatches the zone-appropriate quadrature; targets on the wrong side
    of the surface are masked out with value 0.

    Returns (values (M, d), labels, mask).
    """
    backend = backend or default_backend()
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if targets.size == 0:
        return (
            np.zeros((0, density.kernel.d)),
            None,
            np.zeros(0, dtype=bool),
        )
    problem = system.problem
    if labels is None:
        labels = mark_points(
            targets, system.nodes, problem.options.eps_target, backend
        )
    values, mask = evaluate_one_sided(
        targets,
        labels,
        problem.kernel,
        density.values,
        system.nodes,
        system.fine_nodes,
        problem.options,
        backend,
        domain_side=problem.side,
    )
    if problem.side == "exterior":
        moment = np.sum(
            density.values * system.nodes.weights[:, None], axis=0
        )
        values[mask] += point_source_field(
            problem.kernel,
            system.interior_anchor[None, :],
            moment[None, :],
            targets[mask],
        )
    return values, labels, mask
