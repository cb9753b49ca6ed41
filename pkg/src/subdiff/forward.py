"""Forward solve of the subdiffusion problem on (0,l) x (0,T].

Pipeline: validate the coefficient assumptions, expand the data in the sine
basis, solve each mode's Volterra equation, reassemble the field, and attach
the regularity diagnostics (weighted coefficient sums, the short-time
second-derivative blow-up shape, and the pointwise PDE residual).
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AdmissibilityError, AliasingError, ConvergenceError, DomainError, GridMismatchError
from .frackernel import TimeGrid, caputo_l1
from .mode_solver import ModeProblem, ModeSolution, solve_mode
from .profiles import Profile
from .spectral import (
    ModeSet,
    SpaceGrid,
    assemble_field,
    eigenvalue,
    eigenvalues,
    sine_coefficients,
    tail_diagnostics,
)

_ENDPOINT_TOL = 1e-12


@dataclass(eq=False)
class ProblemSpec:
    sgrid: SpaceGrid
    tgrid: TimeGrid
    rho: float
    sigma: Profile
    q: Optional[Profile]
    f: np.ndarray  # (n_steps+1, n_cells+1), rows are time nodes
    phi: np.ndarray  # (n_cells+1,)
    K: Optional[int] = None

    def __post_init__(self) -> None:
        if not (0.0 < self.rho < 1.0):
            raise DomainError(f"order must lie in (0, 1), got {self.rho}")
        nt, nx = self.tgrid.n_steps + 1, self.sgrid.n_cells + 1
        f = np.asarray(self.f, dtype=float)
        if f.shape != (nt, nx):
            raise GridMismatchError(
                f"source field {f.shape} does not match (time, space) = "
                f"({nt}, {nx})")
        phi = np.asarray(self.phi, dtype=float)
        if phi.shape != (nx,):
            raise GridMismatchError(
                f"initial datum {phi.shape} does not match {nx} space nodes")
        self.f = f
        self.phi = phi
        for name in ("sigma", "q"):
            prof = getattr(self, name)
            if prof is not None and prof.grid != self.tgrid:
                raise GridMismatchError(f"{name} lives on a different time grid")
        if self.K is None:
            self.K = min(64, max(1, self.sgrid.n_cells // 4))
        if self.K < 1:
            raise DomainError(f"need K >= 1, got {self.K}")
        if self.K > self.sgrid.n_cells // 2:
            raise AliasingError(
                f"K={self.K} exceeds the anti-aliasing cap M/2="
                f"{self.sgrid.n_cells // 2}")

    @property
    def length(self) -> float:
        return self.sgrid.length

    @property
    def t_final(self) -> float:
        return self.tgrid.t_final


@dataclass(frozen=True)
class AssumptionReport:
    m_sigma: float
    M_sigma: float
    n_q: Optional[float]
    N_q: Optional[float]
    q_window: tuple[float, float]
    cond1_sigma_positive: bool
    cond2_q_in_window: bool
    cond3_endpoints: bool
    endpoint_defect: float

    @property
    def all_passed(self) -> bool:
        return (self.cond1_sigma_positive and self.cond2_q_in_window
                and self.cond3_endpoints)


def validate_assumption1(spec: ProblemSpec) -> AssumptionReport:
    """Nodewise extrema of the coefficients against the admissibility window.

    The q window uses strict inequalities: a constant sigma yields the window
    (-m_sigma pi^2/l^2, 0), which excludes q identically zero.
    """
    m_s = float(spec.sigma.values.min())
    M_s = float(spec.sigma.values.max())
    lam1sq = (math.pi / spec.length) ** 2
    lo = -m_s * lam1sq
    hi = (M_s - m_s) * lam1sq
    if spec.q is None:
        n_q = N_q = None
        cond2 = lo < hi
    else:
        n_q = float(spec.q.values.min())
        N_q = float(spec.q.values.max())
        cond2 = (n_q > lo) and (N_q < hi)
    defect = max(
        abs(float(spec.phi[0])), abs(float(spec.phi[-1])),
        float(np.max(np.abs(spec.f[:, 0]))), float(np.max(np.abs(spec.f[:, -1]))))
    return AssumptionReport(
        m_sigma=m_s, M_sigma=M_s, n_q=n_q, N_q=N_q, q_window=(lo, hi),
        cond1_sigma_positive=m_s > 0.0, cond2_q_in_window=cond2,
        cond3_endpoints=defect <= _ENDPOINT_TOL, endpoint_defect=defect)


@dataclass(eq=False)
class FieldSolution:
    u: np.ndarray
    u_xx_diag: Optional[np.ndarray]
    per_mode: list[ModeSolution]
    mode_set: Optional[ModeSet]
    diagnostics: dict = field(default_factory=dict)
    residual_norm: Optional[float] = None


def decompose_data(spec: ProblemSpec) -> tuple[np.ndarray, np.ndarray]:
    """(phi_k, f_k) sine coefficients; f_k rows are modes, columns time nodes."""
    phi_k = sine_coefficients(spec.sgrid, spec.phi, spec.K)
    f_k = sine_coefficients(spec.sgrid, spec.f, spec.K).T
    return phi_k, f_k


def solve_mode_set(spec: ProblemSpec, phi_k: np.ndarray, f_k: np.ndarray,
                   tol: float = 1e-10, max_iter: int = 200,
                   threads: Optional[int] = None,
                   initial: Optional[np.ndarray] = None) -> list[ModeSolution]:
    """Solve all K mode problems; ``initial`` rows warm-start the iteration."""
    if spec.q is None:
        raise DomainError("cannot solve modes without a reaction coefficient")

    def one(k: int) -> ModeSolution:
        p = ModeProblem(
            k=k, lam_k=eigenvalue(k, spec.length), rho=spec.rho,
            sigma=spec.sigma, q=spec.q,
            f_k=Profile(spec.tgrid, f_k[k - 1]), phi_k=float(phi_k[k - 1]),
            grid=spec.tgrid)
        guess = None if initial is None else initial[k - 1]
        try:
            return solve_mode(p, tol=tol, max_iter=max_iter, initial=guess)
        except ConvergenceError as e:
            raise ConvergenceError(
                f"mode {k} failed to converge: {e}",
                iterations=e.iterations, last_update=e.last_update,
                contraction_estimate=e.contraction_estimate) from e

    ks = range(1, spec.K + 1)
    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, ks))
    return [one(k) for k in ks]


def _blowup_exponent(tgrid: TimeGrid, uxx_sup: np.ndarray) -> float:
    """Log-log slope of sup_x|u_xx| over the first decade of positive time."""
    n_fit = min(10, tgrid.n_steps)
    y = uxx_sup[1:n_fit + 1]
    if np.any(y <= 0.0):
        return math.nan
    t = tgrid.nodes[1:n_fit + 1]
    return float(np.polyfit(np.log(t), np.log(y), 1)[0])


def solve_forward(spec: ProblemSpec, tol: float = 1e-10, max_iter: int = 200,
                  threads: Optional[int] = None) -> FieldSolution:
    report = validate_assumption1(spec)
    if not report.cond1_sigma_positive:
        raise AdmissibilityError(
            f"sigma is not strictly positive (min {report.m_sigma}); refusing "
            f"to solve")
    if not report.cond2_q_in_window:
        warnings.warn(
            f"reaction coefficient leaves the admissibility window "
            f"{report.q_window}; the forward solve proceeds on the measured "
            f"contraction alone", stacklevel=2)

    phi_k, f_k = decompose_data(spec)
    solutions = solve_mode_set(spec, phi_k, f_k, tol=tol, max_iter=max_iter,
                               threads=threads)
    coeffs = np.vstack([s.u_k for s in solutions])
    modes = ModeSet(length=spec.length, grid=spec.tgrid, coeffs=coeffs)
    lam = modes.lambdas
    u = assemble_field(modes, spec.sgrid, spec.tgrid)
    curv = ModeSet(length=spec.length, grid=spec.tgrid,
                   coeffs=-(lam ** 2)[:, None] * coeffs)
    u_xx = assemble_field(curv, spec.sgrid, spec.tgrid)

    rho, T = spec.rho, spec.t_final
    head = T ** rho / math.gamma(rho + 1.0)
    tail2 = tail_diagnostics(lam, phi_k, f_k, weight_power=2)
    tail3 = tail_diagnostics(lam, phi_k, f_k, weight_power=3)
    q1_value = float(np.max((lam ** 2) @ np.abs(coeffs)))
    q1_bound = head * tail2.f_sum + tail2.phi_sum
    uxx_sup = np.max(np.abs(u_xx), axis=1)
    q2_weighted = float(np.max(spec.tgrid.nodes[1:] ** rho * uxx_sup[1:]))

    diagnostics = {
        "assumption1": report,
        "contraction_bounds": [s.C_k_bound for s in solutions],
        "picard_iterations": [s.iterations for s in solutions],
        "tail_p2": tail2,
        "tail_p3": tail3,
        "q1_value": q1_value,
        "q1_bound": q1_bound,
        "q2_weighted_max": q2_weighted,
        "q2_fitted_exponent": _blowup_exponent(spec.tgrid, uxx_sup),
        "init_defect": float(np.max(np.abs(u[0] - spec.phi))),
    }
    return FieldSolution(u=u, u_xx_diag=u_xx, per_mode=solutions,
                         mode_set=modes, diagnostics=diagnostics)


def residual_check(sol: FieldSolution, spec: ProblemSpec) -> float:
    """max over t >= t_1 and interior x of |D^rho u - sigma u_xx + q u - f|."""
    if spec.q is None:
        raise DomainError("residual needs the reaction coefficient")
    u = sol.u
    if u.shape != spec.f.shape:
        raise GridMismatchError("solution and problem grids differ")
    if sol.u_xx_diag is not None:
        u_xx = sol.u_xx_diag
    else:
        coeffs = sine_coefficients(spec.sgrid, u, spec.K).T
        lam = eigenvalues(spec.K, spec.length)
        curv = ModeSet(length=spec.length, grid=spec.tgrid,
                       coeffs=-(lam ** 2)[:, None] * coeffs)
        u_xx = assemble_field(curv, spec.sgrid, spec.tgrid)

    nx = spec.sgrid.n_cells
    dcap = np.empty_like(u[:, 1:nx])
    for i in range(1, nx):
        dcap[:, i - 1] = caputo_l1(spec.tgrid, u[:, i], spec.rho)
    sig = spec.sigma.values[:, None]
    qv = spec.q.values[:, None]
    res = dcap - sig * u_xx[:, 1:nx] + qv * u[:, 1:nx] - spec.f[:, 1:nx]
    value = float(np.max(np.abs(res[1:])))
    sol.residual_norm = value
    return value
