"""Time integration: CFL control, the five solver modes, and the staged
pipeline (sequential implicit -> block-coupled -> fully coupled -> RT
coupling) with warm starts between stages."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import jacobian as jac
from . import linsolve as ls
from .constants import BR, BT, BTH, EI, EE, ER, GAMMA, LPHI, MR, NG, NTH, RHO, VAR_NAMES
from .errors import ConfigurationError, SingularSystemError, SolverFailure
from .grid import Grid
from .jacobian import (Discretization, ModeKind, SolverMode, assemble_cluster,
                       assemble_rhs, generate_matrix)
from .state import FieldSet, apply_boundary, primitives

DT_POLICIES = ("fixed_cfl", "ramped_cfl", "residual_smoothing", "residual_dependent")


@dataclass
class StageSpec:
    stage: str = "I"                     # I | II | III | IV
    eq_order: tuple | None = None        # Stage I sequence (global indices)
    groups: tuple | None = None          # Stage II blocks
    max_steps: int = 500
    residual_target: float | None = 1e-6
    max_time: float | None = None
    dt_policy: str = "ramped_cfl"
    cfl: float = 0.5
    cfl_max: float = 1e4
    cfl_ramp: float = 1.2
    rt_cadence: int = 10
    krylov_tol: float = 1e-9
    krylov_method: str = "gmres"
    precond_sweeps: int = 2
    ios_sweeps: int = 60
    ios_tol: float = 1e-10
    divergence_factor: float = 1e3

    def __post_init__(self):
        if self.stage not in ("I", "II", "III", "IV"):
            raise ConfigurationError(f"unknown stage '{self.stage}'")
        if self.dt_policy not in DT_POLICIES:
            raise ConfigurationError(f"unknown dt policy '{self.dt_policy}'")
        if self.cfl <= 0:
            raise ConfigurationError("CFL must be positive")
        if self.max_steps is None and self.residual_target is None and self.max_time is None:
            raise ConfigurationError("stage needs at least one stop criterion")


@dataclass
class RunLog:
    eqs: tuple
    rows: list = field(default_factory=list)

    def append(self, step, t, dt, cfl, mode, res):
        self.rows.append((step, t, dt, cfl, mode, tuple(res)))

    def residuals(self) -> np.ndarray:
        return np.array([r[5] for r in self.rows])

    def write_csv(self, path, meta=None):
        meta = dict(meta or {})
        names = ",".join("res_" + VAR_NAMES[i] for i in self.eqs)
        with open(path, "w") as fh:
            fh.write(f"# axirmhd runlog version=0.1.0 config_hash={meta.get('config_hash', 'none')}\n")
            fh.write(f"step,time,dt,cfl,mode,{names}\n")
            for step, t, dt, cfl, mode, res in self.rows:
                vals = ",".join(f"{v:.17g}" for v in res)
                fh.write(f"{step},{t:.17g},{dt:.17g},{cfl:.17g},{mode},{vals}\n")


def cfl_dt(f: FieldSet, g: Grid, cfl: float, phys=None, local: bool = False):
    """dt = CFL * (cell size / fastest signal); local=True gives a field."""
    prims = primitives(f)
    inner = lambda a: a[NG:-NG, NG:-NG]
    rho = inner(f.q[RHO])
    cs2 = GAMMA * inner(prims.pgas) / rho
    va2 = 0.0
    if phys is not None and phys.include_b:
        va2 = (inner(f.q[BR]) ** 2 + inner(f.q[BTH]) ** 2 + inner(f.q[BT]) ** 2) / rho
    c_fast = np.sqrt(cs2 + va2)
    vr = np.abs(inner(prims.vr))
    vth = np.abs(inner(prims.vth))
    dr = g.dr[:, None]
    dth = g.r_c[:, None] * g.dth[None, :]
    if np.any(dr <= 0) or np.any(dth <= 0):
        raise ConfigurationError("zero cell size in CFL evaluation")
    dt_r = dr / (vr + c_fast)
    dt_t = dth / (vth + c_fast)
    dt_field = cfl * np.minimum(dt_r, dt_t)
    if local:
        return dt_field
    return float(dt_field.min())


@dataclass
class StepResult:
    fieldset: FieldSet
    residual: np.ndarray
    dt_used: float
    report: ls.SolveReport | None = None
    rejected: int = 0


def _update(f: FieldSet, disc: Discretization, dq: np.ndarray, cols) -> FieldSet:
    out = f.copy()
    for i, var in enumerate(cols):
        out.q[var][NG:-NG, NG:-NG] += dq[:, :, i]
    out.apply_floors()
    apply_boundary(out, disc.bspec, disc.grid)
    return out


def step(f: FieldSet, mode: SolverMode, dt, disc: Discretization,
         spec: StageSpec | None = None, monotone: float = 0.0) -> StepResult:
    """One time step in the given mode; rejects and halves dt on failure.

    monotone > 0 additionally rejects steps whose post-update residual
    exceeds monotone * (pre-step residual) — a line-search style guard for
    steady-state marches.
    """
    spec = spec or StageSpec()
    apply_boundary(f, disc.bspec, disc.grid)
    sub = [disc.pos[v] for v in mode.eqs]
    rejected = 0
    dt_try = dt
    last_exc = None
    for _ in range(9):
        try:
            rhs_full = assemble_rhs(f, disc)
            res = np.abs(rhs_full.reshape(-1, rhs_full.shape[-1])).max(axis=0)
            rhs = rhs_full[:, :, sub]
            out, report = _dispatch(f, mode, dt_try, disc, spec, rhs)
            if not np.all(np.isfinite(out.q)):
                raise SolverFailure("non-finite state after update")
            if monotone > 0.0:
                apply_boundary(out, disc.bspec, disc.grid)
                res_new = np.abs(assemble_rhs(out, disc)[:, :, sub]).max()
                if res_new > monotone * max(float(np.abs(rhs).max()), 1e-300):
                    raise SolverFailure(
                        f"residual grew {res_new:.3e} > {monotone} x pre-step")
            return StepResult(out, res, dt_used=_dt_scalar(dt_try), report=report, rejected=rejected)
        except SolverFailure as exc:
            last_exc = exc
            rejected += 1
            dt_try = dt_try * 0.5 if np.ndim(dt_try) == 0 else np.asarray(dt_try) * 0.5
    raise SolverFailure(f"step rejected 8 times (mode {mode.kind.value}): {last_exc}")


def _dt_scalar(dt):
    return float(dt) if np.ndim(dt) == 0 else float(np.min(dt))


def _dispatch(f, mode, dt, disc, spec, rhs):
    kind = mode.kind
    if kind == ModeKind.EXPLICIT:
        dq = (dt if np.ndim(dt) == 0 else np.asarray(dt)[..., None]) * rhs
        return _update(f, disc, dq, mode.eqs), None

    if kind == ModeKind.IOS_BLOCK:
        return _ios_pass(f, mode, dt, disc, spec)

    cl = assemble_cluster(f, disc, dt)
    A = generate_matrix(cl, mode)
    if kind == ModeKind.SEMI_EXPLICIT:
        dq = rhs / A.scalar_diag()
        return _update(f, disc, dq, mode.eqs), None
    if kind == ModeKind.SEMI_IMPLICIT:
        dq, fallback = ls.solve_block_diag(A.diag_blocks(), rhs)
        rep = ls.SolveReport(1, 0.0, 0.0, [0.0], 0.0, True, fallback_cells=fallback)
        return _update(f, disc, dq, mode.eqs), rep

    # fully implicit
    B = A.materialize()
    nrm = float(np.abs(rhs).max())
    if nrm == 0.0:
        return _update(f, disc, np.zeros_like(rhs), mode.eqs), None

    def apply_fn(v):
        return B.apply(v.reshape(rhs.shape)).ravel()

    jac_diag = A.scalar_diag()
    safe_diag = np.where(np.abs(jac_diag) > 1e-300, jac_diag, 1.0)

    def precond(v):
        # line sweeps when the blocks eliminate cleanly, point-Jacobi when a
        # pivot degenerates (hyper-stiff local couplings cancel in float64)
        try:
            z, _ = ls.lgs_two_sweep(B, v.reshape(rhs.shape), sweeps=spec.precond_sweeps, tol=0.0)
            return z.ravel()
        except SingularSystemError:
            return (v.reshape(rhs.shape) / safe_diag).ravel()

    x, rep = ls.krylov(apply_fn, precond, rhs.ravel(), tol=spec.krylov_tol,
                       max_it=400, method=spec.krylov_method, probe=False)
    if not rep.converged:
        raise SolverFailure("implicit solve did not converge", report=rep)
    return _update(f, disc, x.reshape(rhs.shape), mode.eqs), rep


def _ios_pass(f, mode, dt, disc, spec):
    """Sequential per-equation implicit solves (Stage I splitting)."""
    cur = f
    cl = assemble_cluster(f, disc, dt)
    total_sweeps = 0
    for var in mode.eqs:
        rhs_full = assemble_rhs(cur, disc)
        col = disc.pos[var]
        rhs = rhs_full[:, :, [col]]
        A = generate_matrix(cl, SolverMode(ModeKind.IOS_BLOCK, (var,)))
        x, rep = ls.lgs_two_sweep(A, rhs, sweeps=spec.ios_sweeps, tol=spec.ios_tol)
        total_sweeps += rep.iterations
        cur = _update(cur, disc, x, (var,))
    rep = ls.SolveReport(total_sweeps, 0.0, 0.0, [0.0], 0.0, True)
    return cur, rep


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def _stage_modes(spec: StageSpec, disc: Discretization):
    """The mode sequence executed inside one outer step of a stage."""
    active = disc.eqs
    if spec.stage == "I":
        order = spec.eq_order or tuple(v for v in (RHO, MR, NTH, LPHI, EI, EE, ER, BR, BTH, BT) if v in active)
        return [SolverMode(ModeKind.IOS_BLOCK, tuple(order))]
    if spec.stage == "II":
        groups = spec.groups or (jac.HD_BLOCK, jac.MHD_BLOCK)
        modes = []
        for grp in groups:
            sel = tuple(v for v in grp if v in active)
            if sel:
                modes.append(SolverMode(ModeKind.FULLY_IMPLICIT, sel))
        return modes
    # III and the MHD part of IV couple everything
    return [SolverMode(ModeKind.FULLY_IMPLICIT, active)]


def run_stage(f: FieldSet, spec: StageSpec, disc: Discretization,
              rt_hook=None, mode_override: SolverMode | None = None,
              step_hook=None):
    """Iterate one stage to its stop criterion; returns (state, RunLog)."""
    log = RunLog(eqs=disc.eqs)
    modes = [mode_override] if mode_override else _stage_modes(spec, disc)
    cfl = spec.cfl
    cfl_cap = spec.cfl_max
    t = 0.0
    res0 = None
    res_min = np.inf
    prev_rel = np.inf
    best = None  # (rel, state) checkpoint for divergence recovery
    cur = f
    rt_calls = 0
    for it in range(spec.max_steps):
        local = spec.dt_policy == "residual_smoothing"
        dt = cfl_dt(cur, disc.grid, cfl, disc.phys, local=local)
        result = None
        for mode in modes:
            result = step(cur, mode, dt, disc, spec)
            cur = result.fieldset
        res = result.residual
        if res0 is None:
            # quiet equations (identically ~0 residual) share the loudest scale
            floor = 1e-8 * max(float(res.max()), 1e-300)
            res0 = np.maximum(res, floor)
        rel = float((res / res0).max())
        log.append(it, t, result.dt_used, cfl, spec.stage, res)
        t += result.dt_used
        res_min = min(res_min, rel)
        if step_hook is not None:
            step_hook(cur, it)
        if spec.stage == "IV" and rt_hook is not None and (it + 1) % spec.rt_cadence == 0:
            rt_hook(cur, it)
            rt_calls += 1
        if spec.residual_target is not None and rel <= spec.residual_target:
            break
        if best is None or rel < best[0]:
            best = (rel, cur.copy())
        if rel > 50.0 * best[0] and spec.dt_policy in ("ramped_cfl", "fixed_cfl"):
            # rewind to the best state seen and shrink the CFL ceiling
            cur = best[1].copy()
            cfl_cap = max(0.5 * cfl_cap, spec.cfl)
            cfl = max(0.25 * cfl, spec.cfl)
            prev_rel = best[0]
            if rel > spec.divergence_factor * max(res_min, 1e-300) and cfl_cap <= spec.cfl and it > 10:
                raise SolverFailure(f"stage {spec.stage} diverged at step {it} (residual {rel:.3e})",
                                    report=log)
            continue
        if rel > spec.divergence_factor * max(res_min, 1e-300) and it > 10:
            raise SolverFailure(f"stage {spec.stage} diverged at step {it} (residual {rel:.3e})",
                                report=log)
        if spec.max_time is not None and t >= spec.max_time:
            break
        # dt policies
        if spec.dt_policy == "ramped_cfl":
            if result.rejected == 0 and rel <= 1.3 * prev_rel:
                cfl = min(cfl * spec.cfl_ramp, cfl_cap)
            elif rel > 2.0 * prev_rel:
                cfl = max(cfl * 0.5, spec.cfl)
        elif spec.dt_policy == "residual_dependent":
            cfl = float(np.clip(spec.cfl / max(rel, 1e-12), spec.cfl, cfl_cap))
        prev_rel = rel
    log.rt_calls = rt_calls
    return cur, log


def hierarchical_run(f: FieldSet, stages=None, disc: Discretization = None,
                     rt_hook=None, step_hook=None):
    """Run a stage pipeline, each stage warm-starting from the previous;
    the default pipeline is the full ladder I -> II -> III -> IV.

    If any stage used residual smoothing, a final short uniform-dt phase
    re-runs from the quasi-steady state so the fixed point corresponds to a
    physically uniform time step.
    """
    if stages is None:
        stages = [StageSpec(stage=s) for s in ("I", "II", "III", "IV")]
    logs = []
    cur = f
    used_smoothing = False
    for spec in stages:
        cur, log = run_stage(cur, spec, disc, rt_hook=rt_hook, step_hook=step_hook)
        logs.append(log)
        used_smoothing = used_smoothing or spec.dt_policy == "residual_smoothing"
    if used_smoothing:
        last = stages[-1]
        polish = StageSpec(stage=last.stage, eq_order=last.eq_order, groups=last.groups,
                           max_steps=max(50, last.max_steps // 4),
                           residual_target=last.residual_target,
                           dt_policy="fixed_cfl", cfl=last.cfl, cfl_max=last.cfl_max,
                           ios_sweeps=last.ios_sweeps, ios_tol=last.ios_tol,
                           krylov_tol=last.krylov_tol)
        cur, log = run_stage(cur, polish, disc, rt_hook=rt_hook, step_hook=step_hook)
        logs.append(log)
    return cur, logs
