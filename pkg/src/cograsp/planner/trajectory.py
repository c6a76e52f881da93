"""Joint robot/object trajectory optimization through a convex corridor.

The trajectory is one cubic Bezier segment per region with equal time spans.
C0/C1 continuity holds by construction: segment ``k`` uses control points
``(J_k, J_k + D_k, J_{k+1} - D_{k+1}, J_{k+1})`` where ``J`` are junction
points and ``D`` tangent handles, with ``D_0 = D_M = 0`` for zero endpoint
velocity. Region membership of every control point is exact: each interior
junction is box-bounded to the intersection of its two regions, and each
handle is ``D = t * rho(J)`` with ``t`` in [-1, 1] and ``rho`` the largest
symmetric step that keeps ``J +/- D`` inside the neighbouring boxes. The
reach annulus and formation constraints are sampled at the quadrature nodes
and handled with a quadratic penalty whose weight grows between outer
iterations; the inner problems are bound-constrained and solved with L-BFGS-B.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ..geometry import ObjectShape, Pose2, inverse_pose, transform_point
from .bezier import JOINT_DIM, BezierSegment, bernstein, bezier_derivative, bezier_eval, gauss_legendre_unit
from ._kernel import penalized_value_grad
from .regions import RegionSequence, unwrap_into

log = logging.getLogger(__name__)

__all__ = [
    "PlannerConfig",
    "TrajectorySolution",
    "Anchors",
    "grasp_anchors",
    "collision_radius",
    "evaluate_objective",
    "objective_terms",
    "solve_trajectory",
    "feasibility",
    "constraint_violations",
]

R1, R2, OXY, OTH = slice(0, 2), slice(2, 4), slice(4, 6), 6


@dataclass(frozen=True)
class PlannerConfig:
    w_F: float = 20.0
    r_min: float = 0.35
    r_max: float = 0.7
    r_collision: float | None = None  # None: derived per grasp from base clearance
    base_footprint_radius: float = 0.30
    r_collision_floor: float = 0.05
    quadrature_points_per_segment: int = 16
    constraint_tolerance: float = 1e-6
    constraint_margin: float = 0.01
    max_outer_iterations: int = 8
    penalty_initial: float = 100.0
    penalty_growth: float = 10.0
    inner_max_iterations: int = 200
    duration: float = 10.0
    verify_samples: int = 100
    stall_ratio: float = 0.5
    stall_floor: float = 0.05
    speed_smoothing: float = 1e-6

    def __post_init__(self):
        if self.w_F < 0:
            raise ValueError("w_F must be non-negative")
        if self.quadrature_points_per_segment < 4:
            raise ValueError("need at least 4 quadrature points per segment")


@dataclass
class Anchors:
    """Body-frame grasp points and nominal base positions of both robots."""

    grasp: np.ndarray  # (2, 2)
    base: np.ndarray  # (2, 2)
    r_collision: np.ndarray  # (2,)


def grasp_anchors(obj: ObjectShape, start_pose: Pose2, g) -> tuple[np.ndarray, np.ndarray]:
    """Grasp point and base position of ``g`` expressed in the object frame at the start pose."""
    inv = inverse_pose(start_pose)
    return transform_point(inv, g.grasp), transform_point(inv, g.base)


def collision_radius(obj: ObjectShape, base_body: np.ndarray, cfg: PlannerConfig,
                     resolution: float) -> float:
    """Formation radius: base-disc clearance to the object minus one map cell, floored."""
    if cfg.r_collision is not None:
        return float(cfg.r_collision)
    clearance = float(obj.boundary_distance(base_body)[0]) - cfg.base_footprint_radius
    if obj.contains(base_body[None, :])[0]:
        clearance = -1.0
    return max(cfg.r_collision_floor, clearance - resolution)


@dataclass
class TrajectorySolution:
    segments: list[BezierSegment]
    duration: float
    objective_value: float
    feasible: bool
    max_violation: dict = field(default_factory=dict)
    outer_history: list = field(default_factory=list)
    message: str = ""

    def locate(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        m = len(self.segments)
        h = self.duration / m
        idx = np.minimum((t / h).astype(int), m - 1)
        idx = np.maximum(idx, 0)
        return idx, t / h - idx

    def evaluate(self, t) -> np.ndarray:
        idx, s = self.locate(t)
        return np.stack([bezier_eval(self.segments[i], si) for i, si in zip(idx, s)])

    def derivative(self, t, order: int = 1) -> np.ndarray:
        idx, s = self.locate(t)
        return np.stack([bezier_derivative(self.segments[i], si, order) for i, si in zip(idx, s)])

    def control_points(self) -> np.ndarray:
        return np.stack([s.control_points for s in self.segments])

    def to_dict(self) -> dict:
        return {
            "segments": [s.to_dict() for s in self.segments],
            "duration": self.duration,
            "objective": self.objective_value,
            "feasible": self.feasible,
            "max_violation": self.max_violation,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectorySolution":
        return cls([BezierSegment.from_dict(s) for s in d["segments"]], float(d["duration"]),
                   float(d["objective"]), bool(d["feasible"]), dict(d.get("max_violation", {})),
                   message=d.get("message", ""))


# -- objective and constraints at sample points ------------------------------------------


def _rot_apply(theta: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """R(theta) a and dR/dtheta a for a fixed body vector ``a``; shapes (..., 2)."""
    c, s = np.cos(theta), np.sin(theta)
    ra = np.stack([c * a[0] - s * a[1], s * a[0] + c * a[1]], axis=-1)
    rpa = np.stack([-ra[..., 1], ra[..., 0]], axis=-1)
    return ra, rpa


def _objective_at(q, qd, qdd, wt, anchors: Anchors, cfg: PlannerConfig, grad: bool):
    """Objective terms from samples; returns (terms, gq, gqd, gqdd)."""
    eps = cfg.speed_smoothing
    sq = np.sum(qd * qd, axis=-1)
    sp = np.sqrt(sq + eps * eps)
    terms = {
        "L": float(np.sum(wt * (sp - eps))),
        "V": float(np.sum(wt * sq)),
        "S": float(np.sum(wt * np.sum(qdd * qdd, axis=-1))),
    }
    gq = np.zeros_like(q) if grad else None
    if grad:
        gqd = wt[..., None] * (qd / sp[..., None] + 2.0 * qd)
        gqdd = 2.0 * wt[..., None] * qdd
    theta, thd = q[..., OTH], qd[..., OTH]
    f_total = 0.0
    for i, rs in enumerate((R1, R2)):
        ra, rpa = _rot_apply(theta, anchors.base[i])
        e = qd[..., rs] - (qd[..., OXY] + thd[..., None] * rpa)
        f_total += float(np.sum(wt * np.sum(e * e, axis=-1)))
        if grad:
            ge = 2.0 * cfg.w_F * wt[..., None] * e
            gqd[..., rs] += ge
            gqd[..., OXY] -= ge
            gqd[..., OTH] -= np.sum(ge * rpa, axis=-1)
            gq[..., OTH] += thd * np.sum(ge * ra, axis=-1)
    terms["F"] = f_total
    if grad:
        return terms, gq, gqd, gqdd
    return terms, None, None, None


def _residuals(q, anchors: Anchors, cfg: PlannerConfig, margin: float = 0.0):
    """Signed violations (positive = violated) of the annulus and formation constraints.

    Returns a dict of arrays shaped like q[..., 0] per robot, plus the pieces needed for
    gradients.
    """
    out = []
    theta = q[..., OTH]
    for i, rs in enumerate((R1, R2)):
        ga, gpa = _rot_apply(theta, anchors.grasp[i])
        na, npa = _rot_apply(theta, anchors.base[i])
        d = q[..., rs] - (q[..., OXY] + ga)
        dist = np.sqrt(np.sum(d * d, axis=-1))
        e = q[..., rs] - (q[..., OXY] + na)
        en = np.sqrt(np.sum(e * e, axis=-1))
        out.append({
            "min": cfg.r_min + margin - dist,
            "max": dist - (cfg.r_max - margin),
            "formation": en - (anchors.r_collision[i] - margin),
            "d": d, "dist": dist, "gpa": gpa, "e": e, "en": en, "npa": npa,
        })
    return out


def _penalty_at(q, wt, anchors: Anchors, cfg: PlannerConfig, grad: bool):
    res = _residuals(q, anchors, cfg, cfg.constraint_margin)
    p = 0.0
    gq = np.zeros_like(q) if grad else None
    for i, rs in enumerate((R1, R2)):
        r = res[i]
        vmin = np.maximum(r["min"], 0.0)
        vmax = np.maximum(r["max"], 0.0)
        vf = np.maximum(r["formation"], 0.0)
        p += float(np.sum(wt * (vmin**2 + vmax**2 + vf**2)))
        if grad:
            gdist = 2.0 * wt * (vmax - vmin)
            unit = r["d"] / np.maximum(r["dist"], 1e-12)[..., None]
            gd = gdist[..., None] * unit
            gq[..., rs] += gd
            gq[..., OXY] -= gd
            gq[..., OTH] -= np.sum(gd * r["gpa"], axis=-1)
            gen = 2.0 * wt * vf
            unit_e = r["e"] / np.maximum(r["en"], 1e-12)[..., None]
            ge = gen[..., None] * unit_e
            gq[..., rs] += ge
            gq[..., OXY] -= ge
            gq[..., OTH] -= np.sum(ge * r["npa"], axis=-1)
    return p, gq


def constraint_violations(q, anchors: Anchors, cfg: PlannerConfig) -> dict:
    """Largest violation of each constraint family over the sample set (0 if satisfied)."""
    res = _residuals(np.asarray(q, dtype=float), anchors, cfg)
    out = {}
    for key, name in (("min", "annulus_min"), ("max", "annulus_max"), ("formation", "formation")):
        out[name] = float(max(0.0, max(np.max(r[key]) for r in res)))
    return out


# -- problem assembly -----------------------------------------------------------------------


class _CorridorProblem:
    def __init__(self, q0, qT, boxes_lo, boxes_hi, anchors: Anchors, cfg: PlannerConfig):
        self.cfg = cfg
        self.anchors = anchors
        self.q0, self.qT = q0, qT
        self.lo, self.hi = boxes_lo, boxes_hi  # (M, 7)
        self.M = len(boxes_lo)
        self.h = cfg.duration / self.M
        s, w = gauss_legendre_unit(cfg.quadrature_points_per_segment)
        self.B0, self.B1, self.B2 = bernstein(s, 0), bernstein(s, 1), bernstein(s, 2)
        self.w = w
        self.wt = np.broadcast_to(w * self.h, (self.M, len(s)))
        n_int = self.M - 1
        self.n_int = n_int
        self.ilo = np.maximum(self.lo[:-1], self.lo[1:])  # junction k+1 bounds, k=0..M-2
        self.ihi = np.minimum(self.hi[:-1], self.hi[1:])
        self._signs = np.array([-1.0, 1.0, -1.0, 1.0])

    # parameters: z = [J_1..J_{M-1}, t_1..t_{M-1}]
    def bounds(self):
        jb = [(a, b) for lo, hi in zip(self.ilo, self.ihi) for a, b in zip(lo, hi)]
        return jb + [(-1.0, 1.0)] * (self.n_int * JOINT_DIM)

    def unpack(self, z):
        n = self.n_int * JOINT_DIM
        return z[:n].reshape(self.n_int, JOINT_DIM), z[n:].reshape(self.n_int, JOINT_DIM)

    def _rho(self, J):
        # row k-1 holds junction k, shared by box k-1 (a) and box k (b)
        cand = np.stack([self.hi[1:] - J, J - self.lo[1:], self.hi[:-1] - J, J - self.lo[:-1]])
        idx = np.argmin(cand, axis=0)
        rho = np.maximum(np.min(cand, axis=0), 0.0)
        return rho, self._signs[idx]

    def control_points(self, z) -> np.ndarray:
        Ji, Ti = self.unpack(z)
        J = np.vstack([self.q0, Ji, self.qT])
        D = np.zeros_like(J)
        if self.n_int:
            rho, _ = self._rho(Ji)
            D[1:-1] = Ti * rho
        return np.stack([J[:-1], J[:-1] + D[:-1], J[1:] - D[1:], J[1:]], axis=1)

    def _samples(self, C):
        q = np.einsum("nj,mjd->mnd", self.B0, C)
        qd = np.einsum("nj,mjd->mnd", self.B1, C) / self.h
        qdd = np.einsum("nj,mjd->mnd", self.B2, C) / self.h**2
        return q, qd, qdd

    def _chain(self, z, gC):
        Ji, Ti = self.unpack(z)
        if not self.n_int:
            return np.zeros(0)
        rho, sign = self._rho(Ji)
        gJ = gC[1:, 0] + gC[1:, 1] + gC[:-1, 2] + gC[:-1, 3]
        gD = gC[1:, 1] - gC[:-1, 2]
        gJ = gJ + gD * Ti * sign * (rho > 0)
        gT = gD * rho
        return np.concatenate([gJ.ravel(), gT.ravel()])

    def _back(self, gq, gqd, gqdd):
        return (np.einsum("nj,mnd->mjd", self.B0, gq)
                + np.einsum("nj,mnd->mjd", self.B1, gqd) / self.h
                + np.einsum("nj,mnd->mjd", self.B2, gqdd) / self.h**2)

    def objective(self, z, grad=True):
        C = self.control_points(z)
        q, qd, qdd = self._samples(C)
        terms, gq, gqd, gqdd = _objective_at(q, qd, qdd, self.wt, self.anchors, self.cfg, grad)
        f = terms["L"] + terms["V"] + terms["S"] + self.cfg.w_F * terms["F"]
        if not grad:
            return f, terms
        return f, self._chain(z, self._back(gq, gqd, gqdd))

    def penalized(self, z, mu):
        """Objective plus ``mu`` times the tightened penalty, with gradient (fused kernel)."""
        C = self.control_points(z)
        a = self.anchors
        f, gC = penalized_value_grad(C, self.B0, self.B1, self.B2, self.w, self.h, a.grasp, a.base,
                                     a.r_collision, self.cfg.r_min, self.cfg.r_max,
                                     self.cfg.constraint_margin, self.cfg.w_F,
                                     self.cfg.speed_smoothing, float(mu))
        return f, self._chain(z, gC)

    def penalized_reference(self, z, mu):
        """Plain-numpy twin of :meth:`penalized`."""
        C = self.control_points(z)
        q, qd, qdd = self._samples(C)
        terms, gq, gqd, gqdd = _objective_at(q, qd, qdd, self.wt, self.anchors, self.cfg, True)
        p, gqp = _penalty_at(q, self.wt, self.anchors, self.cfg, True)
        f = terms["L"] + terms["V"] + terms["S"] + self.cfg.w_F * terms["F"] + mu * p
        g = self._chain(z, self._back(gq + mu * gqp, gqd, gqdd))
        return f, g

    def node_violation(self, z) -> float:
        q, _, _ = self._samples(self.control_points(z))
        return max(constraint_violations(q, self.anchors, self.cfg).values())

    def initial_guess(self) -> np.ndarray:
        if not self.n_int:
            return np.zeros(0)
        fr = np.arange(1, self.M)[:, None] / self.M
        J = (1 - fr) * self.q0 + fr * self.qT
        J = np.clip(J, self.ilo, self.ihi)
        # robots start at their rigid nominal positions around the object junction pose
        for k in range(self.n_int):
            for i, rs in enumerate((R1, R2)):
                ra, _ = _rot_apply(np.array(J[k, OTH]), self.anchors.base[i])
                J[k, rs] = J[k, OXY] + ra
        J = np.clip(J, self.ilo, self.ihi)
        return np.concatenate([J.ravel(), np.zeros(self.n_int * JOINT_DIM)])


def objective_terms(traj: TrajectorySolution, anchors: Anchors, cfg: PlannerConfig) -> dict:
    """L, V, S, F of a trajectory using the configured Gauss-Legendre rule."""
    s, w = gauss_legendre_unit(cfg.quadrature_points_per_segment)
    C = traj.control_points()
    h = traj.duration / len(C)
    q = np.einsum("nj,mjd->mnd", bernstein(s, 0), C)
    qd = np.einsum("nj,mjd->mnd", bernstein(s, 1), C) / h
    qdd = np.einsum("nj,mjd->mnd", bernstein(s, 2), C) / h**2
    wt = np.broadcast_to(w * h, q.shape[:2])
    terms, *_ = _objective_at(q, qd, qdd, wt, anchors, cfg, grad=False)
    return terms


def evaluate_objective(traj: TrajectorySolution, anchors: Anchors, cfg: PlannerConfig) -> float:
    t = objective_terms(traj, anchors, cfg)
    return t["L"] + t["V"] + t["S"] + cfg.w_F * t["F"]


# -- solve ----------------------------------------------------------------------------------


def _joint_boxes(regions: RegionSequence):
    lo, hi = [], []
    for rr, orr in zip(regions.robot_regions, regions.object_regions):
        rlo, rhi = rr.box
        olo, ohi = orr.box
        lo.append(np.concatenate([rlo, rlo, olo]))
        hi.append(np.concatenate([rhi, rhi, ohi]))
    return np.array(lo), np.array(hi)


def _endpoint(pose: Pose2, lo, hi, anchors_base, bases=None):
    yaw = unwrap_into(pose.yaw, lo[OTH], hi[OTH])
    if yaw is None:
        return None
    q = np.empty(JOINT_DIM)
    q[OXY] = pose.x, pose.y
    q[OTH] = yaw
    for i, rs in enumerate((R1, R2)):
        if bases is not None:
            q[rs] = bases[i]
        else:
            ra, _ = _rot_apply(np.array(yaw), anchors_base[i])
            q[rs] = q[OXY] + ra
    if np.any(q < lo - 1e-9) or np.any(q > hi + 1e-9):
        return None
    return q


def _infeasible(msg: str, duration: float) -> TrajectorySolution:
    return TrajectorySolution([], duration, math.inf, False, {}, [], msg)


def _verify(problem: _CorridorProblem, C: np.ndarray, cfg: PlannerConfig) -> dict:
    """Dense post-hoc check on uniform times plus the quadrature nodes."""
    M, h = len(C), problem.h
    checks = {}
    # region membership of every control point
    region = max(float(np.max(C[k] - problem.hi[k])) for k in range(M))
    region = max(region, max(float(np.max(problem.lo[k] - C[k])) for k in range(M)))
    checks["region"] = max(region, 0.0)
    t = np.concatenate([np.linspace(0.0, cfg.duration, cfg.verify_samples),
                        np.linspace(0.0, cfg.duration, 4 * cfg.verify_samples + 1)])
    idx = np.minimum((t / h).astype(int), M - 1)
    s = t / h - idx
    q = np.einsum("nj,njd->nd", bernstein(s, 0), C[idx])
    qn, _, _ = problem._samples(C)
    dense = constraint_violations(np.concatenate([q, qn.reshape(-1, JOINT_DIM)]),
                                  problem.anchors, cfg)
    checks.update(dense)
    # C1 continuity at junctions
    cont = 0.0
    for k in range(M - 1):
        cont = max(cont, float(np.max(np.abs(C[k, 3] - C[k + 1, 0]))),
                   float(np.max(np.abs((C[k, 3] - C[k, 2]) - (C[k + 1, 1] - C[k + 1, 0])))))
    checks["continuity"] = cont
    return checks


def solve_trajectory(scenario, g_center, g_context, regions: RegionSequence,
                     cfg: PlannerConfig | None = None) -> TrajectorySolution:
    """Plan the joint trajectory for robots holding ``g_center`` and ``g_context``.

    The problem is symmetric in the two robots; it is always solved with the
    pair in a canonical order and the robot coordinates swapped back, so
    ``S(a, b) == S(b, a)`` holds exactly.
    """
    cfg = cfg or PlannerConfig()
    key = lambda g: (g.grasp_index, g.angle_index, g.base, g.grasp)  # noqa: E731
    swap = key(g_context) < key(g_center)
    first, second = (g_context, g_center) if swap else (g_center, g_context)
    sol = _solve_ordered(scenario, first, second, regions, cfg)
    if swap and sol.segments:
        perm = [2, 3, 0, 1, 4, 5, 6]
        for seg in sol.segments:
            seg.control_points = seg.control_points[:, perm]
    return sol


def _solve_ordered(scenario, ga, gb, regions: RegionSequence, cfg: PlannerConfig) -> TrajectorySolution:
    obj, start, goal = scenario.object, scenario.start_pose, scenario.goal_pose
    res = scenario.map.resolution
    ag, ab = zip(*(grasp_anchors(obj, start, g) for g in (ga, gb)))
    anchors = Anchors(np.array(ag), np.array(ab),
                      np.array([collision_radius(obj, b, cfg, res) for b in ab]))
    lo, hi = _joint_boxes(regions)
    q0 = _endpoint(start, lo[0], hi[0], anchors.base, bases=(np.array(ga.base), np.array(gb.base)))
    if q0 is None:
        return _infeasible("start configuration outside the first region", cfg.duration)
    qT = _endpoint(goal, lo[-1], hi[-1], anchors.base)
    if qT is None:
        return _infeasible("goal configuration outside the last region", cfg.duration)
    # keep the yaw path short: the goal yaw representative closest to the start
    problem = _CorridorProblem(q0, qT, lo, hi, anchors, cfg)
    if np.any(problem.ilo > problem.ihi + 1e-12):
        return _infeasible("consecutive regions do not intersect", cfg.duration)

    z = problem.initial_guess()
    bounds = problem.bounds()
    mu = cfg.penalty_initial
    best_z, best_v = z, problem.node_violation(z)
    history = [best_v]
    converged = best_v <= cfg.constraint_tolerance
    for it in range(cfg.max_outer_iterations if len(z) else 0):
        if converged:
            break
        r = minimize(problem.penalized, best_z, args=(mu,), jac=True, method="L-BFGS-B",
                     bounds=bounds, options={"maxiter": cfg.inner_max_iterations})
        v = problem.node_violation(r.x)
        prev = best_v
        if v <= best_v:
            # only non-increasing violation is accepted, so the outer sequence is monotone
            best_z, best_v = r.x, v
        history.append(best_v)
        if best_v <= cfg.constraint_tolerance:
            converged = True
            break
        if it >= 1 and best_v > cfg.stall_ratio * prev and best_v > cfg.stall_floor:
            break  # stalled far from feasibility
        mu *= cfg.penalty_growth

    C = problem.control_points(best_z)
    segments = [BezierSegment(C[k], k, problem.h) for k in range(problem.M)]
    f, _ = problem.objective(best_z, grad=False)
    checks = _verify(problem, C, cfg)
    tol = cfg.constraint_tolerance
    feasible = (checks["region"] <= 1e-9 and checks["continuity"] <= 1e-9
                and all(checks[k] <= tol for k in ("annulus_min", "annulus_max", "formation")))
    msg = "ok" if feasible else ("constraints violated" if converged else "no convergence")
    return TrajectorySolution(segments, cfg.duration, float(f), feasible, checks, history, msg)


def feasibility(scenario, g_center, g_context, regions: RegionSequence,
                cfg: PlannerConfig | None = None) -> int:
    return int(solve_trajectory(scenario, g_center, g_context, regions, cfg).feasible)
