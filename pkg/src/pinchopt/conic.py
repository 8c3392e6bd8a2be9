"""Second-order cone programs in a small standard form.

A :class:`ConeProgram` is::

    minimize    c @ x
    subject to  A_eq @ x == b_eq
                A_in @ x <= b_in
                lb <= x <= ub
                ||U_k @ x + u_k|| <= s_k @ x + s0_k      for every SOC block k

:func:`solve` hands the program to the Clarabel interior-point solver
(primal-dual, Nesterov-Todd scaling) and then re-checks the returned point
against the program itself, so a backend that claims success on a point
that violates the constraints is reported as ``numerical_failure``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import clarabel
import numpy as np
import scipy.sparse as sp


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class SOCBlock:
    """``||U x + u0|| <= s @ x + s0``."""

    U: np.ndarray
    u0: np.ndarray
    s: np.ndarray
    s0: float

    def __post_init__(self):
        self.U = np.atleast_2d(np.asarray(self.U, dtype=float))
        self.u0 = np.atleast_1d(np.asarray(self.u0, dtype=float))
        self.s = np.asarray(self.s, dtype=float)
        self.s0 = float(self.s0)

    def slack(self, x: np.ndarray) -> float:
        return float(self.s @ x + self.s0 - np.linalg.norm(self.U @ x + self.u0))


@dataclass
class ConeProgram:
    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    soc_blocks: list[SOCBlock] = field(default_factory=list)
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.n
        self.A_eq, self.b_eq = _affine(self.A_eq, self.b_eq, n, "equality")
        self.A_in, self.b_in = _affine(self.A_in, self.b_in, n, "inequality")
        self.lb = np.full(n, -np.inf) if self.lb is None else np.broadcast_to(np.asarray(self.lb, float), (n,)).copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.broadcast_to(np.asarray(self.ub, float), (n,)).copy()
        for k, blk in enumerate(self.soc_blocks):
            if blk.U.shape[1] != n or blk.s.shape != (n,) or blk.U.shape[0] != blk.u0.shape[0]:
                raise ValueError(f"SOC block {k} has inconsistent dimensions")

    @property
    def n(self) -> int:
        return self.c.shape[0]

    def violations(self, x: np.ndarray) -> dict[str, float]:
        """Largest scaled violation of each constraint class at ``x``.

        A violation ``v`` of a row with data ``(a, b)`` is reported as
        ``v / (1 + max(|b|, |a| @ |x|))`` so the figure is comparable across
        rows of very different magnitude.
        """
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        out = {"eq": 0.0, "in": 0.0, "bounds": 0.0, "soc": 0.0}
        if self.b_eq.size:
            r = np.abs(self.A_eq @ x - self.b_eq)
            out["eq"] = float(np.max(r / (1.0 + np.maximum(np.abs(self.b_eq), np.abs(self.A_eq) @ ax))))
        if self.b_in.size:
            r = np.maximum(self.A_in @ x - self.b_in, 0.0)
            out["in"] = float(np.max(r / (1.0 + np.maximum(np.abs(self.b_in), np.abs(self.A_in) @ ax))))
        with np.errstate(invalid="ignore"):
            lo = np.where(np.isfinite(self.lb), np.maximum(self.lb - x, 0.0) / (1.0 + np.abs(self.lb)), 0.0)
            hi = np.where(np.isfinite(self.ub), np.maximum(x - self.ub, 0.0) / (1.0 + np.abs(self.ub)), 0.0)
        out["bounds"] = float(max(lo.max(initial=0.0), hi.max(initial=0.0)))
        for blk in self.soc_blocks:
            lhs = np.linalg.norm(blk.U @ x + blk.u0)
            scale = 1.0 + max(abs(blk.s0), float(np.abs(blk.s) @ ax), lhs)
            out["soc"] = max(out["soc"], max(-blk.slack(x), 0.0) / scale)
        return out

    def max_violation(self, x: np.ndarray) -> float:
        return max(self.violations(x).values())


def _affine(A, b, n, what):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if A.shape[1] != n or A.shape[0] != b.shape[0]:
        raise ValueError(f"{what} system has shape {A.shape} for {n} variables and {b.shape[0]} rows")
    return A, b


@dataclass(frozen=True)
class SolveOutcome:
    status: Status
    primal: np.ndarray | None
    objective_value: float
    kkt_residuals: dict
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


_CLARABEL_STATUS = {
    "Solved": Status.OPTIMAL,
    "PrimalInfeasible": Status.INFEASIBLE,
    "AlmostPrimalInfeasible": Status.INFEASIBLE,
    "DualInfeasible": Status.UNBOUNDED,
    "AlmostDualInfeasible": Status.UNBOUNDED,
}


def _stack(program: ConeProgram):
    """Assemble Clarabel's ``A x + s = b, s in K`` data."""
    n = program.n
    blocks, rhs, cones = [], [], []
    if program.b_eq.size:
        blocks.append(program.A_eq)
        rhs.append(program.b_eq)
        cones.append(clarabel.ZeroConeT(program.b_eq.size))
    lin_A = [program.A_in]
    lin_b = [program.b_in]
    eye = np.eye(n)
    fin_ub = np.isfinite(program.ub)
    fin_lb = np.isfinite(program.lb)
    lin_A += [eye[fin_ub], -eye[fin_lb]]
    lin_b += [program.ub[fin_ub], -program.lb[fin_lb]]
    n_lin = sum(b.size for b in lin_b)
    if n_lin:
        blocks.extend(lin_A)
        rhs.extend(lin_b)
        cones.append(clarabel.NonnegativeConeT(n_lin))
    for blk in program.soc_blocks:
        blocks.append(-np.vstack([blk.s[None, :], blk.U]))
        rhs.append(np.concatenate([[blk.s0], blk.u0]))
        cones.append(clarabel.SecondOrderConeT(1 + blk.u0.size))
    A = sp.csc_matrix(np.vstack(blocks)) if blocks else sp.csc_matrix((0, n))
    b = np.concatenate(rhs) if rhs else np.zeros(0)
    return A, b, cones


def solve(program: ConeProgram, tol_feas: float = 1e-8, tol_gap: float = 1e-8, max_iters: int = 200) -> SolveOutcome:
    """Solve ``program``; see :class:`SolveOutcome` for the result contract.

    ``status == OPTIMAL`` guarantees ``program.max_violation(primal) <= tol_feas``
    and a relative duality gap no larger than ``tol_gap`` (both re-evaluated
    here, not taken from the backend).
    """
    A, b, cones = _stack(program)
    n = program.n
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = tol_feas
    settings.tol_gap_abs = tol_gap
    settings.tol_gap_rel = tol_gap
    settings.max_iter = max_iters
    solver = clarabel.DefaultSolver(sp.csc_matrix((n, n)), program.c, A, b, cones, settings)
    sol = solver.solve()
    status_name = str(sol.status).split(".")[-1]
    status = _CLARABEL_STATUS.get(status_name, Status.NUMERICAL_FAILURE)
    x = np.asarray(sol.x, dtype=float)
    z = np.asarray(sol.z, dtype=float)
    pobj = float(program.c @ x)
    dobj = float(-(b @ z)) if b.size else pobj
    gap = abs(pobj - dobj) / max(1.0, abs(pobj), abs(dobj))
    dres = float(np.max(np.abs(program.c + A.T @ z), initial=0.0)) / (1.0 + float(np.max(np.abs(program.c), initial=0.0)))
    pres = program.max_violation(x) if x.size else np.inf
    kkt = {"primal": pres, "dual": dres, "gap": gap, "backend_status": status_name}
    if status_name == "AlmostSolved":
        status = Status.OPTIMAL
    if status is Status.OPTIMAL and (pres > tol_feas or gap > tol_gap):
        status = Status.NUMERICAL_FAILURE
    if status is Status.INFEASIBLE:
        return SolveOutcome(status, None, np.inf, kkt, sol.iterations)
    if status is Status.UNBOUNDED:
        return SolveOutcome(status, None, -np.inf, kkt, sol.iterations)
    return SolveOutcome(status, x, pobj, kkt, sol.iterations)


# -- debug dump -----------------------------------------------------------------

_MATRICES = ("A_eq", "A_in")


def dump_triplets(program: ConeProgram, path) -> None:
    """Write ``program`` as sparse triplets ``matrix-id row col value``, one nonzero per line.

    Vectors use column 0.  SOC block ``k`` contributes ids ``socK.U``,
    ``socK.u0``, ``socK.s`` and ``socK.s0``.  Bounds are written for every
    finite entry (zeros included) and omitted when infinite; a header line records the variable count and the row counts so empty
    matrices survive the round trip.
    """
    lines = [f"# n={program.n} eq={program.b_eq.size} in={program.b_in.size} soc={len(program.soc_blocks)}"]

    def emit(name, arr, keep_zero=False):
        arr = np.atleast_2d(np.asarray(arr, dtype=float))
        if arr.shape[0] == 1 and name not in _MATRICES and not name.endswith(".U"):
            arr = arr.T
        for (i, j), v in np.ndenumerate(arr):
            if np.isfinite(v) and (keep_zero or v != 0.0):
                lines.append(f"{name} {i} {j} {float(v)!r}")

    emit("c", program.c)
    emit("A_eq", program.A_eq)
    emit("b_eq", program.b_eq)
    emit("A_in", program.A_in)
    emit("b_in", program.b_in)
    emit("lb", program.lb, keep_zero=True)
    emit("ub", program.ub, keep_zero=True)
    for k, blk in enumerate(program.soc_blocks):
        lines.append(f"# soc{k} rows={blk.u0.size}")
        emit(f"soc{k}.U", blk.U)
        emit(f"soc{k}.u0", blk.u0)
        emit(f"soc{k}.s", blk.s)
        emit(f"soc{k}.s0", [blk.s0])
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_triplets(path) -> ConeProgram:
    """Inverse of :func:`dump_triplets`."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    head = dict(kv.split("=") for kv in text[0][1:].split())
    n, n_eq, n_in, n_soc = (int(head[k]) for k in ("n", "eq", "in", "soc"))
    data = {
        "c": np.zeros(n), "A_eq": np.zeros((n_eq, n)), "b_eq": np.zeros(n_eq),
        "A_in": np.zeros((n_in, n)), "b_in": np.zeros(n_in),
        "lb": np.full(n, -np.inf), "ub": np.full(n, np.inf),
    }
    soc = []
    for line in text[1:]:
        if line.startswith("# soc"):
            rows = int(line.split("rows=")[1])
            soc.append({"U": np.zeros((rows, n)), "u0": np.zeros(rows), "s": np.zeros(n), "s0": np.zeros(1)})
            continue
        if not line or line.startswith("#"):
            continue
        name, i, j, v = line.split()
        i, j, v = int(i), int(j), float(v)
        if name.startswith("soc"):
            k, part = name[3:].split(".")
            target = soc[int(k)][part]
        else:
            target = data[name]
        if target.ndim == 1:
            target[i] = v
        else:
            target[i, j] = v
    blocks = [SOCBlock(d["U"], d["u0"], d["s"], d["s0"][0]) for d in soc]
    return ConeProgram(data["c"], data["A_eq"], data["b_eq"], data["A_in"], data["b_in"], blocks, data["lb"], data["ub"])
