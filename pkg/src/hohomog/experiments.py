"""Experiment pipelines: cell solves, eps-sweeps of the homogenization error,
excess-decay certificates and the regularity probes.

Each pipeline returns plain rows plus certificates; the CLI serialises them
and the acceptance suite asserts on them.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import cellproblem, coeffs, rates, solvers
from .errors import FitError, ValidationError
from .spectral import GridFunction

DEFAULT_EPS = (1 / 8, 1 / 16, 1 / 32, 1 / 64, 1 / 128)
KERNEL_FAMILY = {1: ((1.0, 0.0), (1.0, 0.5)),
                 2: ((1.0, 0.0, 0.0, 0.0), (1.0, 1.0, 0.0, 0.0), (0.3, 1.0, 0.5, 0.2))}


def default_load(x):
    return 1.0 + x


def default_bc(m: int) -> tuple:
    """Traces of x - x^2: the homogenized m-th derivative stays away from zero near the ends."""
    return (0.0, 0.0) if m == 1 else (0.0, 1.0, 0.0, -1.0)


def check_eps_list(eps_list) -> list:
    eps = [float(e) for e in eps_list]
    if not eps:
        raise ValidationError("empty eps list")
    for e in eps:
        k = 1.0 / e if e > 0 else 0.0
        if e <= 0 or abs(k - round(k)) > 1e-9 or round(k) & (round(k) - 1):
            raise ValidationError(f"eps={e} is not of the form 2^-k")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValidationError("eps list must be strictly decreasing")
    return eps


def pmap(fn, items, jobs: int = 1) -> list:
    """``[fn(x) for x in items]``, on ``jobs`` threads when jobs > 1; order is preserved."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


@dataclass
class Certificate:
    id: str
    kind: str
    ok: bool
    data: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ok = bool(self.ok)

    def as_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind, "ok": self.ok, **self.data}


def _tag(x: float) -> str:
    return f"{x:.6g}"


# -- cell ---------------------------------------------------------------------

def cell_experiment(A: coeffs.CoefficientField, tol: float = cellproblem.DEFAULT_TOL,
                    corrector_set: cellproblem.CorrectorSet | None = None) -> tuple[dict, Certificate]:
    cs = corrector_set or cellproblem.solve_all(A, tol=tol)
    solve_res = [v for k, v in cs.residuals.items() if isinstance(k, tuple)]
    cert = Certificate(
        f"cell:{A.preset.key() if A.preset else 'field'}:d{A.d}m{A.m}N{A.N}", "cell",
        bool(max(solve_res, default=0.0) <= tol),
        {"max_solver_residual": float(max(solve_res, default=0.0)),
         "dual_divergence_residual": float(cs.residuals.get("dual_divergence", 0.0)),
         "flux_identity_residual": cs.flux_identity_residual()},
    )
    P = len(cs.alphas)
    result = {
        "A_bar": cs.A_bar.reshape(P * A.n, P * A.n).tolist() if A.n == 1 else cs.A_bar.tolist(),
        "chi_max": float(np.max(np.abs(cs.chi))),
        "B_max": float(np.max(np.abs(cs.B))),
        "dualB_max": float(np.max(np.abs(cs.dualB))),
        "B_mean_max": float(np.max(np.abs(cs.B.mean(axis=tuple(range(4, 4 + A.d)))))),
        "dualB_antisymmetry": float(np.max(np.abs(cs.dualB + np.swapaxes(cs.dualB, 0, 1)))),
    }
    return result, cert


# -- rates ----------------------------------------------------------------------

@dataclass
class RatesResult:
    reports: list            # RateReport per (experiment, norm)
    certificates: list

    def report(self, experiment: str, norm_kind: str) -> rates.RateReport:
        for r in self.reports:
            if r.experiment == experiment and r.norm_kind == norm_kind:
                return r
        raise KeyError((experiment, norm_kind))


def dirichlet_rates(a: Callable, cs: cellproblem.CorrectorSet, eps_list=DEFAULT_EPS, f=default_load,
                    bc=None, rtol: float = 0.02, nodes_per_eps: int = 128, hom_M: int = 8192,
                    q: float = 4.0, jobs: int = 1) -> RatesResult:
    """1D Dirichlet eps-sweep.

    Reports ||u_eps - u0||_L2, ||u_eps - u0||_{W^{m-1,q}} and the H^m
    seminorm of w_eps.  Every datum carries a discretisation certificate:
    the values at M and 2M elements agree to ``rtol`` relative to the
    measured error.
    """
    m = cs.m
    eps_list = check_eps_list(eps_list)
    bc = default_bc(m) if bc is None else tuple(bc)
    hom = solvers.solve_homogenized(cs.A_bar, solvers.Dirichlet1D(a, None, m, f, bc, hom_M), m)
    names = ("L2", f"W{m - 1}_{q:g}", f"H{m}_semi_w")
    reps = [rates.RateReport("dirichlet", n) for n in names]
    def one(eps):
        x = np.linspace(0.0, 1.0, int(round(nodes_per_eps / eps)) + 1)
        u0 = hom.sample(x)

        def measure(sol):
            ue = sol.sample(x)
            diff = ue.with_values(ue.values - u0.values,
                                  derivatives={k: ue.derivatives[k] - u0.derivatives[k] for k in ue.derivatives})
            w = rates.build_w(ue, u0, cs, eps)
            return [rates.norm(diff, "L2"), rates.norm(diff, "Wkq", q=q, k=m - 1),
                    rates.norm(w, "Hk_semi", k=m)]

        M0 = int(round(16 / eps))
        _, c = solvers.certified_dirichlet_1d(solvers.Dirichlet1D(a, eps, m, f, bc, M0), rtol, measure)
        cert = Certificate(f"dirichlet:eps={_tag(eps)}:M={c['M']}", "fine-vs-finer", c["ok"],
                           {"M": c["M"], "rel_diff": c["rel_diff"], "rtol": rtol})
        return cert, c["fine"]

    certs = []
    for eps, (cert, vals) in zip(eps_list, pmap(one, eps_list, jobs)):
        certs.append(cert)
        for rep, val in zip(reps, vals):
            rep.add(eps, val, cert.id)
    for rep in reps:
        rep.fit_rates()
    return RatesResult(reps, certs)


def torus_rates(A: coeffs.CoefficientField, cs: cellproblem.CorrectorSet, eps_list=DEFAULT_EPS,
                load: Callable = None, cells: int = 32, tol: float = 1e-8, rtol: float = 0.02,
                jobs: int = 1) -> RatesResult:
    """Periodic eps-sweep of ||u_eps - u0||_L2 and the H^m seminorm of w_eps.

    Each datum is computed at N_f = cells/eps and 2 N_f; the certificate
    records their relative agreement.
    """
    load = load or (lambda x: np.sin(2 * np.pi * x))
    m = A.m
    if A.d != 1:
        raise ValidationError("the torus rate sweep is one-dimensional")
    eps_list = check_eps_list(eps_list)
    names = ("L2", f"H{m}_semi_w")
    reps = [rates.RateReport("torus", n) for n in names]
    def one(eps):
        vals, scale = [], 0.0
        for Nf in (int(round(cells / eps)), int(round(2 * cells / eps))):
            x = np.arange(Nf) / Nf
            f = GridFunction(np.asarray(load(x), dtype=float)[None])
            ue = solvers.solve_periodic(solvers.PeriodicProblem(A, eps, f), tol=tol)
            u0 = solvers.solve_homogenized(cs.A_bar, f, m)
            w = rates.build_w(ue, u0, cs, eps)
            vals.append([rates.norm(ue.with_values(ue.values - u0.values), "L2"),
                         rates.norm(w, "Hk_semi", k=m)])
            scale = max(scale, rates.norm(ue, "L2"))
        coarse, fine = np.array(vals)
        rel = float(np.max(np.abs(coarse - fine) / np.abs(fine)))
        cert = Certificate(f"torus:eps={_tag(eps)}:Nf={Nf}", "fine-vs-finer", rel < rtol,
                           {"N_f": Nf, "rel_diff": rel, "rtol": rtol, "solver": ue.info["method"],
                            "solver_residual": float(ue.info["residual"])})
        return cert, fine, scale

    certs, scale = [], 0.0
    for eps, (cert, vals, sc) in zip(eps_list, pmap(one, eps_list, jobs)):
        certs.append(cert)
        scale = max(scale, sc)
        for rep, val in zip(reps, vals):
            rep.add(eps, val, cert.id)
    for rep in reps:
        rep.fit_rates(solver_tol=tol * scale)
    return RatesResult(reps, certs)


# -- excess decay ---------------------------------------------------------------

def _kernel_id(constants, npp) -> str:
    return "kernel:c=" + ",".join(_tag(c) for c in constants) + f":npp={npp}"


@dataclass
class ExcessResult:
    rows: list                 # dicts with eps, r, delta, H_r, H_delta_r, I_2r, h_r, C_req, solution
    C_hat: float
    C_by_eps: dict             # eps -> family max of C_req at that eps
    stability: float           # max/min of C_by_eps over the sweep
    passed: list               # verdicts of every row with C_hat
    constant_rows: list        # G(delta r) <= G(r)/2 rows for constant coefficients
    certificates: list


def excess_experiment(a: Callable, m: int, eps_list=(1 / 32, 1 / 64, 1 / 128), family=None,
                      deltas=(1 / 8, 1 / 16, 1 / 32), nodes_per_period: int = 256,
                      constant_delta: float = 1 / 8, jobs: int = 1) -> ExcessResult:
    """H(dr) <= H(r)/2 + C sqrt(eps/r) I(2r) on oscillating kernel solutions.

    Every row yields the constant it requires; C_hat is the maximum over the
    whole family and sweep, and ``stability`` measures how much the
    per-eps maximum moves across the sweep.  Constant-coefficient rows test
    the pure halving G(r/8) <= G(r)/2 on polynomial solutions of degree
    m+1 and m+2.
    """
    eps_list = check_eps_list(eps_list)
    family = KERNEL_FAMILY[m] if family is None else family
    def one(item):
        eps, consts = item
        u = solvers.exact_kernel_solution_1d(a, eps, m, consts, nodes_per_period=nodes_per_period)
        rep = rates.certify_excess_decay(u, eps, m, deltas)
        coarse = solvers.exact_kernel_solution_1d(a, eps, m, consts, nodes_per_period=nodes_per_period // 2)
        rep_c = rates.certify_excess_decay(coarse, eps, m, deltas)
        cert = _excess_cert(f"{_kernel_id(consts, nodes_per_period)}:eps={_tag(eps)}", rep, rep_c)
        return rep, cert

    items = [(eps, consts) for eps in eps_list for consts in family]
    rows, reports, certs = [], [], []
    C_by_eps = {eps: 0.0 for eps in eps_list}
    for (eps, _), (rep, cert) in zip(items, pmap(one, items, jobs)):
        certs.append(cert)
        rows.extend({**row, "solution": cert.id} for row in rep.rows)
        reports.append(rep)
        C_by_eps[eps] = max(C_by_eps[eps], rep.C_required)
    C_hat = max(C_by_eps.values())
    passed = [v for rep in reports for v in rep.verdicts(C_hat)]
    vals = np.array(list(C_by_eps.values()))
    stability = float(vals.max() / vals.min()) if vals.min() > 0 else np.inf
    return ExcessResult(rows, C_hat, C_by_eps, stability, passed,
                        constant_excess(m, constant_delta), certs)


def _excess_cert(cid, fine, coarse, rtol=1e-2) -> Certificate:
    """Half-resolution agreement of C_req and of H(dr) on the scale of the largest H in the table."""
    hf = np.array([r["H_delta_r"] for r in fine.rows])
    hc = np.array([r["H_delta_r"] for r in coarse.rows])
    if hf.shape != hc.shape or not hf.size:
        return Certificate(cid, "quadrature", False, {"reason": "row sets differ"})
    scale = max(float(np.max(hf)), max(r["H_r"] for r in fine.rows))
    h_diff = float(np.max(np.abs(hf - hc))) / scale
    c_diff = float(abs(fine.C_required - coarse.C_required) / max(fine.C_required, 1e-300))
    ok = h_diff < 1e-2 and c_diff < rtol
    return Certificate(cid, "quadrature", ok, {"C_rel_diff": c_diff, "H_scaled_diff": h_diff, "rtol": rtol})


def _agreement_cert(cid, fine, coarse, rtol=1e-6) -> Certificate:
    fine, coarse = np.asarray(fine), np.asarray(coarse)
    if fine.shape != coarse.shape:
        return Certificate(cid, "quadrature", False, {"reason": "row sets differ"})
    rel = float(np.max(np.abs(fine - coarse) / np.maximum(np.abs(fine), 1e-300))) if fine.size else 0.0
    return Certificate(cid, "quadrature", rel < rtol, {"rel_diff": rel, "rtol": rtol})


def constant_excess(m: int, delta: float = 1 / 8, n: int = 2**14) -> list:
    """G(delta r) <= G(r)/2 for x^{m+1} + 0.3 x^{m+2}, a solution of L_0 u = f with polynomial f."""
    x = np.linspace(-1.0, 1.0, n + 1)
    u = GridFunction((x ** (m + 1) + 0.3 * x ** (m + 2))[None], domain="interval", lo=-1.0,
                     spacing=x[1] - x[0])
    rep = rates.certify_excess_decay(u, 0.0, m, deltas=(delta,), constant_coefficient=True)
    out = []
    for row, ok in zip(rep.rows, rep.verdicts(0.0)):
        out.append({**row, "eps": 0.0, "pass": ok, "solution": f"poly:m={m}"})
    return out


# -- probes ---------------------------------------------------------------------

@dataclass
class ProbeResult:
    rows: list                 # (probe, eps, p_or_r, value, solution)
    lipschitz: dict            # solution -> list of sups over the sweep
    reverse_holder: dict       # (solution, p) -> list of ratios over the sweep
    certificates: list

    def spread(self, values) -> float:
        v = np.asarray(values, dtype=float)
        return float(v.max() / v.min()) if v.min() > 0 else np.inf


def probe_experiment(a: Callable, m: int, eps_list=(1 / 16, 1 / 32, 1 / 64, 1 / 128, 1 / 256),
                     family=None, ps=(3.0, 4.0), nodes_per_period: int = 256, jobs: int = 1) -> ProbeResult:
    eps_list = check_eps_list(eps_list)
    family = KERNEL_FAMILY[m] if family is None else family
    def one(item):
        consts, eps = item
        vals = []
        for npp in (nodes_per_period, nodes_per_period // 2):
            u = solvers.exact_kernel_solution_1d(a, eps, m, consts, nodes_per_period=npp)
            vals.append((rates.lipschitz_probe(u, eps, m), [rates.reverse_holder_probe(u, p, m) for p in ps]))
        (probe, rhv), (probe_c, rhv_c) = vals
        cert = _agreement_cert(f"{_kernel_id(consts, nodes_per_period)}:eps={_tag(eps)}",
                               [probe["sup"], *rhv], [probe_c["sup"], *rhv_c], rtol=1e-4)
        return probe, rhv, cert

    items = [(consts, eps) for consts in family for eps in eps_list]
    rows, lip, rh, certs = [], {}, {}, []
    for (consts, eps), (probe, rhv, cert) in zip(items, pmap(one, items, jobs)):
        sid = _kernel_id(consts, nodes_per_period)
        certs.append(cert)
        for r, v in sorted(probe["values"].items()):
            rows.append(("lipschitz", eps, r, v, cert.id))
        rows.append(("lipschitz_sup", eps, "", probe["sup"], cert.id))
        lip.setdefault(sid, []).append(probe["sup"])
        for p, v in zip(ps, rhv):
            rows.append(("reverse_holder", eps, p, v, cert.id))
            rh.setdefault((sid, p), []).append(v)
    return ProbeResult(rows, lip, rh, certs)


def safe_fit(report: rates.RateReport, solver_tol=None):
    """Fit and return (fit, None), or (None, reason) when the fit is refused."""
    try:
        return report.fit_rates(solver_tol), None
    except FitError as exc:
        return None, str(exc)
