"""Scenario runner.

    fermikms run CONFIG.json [--out DIR] [--experiment NAME] [--seed N]

Writes DIR/report.json and one CSV per data series. Exit status: 0 when
every check passes or is inconclusive, 1 on a failed check, 2 for a bad
config or unknown experiment, 3 when a run violates a convergence
hypothesis (for example beta ||K|| >= 1 for the imaginary-time series).
"""

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import entropy as ent
from . import estimates as est
from . import ness
from .dynamics import (build_cocycle, cocycle_at, cook_decay, interaction_operator, moller,
                       switched_potential, unitarity_defect, wavepacket)
from .fermi_derivatives import FermiFamily, derivative_consistency, kms_cross_check
from .kms import ContractionError, KmsSpec, recursion_residuals, simplex_cube_check, t_series
from .linop import Covariance, HermitianOperator, commutator, expi, fermi_factor, op_norm
from .model import (LatticeModel, PotentialProfile, bump_profile, build_dirac,
                    constant_profile, random_profile)

EXPERIMENTS = ("kms_identity", "entropy_compare", "ness", "adiabatic", "decay", "bounds",
               "moller", "appendix_derivatives", "entropy_production")

NUMERIC_DEFAULTS = {
    "series_order": 5,
    "quad_points": 12,
    "time_step": None,        # None: 1e-3 of the switch window
    "t_grid": [1.0, 2.0, 4.0, 8.0],
    "u_quad": 32,
    "T_list": [1.0, 2.0, 4.0, 8.0, 16.0],
    "n_profiles": 5,
    "n_max": 2,
    "bound_margin": 0.05,
    "time_nodes": 200,
}


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    experiment: str
    model: dict = field(default_factory=dict)
    profile: dict = field(default_factory=dict)
    beta: float = 1.0
    seed: int = 0
    output_dir: str = "out"
    numeric: dict = field(default_factory=dict)
    explicit: dict = None

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in raw:
            raise ConfigError("config lacks 'experiment'")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; known: {', '.join(EXPERIMENTS)}")
        if not (isinstance(self.beta, (int, float)) and self.beta > 0):
            raise ConfigError("beta must be a positive number")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        bad = set(self.numeric) - set(NUMERIC_DEFAULTS)
        if bad:
            raise ConfigError(f"unknown numeric budgets: {sorted(bad)}")
        for k, v in self.budgets.items():
            if v is None:
                continue
            vals = v if isinstance(v, list) else [v]
            if not vals or not all(isinstance(x, (int, float)) and x > 0 for x in vals):
                raise ConfigError(f"numeric budget {k!r} must be positive")
        try:
            self.lattice()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad model: {exc}") from None

    @property
    def budgets(self):
        out = dict(NUMERIC_DEFAULTS)
        out.update(self.numeric)
        return out

    def lattice(self):
        return LatticeModel(**self.model)

    def build_profile(self, model, rng):
        p = dict(self.profile)
        kind = p.pop("kind", "bump" if p else "none")
        switch = {k: p.pop(k) for k in ("epsilon", "T_adiabatic", "switch_kind") if k in p}
        try:
            if kind == "none":
                return None
            if kind == "bump":
                return bump_profile(model, **p, **switch)
            if kind == "constant":
                return constant_profile(model, p.get("value", 0.1), **switch)
            if kind == "random":
                return random_profile(model, rng, **p, **switch)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad profile: {exc}") from None
        raise ConfigError(f"unknown profile kind {kind!r}")

    def digest(self):
        d = asdict(self)
        d.pop("output_dir")  # where results go is not part of the scenario
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


class Run:
    """Collects checks, scalars and CSV series for one experiment."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.checks = []
        self.scalars = {}
        self.series = {}

    def check(self, name, value, tolerance, ok, status=None):
        if status is None:
            status = "PASS" if ok else "FAIL"
        self.checks.append({"name": name, "value": value, "tolerance": tolerance, "status": status})

    def add_series(self, name, columns, rows, note):
        self.series[name] = (columns, rows, note)

    # operators shared by several experiments
    def operators(self):
        cfg = self.cfg
        if cfg.explicit:
            try:
                D = HermitianOperator(np.array(cfg.explicit["D"], dtype=float))
                K = HermitianOperator(np.array(cfg.explicit["K"], dtype=float))
            except (KeyError, ValueError, TypeError) as exc:
                raise ConfigError(f"bad explicit operators: {exc}") from None
            if D.dim != K.dim:
                raise ConfigError("explicit D and K differ in size")
            return None, None, D, K
        model = cfg.lattice()
        prof = cfg.build_profile(model, self.rng)
        D = build_dirac(model)
        if prof is None:
            return model, None, D, HermitianOperator(np.zeros((D.dim, D.dim)))
        res = interaction_operator(D, switched_potential(model, prof), cfg.budgets["time_step"])
        self.scalars["K_dual_gap"] = res.dual_gap
        self.scalars["K_error_estimate"] = res.error_estimate
        return model, prof, D, res.K


def exp_kms_identity(run):
    b = run.cfg.budgets
    _, _, D, K = run.operators()
    spec = KmsSpec(run.cfg.beta, D, K)
    spec.require_convergent()
    N, q = int(b["series_order"]), int(b["quad_points"])
    res = t_series(spec, None, N, q)
    target = fermi_factor(D + K, spec.beta).entries
    err = op_norm(res.value - target)
    tol = res.truncation_bound + 1e-4
    run.scalars.update(contraction=spec.contraction, series_error=err,
                       truncation_bound=res.truncation_bound, quadrature_estimate=res.quadrature_estimate)
    run.check("t_series_vs_fermi", err, tol, err <= tol)
    rr = recursion_residuals(spec, N, q)
    run.add_series("recursion", ["iteration", "residual"], [[i, r] for i, r in enumerate(rr)],
                   "fixed-point residuals of the imaginary-time recursion per truncation order")
    sc = max(simplex_cube_check(spec, n, q) for n in (1, 2))
    run.check("simplex_vs_cube", sc, 1e-8, sc <= 1e-8)


def exp_entropy_compare(run):
    b = run.cfg.budgets
    _, _, D, K = run.operators()
    beta = run.cfg.beta
    spec = KmsSpec(beta, D, K)
    vals = {"s_closed": ent.rel_entropy_closed(spec),
            "s_integral": ent.rel_entropy_integral(spec, int(b["u_quad"])),
            "s_kl": ent.rel_entropy_kl(Covariance.thermal(D, beta), Covariance.thermal(D + K, beta))}
    run.check("kl_vs_closed", abs(vals["s_kl"] - vals["s_closed"]), 1e-9,
              abs(vals["s_kl"] - vals["s_closed"]) <= 1e-9)
    run.check("integral_vs_closed", abs(vals["s_integral"] - vals["s_closed"]), 1e-6,
              abs(vals["s_integral"] - vals["s_closed"]) <= 1e-6)
    if spec.contraction < 1:
        ser = ent.rel_entropy_series(spec, int(b["series_order"]), int(b["quad_points"]))
        vals["s_series"] = ser.value
        tol = ser.truncation_bound + 5e-3
        run.check("series_vs_closed", abs(ser.value - vals["s_closed"]), tol,
                  abs(ser.value - vals["s_closed"]) <= tol)
    else:
        vals["s_series"] = None
        run.check("series_vs_closed", None, None, True, "SKIPPED")
    Dm, Km = D.entries, K.entries
    if np.allclose(Dm, np.diag(np.diag(Dm))) and np.allclose(Km, np.diag(np.diag(Km))):
        modes = [ent.BoundStateDatum(float(s.real), float((s + k).real))
                 for s, k in zip(np.diag(Dm), np.diag(Km))]
        vals["s_ness_closed"] = ent.ness_rel_entropy_closed(beta, modes)
        vals["s_partition"] = ent.partition_function_entropy(beta, modes)
        if max(ent.eulerian_series_ratio(beta, m.s, m.k) for m in modes) < 0.9:
            vals["s_eulerian"] = sum(ent.eulerian_mode_series(beta, m.s, m.k) for m in modes)
            g = abs(vals["s_eulerian"] - vals["s_closed"])
            run.check("eulerian_vs_closed", g, 1e-10, g <= 1e-10)
    run.scalars.update(vals)
    nonneg = min(v for v in vals.values() if v is not None)
    run.check("nonnegative", nonneg, -1e-9, nonneg >= -1e-9)


def exp_ness(run):
    b = run.cfg.budgets
    model, _, D, K = run.operators()
    beta = run.cfg.beta
    m = model.mass if model else 1.0
    g = ness.bound_states(D, K, m, margin=b["bound_margin"])
    run.scalars["bound_state_count"] = g.count
    if g.degenerate:
        run.check("nondegenerate_gap", len(g.degenerate), 0, False)
        return
    N = ness.ness_ideal_covariance(g, D, K, beta)
    H = D + K
    comm = op_norm(commutator(H, N.op)) / max(H.op_norm, 1e-300)
    run.check("ness_commutes", comm, 1e-10, comm <= 1e-10)
    data = ness.bound_state_data(g, D, beta)
    occ_gap = max([abs(float(np.real(v.conj() @ N.op.entries @ v)) - bd.occupation(beta))
                   for (_, v), bd in zip(g.gap_eigenpairs, data)], default=0.0)
    run.check("bound_occupations", occ_gap, 1e-12, occ_gap <= 1e-12)
    run.scalars["ness_vs_ergodic_gap"] = ness.ness_vs_ergodic_gap(D, K, beta, m, b["bound_margin"])
    run.scalars["ness_entropy"] = ent.ness_rel_entropy_closed(beta, data)
    run.scalars["ness_entropy_partition"] = ent.partition_function_entropy(beta, data)
    cross = ness.bound_cross_terms(g, D, beta)
    run.scalars["bound_cross_term_max"] = float(np.max(np.abs(cross - np.diag(np.diag(cross))), initial=0.0))
    rows = [[s, bd.d, bd.k, bd.occupation(beta), bd.occupation(beta) - 1 / (1 + math.exp(-beta * s))]
            for (s, _), bd in zip(g.gap_eigenpairs, data)]
    run.add_series("bound_states", ["s", "d", "k", "occupation", "mismatch"], rows,
                   "gap eigenvalues of D+K with conserved occupations and their distance to the Fermi value")
    if g.count:
        v = g.vectors[:, 0]
        rows = []
        for T in b["t_grid"]:
            r = ness.return_to_equilibrium_probe(D, K, beta, [v], T, m=m, margin=b["bound_margin"])
            rows.append([T, r.max_gap, abs(r.bound_mismatch[0])])
        persist = max(abs(r[1] - r[2]) for r in rows)
        run.check("persistent_gap_equals_mismatch", persist, 1e-10, persist <= 1e-10)
        run.add_series("return_to_equilibrium", ["T", "gap", "mismatch"], rows,
                       "Cesaro gap for the first gap eigenvector against its occupation mismatch")


def exp_adiabatic(run):
    b = run.cfg.budgets
    model = run.cfg.lattice()
    prof = run.cfg.build_profile(model, run.rng)
    if prof is None:
        raise ConfigError("adiabatic experiment needs a profile")
    fit = est.adiabatic_sweep(model, prof, b["T_list"])
    run.scalars.update(fitted_exponent=fit.fitted_exponent, r2=fit.r2)
    run.check("adiabatic_exponent", fit.fitted_exponent, -1.5, fit.verdict == "PASS", fit.verdict)
    run.add_series("adiabatic", ["T", "hs_PKQ", "dual_gap"],
                   [[T, v, gp] for T, v, gp in zip(fit.x, fit.values, fit.extras["dual_gaps"])],
                   "||P K(T) Q||_HS per adiabatic stretch factor T")


def exp_decay(run):
    b = run.cfg.budgets
    t = np.geomspace(10, 200, 20)
    for d in (3, 1):
        fit = est.stationary_phase(lambda p: np.exp(-p**2 / 2), t, spatial_dim=d)
        run.scalars[f"stationary_phase_slope_{d}d"] = fit.fitted_exponent
        run.check(f"stationary_phase_{d}d", fit.fitted_exponent, fit.extras["expected"],
                  fit.verdict == "PASS", fit.verdict)
        run.add_series(f"stationary_phase_{d}d", ["t", "value"], [[a, v] for a, v in zip(t, fit.values)],
                       f"|int exp(i omega t) f d^{d}p| for a Gaussian f")
    model, _, D, K = run.operators()
    if model is not None and op_norm(K.entries) > 0:
        # an odd probe has no zero-momentum component, the slow channel in 1D
        f = wavepacket(model, 0.0, 2.0, 0.0, odd=model.spatial_dim == 1)
        tg = np.asarray(b["t_grid"], dtype=float)
        free = cook_decay(D, K, f, tg, tail=(tg[0], tg[-1]))
        full = cook_decay(D + K, K, f, tg, tail=(tg[0], tg[-1]))
        run.scalars.update(cook_slope_free=free.slope, cook_r2_free=free.r2,
                           cook_slope_interacting=full.slope, cook_r2_interacting=full.r2)
        status = "INCONCLUSIVE" if free.r2 < 0.95 else None
        run.check("cook_free_slope", free.slope, -1.2, free.slope <= -1.2, status)
        run.add_series("cook", ["t", "norm_free", "norm_interacting"],
                       [[a, v, w] for a, v, w in zip(tg, free.norms, full.norms)],
                       "||K exp(itH) f|| for H = D and H = D + K, localized odd probe")


def exp_bounds(run):
    b = run.cfg.budgets
    model = run.cfg.lattice()
    base = dict(run.cfg.profile)
    amp = base.get("max_amplitude", 0.2)
    D = build_dirac(model)
    rows, worst = [], 0.0
    for i in range(int(b["n_profiles"])):
        prof = random_profile(model, run.rng, max_amplitude=amp,
                              epsilon=base.get("epsilon", 1.0), T_adiabatic=base.get("T_adiabatic", 1.0),
                              switch_kind=base.get("switch_kind", "bump_integral"))
        K = interaction_operator(D, switched_potential(model, prof), b["time_step"]).K
        kb = est.kernel_bound_H(model, prof, K=K)
        checks = [est.hs_bound_U(model, prof), est.hs_bound_K(model, prof, K=K), kb.l1_check, kb.l2_check]
        for c in checks:
            rows.append(c.csv_row(model.n_modes_per_axis, f"{run.cfg.seed}:{i}"))
            worst = min(worst, c.margin / max(abs(c.rhs), 1e-300))
        run.check(f"kernel_domination_{i}", kb.worst_excess, 1e-8, kb.dominated)
    run.scalars["worst_relative_margin"] = worst
    run.check("bound_violations", worst, -1e-9, worst >= -1e-9)
    run.add_series("bounds", est.CSV_COLUMNS, rows, "one row per inequality and random profile")


def exp_moller(run):
    b = run.cfg.budgets
    model, prof, D, K = run.operators()
    tg = np.asarray(b["t_grid"], dtype=float)
    probes = [wavepacket(model, 0.0, 2.0, 0.0)] if model else [np.eye(D.dim)[0]]
    rec = moller(D, K, tg, probes, run.cfg.beta)
    run.check("moller_isometry", rec.isometry_defect, 1e-9, rec.isometry_defect <= 1e-9)
    run.add_series("moller", ["t", "intertwining", "cesaro_intertwining"],
                   [[t, a, c] for t, a, c in zip(tg, rec.intertwining[:, 0], rec.cesaro_intertwining[:, 0])],
                   "||F(D+K) Omega(t) f - Omega(t) F(D) f|| and its running mean")
    if prof is not None:
        c = build_cocycle(D, switched_potential(model, prof), b["time_step"])
        s, t = float(tg[0]), float(tg[-1])
        lhs = cocycle_at(c, s + t)
        rhs = cocycle_at(c, t) @ expi(D, t) @ cocycle_at(c, s) @ expi(D, -t)
        gap = op_norm(lhs - rhs)
        run.check("cocycle_law", gap, 1e-8, gap <= 1e-8)
        ud = unitarity_defect(cocycle_at(c, t))
        run.check("cocycle_unitarity", ud, 1e-9, ud <= 1e-9)


def exp_appendix_derivatives(run):
    b = run.cfg.budgets
    if run.cfg.explicit:
        _, _, D, K = run.operators()
    else:
        n = 8
        X = run.rng.normal(size=(n, n)) + 1j * run.rng.normal(size=(n, n))
        Y = run.rng.normal(size=(n, n)) + 1j * run.rng.normal(size=(n, n))
        D = HermitianOperator(3 * (X + X.conj().T) / (2 * np.sqrt(n)))
        Kr = (Y + Y.conj().T) / 2
        K = HermitianOperator(0.3 * Kr / op_norm(Kr))
    n_max = int(b["n_max"])
    rep = derivative_consistency(FermiFamily(D, K), 0.3, n_max, int(b["quad_points"]))
    for n, e in rep.relative_errors.items():
        run.check(f"fd_relative_error_n{n}", e, 1e-5, e <= 1e-5)
    run.check("taylor_remainder_slope", rep.remainder_slope, n_max + 1, rep.slope_ok)
    run.add_series("taylor_remainder", ["lambda", "remainder"],
                   [[a, r] for a, r in zip(rep.lambdas, rep.remainders)],
                   "norm of A(u) minus its Taylor polynomial of order n_max")
    spec = KmsSpec(run.cfg.beta, D, K)
    spec.require_convergent()
    gaps = kms_cross_check(spec, n_max, int(b["quad_points"]))
    worst = max(gaps.values())
    run.check("kms_cross_module", worst, 1e-8, worst <= 1e-8)


def exp_entropy_production(run):
    b = run.cfg.budgets
    _, _, D, K = run.operators()
    spec = KmsSpec(run.cfg.beta, D, K)
    rows, worst = [], 0.0
    for t in b["t_grid"]:
        ep = ent.entropy_production(spec, t, int(b["u_quad"]), time_nodes=0)
        rows.append([t, ep.E_t, ep.E_t_fd, ep.S_of_t])
        if abs(ep.E_t) > 1e-8:
            worst = max(worst, abs(ep.E_t - ep.E_t_fd) / abs(ep.E_t))
    run.check("two_route_rate", worst, 1e-5, worst <= 1e-5)
    tmax = float(max(b["t_grid"]))
    ep = ent.entropy_production(spec, tmax, int(b["u_quad"]), time_nodes=int(b["time_nodes"]))
    run.check("cumulative_residual", ep.cumulative_residual, 1e-4, ep.cumulative_residual <= 1e-4)
    run.add_series("entropy_production", ["t", "E_t", "E_t_fd", "S_t"], rows,
                   "entropy production rate by two routes and the relative entropy of the evolved state")


RUNNERS = {name: globals()[f"exp_{name}"] for name in EXPERIMENTS}


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [_clean(float(np.real(x))), _clean(float(np.imag(x)))]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _write_csv(path, columns, rows, note):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {note}\n")
        fh.write(f"# columns: {', '.join(columns)}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def execute(cfg, out_dir):
    run = Run(cfg)
    RUNNERS[cfg.experiment](run)
    os.makedirs(out_dir, exist_ok=True)
    files = []
    for name, (cols, rows, note) in sorted(run.series.items()):
        fn = f"{cfg.experiment}_{name}.csv"
        _write_csv(os.path.join(out_dir, fn), cols, rows, note)
        files.append(fn)
    status = "FAIL" if any(c["status"] == "FAIL" for c in run.checks) else "PASS"
    report = {
        "experiment": cfg.experiment,
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "beta": cfg.beta,
        "numeric_budgets": cfg.budgets,
        "model": cfg.model,
        "profile": cfg.profile,
        "scalars": run.scalars,
        "checks": run.checks,
        "series_files": files,
        "status": status,
    }
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(_clean(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def run_config(path, out=None, experiment=None, seed=None):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config {path}: {exc}", file=sys.stderr)
        return 2
    if isinstance(raw, dict):
        if experiment is not None:
            raw["experiment"] = experiment
        if seed is not None:
            raw["seed"] = seed
        if out is not None:
            raw["output_dir"] = out
    try:
        cfg = ScenarioConfig.from_dict(raw)
        report = execute(cfg, cfg.output_dir)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ContractionError as exc:
        print(f"error: convergence hypothesis violated: {exc}", file=sys.stderr)
        return 3
    for c in report["checks"]:
        print(f"{c['status']:<13} {c['name']}")
    print(f"{report['status']}: report written to {os.path.join(cfg.output_dir, 'report.json')}")
    return 1 if report["status"] == "FAIL" else 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="fermikms", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one scenario from a JSON config")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--experiment", help=f"override the experiment ({', '.join(EXPERIMENTS)})")
    p.add_argument("--seed", type=int, help="override the seed")
    args = parser.parse_args(argv)
    return run_config(args.config, args.out, args.experiment, args.seed)


if __name__ == "__main__":
    sys.exit(main())
