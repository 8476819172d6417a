"""Config-driven experiment front end.

``nonconv run <config.yaml> --out <dir>`` reads a declarative YAML config,
runs the requested oracles / simulations, and writes one CSV per requested
table plus a JSON manifest.  Identical (config, seed) runs produce
byte-identical outputs.

Config grammar (YAML mapping):

  model:       bernoulli | markov | subshift
  seed:        integer, required (no wall-clock default)
  lambda:      positive number (default 1.0)
  n_grid:      list of integers, required
  replicates:  integer >= 0 (default 0; 0 = exact-only tables)
  schedule:    {family: linear|arithmetic_gap|polynomial|exponential_gap|table,
                ell: int, c: num, gamma: num, degree: int, rows: [[..]]}
  outputs:     list of table names (see `nonconv list-tables`)
  budgets:     {enumeration: int, paths: int, component_cap: int}  (optional)
  model_params:
    markov:    {transition: [[..]], lift_tolerance: num, max_lift: int}
    subshift:  {adjacency: [[..]] (default full 2-shift),
                transition: [[..]] (default uniform on edges),
                omega_star: [symbols] or omega_seed: int, s: num, eps: num}
  sevastyanov: {r: int, rare_params: auto | [threshold, cutoff],
                pair_samples: int, ratio_samples: int}  (optional)
  hitting:     {lambdas: [..]}  (optional)
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .distributions import PoissonLaw, empirical_distribution, tv_distance
from .errors import ConfigError, NonconvError, ValidationError
from .schedules import (
    QSchedule,
    SCHEDULE_FAMILIES,
    logpow_cutoff,
    ratio_cutoff_index,
    table_schedule,
)

TABLES = {
    "pmf_vs_poisson": ("bernoulli", "markov", "subshift"),
    "tv_and_bounds": ("bernoulli",),
    "chen_stein_terms": ("bernoulli",),
    "sevastyanov_report": ("bernoulli", "markov", "subshift"),
    "mixing_certificates": ("markov", "subshift"),
    "hitting_time_survival": ("subshift",),
}

_DEFAULT_BUDGETS = {"enumeration": 200_000, "paths": 10**7, "component_cap": 25}


# ---------------------------------------------------------------------------
# Config loading and validation
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    text = Path(path).read_text()
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise ConfigError(["config must be a YAML mapping"])
    doc["_raw_bytes"] = text.encode()
    return doc


def validate_config(cfg: dict) -> list[str]:
    """Return every fault found (empty list = valid)."""
    faults = []
    model = cfg.get("model")
    if model not in ("bernoulli", "markov", "subshift"):
        faults.append(f"model must be bernoulli, markov or subshift, got {model!r}")
    if "seed" not in cfg:
        faults.append("seed is mandatory (no wall-clock default)")
    elif not isinstance(cfg["seed"], int):
        faults.append(f"seed must be an integer, got {cfg['seed']!r}")
    lam = cfg.get("lambda", 1.0)
    if not isinstance(lam, (int, float)) or lam <= 0:
        faults.append(f"lambda must be positive, got {lam!r}")
    grid = cfg.get("n_grid")
    if not isinstance(grid, list) or not grid or not all(
        isinstance(v, int) and v >= 1 for v in grid
    ):
        faults.append("n_grid must be a nonempty list of positive integers")
    reps = cfg.get("replicates", 0)
    if not isinstance(reps, int) or reps < 0:
        faults.append(f"replicates must be an integer >= 0, got {reps!r}")
    outputs = cfg.get("outputs")
    if not isinstance(outputs, list) or not outputs:
        faults.append("outputs must be a nonempty list of table names")
    else:
        for name in outputs:
            if name not in TABLES:
                faults.append(f"unknown table {name!r}")
            elif model in ("bernoulli", "markov", "subshift") and model not in TABLES[name]:
                faults.append(f"table {name!r} is not defined for model {model!r}")
    sched = cfg.get("schedule")
    if not isinstance(sched, dict):
        faults.append("schedule section is required")
    else:
        fam = sched.get("family")
        if fam not in SCHEDULE_FAMILIES and fam != "table":
            faults.append(f"unknown schedule family {fam!r}")
        if fam == "table" and "rows" not in sched:
            faults.append("table schedule requires rows")
        if fam in ("linear", "polynomial", "exponential_gap", "arithmetic_gap") and not isinstance(
            sched.get("ell"), int
        ):
            faults.append("schedule.ell must be an integer")
        if fam == "arithmetic_gap" and not all(
            isinstance(sched.get(k), (int, float)) for k in ("c", "gamma")
        ):
            faults.append("arithmetic_gap schedule requires numeric c and gamma")
        if fam == "polynomial" and not isinstance(sched.get("degree"), int):
            faults.append("polynomial schedule requires integer degree")
    budgets = cfg.get("budgets", {})
    if not isinstance(budgets, dict):
        faults.append("budgets must be a mapping")
    else:
        for key, val in budgets.items():
            if key not in _DEFAULT_BUDGETS:
                faults.append(f"unknown budget {key!r}")
            elif not isinstance(val, int) or val <= 0:
                faults.append(f"budget {key} must be a positive integer, got {val!r}")
    mp = cfg.get("model_params", {}) or {}
    if model == "markov" and "transition" not in mp:
        faults.append("markov model requires model_params.transition")
    if model == "subshift" and "omega_star" not in mp and "omega_seed" not in mp:
        faults.append("subshift model requires model_params.omega_star or omega_seed")
    return faults


def build_schedule(spec: dict) -> QSchedule:
    fam = spec["family"]
    if fam == "table":
        return table_schedule(spec["rows"])
    if fam == "linear":
        return SCHEDULE_FAMILIES[fam](spec["ell"])
    if fam == "arithmetic_gap":
        return SCHEDULE_FAMILIES[fam](spec["ell"], float(spec["c"]), float(spec["gamma"]))
    if fam == "polynomial":
        return SCHEDULE_FAMILIES[fam](spec["ell"], spec["degree"])
    if fam == "exponential_gap":
        return SCHEDULE_FAMILIES[fam](spec["ell"])
    raise ConfigError([f"unknown schedule family {fam!r}"])


# ---------------------------------------------------------------------------
# Model contexts
# ---------------------------------------------------------------------------

class _RunContext:
    """Validated config plus lazily built model objects shared by tables."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.model = cfg["model"]
        self.seed = cfg["seed"]
        self.lam = float(cfg.get("lambda", 1.0))
        self.n_grid = sorted(cfg["n_grid"])
        self.replicates = cfg.get("replicates", 0)
        self.schedule = build_schedule(cfg["schedule"])
        self.budgets = {**_DEFAULT_BUDGETS, **(cfg.get("budgets", {}) or {})}
        self.model_params = cfg.get("model_params", {}) or {}
        self._cache: dict = {}

    # -- markov ---------------------------------------------------------

    def markov_chain(self):
        from .markov import FiniteMarkovChain

        if "chain" not in self._cache:
            mp = self.model_params
            self._cache["chain"] = FiniteMarkovChain(
                mp["transition"], nu=mp.get("initial")
            )
        return self._cache["chain"]

    def markov_targets(self):
        from .markov import choose_target_sets

        if "targets" not in self._cache:
            mp = self.model_params
            self._cache["targets"] = choose_target_sets(
                self.markov_chain(),
                self.schedule.ell,
                self.lam,
                self.n_grid,
                tolerance=float(mp.get("lift_tolerance", 0.2)),
                max_lift=int(mp.get("max_lift", 12)),
            )
        return self._cache["targets"]

    # -- subshift ---------------------------------------------------------

    def subshift_measure(self):
        from .subshift import MarkovGibbsMeasure, SubshiftSFT, full_shift, uniform_measure

        if "measure" not in self._cache:
            mp = self.model_params
            sft = (
                SubshiftSFT.from_matrix(mp["adjacency"])
                if "adjacency" in mp
                else full_shift(2)
            )
            if "transition" in mp:
                self._cache["measure"] = MarkovGibbsMeasure(sft, mp["transition"])
            else:
                self._cache["measure"] = uniform_measure(sft)
        return self._cache["measure"]

    def subshift_target(self, n: int):
        from .subshift import make_target, sample_clear_word

        key = ("target", n)
        if key not in self._cache:
            mp = self.model_params
            eps = float(mp.get("eps", 0.25))
            s = float(mp.get("s", 0.0))
            measure = self.subshift_measure()
            if "omega_star" in mp:
                omega = tuple(int(v) for v in mp["omega_star"])
            else:
                omega = sample_clear_word(measure, n, eps, int(mp["omega_seed"]) + n)
            self._cache[key] = make_target(measure, omega, n=n, s=s, eps=eps)
        return self._cache[key]


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return "nan"
        return format(float(v), ".12g")
    return str(v)


def _pmf_rows(n, dist, lam, source):
    poisson = PoissonLaw(lam)
    kmax = dist.max_count()
    rows = []
    for k in range(kmax + 1):
        rows.append(
            (n, k, dist.prob(k), poisson.pmf(k), source, dist.sample_size or 0)
        )
    return rows


def table_pmf_vs_poisson(ctx: _RunContext):
    header = ("n", "k", "model_pmf", "poisson_pmf", "source", "sample_size")
    rows = []
    if ctx.model == "bernoulli":
        from .bernoulli import BernoulliScheme, exact_distribution, simulate_batch

        for n in ctx.n_grid:
            scheme = BernoulliScheme.from_lambda(n, ctx.schedule.ell, ctx.lam, ctx.schedule)
            exact = exact_distribution(scheme, ctx.budgets["component_cap"])
            rows += _pmf_rows(n, exact, ctx.lam, "exact")
            if ctx.replicates > 0:
                emp = empirical_distribution(
                    simulate_batch(scheme, ctx.seed, ctx.replicates)
                )
                rows += _pmf_rows(n, emp, ctx.lam, "empirical")
    elif ctx.model == "markov":
        from .markov import simulate_arrival_batch

        targets = ctx.markov_targets()
        for n in ctx.n_grid:
            entry = targets.entries[n]
            if ctx.replicates > 0:
                samples = simulate_arrival_batch(
                    entry.chain, ctx.schedule, entry.states, n, ctx.seed, ctx.replicates
                )
                emp = empirical_distribution(samples)
                rows += _pmf_rows(n, emp, entry.realized_lambda, "empirical")
    else:
        from .subshift import simulate_nonconventional_batch

        for n in ctx.n_grid:
            target = ctx.subshift_target(n)
            if ctx.replicates > 0:
                samples, _, lam_n = simulate_nonconventional_batch(
                    ctx.subshift_measure(), ctx.schedule, target, ctx.lam,
                    ctx.seed, ctx.replicates,
                )
                emp = empirical_distribution(samples)
                rows += _pmf_rows(n, emp, lam_n, "empirical")
    return header, rows


def table_tv_and_bounds(ctx: _RunContext):
    from .bernoulli import BernoulliScheme, verify_poisson_bound

    header = ("n", "ell", "p_n", "lambda", "lambda_n", "tv_exact", "bound", "holds")
    rows = []
    for n in ctx.n_grid:
        scheme = BernoulliScheme.from_lambda(n, ctx.schedule.ell, ctx.lam, ctx.schedule)
        rep = verify_poisson_bound(scheme, ctx.lam, ctx.budgets["component_cap"])
        rows.append(
            (rep.n, rep.ell, rep.p, rep.lam, rep.lambda_n, rep.tv_exact, rep.bound, rep.holds)
        )
    return header, rows


def table_chen_stein_terms(ctx: _RunContext):
    from .bernoulli import BernoulliScheme, chen_stein_terms

    header = ("n", "ell", "p_n", "I1", "I2", "I3", "bound")
    rows = []
    for n in ctx.n_grid:
        scheme = BernoulliScheme.from_lambda(n, ctx.schedule.ell, ctx.lam, ctx.schedule)
        t = chen_stein_terms(scheme)
        rows.append((n, scheme.ell, scheme.p, t.I1, t.I2, t.I3, t.bound))
    return header, rows


def _auto_rare_params(ctx: _RunContext):
    if ctx.model == "bernoulli":
        return (0, 0)
    if ctx.model == "markov":
        return lambda n: (max(1, int(math.log(n))), max(1, int(math.log(n))))
    eps = float(ctx.model_params.get("eps", 0.25))
    gp = ctx.schedule.gap_params or (1.0, 0.5)

    def params(n):
        a = logpow_cutoff(n, eps)
        return (n + a, ratio_cutoff_index(gp[0], gp[1], 2.0 * (n + a)))

    return params


def table_sevastyanov_report(ctx: _RunContext):
    from .sevastyanov import (
        Tolerances,
        bernoulli_model_oracle,
        check_conditions,
        markov_model_oracle,
        report_rows,
        subshift_model_oracle,
        poisson_limit_verdict,
    )

    sv = ctx.cfg.get("sevastyanov", {}) or {}
    r = int(sv.get("r", 2))
    rp = sv.get("rare_params", "auto")
    rare_params = _auto_rare_params(ctx) if rp == "auto" else tuple(rp)
    if ctx.model == "bernoulli":
        factory = bernoulli_model_oracle(ctx.schedule.ell, ctx.lam, ctx.schedule)
    elif ctx.model == "markov":
        factory = markov_model_oracle(ctx.markov_targets(), ctx.schedule)
    else:
        factory = subshift_model_oracle(
            ctx.subshift_measure(), ctx.schedule, ctx.lam, ctx.subshift_target
        )
    report = check_conditions(
        factory, ctx.schedule, r, ctx.n_grid, rare_params,
        budget=ctx.budgets["enumeration"],
        pair_samples=int(sv.get("pair_samples", 512)),
        ratio_samples=int(sv.get("ratio_samples", 512)),
        seed=ctx.seed,
    )
    verdict = poisson_limit_verdict(report, ctx.lam)
    header = ("n", "condition", "value", "envelope", "margin")
    rows = list(report_rows(report, ctx.lam, Tolerances()))
    rows.append(
        (max(ctx.n_grid), "verdict", 1.0 if verdict.passed else 0.0, "",
         min(verdict.margins.values()))
    )
    return header, rows


def table_mixing_certificates(ctx: _RunContext):
    header = ("quantity", "value")
    rows = []
    if ctx.model == "markov":
        from .markov import mixing_rate

        chain = ctx.markov_chain()
        cert = mixing_rate(chain)
        rows += [
            ("doeblin_n0", chain.n0),
            ("doeblin_C", chain.C),
            ("mixing_C1", cert.C1),
            ("mixing_beta", cert.beta),
        ]
    else:
        from .subshift import gibbs_constant, psi_mixing_check

        measure = ctx.subshift_measure()
        cert = psi_mixing_check(measure, l_max=4, gap_max=16)
        rows += [
            ("psi_C", cert.C),
            ("psi_beta", cert.beta),
            ("psi_spectral_beta", cert.spectral_beta),
            ("gibbs_constant", gibbs_constant(measure, min(max(ctx.n_grid), 8))),
        ]
    return header, rows


def table_hitting_time_survival(ctx: _RunContext):
    from .subshift import simulate_nonconventional_batch

    lambdas = [float(v) for v in (ctx.cfg.get("hitting", {}) or {}).get("lambdas", [0.5, 1.0, 2.0])]
    header = ("n", "lambda", "survival", "exp_neg_lambda", "std_error", "replicates")
    rows = []
    if ctx.replicates <= 0:
        raise ValidationError("hitting_time_survival requires replicates > 0")
    for n in ctx.n_grid:
        target = ctx.subshift_target(n)
        for lam in lambdas:
            samples, _, _ = simulate_nonconventional_batch(
                ctx.subshift_measure(), ctx.schedule, target, lam,
                ctx.seed + int(1000 * lam), ctx.replicates,
            )
            surv = float((samples == 0).mean())
            limit = math.exp(-lam)
            se = math.sqrt(limit * (1.0 - limit) / ctx.replicates)
            rows.append((n, lam, surv, limit, se, ctx.replicates))
    return header, rows


_TABLE_FNS = {
    "pmf_vs_poisson": table_pmf_vs_poisson,
    "tv_and_bounds": table_tv_and_bounds,
    "chen_stein_terms": table_chen_stein_terms,
    "sevastyanov_report": table_sevastyanov_report,
    "mixing_certificates": table_mixing_certificates,
    "hitting_time_survival": table_hitting_time_survival,
}


# ---------------------------------------------------------------------------
# Run / output plumbing
# ---------------------------------------------------------------------------

def _write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            s = _fmt(v)
            if any(ch in s for ch in ',"\n'):
                s = '"' + s.replace('"', '""') + '"'
            cells.append(s)
        lines.append(",".join(cells))
    path.write_text("\r\n".join(lines) + "\r\n")


def run(config_path, out_dir) -> dict:
    cfg = load_config(config_path)
    faults = validate_config(cfg)
    if faults:
        raise ConfigError(faults)
    ctx = _RunContext(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables = {}
    for name in cfg["outputs"]:
        header, rows = _TABLE_FNS[name](ctx)
        fname = f"{name}.csv"
        _write_csv(out / fname, header, rows)
        tables[name] = fname
    manifest = {
        "config_hash": hashlib.sha256(cfg["_raw_bytes"]).hexdigest(),
        "seed": ctx.seed,
        "tables": tables,
        "versions": {
            "nonconv": __version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
            "numpy": np.__version__,
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nonconv",
        description="Simulation and verification experiments for nonconventional arrival counts",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a config and write result tables")
    p_run.add_argument("config")
    p_run.add_argument("--out", required=True, help="output directory")
    p_val = sub.add_parser("validate", help="validate a config, listing every fault")
    p_val.add_argument("config")
    sub.add_parser("list-tables", help="list available tables and their models")
    args = parser.parse_args(argv)

    if args.command == "list-tables":
        for name, models in TABLES.items():
            print(f"{name}: {', '.join(models)}")
        return 0
    if args.command == "validate":
        try:
            cfg = load_config(args.config)
        except (OSError, yaml.YAMLError, ConfigError) as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
        faults = validate_config(cfg)
        if faults:
            for f in faults:
                print(f"fault: {f}", file=sys.stderr)
            return 1
        print("ok")
        return 0
    try:
        manifest = run(args.config, args.out)
    except ConfigError as e:
        for f in e.faults:
            print(f"fault: {f}", file=sys.stderr)
        return 1
    except NonconvError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
