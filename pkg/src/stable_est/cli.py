"""Command-line entry point ``stable-est``.

Every subcommand writes JSON (or CSV for sweeps) to ``--out`` or stdout.
Exit codes: 0 success, 1 internal failure, 2 usage or validation error,
3 failed check (``oracle``, and ``certify --assert``).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from typing import List, Optional

import numpy as np

from . import bounds as bd
from . import dpbridge as dp
from . import estimators as es
from . import risk as rk
from . import stability as st
from . import svgplot
from . import wavelet as wv
from .core import (
    REGRESSION,
    SCHEMA_VERSION,
    VECTOR,
    Dataset,
    Discrete,
    Regression,
    StableEstError,
    read_csv,
    replace_point,
    sample,
    write_csv,
)

log = logging.getLogger("stable_est")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_CHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _clean(v):
    """JSON has no infinities; encode them as strings."""
    if isinstance(v, float) and not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return _clean(v.item())
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    return v


def _emit(args, payload: dict) -> None:
    payload = {"schema_version": SCHEMA_VERSION, **payload, "config": _resolved(args)}
    text = json.dumps(_clean(payload), indent=2, sort_keys=True, default=_json_default) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config") and v is not None}


def _sibling(args, suffix: str, explicit: Optional[str]) -> str:
    if explicit:
        return explicit
    if args.out:
        stem, _ = os.path.splitext(args.out)
        return stem + suffix
    return "stable-est" + suffix


def _params(args) -> dict:
    """Estimator parameters from the common flags plus --spec JSON (the JSON wins)."""
    p = {}
    for name in ("n", "r", "beta", "d", "k", "s", "tau", "nu", "x0"):
        v = getattr(args, name, None)
        if v is not None:
            p[name] = v
    if getattr(args, "p", None) is not None and args.estimator in ("shrinkage", "shrinkage-refined"):
        p["p"] = st.parse_order(args.p)
    if getattr(args, "sigma", None) is not None and args.estimator.startswith("wavelet"):
        p["sigma_assumed"] = args.sigma
    spec = getattr(args, "spec", None)
    if spec:
        p.update(_load_json(spec))
    if args.estimator in ("soft-threshold",) and "n" in p:
        p.setdefault("r", 1.0)
    if args.estimator.startswith("wavelet"):
        p.pop("r", None)
        p.pop("d", None)
        p.pop("k", None)
    return p


def _load_json(text_or_path: str) -> dict:
    if os.path.exists(text_or_path):
        with open(text_or_path) as fh:
            return json.load(fh)
    try:
        return json.loads(text_or_path)
    except json.JSONDecodeError as exc:
        raise UsageError(f"not a JSON file or literal: {text_or_path!r} ({exc})") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_certify(args) -> int:
    _require(args, "estimator", "p", "n")
    p = st.parse_order(args.p)
    params = _params(args)
    wavelet = args.estimator.startswith("wavelet")
    if args.estimator not in ("sample-mean", "constant", "hard-threshold") and "beta" not in params and not wavelet:
        raise UsageError(f"--beta is required for {args.estimator}")
    est = es.build(args.estimator, **params)
    norm = args.norm
    if norm == "auto":
        norm = "linf" if args.estimator in ("sparse-soft", "soft-threshold", "hard-threshold") else "l2"
    radius = args.r
    heavy = args.estimator.startswith("heavy")
    if heavy:
        radius = math.inf
    box = args.box
    if box is None and (heavy or wavelet):
        box = 10.0 * args.r if heavy else 30.0
    domain = st.SearchDomain(
        args.n,
        est.dim if not wavelet else 1,
        radius,
        norm,
        REGRESSION if wavelet else VECTOR,
        box,
    )
    budget = st.SearchBudget.from_dict(_load_json(args.budget_file)) if args.budget_file else st.SearchBudget()
    rep = st.certify_sup(est, domain, p, budget, seed=args.seed, beta=args.claim)
    path = _sibling(args, ".witness.csv", args.witness)
    out = rep.to_dict()
    if isinstance(rep.witness, tuple):
        write_csv(rep.witness[0], path)
        neighbor = os.path.splitext(path)[0] + ".neighbor.csv"
        write_csv(rep.witness[1], neighbor)
        out["neighbor_csv_path"] = neighbor
    else:
        write_csv(rep.witness, path)
    out["witness_csv_path"] = path
    out["estimator"] = est.id
    _emit(args, out)
    if args.assert_ and rep.budget_satisfied is False:
        print(f"budget violated: found {rep.found_sup} > claim {rep.budget_claim}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_eval(args) -> int:
    _require(args, "estimator", "data")
    ds = read_csv(args.data, radius=args.radius if args.radius is not None else math.inf)
    params = _params(args)
    params.setdefault("n", ds.n)
    if args.estimator in ("sample-mean",):
        params.setdefault("d", ds.d)
    est = es.build(args.estimator, **params)
    value = est.evaluate(ds, seed=args.seed)
    certified = None
    if est.certified is not None:
        certified = {"p": st.format_order(est.certified[0]), "beta": float(est.certified[1])}
    _emit(args, {"estimate": np.asarray(value).reshape(-1).tolist(), "spec_echo": params, "certified": certified, "estimator": est.id})
    return EXIT_OK


def cmd_sweep(args) -> int:
    _require(args, "problem", "p", "n")
    extra = _load_json(args.extra) if args.extra else {}
    betas = rk.default_beta_grid(args.n, args.r, args.points, args.grid_lo, args.grid_hi)
    curve = rk.sweep(args.problem, args.p, betas, args.n, args.r, extra, args.reps, args.seed, args.method, args.threads)
    if args.out:
        curve.to_csv(args.out)
    else:
        curve.write(sys.stdout)
    return EXIT_OK


def cmd_lower(args) -> int:
    _require(args, "p", "n", "beta")
    p = st.parse_order(args.p)
    out = {"p": st.format_order(p), "n": args.n, "beta": args.beta}
    if args.dtheta is not None:
        e_dham = args.e_dham if args.e_dham is not None else float(args.n)
        out["worst"] = bd.lower_worst(args.dtheta, e_dham, args.beta)
        if not math.isinf(p):
            detail = bd.lower_lp_detail(args.dtheta, args.n, p, args.beta, linear=args.linear)
            out["lp"] = detail.to_dict()
            out["lp_value"] = bd.lower_lp(args.dtheta, args.n, p, args.beta, linear=args.linear)
        if p == 1:
            out["cor1"] = bd.lower_cor1(args.dtheta, args.n, args.beta)
            out["sharper"] = bd.lower_avg_sharper(args.dtheta, args.n, args.beta)
    if args.problem:
        extra = _load_json(args.extra) if args.extra else {}
        setup = rk.problem_setup(args.problem, p, args.n, args.r, extra)
        lo, hi = setup.overlay(args.beta)
        out.update(problem=args.problem, bound_lower=lo, bound_upper=hi)
        if args.problem == "bounded" and math.isinf(p):
            out["exact"] = bd.exact_risk_worst_bounded(args.n, args.r, args.beta)
        kw = {"p": p, "s": int(extra.get("s", 5))}
        out["threshold"] = bd.threshold(args.problem, st.format_order(p), args.n, args.r, **kw)
    if args.dtheta is None and not args.problem:
        raise UsageError("give --problem or --dtheta")
    out["catalog"] = bd.catalog_rows()
    _emit(args, out)
    return EXIT_OK


def _bounded_pair(n: int, r: float):
    ds1 = Dataset(np.full((n, 1), r), r)
    ds2 = replace_point(ds1, 0, [-r])
    return ds1, ds2


def cmd_dp(args) -> int:
    _require(args, "action")
    if args.action == "convert":
        _require(args, "eps")
        _emit(args, {"action": "convert", "eps": args.eps, "r": args.r, **dp.dp_to_stability(args.eps, args.r)})
        return EXIT_OK
    if args.action == "curves":
        _require(args, "n")
        eps = np.geomspace(args.eps_lo, args.eps_hi, args.points)
        curve = dp.prop1_curves(args.problem or "bounded", args.n, args.r, eps, k=args.k)
        _emit(args, {"action": "curves", "problem": curve.problem, "labels": curve.labels, "rows": list(curve.rows()), "ordering_holds": curve.ordering_holds() if curve.problem == "bounded" else None})
        return EXIT_OK
    _require(args, "eps", "n", "beta")
    base = es.exact_worst_bounded(args.n, args.r, args.beta)
    mech = dp.laplace_mechanism(base, args.eps)
    if args.action == "mechanism":
        ds = read_csv(args.data, radius=args.r) if args.data else _bounded_pair(args.n, args.r)[0]
        value = mech.evaluate(ds, seed=args.seed)
        _emit(args, {"action": "mechanism", "estimate": np.asarray(value).reshape(-1).tolist(), "noise_scale": mech.meta["noise_scale"], "certified_beta": float(base.certified[1])})
        return EXIT_OK
    if args.action == "audit":
        ds1, ds2 = _bounded_pair(args.n, args.r)
        rep = dp.dp_audit(mech, ds1, ds2, args.eps, bins=args.bins, reps=args.reps, seed=args.seed)
        _emit(args, {"action": "audit", **rep.to_dict(), "pass": rep.passed})
        return EXIT_OK if rep.passed else EXIT_CHECK
    raise UsageError(f"unknown action {args.action!r}")


def _probs(text: str) -> np.ndarray:
    return np.array([float(x) for x in text.split(",")])


def cmd_oracle(args) -> int:
    _require(args, "which")
    if args.which == "coupling":
        _require(args, "p1", "p2")
        q1, q2 = _probs(args.p1), _probs(args.p2)
        if q1.size != q2.size:
            raise UsageError("--p1 and --p2 need the same support size")
        support = np.arange(q1.size, dtype=float)[:, None]
        P1, P2 = Discrete(support, q1), Discrete(support, q2)
        m = args.n or 100_000
        a, b = bd.maximal_coupling_sample(P1, P2, m, args.seed)
        tv = bd.tv_discrete(P1, P2)
        mismatch = float(np.mean(np.any(a.points != b.points, axis=1)))
        se = math.sqrt(max(tv * (1 - tv), 1e-12) / m)
        res = {"exact": mismatch, "bound": tv, "pass": abs(mismatch - tv) <= 4 * se, "tv": tv, "pairs": m}
    else:
        _require(args, "n", "q")
        if args.which == "binom-log":
            res = bd.binom_log_oracle(args.n, args.q, args.p_exp).to_dict()
        elif args.which == "binom-ratio":
            res = bd.binom_ratio_oracle(args.n, args.q, args.p_exp).to_dict()
        elif args.which == "binom-moment":
            res = bd.binom_moment_check(args.n, args.q, args.m if args.m is not None else args.p_exp).to_dict()
        else:
            raise UsageError(f"unknown oracle {args.which!r}")
    _emit(args, {"which": args.which, **res})
    return EXIT_OK if res["pass"] else EXIT_CHECK


def _basis(name: str) -> wv.WaveletBasis:
    if name == "haar":
        return wv.haar_basis()
    if name.startswith("db"):
        return wv.daubechies_basis(int(name[2:]))
    raise UsageError(f"unknown basis {name!r}; use haar or dbN")


def cmd_wavelet_demo(args) -> int:
    _require(args, "n", "nu", "x0")
    basis = _basis(args.basis)
    beta = args.beta if args.beta is not None else (math.inf if args.mode == es.BASELINE else None)
    if beta is None:
        raise UsageError("--beta is required for modes worst and avg")
    spec = es.WaveletEstimatorSpec(args.n, args.x0, args.nu, beta, args.mode, basis, sigma_assumed=args.sigma)
    est = es.wavelet_estimator(spec)
    fixture = wv.besov_test_functions(args.nu, args.fixture + 1, center=args.x0, A=basis.A)[args.fixture]
    ds = sample(Regression(fixture.f, args.sigma, args.x0), args.n, args.seed)
    fhat = float(np.asarray(est.evaluate(ds)).reshape(-1)[0])
    L = spec.L
    path = _sibling(args, ".coeffs.csv", args.coeff_out)
    if L >= basis.l0:
        coeffs = wv.empirical_coeffs(basis, ds, L, spec.T if args.mode == es.WORST else math.inf, x0=args.x0)
        text = coeffs.to_csv()
    else:
        text = "kind,l,k,fhat,fhat_T,S\n"
    with open(path, "w") as fh:
        fh.write(text)
    _emit(args, {
        "fhat_x0": fhat,
        "truth": fixture.value(args.x0),
        "fixture": fixture.name,
        "L": L,
        "L_opt": spec.L_opt,
        "T": spec.T if args.mode == es.WORST else math.inf,
        "mode": args.mode,
        "certified": None if est.certified is None else {"p": st.format_order(est.certified[0]), "beta": float(est.certified[1])},
        "coeff_table_csv": path,
    })
    return EXIT_OK


def cmd_plot(args) -> int:
    if not args.curves:
        raise UsageError("give at least one sweep CSV")
    _require(args, "out")
    curves = [rk.read_curve_csv(p) for p in args.curves]
    svgplot.plot_curves(curves, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(sp, out_help="output path (default: stdout)"):
    sp.add_argument("--out", help=out_help)
    sp.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    sp.add_argument("--config", help="JSON file of option defaults; explicit flags win")


def _estimator_flags(sp):
    sp.add_argument("--estimator", choices=sorted(es.REGISTRY), help="shipped estimator id")
    sp.add_argument("--n", type=int, help="sample size seen by the estimator")
    sp.add_argument("--r", type=float, default=1.0, help="domain radius (default 1)")
    sp.add_argument("--beta", type=float, help="stability budget the estimator is built for")
    sp.add_argument("--d", type=int, help="dimension")
    sp.add_argument("--k", type=float, help="moment order (heavy-tail estimators)")
    sp.add_argument("--s", type=int, help="sparsity (sparse estimator)")
    sp.add_argument("--tau", type=float, help="threshold (classical thresholding)")
    sp.add_argument("--nu", type=float, help="smoothness (wavelet estimators)")
    sp.add_argument("--x0", type=float, help="evaluation point (wavelet estimators)")
    sp.add_argument("--sigma", type=float, help="assumed noise level (wavelet estimators)")
    sp.add_argument("--spec", help="extra estimator parameters as JSON literal or file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stable-est", description="Stability-constrained estimation toolkit.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log the resolved configuration to stderr")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND")

    sp = sub.add_parser("certify", help="search for the l_p stability supremum of an estimator",
                        description="Output JSON: order, found_sup, budget_claim, budget_satisfied, evaluations, strategy, witness_csv_path (and neighbor_csv_path for p=inf).")
    _estimator_flags(sp)
    sp.add_argument("--p", help="stability order: a number >= 1 or inf")
    sp.add_argument("--norm", choices=["auto", "l2", "linf"], default="auto", help="domain ball (default: linf for thresholding estimators, else l2)")
    sp.add_argument("--box", type=float, help="search box for unbounded coordinates")
    sp.add_argument("--claim", type=float, help="budget to check against (default: the estimator's certificate)")
    sp.add_argument("--budget-file", help="JSON search budget (random_restarts, ascent_iters, corner_enumeration_limit, per_coordinate_grid, max_evaluations)")
    sp.add_argument("--witness", help="witness CSV path (default: next to --out)")
    sp.add_argument("--assert", dest="assert_", action="store_true", help="exit 3 when the found value exceeds the claim")
    _common(sp)
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("eval", help="evaluate an estimator on a dataset CSV",
                        description="Output JSON: estimate, spec_echo, certified {p, beta}.")
    _estimator_flags(sp)
    sp.add_argument("--p", help="order used by shrinkage estimators")
    sp.add_argument("--data", help="dataset CSV (header x0,x1,... or x,y)")
    sp.add_argument("--radius", type=float, help="domain radius enforced when reading the data")
    _common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("sweep", help="witnessed sup-risk over a grid of stability budgets",
                        description="Output CSV columns: " + ",".join(rk.CSV_COLUMNS))
    sp.add_argument("--problem", choices=rk.PROBLEMS)
    sp.add_argument("--p", help="stability order: number or inf")
    sp.add_argument("--n", type=int)
    sp.add_argument("--r", type=float, default=1.0)
    sp.add_argument("--grid-lo", type=float, help="smallest budget (default r/(50n))")
    sp.add_argument("--grid-hi", type=float, help="largest budget (default 10r/n)")
    sp.add_argument("--points", type=int, default=30)
    sp.add_argument("--reps", type=int, default=2000)
    sp.add_argument("--method", choices=["auto", "exact", "mc"], default="auto")
    sp.add_argument("--threads", type=int, help="worker threads (default STABLE_EST_THREADS or cpu count)")
    sp.add_argument("--extra", help="problem parameters as JSON (k, s, d, nu, x0, sigma, ...)")
    _common(sp, "CSV output path (default: stdout)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("lower", help="evaluate lower-bound and risk formulas",
                        description="Output JSON: bound_lower/bound_upper for --problem, and the two-point formulas (worst, lp, cor1, sharper) for --dtheta.")
    sp.add_argument("--problem", choices=rk.PROBLEMS)
    sp.add_argument("--p", help="stability order")
    sp.add_argument("--n", type=int)
    sp.add_argument("--r", type=float, default=1.0)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--dtheta", type=float, help="parameter separation of a two-point pair")
    sp.add_argument("--e-dham", type=float, help="expected Hamming distance under the coupling (default n)")
    sp.add_argument("--linear", action="store_true", help="use the linear-family branch")
    sp.add_argument("--extra", help="problem parameters as JSON")
    _common(sp)
    sp.set_defaults(func=cmd_lower)

    sp = sub.add_parser("dp", help="differential privacy bridge",
                        description="Actions: mechanism (noisy estimate), convert (eps to beta), curves (conversion bounds), audit (empirical privacy check; exit 3 on failure).")
    sp.add_argument("--action", choices=["mechanism", "convert", "curves", "audit"])
    sp.add_argument("--eps", type=float)
    sp.add_argument("--n", type=int)
    sp.add_argument("--r", type=float, default=1.0)
    sp.add_argument("--beta", type=float, help="budget of the base estimator")
    sp.add_argument("--data", help="dataset CSV for --action mechanism")
    sp.add_argument("--problem", choices=["bounded", "heavy"])
    sp.add_argument("--k", type=float, help="moment order for heavy curves")
    sp.add_argument("--eps-lo", type=float, default=0.01)
    sp.add_argument("--eps-hi", type=float, default=2.0)
    sp.add_argument("--points", type=int, default=20)
    sp.add_argument("--bins", type=int, default=50)
    sp.add_argument("--reps", type=int, default=100_000)
    _common(sp)
    sp.set_defaults(func=cmd_dp)

    sp = sub.add_parser("oracle", help="brute-force checks of the binomial lemmas and coupling",
                        description="Output JSON: exact, bound, pass.  Exit 3 when pass is false.")
    sp.add_argument("--which", choices=["binom-log", "binom-ratio", "binom-moment", "coupling"])
    sp.add_argument("--n", type=int, help="binomial size (coupling: number of pairs)")
    sp.add_argument("--q", type=float)
    sp.add_argument("--p", dest="p_exp", type=float, default=1.0, help="power p")
    sp.add_argument("--m", type=float, help="moment order (binom-moment; default --p)")
    sp.add_argument("--p1", help="coupling: comma-separated probabilities")
    sp.add_argument("--p2", help="coupling: comma-separated probabilities")
    _common(sp)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("wavelet-demo", help="run a wavelet estimator on simulated regression data",
                        description="Output JSON: fhat_x0, truth, L, T, coeff_table_csv.")
    sp.add_argument("--basis", default="haar", help="haar or dbN")
    sp.add_argument("--n", type=int)
    sp.add_argument("--nu", type=float)
    sp.add_argument("--x0", type=float)
    sp.add_argument("--mode", choices=[es.WORST, es.AVERAGE, es.BASELINE], default=es.BASELINE)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--sigma", type=float, default=0.2)
    sp.add_argument("--fixture", type=int, default=0, help="index into the test-function list")
    sp.add_argument("--coeff-out", help="coefficient table CSV path (default: next to --out)")
    _common(sp)
    sp.set_defaults(func=cmd_wavelet_demo)

    sp = sub.add_parser("plot", help="render sweep CSVs as a log-log SVG")
    sp.add_argument("curves", nargs="*", help="sweep CSV files")
    _common(sp, "SVG output path")
    sp.set_defaults(func=cmd_plot)
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv: List[str]):
    args = ap.parse_args(argv)
    if getattr(args, "config", None):
        cfg = _load_json(args.config)
        sub = next(a for a in ap._subparsers._group_actions if isinstance(a, argparse._SubParsersAction))
        sub.choices[args.command].set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
        args = ap.parse_args(argv)
    return args


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(ap, argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"stable-est: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not getattr(args, "command", None):
        ap.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    log.info("config %s", json.dumps(_clean(_resolved(args)), sort_keys=True))
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"stable-est {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StableEstError as exc:
        print(f"stable-est {args.command}: [{exc.code}] {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"stable-est {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"stable-est {args.command}: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
