"""Command-line harness: validated configs, seeded runs, CSV/JSON outputs, manifests.

Every command writes its result to ``--out`` (stdout if omitted) and, with
``--out``, a manifest ``<out>.manifest.json`` that can be passed back via
``--config`` to reproduce the output byte for byte.
"""
import argparse
import hashlib
import io
import json
import math
from pathlib import Path
import sys
import time

import numpy as np

from . import __version__
from .errors import BudgetExceeded, BudgetExhausted, PinningError

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_NUMERIC = 0, 2, 3, 4
MODULES = ("dist", "renewal", "quenched", "annealed", "relevance", "asymptotics", "cli",
           "_kernels", "_series", "rng", "errors")


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# schema

def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


def _ints(text):
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(x) for x in str(text).split(",") if x.strip()]


def _grid(text):
    """'lo:hi:pts' -> list of pts equally spaced values."""
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    lo, hi, pts = str(text).split(":")
    return [float(x) for x in np.linspace(float(lo), float(hi), int(pts))]


def _phi(text):
    from .dist import parse_phi
    parse_phi(text)
    return str(text)


class Opt:
    def __init__(self, kind, default, help="", check=None):
        self.kind, self.default, self.help, self.check = kind, default, help, check


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


LAW = {
    "alpha": Opt(float, 0.5, "tail index of tau", _nonneg),
    "phi": Opt(_phi, "const:1", "slowly varying part of tau (const:c or logpow:c,rho)"),
    "M": Opt(int, 2**16, "table cutoff of tau", lambda m: m >= 64),
}
LAW_TILDE = {
    "alpha_tilde": Opt(float, 0.5, "tail index of sigma", _pos),
    "phi_tilde": Opt(_phi, "const:1", "slowly varying part of sigma"),
    "M_tilde": Opt(int, 2**16, "table cutoff of sigma", lambda m: m >= 64),
}


def _with(*parts, **extra):
    out = {}
    for p in parts:
        out.update(p)
    out.update(extra)
    return out


COMMANDS = {
    "mass": _with(LAW, nmax=Opt(int, 1000, "rows written", _pos)),
    "disorder": _with(LAW_TILDE, N=Opt(int, 100, "number of disorder points", _pos)),
    "partition": _with(
        LAW, LAW_TILDE, N=Opt(int, 100, "number of disorder points", _pos),
        beta=Opt(float, 1.0, "inverse temperature", _nonneg),
        variant=Opt(str, "constrained", "constrained|free|balanced|elastic",
                    lambda v: v in ("constrained", "free", "balanced", "elastic")),
        budget=Opt(int, 10_000, "spatial budget of balanced/elastic", _pos),
        x_max=Opt(int, 0, "elastic horizon (0 = default)", _nonneg)),
    "fe": _with(
        LAW, LAW_TILDE, N=Opt(int, 200, "number of disorder points", _pos),
        beta=Opt(float, 1.0, "inverse temperature", _nonneg),
        beta_grid=Opt(_grid, None, "lo:hi:pts, overrides beta"),
        replicas=Opt(int, 20, "disorder replicas", lambda r: r >= 2)),
    "fvc": _with(
        LAW, LAW_TILDE, beta=Opt(float, 0.5, "inverse temperature", _nonneg),
        N_grid=Opt(_ints, [100, 200, 500, 1000, 2000, 5000], "increasing N values"),
        replicas=Opt(int, 200, "disorder replicas", lambda r: r >= 2)),
    "anneal": _with(
        LAW, LAW_TILDE, beta_grid=Opt(_grid, [0.0, 3.0, 31], "lo:hi:pts"),
        horizon=Opt(int, 1000, "table horizon of P(sigma_n in tau)", _pos),
        samples=Opt(int, 10_000, "Monte Carlo paths", _pos)),
    "betac": _with(LAW, LAW_TILDE),
    "certificate": _with(
        LAW, LAW_TILDE, zeta=Opt(float, 0.8, "fractional exponent", lambda z: 0 < z <= 1),
        jmax=Opt(int, 4000, "number of disorder points summed", _pos),
        samples=Opt(int, 10_000, "Monte Carlo paths", _pos),
        eps=Opt(float, 0.0, "use the example family with this eps (0 = power laws)",
                lambda e: 0 <= e < 0.5),
        Nf=Opt(int, 0, "family cutoff of tau (0 = 2 Nf~^(1/(1-alpha)))", _nonneg),
        Nf_tilde=Opt(int, 1600, "family cutoff of sigma", _pos),
        fill=Opt(float, 0.95, "tail fraction used when phi is chosen per family",
                 lambda f: 0 < f < 1)),
    "search-example": _with(
        alpha=Opt(float, 0.3, "tail index of tau", _pos),
        alpha_tilde=Opt(float, 0.5, "tail index of sigma", _pos),
        budget=Opt(int, 1000, "certificate evaluations", _pos),
        samples=Opt(int, 10_000, "Monte Carlo paths", _pos),
        eps=Opt(_floats, [0.02, 0.05, 0.1], "eps grid"),
        Nf_tilde=Opt(_ints, [400, 800, 1600, 3200], "Nf~ grid"),
        zeta=Opt(_floats, None, "zeta grid (default: window midpoint and quartiles)"),
        fill=Opt(float, 0.95, "tail fraction of each family law", lambda f: 0 < f < 1),
        jmax=Opt(int, 4000, "number of disorder points summed", _pos)),
    "verify-doney": _with(LAW),
    "verify-kstar": _with(
        LAW, LAW_TILDE, n_grid=Opt(_ints, None, "grid of n (default 9 points on [1e2, 1e4])"),
        samples=Opt(int, 100_000, "Monte Carlo paths", _pos),
        tolerance=Opt(float, 0.15, "slope tolerance", _pos)),
    "verify-lowertail": _with(
        LAW, n=Opt(int, 10_000, "number of gaps", _pos),
        eps=Opt(_floats, [0.1], "fractions of a_n"),
        samples=Opt(int, 100_000, "Monte Carlo paths", _pos),
        bound=Opt(float, 1e-3, "pass threshold on the upper confidence bound", _pos)),
    "verify-rate": _with(
        LAW, deltas=Opt(_grid, [0.05, 1.0, 20], "delta grid lo:hi:pts"),
        geometric=Opt(float, 0.0, "use geometric(p) gaps instead of the power law",
                      lambda p: 0 <= p < 1)),
    "phase-diagram": _with(
        alphas=Opt(_floats, [0.2, 0.3, 0.6], "alpha grid"),
        alpha_tildes=Opt(_floats, [0.3, 0.5, 0.6], "alpha~ grid"),
        search_budget=Opt(int, 0, "certificate evaluations per open cell (0 = skip)",
                          _nonneg),
        samples=Opt(int, 10_000, "Monte Carlo paths", _pos)),
}
GLOBAL = {"seed": Opt(int, 0, "master seed", _nonneg),
          "threads": Opt(int, 1, "worker threads", _pos)}


def _check(name, opt, value):
    if value is None:
        return None
    try:
        v = opt.kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value for '{name}': {value!r} ({exc})") from None
    if opt.check is not None:
        vals = v if isinstance(v, list) else [v]
        if not all(opt.check(x) for x in vals):
            raise ConfigError(f"invalid value for '{name}': {value!r}")
    return v


def resolve_config(command, file_config, flags):
    """Defaults, then config file, then explicit flags; unknown keys rejected."""
    schema = dict(COMMANDS[command])
    schema.update(GLOBAL)
    unknown = set(file_config) - set(schema)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cfg = {}
    for name, opt in schema.items():
        raw = flags.get(name)
        if raw is None:
            raw = file_config.get(name, opt.default)
        cfg[name] = _check(name, opt, raw)
    return cfg


def load_config(path, command):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "config" in data and "command" in data:
        if data["command"] != command:
            raise ConfigError(f"manifest is for '{data['command']}', not '{command}'")
        data = data["config"]
    return data


# ---------------------------------------------------------------------------
# helpers

def _law(cfg):
    from .dist import make_power_law, parse_phi
    return make_power_law(cfg["alpha"], parse_phi(cfg["phi"]), cfg["M"])


def _law_tilde(cfg):
    from .dist import make_power_law, parse_phi
    return make_power_law(cfg["alpha_tilde"], parse_phi(cfg["phi_tilde"]), cfg["M_tilde"])


def _u(law):
    from .renewal import mass_function
    return mass_function(law)


def _num(x):
    return repr(float(x))


def _csv(header, rows):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(_num(v) if isinstance(v, (float, np.floating)) else str(v)
                           for v in r) + "\n")
    return buf.getvalue()


def _json(obj):
    def fix(v):
        if isinstance(v, dict):
            return {k: fix(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [fix(x) for x in v]
        if isinstance(v, (np.floating, float)):
            v = float(v)
            return v if math.isfinite(v) else repr(v)
        if isinstance(v, np.integer):
            return int(v)
        if isinstance(v, np.bool_):
            return bool(v)
        return v
    return json.dumps(fix(obj), indent=2, sort_keys=True) + "\n"


def _cp(c):
    return {"value": c.value, "lower": c.lower, "upper": c.upper, "method": c.method}


# ---------------------------------------------------------------------------
# commands; each returns the output text

def cmd_mass(cfg):
    u = _u(_law(cfg))
    n = min(cfg["nmax"], u.M)
    return _csv(["n", "u"], [(i, float(u.table[i])) for i in range(n + 1)])


def cmd_disorder(cfg):
    from .quenched import sample_disorder
    d = sample_disorder(_law_tilde(cfg), cfg["N"], cfg["seed"])
    return _csv(["j", "sigma"], enumerate(d.points.tolist()))


def cmd_partition(cfg):
    from . import quenched as q
    law_t, law_s = _law(cfg), _law_tilde(cfg)
    d = q.sample_disorder(law_s, cfg["N"], cfg["seed"])
    v, beta = cfg["variant"], cfg["beta"]
    if v == "constrained":
        res = q.partition_constrained(d, _u(law_t), beta)
    elif v == "free":
        res = q.partition_free(d, _u(law_t), beta)
    elif v == "balanced":
        res = q.partition_balanced(d, law_t, beta, cfg["budget"])
    else:
        res = q.partition_elastic(d, law_t, beta, cfg["x_max"] or None, cfg["budget"])
    return _json({"logZ": res.logZ, "variant": res.variant, "beta": res.beta, "N": res.N,
                  "sigma_N": d.end, "meta": res.meta})


def cmd_fe(cfg):
    from .quenched import estimate_free_energy
    law_s = _law_tilde(cfg)
    u = _u(_law(cfg))
    grid = cfg["beta_grid"]
    rows = []
    for beta in (grid if grid is not None else [cfg["beta"]]):
        est = estimate_free_energy(law_s, u, beta, cfg["N"], cfg["replicas"], cfg["seed"],
                                   cfg["threads"])
        for i in range(cfg["replicas"]):
            row = (i, est.seeds[i], est.sigma_N[i], float(est.logZ[i]), float(est.values[i]))
            rows.append(((float(beta),) + row) if grid is not None else row)
    header = ["replica", "seed", "sigma_N", "logZ", "fe_per_site"]
    return _csv((["beta"] + header) if grid is not None else header, rows)


def cmd_fvc(cfg):
    from .quenched import finite_volume_scan
    scan = finite_volume_scan(_law_tilde(cfg), _u(_law(cfg)), cfg["beta"], cfg["N_grid"],
                              cfg["replicas"], cfg["seed"], cfg["threads"])
    cert = scan.certificate.N if scan.certificate else None
    rows = [(n, float(m), float(l), int(n == cert)) for n, m, l in
            zip(scan.grid, scan.means, scan.lcbs)]
    return _csv(["N", "mean_logZ", "lcb95", "certified"], rows)


def cmd_anneal(cfg):
    from .annealed import annealed_free_energy, annealed_residual, psi_sequence
    law_t, law_s = _law(cfg), _law_tilde(cfg)
    psit = psi_sequence(law_t, law_s, _u(law_t), cfg["horizon"], cfg["samples"], cfg["seed"])
    rows = []
    for b in cfg["beta_grid"]:
        F = annealed_free_energy(psit, b)
        res = annealed_residual(psit, b, F) if F > 0 else 0.0
        rows.append((float(b), float(F), float(res)))
    return _csv(["beta", "F_ann", "residual"], rows)


def cmd_betac(cfg):
    from .annealed import annealed_beta_c, homogeneous_beta_c
    from .relevance import theorem11_classifier
    law_t, law_s = _law(cfg), _law_tilde(cfg)
    ut, us = _u(law_t), _u(law_s)
    return _json({"beta_c_ann": _cp(annealed_beta_c(law_t, law_s, ut, us)),
                  "beta_c_hom": _cp(homogeneous_beta_c(ut, us)),
                  "regime": theorem11_classifier(cfg["alpha"], cfg["alpha_tilde"]).value})


def cmd_certificate(cfg):
    from .dist import make_example_family
    from .relevance import family_cutoff, fill_phi, fractional_moment_certificate
    from .renewal import mass_function
    a, at = cfg["alpha"], cfg["alpha_tilde"]
    if cfg["eps"] > 0:
        eps, Nt = cfg["eps"], cfg["Nf_tilde"] + cfg["Nf_tilde"] % 2
        N = cfg["Nf"] or math.ceil(2.0 * Nt ** (1.0 / (1.0 - a)))
        N += N % 2
        M = family_cutoff(N)
        law_t = make_example_family(N, eps, a, fill_phi(a, N, eps, cfg["fill"]), M)
        law_s = make_example_family(Nt, eps, at, fill_phi(at, Nt, eps, cfg["fill"]), M)
    else:
        law_t, law_s = _law(cfg), _law_tilde(cfg)
    ut = mass_function(law_t)
    us = mass_function(law_s, max(ut.M, law_s.M))
    rep = fractional_moment_certificate(law_t, law_s, ut, cfg["zeta"], cfg["jmax"],
                                        cfg["samples"], cfg["seed"], us, cfg["threads"])
    return _json(rep.to_dict())


def cmd_search_example(cfg):
    from .relevance import search_example
    grid = {"eps": cfg["eps"], "Nf_tilde": cfg["Nf_tilde"], "zeta": cfg["zeta"],
            "fill": cfg["fill"], "j_max": cfg["jmax"]}
    try:
        res = search_example(cfg["alpha"], cfg["alpha_tilde"], grid=grid,
                             budget=cfg["budget"], samples=cfg["samples"],
                             seed=cfg["seed"], threads=cfg["threads"])
    except BudgetExhausted as exc:
        best = exc.best.to_dict() if exc.best is not None else None
        raise _Partial(_json({"status": "BudgetExhausted", "best": best}), exc) from None
    if res is None:
        return _json({"status": "GridExhausted", "result": None})
    return _json({"status": "Certified", "result": res.to_dict()})


def cmd_verify_doney(cfg):
    from .asymptotics import verify_doney
    r = verify_doney(_law(cfg), cfg["M"])
    rows = [(int(n), float(u), float(a), float(q)) for n, u, a, q in
            zip(r.n, r.u, r.asymptote, r.ratio)]
    summary = {"slope": r.fit.slope, "max_ratio_deviation": r.max_deviation,
               "pass": r.max_deviation <= 0.15}
    return _csv(["n", "u", "asymptote", "ratio"], rows), summary


def cmd_verify_kstar(cfg):
    from .asymptotics import log_grid, verify_kstar
    grid = cfg["n_grid"] or log_grid(100, 10_000, 9).tolist()
    r = verify_kstar(_law(cfg), _law_tilde(cfg), grid, cfg["samples"], cfg["seed"])
    rows = [(int(n), float(v), float(s)) for n, v, s in zip(r.n, r.values, r.stderr)]
    ok = abs(r.fit.slope - r.expected) <= cfg["tolerance"]
    summary = {"slope": r.fit.slope, "expected": r.expected, "pass": bool(ok)}
    return _csv(["n", "prob", "stderr"], rows), summary


def cmd_verify_lowertail(cfg):
    from .asymptotics import lower_tail_probe
    law = _law(cfg)
    rows, ok = [], True
    for e in cfg["eps"]:
        p = lower_tail_probe(law, cfg["n"], e, cfg["samples"], cfg["seed"])
        rows.append((float(e), p.hits, float(p.frequency), float(p.upper)))
        if e < 0.5:
            ok = ok and p.upper <= cfg["bound"]
    return _csv(["eps", "hits", "frequency", "upper95"], rows), {"pass": bool(ok)}


def cmd_verify_rate(cfg):
    from .asymptotics import rate_function_details
    from .dist import from_table
    if cfg["geometric"] > 0:
        p = cfg["geometric"]
        k = np.arange(1, cfg["M"] + 1)
        law = from_table(p * (1 - p) ** (k - 1.0))
    else:
        law = _law(cfg)
    res = [rate_function_details(law, d) for d in cfg["deltas"]]
    rows = [(float(r.delta), float(r.I), float(r.lam)) for r in res]
    finite = [r.I for r in res if math.isfinite(r.I)]
    d2 = np.diff(finite, 2) if len(finite) > 2 else np.zeros(0)
    ok = bool(np.all(np.diff(finite) >= -1e-12) and np.all(d2 >= -1e-9))
    return _csv(["delta", "I", "lambda_star"], rows), {"convex_nondecreasing": ok, "pass": ok}


def cmd_phase_diagram(cfg, sink):
    from .annealed import annealed_beta_c
    from .dist import Constant, make_power_law
    from .errors import EmptyWindow
    from .relevance import Regime, search_example, theorem11_classifier
    sink.write("alpha,alpha_tilde,regime,beta_c_ann,beta_c_lower,beta_c_upper,search\n")
    for a in cfg["alphas"]:
        for at in cfg["alpha_tildes"]:
            regime = theorem11_classifier(a, at)
            lt, ls = make_power_law(a, Constant(1.0)), make_power_law(at, Constant(1.0))
            bc = annealed_beta_c(lt, ls, _u(lt), _u(ls))
            outcome = "n/a"
            if regime is Regime.OpenRegion:
                outcome = "skipped"
                if cfg["search_budget"] > 0:
                    try:
                        r = search_example(a, at, budget=cfg["search_budget"],
                                           samples=cfg["samples"], seed=cfg["seed"],
                                           threads=cfg["threads"])
                        outcome = "Certified" if r is not None else "GridExhausted"
                    except BudgetExhausted:
                        outcome = "BudgetExhausted"
                    except EmptyWindow:
                        outcome = "EmptyWindow"
            sink.write(f"{a!r},{at!r},{regime.value},{_num(bc.value)},{_num(bc.lower)},"
                       f"{_num(bc.upper)},{outcome}\n")
            sink.flush()


class _Partial(Exception):
    def __init__(self, text, cause):
        super().__init__(str(cause))
        self.text, self.cause = text, cause


HANDLERS = {
    "mass": cmd_mass, "disorder": cmd_disorder, "partition": cmd_partition, "fe": cmd_fe,
    "fvc": cmd_fvc, "anneal": cmd_anneal, "betac": cmd_betac, "certificate": cmd_certificate,
    "search-example": cmd_search_example, "verify-doney": cmd_verify_doney,
    "verify-kstar": cmd_verify_kstar, "verify-lowertail": cmd_verify_lowertail,
    "verify-rate": cmd_verify_rate,
}


# ---------------------------------------------------------------------------
# manifest and entry point

def module_hashes():
    here = Path(__file__).parent
    return {m: hashlib.sha256((here / f"{m}.py").read_bytes()).hexdigest() for m in MODULES}


def _dest(name):
    return name.replace("-", "_")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS lets the global flags appear before or after the subcommand
    sup = argparse.SUPPRESS
    common.add_argument("--seed", default=sup, help="master seed")
    common.add_argument("--threads", default=sup, help="worker threads")
    common.add_argument("--out", default=sup, help="output file (stdout if omitted)")
    common.add_argument("--config", default=sup, help="JSON config or manifest")
    p = argparse.ArgumentParser(prog="pinning", description=__doc__.splitlines()[0],
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, schema, target=None, **kw):
        sp = target.add_parser(name, parents=[common], **kw) if target else \
            sub.add_parser(name, parents=[common], **kw)
        for key, opt in schema.items():
            flag = "--" + key.replace("_", "-")
            sp.add_argument(flag, dest=key, default=None, help=opt.help)
        return sp

    for name, schema in COMMANDS.items():
        if name.startswith("verify-") or name == "phase-diagram":
            continue
        add(name, schema)
    add("phase-diagram", COMMANDS["phase-diagram"])
    vp = sub.add_parser("verify", parents=[common], help="asymptotic checks")
    vsub = vp.add_subparsers(dest="check", required=True)
    for check in ("doney", "kstar", "lowertail", "rate"):
        add(check, COMMANDS[f"verify-{check}"], vsub)
    return p


def _write(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def run(argv=None):
    args = build_parser().parse_args(argv)
    args.out = getattr(args, "out", None)
    args.config = getattr(args, "config", None)
    command = args.command if args.command != "verify" else f"verify-{args.check}"
    flags = {k: v for k, v in vars(args).items()
             if k not in ("command", "check", "out", "config") and v is not None}
    t0 = time.perf_counter()
    try:
        file_cfg = load_config(args.config, command) if args.config else {}
        cfg = resolve_config(command, file_cfg, flags)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status, summary = EXIT_OK, None
    try:
        if command == "phase-diagram":
            if args.out is None:
                cmd_phase_diagram(cfg, sys.stdout)
            else:
                with open(args.out, "w") as sink:
                    cmd_phase_diagram(cfg, sink)
        else:
            out = HANDLERS[command](cfg)
            if isinstance(out, tuple):
                out, summary = out
            _write(args.out, out)
    except _Partial as exc:
        _write(args.out, exc.text)
        print(f"budget exhausted: {exc.cause}", file=sys.stderr)
        status = EXIT_BUDGET
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        status = EXIT_BUDGET
    except (PinningError, FloatingPointError, ArithmeticError, ValueError) as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        status = EXIT_NUMERIC
    if args.out is not None:
        if summary is not None:
            Path(args.out + ".summary.json").write_text(_json(summary))
        manifest = {"command": command, "config": cfg, "version": __version__,
                    "modules": module_hashes(), "exit_code": status,
                    "wall_time_s": round(time.perf_counter() - t0, 3)}
        Path(args.out + ".manifest.json").write_text(_json(manifest))
    elif summary is not None:
        sys.stderr.write(_json(summary))
    return status


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
