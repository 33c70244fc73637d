"""Command-line entry point: ``mdkappa <command> <action> [options]``.

Every run writes its outputs plus ``manifest.json`` into ``--out``.  Exit
codes: 0 success, 2 invalid input, 3 precision budget exhausted, 4 search or
enumeration budget refused, 5 an approximation step failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

from . import __version__
from .errors import BudgetError, DomainError, LemmaFailure, PrecisionError, PreconditionError, ValidationError
from .radical import RadScalar, as_fraction, set_default_precision
from .serialize import canonical_dumps, digest, map_from_json, rad_from_json, system_from_json, to_jsonable

EXIT_VALIDATION, EXIT_PRECISION, EXIT_BUDGET, EXIT_LEMMA = 2, 3, 4, 5
CONFIG_SCHEMA_VERSION = 1


# -- helpers --------------------------------------------------------------------


def parse_system(spec: str):
    """``classical:D`` | ``generalized:R:D`` | ``skew:D`` | ``random:D[:SEED]`` |
    ``rademacher:N`` | path to a system JSON file."""
    from .systems import SplitTree, classical_haar, generalized_haar, rademacher

    if os.path.exists(spec):
        return system_from_json(json.loads(Path(spec).read_text()))
    parts = spec.split(":")
    try:
        kind = parts[0]
        if kind == "classical":
            return classical_haar(1 << int(parts[1]))
        if kind == "generalized":
            return generalized_haar(SplitTree.ratio(int(parts[2]), as_fraction(parts[1])))
        if kind == "skew":
            return generalized_haar(SplitTree.dyadic_skew(int(parts[1])))
        if kind == "random":
            return generalized_haar(SplitTree.random(int(parts[1]), int(parts[2]) if len(parts) > 2 else 0))
        if kind == "rademacher":
            return rademacher(int(parts[1]))
    except (IndexError, ValueError) as e:
        raise ValidationError(f"bad system spec {spec!r}: {e}") from None
    raise ValidationError(f"unknown system spec {spec!r}")


def parse_rationals(text: str) -> list[Fraction]:
    try:
        return [as_fraction(t.strip()) for t in text.split(",") if t.strip()]
    except (ValueError, ZeroDivisionError) as e:
        raise ValidationError(f"bad rational list {text!r}") from e


def parse_set(text: str):
    from .sets import SimpleSet

    pairs = []
    for part in text.split(";"):
        lo, hi = part.split(",")
        pairs.append((as_fraction(lo.strip()), as_fraction(hi.strip())))
    return SimpleSet(pairs)


def parse_eps(text: str, K: int) -> list[Fraction]:
    if text.replace(" ", "") == "2^-k":
        return [Fraction(1, 1 << k) for k in range(1, K + 1)]
    if text.replace(" ", "") == "2^-k-1":
        return [Fraction(1, 1 << (k + 1)) for k in range(1, K + 1)]
    vals = parse_rationals(text)
    if len(vals) == 1:
        return vals * K
    if len(vals) < K:
        raise ValidationError("fewer eps values than steps")
    return vals[:K]


def load_coeffs(spec: str, system) -> dict:
    from .operators import random_polynomial

    if spec.startswith("random:"):
        parts = spec.split(":")
        terms = int(parts[1])
        seed = int(parts[2]) if len(parts) > 2 else 0
        return random_polynomial(len(system), terms, seed)
    data = json.loads(Path(spec).read_text())
    if isinstance(data, list):
        return {i + 1: rad_from_json(v) for i, v in enumerate(data)}
    return {int(k): rad_from_json(v) for k, v in data.items()}


def _scan_one(args):
    from .operators import good_lambda_scan

    coeffs, system, lam, eps_grid = args
    return good_lambda_scan(coeffs, system, [lam], eps_grid).rows


def pmap(fn, items, threads: int):
    """Ordered map; results never depend on the number of workers."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


class Outputs:
    def __init__(self, root: Path):
        self.root = root
        self.files: list = []
        root.mkdir(parents=True, exist_ok=True)

    def _add(self, name: str, data: str, provenance: str):
        (self.root / name).write_text(data)
        self.files.append({"file": name, "sha256": digest(data), "provenance": provenance})

    def json(self, name, obj, provenance="exact"):
        self._add(name, canonical_dumps(obj), provenance)

    def text(self, name, data, provenance="exact"):
        self._add(name, data, provenance)


# -- commands --------------------------------------------------------------------


def cmd_haar(a, out: Outputs):
    from .systems import verify_md

    spec = {"classical": f"classical:{a.depth}", "generalized": f"generalized:{a.ratio}:{a.depth}",
            "skew": f"skew:{a.depth}", "random": f"random:{a.depth}:{a.seed}",
            "rademacher": f"rademacher:{a.depth}"}[a.kind]
    system = parse_system(spec)
    out.json("system.json", system)
    if a.verify:
        rep = verify_md(system)
        out.json("md_report.json", {"ok": rep.ok, "report": repr(rep)})


def cmd_mp(a, out: Outputs):
    from .mp import check_measure_preserving, compose, dyadic_probes, eta_map, u_map

    if a.action == "u":
        m = u_map(parse_set(a.set), a.n)
    elif a.action == "eta":
        m = eta_map(a.n)
    elif a.action == "compose":
        maps = [map_from_json(json.loads(Path(p).read_text())) for p in a.map]
        if not maps:
            raise ValidationError("compose needs at least one --map")
        m = maps[-1]
        for outer in reversed(maps[:-1]):
            m = compose(outer, m)
    else:  # check
        m = map_from_json(json.loads(Path(a.map[0]).read_text()))
    out.json("map.json", m)
    rep = check_measure_preserving(m, dyadic_probes(a.resolution))
    out.json("check.json", {"ok": rep.ok, "checked": rep.checked,
                            "violations": [[v[0], v[1], v[2]] for v in rep.violations[:20]]})


def _structure(a, n):
    from .kappa import Structure

    if a.structure == "identity":
        return Structure.from_permutation(range(1, n + 1))
    if a.structure == "reverse":
        return Structure.from_permutation(range(n, 0, -1))
    return Structure.from_permutation([int(x) for x in a.structure.split(",")])


def _kappa_system(spec: str, n: int):
    from .kappa import rademacher_grid

    if spec.startswith("rademacher"):
        return rademacher_grid(n)
    return parse_system(spec)


def cmd_kappa(a, out: Outputs):
    from .kappa import alt_max_kappa, exact_kappa, nu_search, transfer_kappa_lower

    n = a.n
    spec = a.system or f"classical:{max(1, math.ceil(math.log2(max(n, 2))))}"
    if a.action == "transfer":
        target = parse_system(a.target)
        est = transfer_kappa_lower(target, n, as_fraction(a.eps), budget=a.budget, seed=a.seed)
    else:
        system = _kappa_system(spec, n)
        if a.action == "exact":
            est = exact_kappa(system, _structure(a, n))
        elif a.action == "alt":
            est = alt_max_kappa(system, _structure(a, n), restarts=a.restarts, seed=a.seed)
        else:
            est = nu_search(n, system, a.strategy, a.budget, a.seed, a.restarts)
    cert = est.to_json()
    cert["n"] = n
    cert["system"] = a.target if a.action == "transfer" else spec
    cert["coefficients_exact"] = [str(Fraction(c)) for c in est.coefficients]
    cert["reevaluation_sha256"] = digest(canonical_dumps([cert["structure"], cert["coefficients_exact"]]))
    out.json("certificate.json", cert, "certified-float")


def _rows_from_csv(text: str):
    from .operators import GoodLambdaRow

    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        ratio = Fraction(r["ratio"]) if r["ratio"] else None
        rows.append(GoodLambdaRow(r["lambda"], Fraction(r["eps"]), Fraction(r["lhs"]), Fraction(r["rhs"]), ratio))
    return rows


def cmd_goodlambda(a, out: Outputs):
    from .operators import GoodLambdaTable, cww_exponent_fit

    if a.action == "fit":
        tables = [_rows_from_csv(Path(p).read_text()) for p in a.table]
        fit = cww_exponent_fit(tables)
        out.json("fit.json", fit.__dict__, "certified-float")
        return
    system = parse_system(a.system)
    coeffs = load_coeffs(a.coeffs, system)
    lams = [RadScalar(x) for x in parse_rationals(a.lambda_grid)]
    if a.relative:
        norm = RadScalar.sqrt_of(sum((RadScalar(c) * RadScalar(c) for c in coeffs.values()), RadScalar(0)).as_fraction())
        lams = [l * norm for l in lams]
    eps = parse_rationals(a.eps_grid)
    parts = pmap(_scan_one, [(coeffs, system, l, eps) for l in lams], a.threads)
    table = GoodLambdaTable([r for rows in parts for r in rows])
    out.text("table.csv", table.to_csv())


def cmd_lemma1(a, out: Outputs):
    from .lemma1 import default_schedule, lemma1_run
    from .serialize import pcf_to_json

    F = parse_system(a.md)
    phi = parse_system(a.phi)
    eps = parse_eps(a.eps, a.steps)
    try:
        T, fam, rep = lemma1_run(F, phi, eps, a.steps, default_schedule(a.schedule_max))
    except LemmaFailure as e:
        out.json("failure.json", {"message": str(e), "trace": e.trace})
        raise
    out.json("transform.json", rep.tau)
    out.json("polynomials.json", {"windows": [list(w) for w in rep.windows],
                                  "coefficients": [{str(j): c for j, c in g.items()} for g in fam.groups]})
    out.json("report.json", rep.to_json())
    out.json("transformed.json", [pcf_to_json(f) for f in T.functions])


def cmd_sim(a, out: Outputs):
    from .convergence import WeylMultiplier, coeff_preset, corollary1_sim, lemma2_indices, lemma3_compose, weyl_tail_diag

    if a.action == "corollary1":
        system = parse_system(a.system)
        coeffs = coeff_preset(a.coeffs, len(system)) if not os.path.exists(a.coeffs) else \
            [as_fraction(x) for x in json.loads(Path(a.coeffs).read_text())]
        rep = corollary1_sim(coeffs, None, system, a.K)
        out.text("blocks.csv", rep.to_csv())
        out.json("summary.json", {"lhs": rep.lhs, "rhs_interval": [rep.rhs_lo, rep.rhs_hi],
                                  "chain_ok": rep.chain_ok, "blocks_ok": rep.blocks_ok, "note": rep.note})
    elif a.action == "weyl":
        d = weyl_tail_diag(WeylMultiplier.preset(a.omega), a.N)
        out.json("diag.json", d.__dict__, "certified-float")
    elif a.action == "lemma2":
        r = lemma2_indices(WeylMultiplier.preset(a.omega), a.K)
        out.json("indices.json", r.__dict__)
    else:
        r = lemma3_compose(WeylMultiplier.preset(a.u), WeylMultiplier.preset(a.delta), a.N)
        out.json("report.json", {"d3": r.d3.__dict__, "omega_table": r.omega_table,
                                 "ratio_increasing": r.ratio_increasing, "omega_diag": r.omega_diag.__dict__,
                                 "note": r.note}, "certified-float")


def cmd_report(a, out: Outputs):
    from .kappa import growth_fit

    rows, problems = [], []
    for p in a.manifests:
        try:
            man = json.loads(Path(p).read_text())
            base = Path(p).parent
            cmd = man["command"]
            entry = {"manifest": str(p), "command": " ".join(cmd[:2])}
            if cmd[:1] == ["kappa"]:
                cert = json.loads((base / "certificate.json").read_text())
                entry.update(n=cert["n"], value=cert["value"], kind=cert["kind"],
                             system=cert["system"].split(":")[0])
            elif cmd[:2] == ["goodlambda", "fit"]:
                fit = json.loads((base / "fit.json").read_text())
                entry.update(c_fit=fit["c_fit"])
            rows.append(entry)
        except (OSError, KeyError, ValueError) as e:
            problems.append({"manifest": str(p), "error": f"{type(e).__name__}: {e}"})
    verdicts = {}
    groups: dict = {}
    for r in rows:
        if "value" in r:
            groups.setdefault((r["system"], r["command"]), {})[r["n"]] = r["value"]
    for key, pts in groups.items():
        if len(pts) >= 3:
            verdicts[key] = growth_fit(sorted(pts.items())).best
    for r in rows:
        if "value" in r:
            r["growth_verdict"] = verdicts.get((r["system"], r["command"]), "")
    rows.sort(key=lambda r: (r.get("system", ""), r["command"], r.get("n", 0), r["manifest"]))
    cols = ["manifest", "command", "system", "n", "value", "kind", "c_fit", "growth_verdict"]
    buf = io.StringIO()
    w = csv.DictWriter(buf, cols, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    out.text("summary.csv", buf.getvalue())
    md = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    md += ["| " + " | ".join(str(r.get(c, "")) for c in cols) + " |" for r in rows]
    if problems:
        md += ["", "Unreadable manifests:"] + [f"- {q['manifest']}: {q['error']}" for q in problems]
    out.text("summary.md", "\n".join(md) + "\n")


COMMANDS = {"haar": cmd_haar, "mp": cmd_mp, "kappa": cmd_kappa, "goodlambda": cmd_goodlambda,
            "lemma1": cmd_lemma1, "sim": cmd_sim, "report": cmd_report}


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdkappa", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--precision-bits", type=int, default=256)
    p.add_argument("--out", default="out")
    p.add_argument("--version", action="version", version=__version__)
    # the same flags are accepted after the subcommand; SUPPRESS keeps the top-level defaults
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("--precision-bits", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)
    _add = sub.add_parser

    def add_parser(name, **kw):
        return _add(name, parents=[common], **kw)

    sub.add_parser = add_parser

    h = sub.add_parser("haar", help="generate a Haar-type system")
    h.add_argument("action", choices=["gen"])
    h.add_argument("--kind", choices=["classical", "generalized", "skew", "random", "rademacher"], default="classical")
    h.add_argument("--depth", type=int, required=True)
    h.add_argument("--ratio", default="1/3")
    h.add_argument("--verify", action="store_true")

    m = sub.add_parser("mp", help="measure-preserving maps")
    m.add_argument("action", choices=["u", "eta", "compose", "check"])
    m.add_argument("--set", default="0,1")
    m.add_argument("--n", type=int, default=2)
    m.add_argument("--map", action="append", default=[])
    m.add_argument("--resolution", type=int, default=10)

    k = sub.add_parser("kappa", help="kappa_n computations")
    k.add_argument("action", choices=["exact", "alt", "nu", "transfer"])
    k.add_argument("--n", type=int, required=True)
    k.add_argument("--system", default=None)
    k.add_argument("--structure", default="identity")
    k.add_argument("--strategy", choices=["exhaustive", "random", "anneal"], default="anneal")
    k.add_argument("--budget", type=int, default=2000)
    k.add_argument("--restarts", type=int, default=8)
    k.add_argument("--target", default="skew:9")
    k.add_argument("--eps", default="1/1024")

    g = sub.add_parser("goodlambda", help="good-lambda scans and fits")
    g.add_argument("action", choices=["scan", "fit"])
    g.add_argument("--coeffs", default="random:64:0")
    g.add_argument("--system", default="classical:8")
    g.add_argument("--lambda-grid", default="1/2,1,2")
    g.add_argument("--eps-grid", default="1/8,1/4,3/8,1/2,3/4,1")
    g.add_argument("--relative", action="store_true", help="scale lambdas by ||f||_2")
    g.add_argument("--table", action="append", default=[])

    l1 = sub.add_parser("lemma1", help="transformation and non-overlapping approximation")
    l1.add_argument("action", choices=["run"])
    l1.add_argument("--md", required=True)
    l1.add_argument("--phi", required=True)
    l1.add_argument("--eps", default="2^-k-1")
    l1.add_argument("--steps", type=int, required=True)
    l1.add_argument("--schedule-max", type=int, default=10)

    s = sub.add_parser("sim", help="convergence simulations")
    s.add_argument("action", choices=["corollary1", "weyl", "lemma2", "lemma3"])
    s.add_argument("--coeffs", default="default")
    s.add_argument("--system", default="classical:10")
    s.add_argument("--K", type=int, default=8)
    s.add_argument("--omega", default="log2p1_sq")
    s.add_argument("--N", type=int, default=1 << 16)
    s.add_argument("--u", default="log2p1")
    s.add_argument("--delta", default="log2p1_loglog")

    r = sub.add_parser("report", help="summarise run manifests")
    r.add_argument("manifests", nargs="*")

    c = sub.add_parser("run", help="run a JSON experiment config")
    c.add_argument("--config", required=True)
    return p


def config_to_argv(cfg: dict) -> list[str]:
    """``{"schema_version": 1, "command": "kappa nu", "options": {...}, "seed": ...}`` to argv."""
    if not isinstance(cfg, dict) or cfg.get("schema_version") != CONFIG_SCHEMA_VERSION:
        raise ValidationError(f"config must be an object with schema_version {CONFIG_SCHEMA_VERSION}")
    allowed = {"schema_version", "command", "options", "seed", "threads", "precision_bits", "out", "positional"}
    extra = set(cfg) - allowed
    if extra:
        raise ValidationError(f"unknown config keys {sorted(extra)}")
    cmd = cfg.get("command")
    if not isinstance(cmd, str) or not cmd.split() or cmd.split()[0] not in COMMANDS:
        raise ValidationError("config 'command' must name a subcommand")
    argv = []
    for key in ("seed", "threads", "precision_bits", "out"):
        if key in cfg:
            argv += ["--" + key.replace("_", "-"), str(cfg[key])]
    argv += cmd.split()
    opts = cfg.get("options", {})
    if not isinstance(opts, dict):
        raise ValidationError("'options' must be an object")
    for key, val in opts.items():
        flag = "--" + key.replace("_", "-")
        if val is True:
            argv.append(flag)
        elif isinstance(val, list):
            for v in val:
                argv += [flag, str(v)]
        elif val is not False and val is not None:
            argv += [flag, str(val)]
    argv += [str(x) for x in cfg.get("positional", [])]
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if a.command == "run":
        try:
            cfg = json.loads(Path(a.config).read_text())
            return main(config_to_argv(cfg))
        except (OSError, ValueError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_VALIDATION
    if a.threads < 1 or a.precision_bits < 64:
        print("error: --threads >= 1 and --precision-bits >= 64", file=sys.stderr)
        return EXIT_VALIDATION
    set_default_precision(a.precision_bits)
    out = Outputs(Path(a.out))
    # the configuration identity excludes where results go and how many workers ran
    cfg_argv = _strip(argv, {"--out", "--threads"})
    t0 = time.perf_counter()
    code = 0
    try:
        COMMANDS[a.command](a, out)
    except (ValidationError, DomainError, PreconditionError) as e:
        print(f"error: {e}", file=sys.stderr)
        code = EXIT_VALIDATION
    except PrecisionError as e:
        print(f"precision error: {e}", file=sys.stderr)
        code = EXIT_PRECISION
    except BudgetError as e:
        print(f"budget refused: {e}", file=sys.stderr)
        code = EXIT_BUDGET
    except LemmaFailure as e:
        print(f"approximation failed: {e}", file=sys.stderr)
        code = EXIT_LEMMA
    manifest = {
        "artifact_version": __version__,
        "command": [a.command] + ([a.action] if hasattr(a, "action") else []),
        "argv": cfg_argv,
        "config_hash": digest(canonical_dumps(cfg_argv)),
        "seed": a.seed,
        "threads": a.threads,
        "precision_bits": a.precision_bits,
        "exit_code": code,
        "results": out.files,
        "wall_time": round(time.perf_counter() - t0, 6),
    }
    (out.root / "manifest.json").write_text(json.dumps(to_jsonable(manifest), indent=1, sort_keys=True) + "\n")
    return code


def _strip(argv: list[str], flags: set) -> list[str]:
    out, skip = [], False
    for x in argv:
        if skip:
            skip = False
            continue
        if x in flags:
            skip = True
            continue
        if any(x.startswith(f + "=") for f in flags):
            continue
        out.append(x)
    return out


if __name__ == "__main__":
    sys.exit(main())
