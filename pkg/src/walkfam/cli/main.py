"""Batch front door: experiment configs in, reproducible artifacts out.

Three subcommands.  ``simulate`` dumps walk or queue trajectories as CSV.
``verify`` runs one numerical check and writes a JSON report whose
verdict is also the exit code.  ``report`` joins the JSON reports of a
run directory into one summary table.

Exit codes: 0 pass, 1 fail, 2 usage or config error, 3 inconclusive.
The output directory resolves as --out, then $WALKFAM_OUT, then the
config's output_dir, then the working directory.
"""

import argparse
import math
import os
import sys
from pathlib import Path

from ..errors import ConfigError, UnreachableLevelError, WalkfamError
from ..families import (FamilyParameter, ScaledFamily, as_fraction,
                        rational_gcd, split_signed)
from ..walker import simulate_paths, write_paths_csv
from ..queueing import simulate_queue, write_queue_csv
from ..ck_solver import verify_property1, verify_property2
from ..analysis import (check_weak_semiconservative, estimate_index,
                        estimate_conditional_outward, exact_nd,
                        limiting_ratios, moment_expansion_check,
                        tail_crossing)
from .config import (build_family, canonical_hash, family_members,
                     load_config, parse_fraction, resolve_seed)
from .reports import (provenance, read_json_report, write_csv_rows,
                      write_json_report)

__all__ = ["main", "build_parser"]

OUTPUT_DIR_ENV = "WALKFAM_OUT"

PASS, FAIL, USAGE, INCONCLUSIVE = 0, 1, 2, 3
_VERDICT_CODE = {"PASS": PASS, "FAIL": FAIL, "INCONCLUSIVE": INCONCLUSIVE}


def _out_dir(args, cfg):
    path = args.out or os.environ.get(OUTPUT_DIR_ENV) \
        or cfg.get("output_dir") or "."
    return Path(path)


def _member_param(cfg, section, family):
    """Member vector for a run: section override, else first declared,
    else the reference."""
    row = section.get("member")
    if row is None:
        declared = family_members(cfg)
        if declared:
            return FamilyParameter(declared[0])
        return FamilyParameter.ones(family.dimension)
    return FamilyParameter(tuple(parse_fraction(x) for x in row))


def cmd_simulate(args):
    cfg = load_config(args.config)
    if "simulate" not in cfg:
        raise ConfigError("config has no simulate section")
    sim = cfg["simulate"]
    seed = resolve_seed(cfg, args.seed)
    chash = canonical_hash(cfg)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)

    family = build_family(cfg)
    engine = sim["engine"]
    if isinstance(family, ScaledFamily):
        walk = family.member(_member_param(cfg, sim, family))
    else:
        if engine == "queue":
            raise ConfigError(f"{cfg['family']['kind']} family has no queue")
        walk = family

    meta = dict(provenance(chash, seed))
    meta.update(command="simulate", engine=engine,
                horizon=sim["horizon"], n_paths=sim["n_paths"])

    if engine == "walk":
        _, traj = simulate_paths(walk, sim["horizon"], sim["n_paths"], seed,
                                 reflected=sim.get("reflected", False),
                                 record_trajectory=True,
                                 threads=args.threads)
        target = out / "paths.csv"
        with open(target, "w", encoding="utf-8", newline="\n") as f:
            for k in sorted(meta):
                f.write(f"# {k}: {meta[k]}\n")
            write_paths_csv(f, traj, walk.dimension)
    else:
        _, traj, clocks = simulate_queue(walk, sim["horizon"],
                                         sim["n_paths"], seed,
                                         strict=sim.get("strict", False),
                                         record_trajectory=True,
                                         threads=args.threads)
        target = out / "workloads.csv"
        with open(target, "w", encoding="utf-8", newline="\n") as f:
            for k in sorted(meta):
                f.write(f"# {k}: {meta[k]}\n")
            write_queue_csv(f, traj, clocks, walk.dimension)

    meta["artifact"] = target.name
    write_json_report(out / "simulate.meta.json", meta)
    print(f"wrote {target}")
    return PASS


# verify checks --------------------------------------------------------------

def _check_property1(cfg, ver, family, seed, threads):
    member = _member_param(cfg, ver, family)
    res = verify_property1(family, member, ver.get("max_level", 20),
                           t_end=ver.get("t_end", 500.0))
    tol = ver.get("tolerance", 1e-6)
    converged = res.diagnostics.get("converged", True)
    if res.max_deviation < tol and res.pmf_identity_ok \
            and res.gcd_identity_ok:
        verdict = "PASS" if converged else "INCONCLUSIVE"
    else:
        verdict = "FAIL"
    return verdict, {"max_deviation": res.max_deviation,
                     "pmf_identity_ok": res.pmf_identity_ok,
                     "gcd_identity_ok": res.gcd_identity_ok,
                     "pairs": res.pairs, "diagnostics": res.diagnostics}


def _check_property2(cfg, ver, family, seed, threads):
    rows = ver.get("members") or cfg["family"].get("members")
    if rows and len(rows) >= 2:
        a1 = FamilyParameter(tuple(parse_fraction(x) for x in rows[0]))
        a2 = FamilyParameter(tuple(parse_fraction(x) for x in rows[1]))
    elif rows:
        a1 = FamilyParameter.ones(family.dimension)
        a2 = FamilyParameter(tuple(parse_fraction(x) for x in rows[0]))
    else:
        raise ConfigError("property2 needs at least one member vector")
    res = verify_property2(family, a1, a2, ver.get("max_level", 20),
                           t_end=ver.get("t_end", 500.0))
    tol = ver.get("tolerance", 1e-6)
    converged = res.diagnostics.get("converged", True)
    if res.max_deviation < tol and res.pmf_identity_ok:
        verdict = "PASS" if converged else "INCONCLUSIVE"
    else:
        verdict = "FAIL"
    return verdict, {"max_deviation": res.max_deviation,
                     "pmf_identity_ok": res.pmf_identity_ok,
                     "pairs": res.pairs, "diagnostics": res.diagnostics}


def _check_weak_semi(cfg, ver, family, seed, threads):
    members = ver.get("members") or cfg["family"].get("members")
    if not members:
        raise ConfigError("weak-semi needs member vectors")
    if "z_grid" not in ver:
        raise ConfigError("weak-semi needs a z_grid")
    rep = check_weak_semiconservative(
        family, members, ver["z_grid"], method=ver.get("method", "exact"),
        horizon=ver.get("horizon", 2000), n_paths=ver.get("n_paths", 100_000),
        seed=seed, ties=ver.get("ties", "strict"),
        t_end=ver.get("t_end", 500.0),
        sigma_mult=ver.get("sigma_mult", 3.0),
        extend=ver.get("extend", True), threads=threads)
    return rep.verdict, rep.as_dict()


def _check_tail_crossing(cfg, ver, family, seed, threads):
    if "pmf" not in ver:
        raise ConfigError("tail-crossing needs a positive pmf "
                          "in the verify section")
    pmf = {parse_fraction(v): parse_fraction(p) for v, p in ver["pmf"]}
    member = _member_param(cfg, ver, family)
    tc = tail_crossing(pmf, member)
    me = moment_expansion_check(pmf, member,
                                s_grid=ver.get("s_grid"),
                                mode=ver.get("mode", "auto"))
    tol = ver.get("tolerance", 1e-8)
    ok = (tc.ordered_beyond and tc.var_gap == tc.var_gap_predicted
          and me.gap_error <= tol and me.s_star > 0
          and (me.all_ok or me.mode == "characteristic"))
    return ("PASS" if ok else "FAIL"), {
        "tail": tc.as_dict(), "moments": me.as_dict()}


def _check_index(cfg, ver, family, seed, threads):
    if isinstance(family, ScaledFamily):
        walk = family.member(_member_param(cfg, ver, family))
    else:
        walk = family
    kw = {}
    if "levels" in ver:
        kw["levels"] = ver["levels"]
    est = estimate_index(walk, mode=ver.get("mode", "auto"),
                         horizon=ver.get("horizon", 2000),
                         n_paths=ver.get("n_paths", 20_000),
                         n_formula=ver.get("n_formula", 1_000_000),
                         seed=seed, threads=threads, **kw)
    result = est.as_dict()
    if "expect_psi" in ver:
        tol = ver.get("tolerance", 0.05)
        err = abs(est.psi - ver["expect_psi"])
        result["expected"] = ver["expect_psi"]
        result["abs_error"] = err
        verdict = "PASS" if err <= tol else "FAIL"
    else:
        verdict = "PASS"
    return verdict, result


def _check_nd_oracle(cfg, ver, family, seed, threads):
    members = ver.get("members") or cfg["family"].get("members")
    if not members or "z_grid" not in ver:
        raise ConfigError("nd-oracle needs member vectors and a z_grid")
    sigma_mult = ver.get("sigma_mult", 3.0)
    horizon = ver.get("horizon", 2000)
    n_paths = ver.get("n_paths", 1_000_000)
    debias = ver.get("debias", False)
    # one base-chain ratio solve covers every member and level
    g = rational_gcd(split_signed(family.base).positive_support())
    min_a = min(min(parse_fraction(x) for x in row) for row in members)
    k_bound = int(as_fraction(max(ver["z_grid"])) / g / min_a) + 2
    q = limiting_ratios(family.reference(), k_bound,
                        t_end=ver.get("t_end", 500.0))
    rows = []
    worst = 0.0
    ok = True
    for mi, row in enumerate(members):
        member = family.member(row)
        for z in ver["z_grid"]:
            try:
                want = exact_nd(member, z, q).ratio
            except UnreachableLevelError:
                want = None
            est = estimate_conditional_outward(
                member, z, horizon=horizon, n_paths=n_paths,
                seed=seed + mi, debias=debias, threads=threads)
            got = None if (not est.reachable or est.events == 0
                           or math.isnan(est.value)) else est.value
            if want is None or got is None:
                agree = want is None and got is None
                sig = None
            else:
                sig = abs(got - want) / est.stderr if est.stderr > 0 else 0.0
                agree = sig <= sigma_mult
                worst = max(worst, sig)
            ok = ok and agree
            rows.append({"member": list(map(float, row)), "z": float(z),
                         "exact": want, "estimate": got,
                         "stderr": est.stderr if got is not None else None,
                         "sigma": sig, "agree": agree})
    return ("PASS" if ok else "FAIL"), {
        "sigma_mult": sigma_mult, "worst_sigma": worst, "points": rows}


_CHECKS = {
    "property1": _check_property1,
    "property2": _check_property2,
    "weak-semi": _check_weak_semi,
    "tail-crossing": _check_tail_crossing,
    "index": _check_index,
    "nd-oracle": _check_nd_oracle,
}


def cmd_verify(args):
    cfg = load_config(args.config)
    if "verify" not in cfg:
        raise ConfigError("config has no verify section")
    ver = dict(cfg["verify"])
    if args.check:
        ver["check"] = args.check
    check = ver.get("check")
    if check not in _CHECKS:
        raise ConfigError(f"unknown check {check!r}")
    seed = resolve_seed(cfg, args.seed)
    chash = canonical_hash(cfg)
    out = _out_dir(args, cfg)

    family = build_family(cfg)
    verdict, result = _CHECKS[check](cfg, ver, family, seed, args.threads)

    payload = dict(provenance(chash, seed))
    payload.update(command="verify", check=check, verdict=verdict,
                   exit_code=_VERDICT_CODE[verdict], params=ver,
                   result=result)
    name = f"verify_{check.replace('-', '_')}"
    write_json_report(out / f"{name}.json", payload)
    if args.format == "csv":
        _verify_csv(out / f"{name}.csv", check, result,
                    provenance(chash, seed))
    print(f"{check}: {verdict}")
    return _VERDICT_CODE[verdict]


def _verify_csv(path, check, result, meta):
    """Flat per-point table for the checks that have one."""
    if check == "weak-semi":
        rows = []
        for comp in result.get("members", []):
            for pt in comp.get("margins", []):
                rows.append([",".join(comp["a"]), pt["z"], pt["member_value"],
                             pt["reference_value"], pt["margin"],
                             pt["sigma"], pt["sign"]])
        write_csv_rows(path, ["a", "z", "member", "reference", "margin",
                              "sigma", "sign"], rows, meta)
    elif check == "nd-oracle":
        rows = [[",".join(map(str, p["member"])), p["z"], p["exact"],
                 p["estimate"], p["stderr"], p["sigma"], p["agree"]]
                for p in result["points"]]
        write_csv_rows(path, ["a", "z", "exact", "estimate", "stderr",
                              "sigma", "agree"], rows, meta)
    elif check == "index":
        rows = [list(r) for r in result.get("per_level", [])]
        write_csv_rows(path, ["n", "up", "down", "psi_n", "stderr"],
                       rows, meta)


def cmd_report(args):
    run_dir = Path(args.run_dir) if args.run_dir else \
        Path(os.environ.get(OUTPUT_DIR_ENV, "."))
    if not run_dir.is_dir():
        print(f"run directory {run_dir} does not exist", file=sys.stderr)
        return USAGE
    out = Path(args.out) if args.out else run_dir

    rows = []
    errors = []
    hashes = {}
    files = sorted(p for p in run_dir.glob("*.json")
                   if not p.name.startswith("summary"))
    for path in files:
        try:
            doc = read_json_report(path)
            if not isinstance(doc, dict) or "config_hash" not in doc:
                raise ValueError("not a report document")
        except (OSError, ValueError) as e:
            errors.append((path.name, str(e)))
            continue
        h = doc.get("config_hash")
        hashes[h] = hashes.get(h, 0) + 1
        rows.append([path.name, doc.get("command", "?"),
                     doc.get("check", "-"), doc.get("verdict", "-"),
                     h, doc.get("seed"), doc.get("version")])

    majority = max(hashes, key=hashes.get) if hashes else None
    for row in rows:
        row.append(row[4] != majority)

    header = ["file", "command", "check", "verdict", "config_hash",
              "seed", "version", "hash_differs"]
    if args.format == "json":
        payload = {"run_dir": str(run_dir),
                   "reports": [dict(zip(header, r)) for r in rows],
                   "errors": [{"file": f, "error": e} for f, e in errors]}
        target = write_json_report(out / "summary.json", payload)
    else:
        target = write_csv_rows(out / "summary.csv", header, rows)
        if errors:
            with open(target, "a", encoding="utf-8", newline="\n") as f:
                for fname, err in errors:
                    f.write(f"# unreadable {fname}: {err}\n")
    print(f"wrote {target} ({len(rows)} reports"
          + (f", {len(errors)} unreadable" if errors else "") + ")")
    for fname, err in errors:
        print(f"unreadable report {fname}: {err}", file=sys.stderr)
    return FAIL if errors else PASS


def build_parser():
    parser = argparse.ArgumentParser(
        prog="walkfam",
        description="Simulate scaled walk families and verify their "
                    "numerical properties from experiment configs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True,
                           help="YAML experiment config")
        p.add_argument("--out", help="output directory "
                       f"(overrides ${OUTPUT_DIR_ENV} and the config)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--threads", type=int,
                       default=os.cpu_count() or 1,
                       help="worker threads (default: all cores)")
        p.add_argument("--format", choices=("csv", "json"), default="json",
                       help="table format for secondary outputs")

    p_sim = sub.add_parser("simulate", help="dump walk or queue trajectories")
    common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_ver = sub.add_parser("verify", help="run one numerical check")
    common(p_ver)
    p_ver.add_argument("--check", choices=sorted(_CHECKS),
                       help="override the check named in the config")
    p_ver.set_defaults(func=cmd_verify)

    p_rep = sub.add_parser("report", help="summarise a run directory")
    p_rep.add_argument("run_dir", nargs="?",
                       help=f"directory of reports (default ${OUTPUT_DIR_ENV}"
                            " or '.')")
    common(p_rep, needs_config=False)
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return USAGE
    except WalkfamError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
