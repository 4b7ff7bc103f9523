"""Command-line entry point.

Every command writes its manifest before any other output, and every table
is printed aligned and, with ``--out``, also saved as TSV whose first line
carries the manifest digest.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from . import __version__
from .contribution import read_log, validate_contribution
from .dag import CycleDetected, ProvenanceDag, RidCollision, isomorphic, observationally_equivalent
from .network import NetworkConfig, run
from .policy import by_name
from .scenario import BUILTIN, Scenario, ScenarioError, load

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class CliError(Exception):
    pass


# -- manifests --------------------------------------------------------------------------

def build_hash() -> str:
    """Digest of the package sources, so a manifest pins the code that ran."""
    h = hashlib.sha256()
    root = Path(__file__).parent
    for p in sorted(root.glob("*.py")):
        h.update(p.name.encode() + b"\0" + p.read_bytes())
    return h.hexdigest()[:16]


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def manifest_text(manifest: dict) -> str:
    return json.dumps(manifest, indent=2, sort_keys=True) + "\n"


def manifest_digest(manifest: dict) -> str:
    return hashlib.sha256(manifest_text(manifest).encode()).hexdigest()


def make_manifest(command: str, args: argparse.Namespace, **extra) -> dict:
    m = {"command": command, "build": build_hash(), "version": __version__, "seed": args.seed}
    for name in ("scenario", "config", "seeds", "mode", "policy", "trials", "tasks", "pairs"):
        value = getattr(args, name, None)
        if value is not None:
            m[name] = value
    m.update(extra)
    return m


def start(command: str, args: argparse.Namespace, **extra) -> dict:
    m = make_manifest(command, args, **extra)
    print(f"seed: {args.seed}")
    if args.out:
        atomic_write(Path(args.out) / "manifest.json", manifest_text(m))
    return m


# -- tables -----------------------------------------------------------------------------

def aligned(header: list[str], rows: list[list]) -> str:
    cells = [header] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def tsv(header: list[str], rows: list[list], manifest: dict) -> str:
    out = [f"# manifest-digest: {manifest_digest(manifest)}", "\t".join(header)]
    out += ["\t".join(str(c) for c in r) for r in rows]
    return "\n".join(out) + "\n"


def emit(name: str, header: list[str], rows: list[list], manifest: dict, args) -> None:
    print(aligned(header, rows), end="")
    if args.out:
        atomic_write(Path(args.out) / f"{name}.tsv", tsv(header, rows, manifest))


# -- scenario resolution ----------------------------------------------------------------

def resolve_scenario(spec: str | None) -> Scenario:
    if spec is None:
        raise CliError("--scenario is required")
    if spec in BUILTIN:
        return BUILTIN[spec]()
    if spec.startswith("random:"):
        from .scenario import random_scenario

        return random_scenario(int(spec.split(":", 1)[1]))
    if spec.startswith("canonical:"):
        from .violations import ViolationMode, canonical_scenario

        return canonical_scenario(ViolationMode.parse(spec.split(":", 1)[1]))
    return load(spec)


def resolve_config(scenario: Scenario, path: str | None, seed: int) -> tuple[NetworkConfig, dict]:
    overrides: dict = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise CliError(f"config not found: {p}")
        try:
            overrides = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise CliError(f"{p}: {e}") from None
    net = {k: v for k, v in overrides.items() if k != "policy"}
    raw = {**scenario.network.to_json(), **net, "seed": seed}
    try:
        return NetworkConfig.from_json(raw), overrides
    except (TypeError, ValueError) as e:
        raise CliError(f"bad network config: {e}") from None


# -- commands ---------------------------------------------------------------------------

def execute_manifest(m: dict):
    """Everything needed to reproduce a simulate run lives in its manifest."""
    from .violations import ViolationMode, execute

    scenario = Scenario.from_json(m["resolved_scenario"])
    mode = ViolationMode.parse(m.get("mode") or "lawful")
    records = []
    for seed in m["run_seeds"]:
        config = NetworkConfig.from_json({**m["network"], "seed": seed})
        records.append(execute(mode, replace(scenario, network=config), seed, by_name(m["policy"])))
    return records


def write_artifacts(out: Path, records) -> dict[str, str]:
    digests = {}
    for rec in records:
        base = out if len(records) == 1 else out / f"seed-{rec.seed}"
        for name, text in sorted(rec.artifact_texts().items()):
            atomic_write(base / name, text)
        digests[str(rec.seed)] = rec.digest()
    return digests


def cmd_simulate(args) -> int:
    scenario = resolve_scenario(args.scenario)
    config, overrides = resolve_config(scenario, args.config, args.seed)
    policy = args.policy or overrides.get("policy") or "fifo"
    by_name(policy)
    if args.mode:
        from .violations import ViolationMode

        ViolationMode.parse(args.mode)
    seeds = list(range(args.seed, args.seed + (args.seeds or 1)))
    network = {k: v for k, v in config.to_json().items() if k != "seed"}
    m = start("simulate", args, run_seeds=seeds, policy=policy, network=network,
              resolved_scenario=scenario.to_json())
    records = execute_manifest(m)
    for rec in records:
        print(f"{rec.scenario} seed={rec.seed} policy={rec.policy} rules={rec.rules} "
              f"contributions={len(rec.contributions)} digest={rec.digest()[:16]}"
              + (f" fault={rec.fault}" if rec.fault else "")
              + (f" unfired={','.join(rec.unfired)}" if rec.unfired else ""))
    if args.out:
        digests = write_artifacts(Path(args.out), records)
        atomic_write(Path(args.out) / "digests.json", json.dumps(digests, indent=2, sort_keys=True) + "\n")
        print(f"artifacts written to {args.out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    path = Path(args.manifest)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise CliError(f"manifest not found: {path}")
    m = json.loads(path.read_text(encoding="utf-8"))
    if m.get("command") != "simulate":
        raise CliError("only simulate manifests can be replayed")
    records = execute_manifest(m)
    recorded_path = path.parent / "digests.json"
    recorded = json.loads(recorded_path.read_text()) if recorded_path.exists() else {}
    if m.get("build") != build_hash():
        print(f"note: manifest build {m.get('build')} differs from this build {build_hash()}")
    bad = 0
    for rec in records:
        got = rec.digest()
        want = recorded.get(str(rec.seed))
        status = "OK" if want in (None, got) else "MISMATCH"
        bad += status != "OK"
        print(f"replay seed={rec.seed} {status} {got[:16]}" + (f" (recorded {want[:16]})" if status != "OK" else ""))
    if args.out:
        write_artifacts(Path(args.out), records)
    return EXIT_FAIL if bad else EXIT_OK


def short(rid: str) -> str:
    return rid[:12]


def audit(contributions) -> tuple[list[str], ProvenanceDag]:
    findings = []
    seen: dict = {}
    for c in contributions:
        for f in validate_contribution(c, seen):
            findings.append(f"{f.kind.value}: {short(f.rid)} {f.detail}".rstrip())
        seen.setdefault(c.rid, c)
    dag = ProvenanceDag()
    for c in contributions:
        try:
            dag.insert(c)
        except CycleDetected as e:
            cyc = [short(r) for r in e.cycle]
            shown = f"{cyc[0]} ↔ {cyc[1]}" if len(cyc) == 3 else " -> ".join(cyc)
            findings.append(f"CycleDetected: {shown}")
        except RidCollision:
            pass  # already reported by validate_contribution
    known = dag.known()
    for r, c in sorted(dag.buffered.items()):
        for p in sorted(c.parents):
            if p not in known:
                findings.append(f"MissingParent: {short(r)} names unknown {short(p)}")
    return findings, dag


def cmd_verify(args) -> int:
    logs = []
    for p in args.logs:
        if not Path(p).exists():
            raise CliError(f"log not found: {p}")
        logs.append(read_log(p))
    status = EXIT_OK
    dags = []
    for path, cs in zip(args.logs, logs):
        findings, dag = audit(cs)
        for f in findings:
            print(f"{path}: {f}")
        if findings:
            status = EXIT_FAIL
        elif len(logs) == 1:
            print(f"OK: sealed DAG, {len(dag)} vertices, acyclic")
        dags.append(dag)
    if len(dags) == 2 and status == EXIT_OK:
        iso = isomorphic(*dags)
        eq = observationally_equivalent(*dags)
        print("ISOMORPHIC" if iso else "NOT ISOMORPHIC")
        print("observationally equivalent" if eq else f"distinguished by {eq.query}")
        if not iso or not eq:
            status = EXIT_FAIL
    return status


def cmd_ambiguity(args) -> int:
    from .scenario import random_scenario
    from .violations import ViolationMode, ambiguity_rate, ambiguity_table, canonical_scenario

    m = start("ambiguity", args)
    if args.mode:
        mode = ViolationMode.parse(args.mode)
        scenario = resolve_scenario(args.scenario) if args.scenario else canonical_scenario(mode)
        rate = ambiguity_rate(mode, scenario, args.trials, args.seed)
        emit("ambiguity", ["Mode", "Scenario", "Trials", "Ambiguity Rate"],
             [[mode.value, scenario.name, args.trials, f"{rate:.0%}"]], m, args)
        return EXIT_OK
    extra = [random_scenario(args.seed)]
    rows = ambiguity_table(args.trials, args.seed, extra)
    emit("ambiguity", ["System Type", "Violated Axiom", "Ambiguity Rate", "Trial Pairs", "Note"],
         [[r.system, r.axiom, f"{r.rate:.0%}", r.trials, "extension" if r.extension else ""] for r in rows],
         m, args)
    ok = rows[0].rate == 0.0 and all(
        r.rate == 1.0 for r in rows if r.axiom.startswith(("Metadata", "Causal")))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_policy_matrix(args) -> int:
    from .experiments import default_policies, routing_study, routing_theorem_two, theorem_two_matrix
    from .scenario import random_scenario

    m = start("policy-matrix", args)
    scenario = resolve_scenario(args.scenario) if args.scenario else random_scenario(args.seed)
    scripted = theorem_two_matrix(default_policies(), scenario, args.seeds or 50, args.seed)
    study = routing_study(args.tasks or 500, topology_seed=args.seed)
    routed = routing_theorem_two(study, args.seed)
    d1, d2 = scripted.details, routed.details
    rows = [
        [" / ".join(d1["policies"]), scenario.name, d1["pairs"], d1["coincident"],
         f"{d1['isomorphic'] / max(1, d1['coincident']):.0%}", f"{d1['coincidence_rate']:.0%}"],
        ["static / qlearning / adaptive", f"routing {d2['tasks']} tasks", d2["tasks"], d2["coincident"],
         f"{d2['isomorphic'] / max(1, d2['coincident']):.0%}", f"{d2['coincidence_rate']:.0%}"],
    ]
    emit("policy-matrix", ["Policies", "Workload", "Pairs", "Coincident", "Isomorphic", "Coincidence"],
         rows, m, args)
    return EXIT_OK if scripted.passed and routed.passed else EXIT_FAIL


def cmd_performance(args) -> int:
    from .experiments import PERFORMANCE_TASKS, performance, routing_study

    m = start("performance", args)
    study = routing_study(args.tasks or PERFORMANCE_TASKS, topology_seed=args.seed)
    rows, tests, report = performance(study)
    emit("performance", ["Routing Policy", "Mean Hops", "Std. Dev.", "Success (%)", "Tasks"],
         [[r.policy, f"{r.mean_hops:.2f}", f"{r.std_hops:.2f}", f"{r.success:.0%}", r.tasks] for r in rows],
         m, args)
    print()
    emit("performance-tests", ["Pair", "Welch p", "Levene p", "Differs (95%)"],
         [[f"{t.a} vs {t.b}", f"{t.welch_p:.3g}", f"{t.levene_p:.3g}", "yes" if t.differs else "no"]
          for t in tests], m, args)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_separation(args) -> int:
    from .experiments import crdt_separation

    m = start("separation", args)
    report = crdt_separation(args.seed)
    c = report.claims
    rows = [["final values", "equal" if c[0].passed else "differ", c[0].measured],
            ["structures", "non-isomorphic" if c[1].passed else "isomorphic", ""],
            ["witness", "found" if c[2].passed else "none", c[2].measured]]
    emit("separation", ["Check", "Result", "Detail"], rows, m, args)
    if report.passed:
        print("values equal, structures non-isomorphic")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_prop1(args) -> int:
    from .experiments import proposition_one_check

    m = start("prop1-check", args)
    report = proposition_one_check(args.pairs, 8, args.seed)
    emit("prop1", ["Pairs", "Isomorphic Half", "Mutated Half", "Agreement"],
         [[args.pairs, report.details["isomorphic"], report.details["mutated"], report.claims[0].measured]],
         m, args)
    return EXIT_OK if report.passed else EXIT_FAIL


# -- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dcs", description="Provenance-graph simulator and experiment reports.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=False):
        sp.add_argument("--seed", type=int, default=0, help="base seed (default 0, always printed)")
        sp.add_argument("--out", help="directory for manifest, tables and artifacts")
        if scenario:
            sp.add_argument("--scenario", help="scenario file, a built-in name (fig6a, fig6b), "
                                               "random:SEED or canonical:MODE")
        return sp

    s = common(sub.add_parser("simulate", help="run a scenario and write its artifacts"), scenario=True)
    s.add_argument("--seeds", type=int, help="run this many consecutive seeds starting at --seed")
    s.add_argument("--config", help="JSON file of network overrides (and optional policy)")
    s.add_argument("--policy", help="fifo, lifo, batching:N or reordering:SEED")
    s.add_argument("--mode", help="violation mode to inject (default: lawful)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("verify", help="audit one contribution log, or compare two")
    s.add_argument("logs", nargs="+", metavar="LOG")
    s.set_defaults(func=cmd_verify)

    s = common(sub.add_parser("ambiguity", help="ambiguity-rate table"), scenario=True)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--mode", help="report a single violation mode instead of the full table")
    s.set_defaults(func=cmd_ambiguity)

    s = common(sub.add_parser("policy-matrix", help="graph isomorphism across policies"), scenario=True)
    s.add_argument("--seeds", type=int, help="runs of the scripted scenario (default 50)")
    s.add_argument("--tasks", type=int, help="routing tasks (default 500)")
    s.set_defaults(func=cmd_policy_matrix)

    s = common(sub.add_parser("performance", help="routing mean hops, spread and success"))
    s.add_argument("--tasks", type=int, help="routing tasks (default 1000)")
    s.set_defaults(func=cmd_performance)

    s = common(sub.add_parser("separation", help="equal values, different histories"))
    s.set_defaults(func=cmd_separation)

    s = common(sub.add_parser("prop1-check", help="observational equivalence vs isomorphism"))
    s.add_argument("--pairs", type=int, default=200)
    s.set_defaults(func=cmd_prop1)

    s = sub.add_parser("replay", help="re-run a simulate manifest and compare digests")
    s.add_argument("manifest", help="manifest.json or the directory holding it")
    s.add_argument("--out", help="write the replayed artifacts here")
    s.set_defaults(func=cmd_replay)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ScenarioError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
