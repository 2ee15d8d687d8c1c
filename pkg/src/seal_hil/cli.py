"""Command-line entry point: data generation, labeling, training, evaluation and table bundles.

Exit codes: 0 success, 2 usage error, 3 bad input, 4 labeling backend failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .baselines import MethodKind, load_agent, save_agent
from .env import EnvKind, order_name, parse_order
from .evaluate import EvalReport, evaluate, mean_std, trace_accuracy, trace_episode, write_jsonl
from .expert import DemoDataset, generate_demos
from .labeler import (
    DEFAULT_CREDENTIAL_ENV,
    LabelerError,
    OracleBackend,
    decompose_task,
    label_dataset,
    make_backend,
    task_instruction,
)
from .trainer import ConfigError, TrainConfig, train

log = logging.getLogger("seal_hil")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_BACKEND = 0, 2, 3, 4

METHODS = [m.value for m in MethodKind]
METHOD_TITLES = {"bc": "BC", "lisa": "LISA", "sdil": "SDIL", "tc": "TC", "seal_l": "SEAL-L", "seal": "SEAL"}

# Settings the bundles train with. The optimiser defaults in TrainConfig leave
# every method far from convergence within a desk budget, so bundles use a
# larger step size; flags still override both.
DESK = {"keydoor": {"lr": 5e-4, "epochs": 200}, "grid": {"lr": 5e-4, "epochs": 100}}
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
EVAL_SEED_OFFSET = 100_000  # keeps evaluation layouts disjoint from the demonstration stream


class InputError(Exception):
    pass


class UsageError(Exception):
    pass


def desk_settings(kind: EnvKind) -> dict:
    return dict(DESK["keydoor" if kind.is_keydoor else "grid"])


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    hashes: Dict[str, str] = field(default_factory=dict)
    version: str = __version__

    def add_input(self, role: str, path) -> None:
        self.inputs[role] = str(path)
        self.hashes[role] = sha256_file(path)

    def add_output(self, role: str, path) -> None:
        self.outputs[role] = str(path)
        self.hashes[role] = sha256_file(path)

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        body = {k: getattr(self, k) for k in ("command", "config", "seed", "inputs", "outputs", "hashes", "version")}
        path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def load_config_file(path: Optional[str]) -> dict:
    """Key-value defaults from a YAML or JSON document."""
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise InputError(f"config file {path} not found")
    data = yaml.safe_load(p.read_text()) or {}
    if not isinstance(data, dict):
        raise InputError(f"config file {path} must hold a mapping")
    return {k.replace("-", "_"): v for k, v in data.items()}


def layered(file_values: dict, flags: argparse.Namespace, keys: Sequence[str]) -> dict:
    """File values first, explicit flags on top."""
    out = {k: file_values[k] for k in keys if k in file_values}
    for k in keys:
        v = getattr(flags, k, None)
        if v is not None:
            out[k] = v
    return out


def oracle_labeled(dataset: DemoDataset) -> DemoDataset:
    backend = OracleBackend()
    space = decompose_task(task_instruction(dataset.kind, dataset.order), backend)
    return label_dataset(dataset, space, backend)


# ---------------------------------------------------------------------------
# one training + evaluation cell, shared by reproduce and sweep


def run_cell(job: dict) -> dict:
    """Generate, label, train and evaluate one (method, env, budget, seed) cell.

    ``job`` keys: config (TrainConfig fields), eval_orders, episodes, out_dir.
    Importable at module level so process pools can pickle it.
    """
    cfg = TrainConfig(**job["config"])
    kind = cfg.kind
    seed = cfg.seed
    base = oracle_labeled(generate_demos(kind, cfg.n_demos, seed, cfg.order or None))
    datasets = [base]
    for j, variant in enumerate(cfg.variant_orders):
        demos = generate_demos(kind, cfg.variant_demos, [seed, 1 + j], variant)
        datasets.append(oracle_labeled(demos))
    agent, trace = train(cfg, datasets)
    fragments = {}
    for order in job.get("eval_orders") or [cfg.order or None]:
        frag = evaluate(agent, kind, job.get("episodes", 100), EVAL_SEED_OFFSET + seed, order)
        fragments[order_name(parse_order(kind, order))] = frag
    out_dir = job.get("out_dir")
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        base.to_jsonl(out / "dataset.jsonl")
        trace.to_csv(out / "trace.csv")
        header = {"env": kind.name, "method": cfg.method, "k": cfg.k or kind.n_subgoals, "beta": cfg.beta,
                  "seed": seed, "config": cfg.to_dict()}
        save_agent(out / "model.ckpt", agent, header)
        for name, frag in fragments.items():
            (out / f"eval_{name}.json").write_text(json.dumps(frag, indent=2, sort_keys=True) + "\n")
        m = RunManifest("reproduce-cell", cfg.to_dict(), seed)
        m.add_output("dataset", out / "dataset.jsonl")
        m.add_output("trace", out / "trace.csv")
        m.add_output("checkpoint", out / "model.ckpt")
        m.save(out / "manifest.json")
    return {"method": cfg.method, "n_demos": cfg.n_demos, "k": cfg.k, "seed": seed, "fragments": fragments}


def run_jobs(jobs: List[dict], workers: int) -> List[dict]:
    if workers <= 1 or len(jobs) <= 1:
        return [run_cell(j) for j in jobs]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(run_cell, jobs))


# ---------------------------------------------------------------------------
# bundles


@dataclass
class Bundle:
    env: str
    methods: Sequence[str]
    budgets: Sequence[int]
    orders: Sequence[Optional[str]] = (None,)  # evaluation orders; variants train with few-shot extras
    subgoal_table: bool = False
    k_values: Sequence[int] = ()


BUNDLES = {
    "table1-keydoor": Bundle("keydoor", METHODS, (30, 100, 150, 200)),
    "table1-grid": Bundle("grid3", METHODS, (200, 300, 400)),
    "table2": Bundle("keydoor", METHODS, (30, 100, 150, 200), subgoal_table=True),
    "table3-long": Bundle("grid4", METHODS, (400, 500)),
    "table4-variations": Bundle("grid3", METHODS, (400,), orders=("ABC", "ACB", "BAC", "BCA")),
    "fig3-ksweep": Bundle("grid3", ("lisa", "sdil"), (200, 300, 400), k_values=(2, 4, 6, 8, 10, 12)),
}
EXTRA_LONG = Bundle("grid5", METHODS, (500, 600))


def bundle_jobs(name: str, bundle: Bundle, args, overrides: dict) -> List[dict]:
    kind = EnvKind.parse(bundle.env)
    settings = dict(desk_settings(kind), **overrides)
    methods = args.methods or bundle.methods
    budgets = args.demos or bundle.budgets
    seeds = args.seeds
    out_root = Path(args.out_dir) / name
    jobs = []
    for method in methods:
        for n in budgets:
            for k in bundle.k_values or (None,):
                for order in bundle.orders:
                    variants = () if order in (None, "ABC") else (order,)
                    tag = f"{method}_n{n}" + (f"_k{k}" if k else "") + (f"_{order}" if order else "")
                    for seed in seeds:
                        cfg = dict(settings, method=method, env=bundle.env, n_demos=n, seed=seed, k=k,
                                   variant_orders=variants)
                        jobs.append({
                            "config": cfg,
                            "eval_orders": [order] if order else None,
                            "episodes": args.episodes,
                            "out_dir": str(out_root / tag / str(seed)),
                        })
    return jobs


def summarize(results: List[dict], bundle: Bundle, args, env: str) -> List[dict]:
    """One row per (budget, K, order) with a mean ± std cell per method."""
    rows: Dict[tuple, dict] = {}
    for r in results:
        for order, frag in r["fragments"].items():
            key = (r["n_demos"], r["k"], order)
            row = rows.setdefault(key, {"n_demos": r["n_demos"], "k": r["k"], "order": order, "reports": {}})
            rep = row["reports"].get(r["method"])
            if rep is None:
                rep = row["reports"][r["method"]] = EvalReport(r["method"], env, r["n_demos"], order)
            rep.add(dict(frag, seed=r["seed"]))  # report the training seed, not the evaluation stream
    for row in rows.values():
        for rep in row["reports"].values():
            rep.check()
    return [rows[k] for k in sorted(rows, key=lambda k: (k[0], k[1] or 0, k[2]))]


def fmt(values: Sequence[float]) -> str:
    m, s = mean_std(values)
    return f"{m:.2f}±{s:.2f}"


def render_table(rows: List[dict], methods: Sequence[str], subgoals: bool = False) -> str:
    head = ["# Traj", "K", "Order"]
    lines = []
    body = []
    for row in rows:
        reps = row["reports"]
        labels = [str(row["n_demos"]), str(row["k"] or "-"), row["order"]]
        if subgoals:
            names = sorted({n for r in reps.values() for n in r.subgoals})
            for name in names:
                body.append([name] + labels + [fmt(reps[m].subgoals[name]) if m in reps else "" for m in methods])
        else:
            body.append(labels + [fmt(reps[m].success) if m in reps else "" for m in methods])
    if subgoals:
        head = ["Sub-goal"] + head
    head += [METHOD_TITLES[m] for m in methods]
    lines.append("| " + " | ".join(head) + " |")
    lines.append("|" + "---|" * len(head))
    lines += ["| " + " | ".join(r) + " |" for r in body]
    return "\n".join(lines) + "\n"


def write_summary_csv(rows: List[dict], path: Path) -> None:
    with path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "n_demos", "k", "order", "seeds", "per_seed", "mean", "std", "subgoals"])
        for row in rows:
            for method, rep in sorted(row["reports"].items()):
                m, s = mean_std(rep.success)
                sub = {n: round(mean_std(v)[0], 6) for n, v in sorted(rep.subgoals.items())}
                w.writerow([method, row["n_demos"], row["k"] or "", row["order"], " ".join(map(str, rep.seeds)),
                            " ".join(f"{x:.4f}" for x in rep.success), f"{m:.6f}", f"{s:.6f}",
                            json.dumps(sub, sort_keys=True)])


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    kind = EnvKind.parse(args.env)
    ds = generate_demos(kind, args.n, args.seed, args.order)
    out = Path(args.out or f"data/{kind.name}_{order_name(ds.order)}_n{args.n}_s{args.seed}.jsonl")
    ds.to_jsonl(out)
    m = RunManifest("gen-data", {"env": kind.name, "n": args.n, "order": order_name(ds.order)}, args.seed)
    m.add_output("dataset", out)
    m.save(out.with_suffix(".manifest.json"))
    print(out)
    return EXIT_OK


def cmd_label(args) -> int:
    src = Path(args.data)
    if not src.exists():
        raise InputError(f"dataset {src} not found")
    ds = DemoDataset.from_jsonl(src)
    # backend construction checks the credential before anything is written
    backend = make_backend(args.backend, fixture=args.fixture, endpoint=args.endpoint, model=args.model,
                           credential_env=args.credential_env, workers=args.workers)
    space = decompose_task(task_instruction(ds.kind, ds.order), backend)
    cache = Path(args.cache) if args.cache else src.with_suffix(".labels.jsonl")
    labeled = label_dataset(ds, space, backend, cache, workers=args.workers)
    out = Path(args.out or src.with_name(src.stem + ".labeled.jsonl"))
    labeled.to_jsonl(out)
    m = RunManifest("label", {"backend": args.backend, "space": list(space.subgoals), "space_hash": space.hash},
                    0)
    m.add_input("dataset", src)
    m.add_output("cache", cache)
    m.add_output("labeled", out)
    m.save(out.with_suffix(".manifest.json"))
    print(f"{out} ({getattr(backend, 'calls', 0)} backend queries)")
    return EXIT_OK


TRAIN_KEYS = ["method", "env", "n_demos", "seed", "epochs", "batch_size", "lr", "beta", "k", "tau",
              "val_every", "val_episodes", "order", "variant_demos", "early_stop", "checkpoint_every"]


def cmd_train(args) -> int:
    values = layered(load_config_file(args.config), args, TRAIN_KEYS)
    if args.hidden:
        values["hidden"] = tuple(args.hidden)
    datasets = []
    inputs = []
    if args.data:
        for p in [args.data] + list(args.variant_data or []):
            if not Path(p).exists():
                raise InputError(f"dataset {p} not found")
            datasets.append(DemoDataset.from_jsonl(p))
            inputs.append(p)
        kind = datasets[0].kind
        if "env" in values and EnvKind.parse(values["env"]) != kind:
            raise InputError(f"--env {values['env']} does not match dataset kind {kind.name}")
        values["env"] = kind.name
        values["n_demos"] = len(datasets[0])
        values["order"] = order_name(datasets[0].order)
        values["variant_orders"] = tuple(order_name(d.order) for d in datasets[1:])
    values.setdefault("env", "keydoor")
    try:
        cfg = TrainConfig(**values)
    except (ValueError, TypeError) as e:
        raise InputError(str(e)) from e
    kind = cfg.kind
    if not datasets:
        datasets = [oracle_labeled(generate_demos(kind, cfg.n_demos, cfg.seed, cfg.order or None))]
    out = Path(args.out_dir or Path("runs") / (args.name or f"{cfg.method}_{kind.name}_n{cfg.n_demos}") / str(cfg.seed))
    out.mkdir(parents=True, exist_ok=True)
    agent, trace = train(cfg, datasets, checkpoint_dir=out, header=_header(cfg))
    trace.to_csv(out / "trace.csv")
    save_agent(out / "model.ckpt", agent, _header(cfg))
    m = RunManifest("train", cfg.to_dict(), cfg.seed)
    for i, p in enumerate(inputs):
        m.add_input("dataset" if i == 0 else f"variant{i}", p)
    if not inputs:
        datasets[0].to_jsonl(out / "dataset.jsonl")
        m.add_output("dataset", out / "dataset.jsonl")
    m.add_output("trace", out / "trace.csv")
    m.add_output("checkpoint", out / "model.ckpt")
    m.save(out / "manifest.json")
    print(out / "model.ckpt")
    return EXIT_OK


def _header(cfg: TrainConfig) -> dict:
    return {"env": cfg.kind.name, "method": cfg.method, "k": cfg.k or cfg.kind.n_subgoals, "beta": cfg.beta,
            "seed": cfg.seed, "config": cfg.to_dict()}


def cmd_eval(args) -> int:
    if not Path(args.checkpoint).exists():
        raise InputError(f"checkpoint {args.checkpoint} not found")
    agent, header = load_agent(args.checkpoint)
    kind = EnvKind.parse(args.env or header["env"])
    if kind.name != header["env"]:
        raise InputError(f"checkpoint was trained on {header['env']}, not {kind.name}")
    frag = evaluate(agent, kind, args.episodes, args.seed, args.order, args.branch)
    frag["method"], frag["env"] = header["method"], kind.name
    text = json.dumps(frag, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    if args.trace:
        rows = trace_episode(agent, kind, args.seed, args.order, args.branch)
        write_jsonl(rows, args.trace)
        column = "thought" if rows and "z_index" not in rows[0] else "z_index"
        print(f"trace: {len(rows)} steps, sub-goal accuracy {trace_accuracy(rows, column):.3f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    overrides = layered(load_config_file(args.config), args, ["epochs", "lr", "batch_size"])
    bundle = Bundle("grid3", args.methods or ("lisa", "sdil"), args.demos or (400,), k_values=args.k)
    for k in args.k:
        if not 2 <= k <= 12:
            raise UsageError(f"K={k} outside [2, 12]")
    args.methods, args.demos = None, None
    return _run_bundle(args.name, bundle, args, overrides)


def cmd_reproduce(args) -> int:
    if args.bundle not in BUNDLES:
        raise UsageError(f"unknown bundle {args.bundle!r}; choose from {', '.join(BUNDLES)}")
    overrides = layered(load_config_file(args.config), args, ["epochs", "lr", "batch_size"])
    code = _run_bundle(args.bundle, BUNDLES[args.bundle], args, overrides)
    if args.bundle == "table3-long" and not args.demos and code == EXIT_OK:
        code = _run_bundle("table3-long-grid5", EXTRA_LONG, args, overrides)
    return code


def _run_bundle(name: str, bundle: Bundle, args, overrides: dict) -> int:
    for m in args.methods or ():
        MethodKind(m)
    jobs = bundle_jobs(name, bundle, args, overrides)
    results = run_jobs(jobs, args.workers)
    rows = summarize(results, bundle, args, bundle.env)
    methods = list(dict.fromkeys(r["method"] for r in results))
    out = Path(args.out_dir) / name
    out.mkdir(parents=True, exist_ok=True)
    table = render_table(rows, methods)
    if bundle.subgoal_table:
        table += "\n" + render_table(rows, methods, subgoals=True)
    (out / "table.md").write_text(table)
    write_summary_csv(rows, out / "summary.csv")
    sys.stdout.write(table)
    return EXIT_OK


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    src = Path(args.input)
    if not src.exists():
        raise InputError(f"{src} not found")
    fig, ax = plt.subplots(figsize=(6, 4))
    if src.suffix == ".csv":
        with src.open() as f:
            rows = list(csv.DictReader(f))
        swept = [r for r in rows if r.get("k")]
        if swept:
            for (method, n) in sorted({(r["method"], r["n_demos"]) for r in swept}):
                pts = sorted((int(r["k"]), float(r["mean"]), float(r["std"])) for r in swept
                             if r["method"] == method and r["n_demos"] == n)
                ks, ms, ss = zip(*pts)
                ax.errorbar(ks, ms, yerr=ss, marker="o", capsize=3, label=f"{METHOD_TITLES[method]} n={n}")
            ax.set_xlabel("K")
        else:
            for method in dict.fromkeys(r["method"] for r in rows):
                pts = sorted((int(r["n_demos"]), float(r["mean"]), float(r["std"])) for r in rows
                             if r["method"] == method)
                ns, ms, ss = zip(*pts)
                ax.errorbar(ns, ms, yerr=ss, marker="o", capsize=3, label=METHOD_TITLES[method])
            ax.set_xlabel("demonstrations")
        ax.set_ylabel("success rate")
        ax.set_ylim(0, 1.05)
        ax.legend(fontsize=8)
    elif src.suffix == ".jsonl":
        rows = [json.loads(l) for l in src.read_text().splitlines() if l.strip()]
        t = [r["t"] for r in rows]
        ax.step(t, [r["oracle"] for r in rows], where="post", label="oracle")
        column = next((c for c in ("z_index", "thought") if rows and c in rows[0]), None)
        if column:
            ax.step(t, [r[column] for r in rows], where="post", label="predicted", linestyle="--")
        ax.set_xlabel("step")
        ax.set_ylabel("sub-goal index")
        ax.legend()
    else:
        raise InputError("plot expects a summary .csv or a trace .jsonl")
    out = Path(args.out or src.with_suffix(".png"))
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    print(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_bundle_flags(p):
    p.add_argument("--seeds", type=int, nargs="+", default=list(DEFAULT_SEEDS))
    p.add_argument("--demos", type=int, nargs="+", help="override the bundle's demonstration budgets")
    p.add_argument("--methods", nargs="+", choices=METHODS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default="runs")
    p.add_argument("--config")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seal-hil", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write expert demonstrations as JSONL")
    p.add_argument("--env", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--order")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("label", help="attach sub-goal labels to a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--backend", choices=["oracle", "replay", "remote"], default="oracle")
    p.add_argument("--cache")
    p.add_argument("--fixture", help="JSONL fixture for the replay backend")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--credential-env", default=DEFAULT_CREDENTIAL_ENV)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", help="train one method")
    p.add_argument("--config", help="YAML/JSON file with TrainConfig fields")
    p.add_argument("--data", help="labeled dataset; generated and oracle-labeled when omitted")
    p.add_argument("--variant-data", nargs="*", help="few-shot datasets mixed into training")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--env")
    p.add_argument("--demos", dest="n_demos", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--hidden", type=int, nargs="+")
    p.add_argument("--val-every", type=int)
    p.add_argument("--val-episodes", type=int)
    p.add_argument("--order")
    p.add_argument("--variant-demos", type=int)
    p.add_argument("--early-stop", action="store_true", default=None)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--name")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--env")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--order")
    p.add_argument("--branch", choices=["combined", "vq", "llm"], default="combined")
    p.add_argument("--out")
    p.add_argument("--trace", help="also write a one-episode sub-goal trace (JSONL)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="K sweep of unsupervised methods on grid3")
    p.add_argument("--k", type=int, nargs="+", default=[2, 4, 6, 8, 10, 12])
    p.add_argument("--name", default="ksweep")
    _add_bundle_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce", help="run a named table bundle over several seeds")
    p.add_argument("bundle", help=", ".join(BUNDLES))
    _add_bundle_flags(p)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("plot", help="render a summary CSV or trace JSONL to PNG")
    p.add_argument("input")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except LabelerError as e:
        print(f"backend error: {e}", file=sys.stderr)
        return EXIT_BACKEND
    except (InputError, ConfigError, ValueError, KeyError, OSError, json.JSONDecodeError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
