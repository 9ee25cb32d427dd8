"""Command-line front end.

Subcommands: ``synth`` writes a benchmark dataset, ``run`` runs one chain,
``bench`` runs a replication study and writes median tables, ``mess``
re-analyses a saved draws file and ``ingest-check`` validates a column
mapping against a CSV file.

Replication ``r`` uses seed ``base_seed XOR r`` for both data generation and
sampling (on separate streams), so every output is a function of the base
seed alone.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as qio
from .diagnostics import MessReport, TooFewDraws, SingularCovariance, median_across_runs, mess
from .momentmodel import Dataset, MomentModel, RankDeficient
from .prior import PriorFamily, PriorSpec
from .samplers import Algorithm, SamplerConfig, SamplerFailure, run_chain, sampler_rng
from .synth import SynthConfig, generate

ALL_ALGORITHMS = [a.value for a in Algorithm]
SEED_ENV = "QGMM_SEED"
SEED_MASK = 2**64 - 1

EXIT_OK = 0
EXIT_INCOMPLETE = 1
EXIT_INPUT = 3


@dataclass
class ExperimentConfig:
    """One benchmark study: a data source, a prior and sampler settings, replicated."""

    synthetic: SynthConfig | None = None
    csv_path: str | None = None
    mapping: qio.ColumnMapping | None = None
    label: str = "synthetic"
    prior: PriorSpec = field(default_factory=PriorSpec)
    algorithms: list[str] = field(default_factory=lambda: list(ALL_ALGORITHMS))
    total_draws: int = 20_000
    retained_draws: int = 10_000
    replications: int = 10
    base_seed: int = 0
    da_adapt_on: str = "stage1"

    def __post_init__(self):
        if (self.synthetic is None) == (self.csv_path is None):
            raise ValueError("exactly one of a synthetic scenario or a CSV file is required")
        if self.csv_path is not None and self.mapping is None:
            raise ValueError("a CSV scenario needs a column mapping")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        self.algorithms = [Algorithm(a).value for a in self.algorithms]
        if not self.algorithms:
            raise ValueError("no algorithms selected")
        self.base_seed = int(self.base_seed) & SEED_MASK
        self.sampler_config(0)  # validates draw counts

    def rep_seed(self, rep: int) -> int:
        return self.base_seed ^ rep

    def sampler_config(self, rep: int, algorithm: str = "ram") -> SamplerConfig:
        return SamplerConfig(
            algorithm=algorithm,
            total_draws=self.total_draws,
            retained_draws=self.retained_draws,
            seed=self.rep_seed(rep),
            da_adapt_on=self.da_adapt_on,
        )

    def dataset(self, rep: int) -> Dataset:
        if self.synthetic is not None:
            cfg = SynthConfig(self.synthetic.n, self.synthetic.k, self.rep_seed(rep))
            return generate(cfg)[0]
        return qio.ingest_csv(self.csv_path, self.mapping)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        d = dict(d)
        scen = d.pop("scenario", {"type": "synthetic"})
        kw: dict = {}
        if scen.get("type", "synthetic") == "synthetic":
            kw["synthetic"] = SynthConfig(n=int(scen.get("n", 100)), k=int(scen.get("k", 5)))
        elif scen["type"] == "csv":
            path = Path(scen["path"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            kw["csv_path"] = str(path)
            m = scen.get("mapping")
            if isinstance(m, str):
                mp = Path(m)
                if base_dir is not None and not mp.is_absolute():
                    mp = base_dir / mp
                kw["mapping"] = qio.load_mapping(mp)
            else:
                kw["mapping"] = qio.ColumnMapping.from_dict(m)
            kw["label"] = scen.get("label", path.stem)
        else:
            raise ValueError(f"unknown scenario type {scen['type']!r}")
        if "prior" in d:
            p = d.pop("prior")
            kw["prior"] = PriorSpec(**p) if isinstance(p, dict) else PriorSpec(p)
        for key in ("label", "algorithms", "total_draws", "retained_draws", "replications", "base_seed", "da_adapt_on"):
            if key in d:
                kw[key] = d.pop(key)
        if d:
            raise ValueError(f"unknown config keys: {', '.join(sorted(d))}")
        return cls(**kw)


@dataclass
class ExperimentOutcome:
    table: qio.BenchmarkTable
    runs: list[dict]
    failures: list[dict]

    @property
    def complete(self) -> bool:
        return not self.failures


def _run_one(config: ExperimentConfig, algorithm: str, rep: int, keep: bool = False) -> dict:
    """One replication of one algorithm; failures are returned, not raised."""
    base = {"algorithm": algorithm, "replication": rep, "seed": config.rep_seed(rep)}
    try:
        data = config.dataset(rep)
        model = MomentModel(data)
        scfg = config.sampler_config(rep, algorithm)
        result = run_chain(model, config.prior, scfg, sampler_rng(scfg.seed))
        report = mess(result.draws, result.sampling_seconds)
    except (SamplerFailure, RankDeficient, SingularCovariance, TooFewDraws, np.linalg.LinAlgError) as exc:
        return {**base, "ok": False, "error": type(exc).__name__, "message": str(exc)}
    rec = {**base, "ok": True, "document": qio.result_document(result, report)}
    if keep:
        rec["result"], rec["report"] = result, report
    return rec


def _run_task(args) -> dict:
    return _run_one(*args)


def run_experiment(config: ExperimentConfig, jobs: int = 1, out: Path | None = None) -> ExperimentOutcome:
    """Run every (algorithm, replication) pair and aggregate medians per algorithm."""
    tasks = [(config, a, r) for a in config.algorithms for r in range(config.replications)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    results.sort(key=lambda r: (config.algorithms.index(r["algorithm"]), r["replication"]))

    if config.synthetic is not None:
        n, k = config.synthetic.n, config.synthetic.k
    else:
        n = k = None
    table = qio.BenchmarkTable()
    for algo in config.algorithms:
        done = [r["document"] for r in results if r["algorithm"] == algo and r["ok"]]
        if not done:
            continue
        if n is None:
            n, k = done[0]["n"], done[0]["k"]
        reports = [
            MessReport(d["mess"], d["mess_per_iter"], d["mess_per_sec"], 0, d["k"]) for d in done
        ]
        med = median_across_runs(reports)
        table.add(
            config.label, n, k, algo,
            qio.TableCell(med.mess_per_iter, med.mess_per_sec, len(done), config.replications),
        )

    runs = [r for r in results if r["ok"]]
    failures = [{key: r[key] for key in r if key != "ok"} for r in results if not r["ok"]]
    outcome = ExperimentOutcome(table, runs, failures)
    if out is not None:
        write_outcome(outcome, out)
    return outcome


def write_outcome(outcome: ExperimentOutcome, out: Path) -> None:
    out = Path(out)
    runs_dir = out / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    for r in outcome.runs:
        name = f"{r['algorithm']}_rep{r['replication']:04d}.json"
        (runs_dir / name).write_text(json.dumps(r["document"], indent=2) + "\n", encoding="utf-8")
    if outcome.table.rows:
        (out / "table.txt").write_text(qio.render_table(outcome.table), encoding="utf-8")
        (out / "table.csv").write_text(qio.table_csv(outcome.table), encoding="utf-8")
        (out / "table_timing.csv").write_text(qio.table_csv(outcome.table, include_timing=True), encoding="utf-8")
    if outcome.failures:
        (out / "errors.json").write_text(json.dumps(outcome.failures, indent=2) + "\n", encoding="utf-8")


def resolve_seed(flag: int | None, config_value: int | None = None) -> int:
    """``--seed`` wins, then the config file, then ``QGMM_SEED``, then 0."""
    if flag is not None:
        return flag
    if config_value is not None:
        return int(config_value)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env, 0)
        except ValueError:
            raise ValueError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def _algorithms(value: str | None) -> list[str] | None:
    if value is None:
        return None
    return list(ALL_ALGORITHMS) if value == "all" else [value]


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qgmm", description="Quasi-Bayesian GMM samplers and benchmarks.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, draws_default):
        sp.add_argument("--config", type=Path, help="experiment configuration JSON")
        sp.add_argument("--prior", choices=[f.value for f in PriorFamily])
        sp.add_argument("--n", type=int, help="synthetic sample size")
        sp.add_argument("--k", type=int, help="synthetic number of coefficients")
        sp.add_argument("--draws", type=int, help=f"total draws (default {draws_default[0]})")
        sp.add_argument("--retain", type=int, help=f"retained draws (default {draws_default[1]})")
        sp.add_argument("--seed", type=int, help=f"base seed (fallback: ${SEED_ENV}, then 0)")
        sp.add_argument("--csv", type=Path, help="data file instead of synthetic data")
        sp.add_argument("--mapping", type=Path, help="column mapping JSON for --csv")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")

    s = sub.add_parser("synth", help="write a synthetic dataset")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", type=Path, default=Path("."))

    r = sub.add_parser("run", help="run a single chain")
    common(r, (20_000, 10_000))
    r.add_argument("--algorithm", choices=ALL_ALGORITHMS, default="mda-approx")
    r.add_argument("--no-draws", action="store_true", help="skip the draws CSV")

    b = sub.add_parser("bench", help="replicated benchmark with median tables")
    common(b, (20_000, 10_000))
    b.add_argument("--algorithm", choices=ALL_ALGORITHMS + ["all"])
    b.add_argument("--reps", type=int, help="replications (default 10)")
    b.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    m = sub.add_parser("mess", help="multivariate ESS of a saved draws CSV")
    m.add_argument("draws", type=Path)
    m.add_argument("--seconds", type=float, help="sampling time for mESS/s")

    c = sub.add_parser("ingest-check", help="validate a column mapping against a CSV file")
    c.add_argument("csv", type=Path)
    c.add_argument("mapping", type=Path)
    return p


def config_from_args(args) -> ExperimentConfig:
    """Merge a config file (if any) with command-line overrides."""
    base_dir = None
    d: dict = {}
    if args.config is not None:
        d = json.loads(args.config.read_text(encoding="utf-8"))
        base_dir = args.config.parent
    scen = dict(d.get("scenario", {"type": "synthetic"}))
    if args.csv is not None:
        if args.mapping is None:
            raise ValueError("--csv requires --mapping")
        scen = {"type": "csv", "path": str(args.csv.resolve()), "mapping": str(args.mapping.resolve())}
    if scen.get("type", "synthetic") == "synthetic":
        if args.n is not None:
            scen["n"] = args.n
        if args.k is not None:
            scen["k"] = args.k
    d["scenario"] = scen
    if args.prior is not None:
        d["prior"] = {**d.get("prior", {}), "family": args.prior} if isinstance(d.get("prior"), dict) else args.prior
    if args.draws is not None:
        d["total_draws"] = args.draws
    if args.retain is not None:
        d["retained_draws"] = args.retain
    elif args.draws is not None and "retained_draws" not in d:
        d["retained_draws"] = max(1, args.draws // 2)
    algos = _algorithms(getattr(args, "algorithm", None))
    if algos is not None:
        d["algorithms"] = algos
    reps = getattr(args, "reps", None)
    if reps is not None:
        d["replications"] = reps
    d["base_seed"] = resolve_seed(args.seed, d.get("base_seed"))
    return ExperimentConfig.from_dict(d, base_dir)


def _cmd_synth(args) -> int:
    seed = resolve_seed(args.seed)
    data, theta = generate(SynthConfig(args.n, args.k, seed))
    args.out.mkdir(parents=True, exist_ok=True)
    qio.write_dataset_csv(data, args.out / "data.csv")
    names = [f"x{j + 1}" for j in range(1, data.k)]
    mapping = qio.ColumnMapping("y", names, names, [], True)
    (args.out / "mapping.json").write_text(json.dumps(mapping.to_dict(), indent=2) + "\n", encoding="utf-8")
    (args.out / "truth.json").write_text(
        json.dumps({"n": data.n, "k": data.k, "seed": seed, "theta": theta.tolist()}, indent=2) + "\n",
        encoding="utf-8",
    )
    print(f"wrote {args.out / 'data.csv'} (n={data.n}, k={data.k})")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = config_from_args(args)
    cfg.replications = 1
    rec = _run_one(cfg, cfg.algorithms[0], 0, keep=True)
    args.out.mkdir(parents=True, exist_ok=True)
    if not rec["ok"]:
        err = {key: rec[key] for key in rec if key != "ok"}
        print(json.dumps({"status": "failed", "failures": [err]}), file=sys.stderr)
        return EXIT_INCOMPLETE
    draws_path = None if args.no_draws else args.out / "draws.csv"
    qio.write_results(rec["result"], rec["report"], args.out / "result.json", draws_path)
    print(json.dumps(rec["document"], indent=2))
    return EXIT_OK


def _cmd_bench(args) -> int:
    cfg = config_from_args(args)
    outcome = run_experiment(cfg, jobs=max(1, args.jobs), out=args.out)
    if outcome.table.rows:
        print(qio.render_table(outcome.table), end="")
    if not outcome.complete:
        print(
            json.dumps({"status": "incomplete", "failed": len(outcome.failures), "failures": outcome.failures}),
            file=sys.stderr,
        )
        return EXIT_INCOMPLETE
    return EXIT_OK


def _cmd_mess(args) -> int:
    draws = qio.read_draws_csv(args.draws)
    rep = mess(draws, args.seconds)
    print(json.dumps({
        "draws": int(draws.shape[0]),
        "p": rep.p,
        "batch_size": rep.batch_size,
        "mess": rep.mess,
        "mess_per_iter": rep.mess_per_iter,
        "mess_per_sec": rep.mess_per_sec,
    }, indent=2))
    return EXIT_OK


def _cmd_ingest_check(args) -> int:
    mapping = qio.load_mapping(args.mapping)
    data = qio.ingest_csv(args.csv, mapping)
    model = MomentModel(data)
    print(json.dumps({"n": data.n, "k": data.k, "pivot": model.pivot.tolist()}, indent=2))
    return EXIT_OK


COMMANDS = {
    "synth": _cmd_synth,
    "run": _cmd_run,
    "bench": _cmd_bench,
    "mess": _cmd_mess,
    "ingest-check": _cmd_ingest_check,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError, np.linalg.LinAlgError) as exc:
        print(json.dumps({"status": "error", "error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
