"""``hyperhar`` command line: gen, stats, build, train, eval, ablate, sweep, project.

Exit codes: 0 success, 1 runtime or numeric failure, 2 configuration error.
Each command writes into one output directory together with a single
``manifest.json``; ``--manifest`` replays a recorded run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from filelock import FileLock, Timeout

from . import __version__
from . import checkpoint as ckpt
from .config import RunConfig, labels_to_ini, load_config, parse_config, read_labels_ini, to_ini
from .data import (LabeledInstance, LabelSpace, apply_normalizer, generate_synthetic,
                   read_instances, resolve_conflicts, write_instances, write_prototypes)
from .errors import ConfigError, HyperHarError
from .graph import build_hypergraph, edge_statistics, write_edge_table, write_graph_report
from .metrics import MetricsReport
from .projection import pca_2d, separation_score, write_coordinates, write_scatter_svg
from .trainer import (Prepared, ablation_configs, evaluate, prepare, run_ablation,
                      run_experiment)

log = logging.getLogger("hyperhar")

OUT_ENV = "HYPERHAR_OUT"
MANIFEST = "manifest.json"
CHECKPOINT = "model.hhck"


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Output directory, resolved config, and the artifact/input ledger that
    becomes the manifest."""

    def __init__(self, command: str, cfg: RunConfig, out: Path, args: dict):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.args = args
        self.inputs: dict[str, str] = {}
        self.artifacts: list[str] = []

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.out / name

    def add_input(self, path: str | Path) -> None:
        p = Path(path)
        self.inputs[str(p)] = _sha256(p)

    def write_manifest(self) -> None:
        arts = sorted(set(self.artifacts))
        manifest = {
            "tool": "hyperhar",
            "version": __version__,
            "command": self.command,
            "args": self.args,
            "seed": self.cfg.train.seed,
            "config": self.cfg.to_dict(),
            "config_ini": to_ini(self.cfg),
            "inputs": dict(sorted(self.inputs.items())),
            "artifacts": {a: _sha256(self.out / a) for a in arts},
        }
        (self.out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")


# ----------------------------------------------------------------- helpers

def _label_space(cfg: RunConfig, data_path: str | None) -> LabelSpace:
    """Config [labels], then [data] labels_file, then labels.ini next to the data."""
    if cfg.labels is not None:
        return cfg.labels
    if cfg.labels_file:
        return read_labels_ini(cfg.labels_file)
    if data_path:
        side = Path(data_path).with_name("labels.ini")
        if side.exists():
            return read_labels_ini(side)
    raise ConfigError("no label space: add a [labels] section, set data.labels_file, "
                      "or place labels.ini next to the instance file", key="labels")


def _load_data(run: Run, data_path: str | None) -> tuple[list[LabeledInstance], LabelSpace, int | None]:
    """Instances from a file, or from the [synth] generator when none is given."""
    cfg = run.cfg
    if data_path:
        space = _label_space(cfg, data_path)
        try:
            instances = read_instances(data_path, space)
        except OSError as exc:
            raise ConfigError(f"cannot read instances {data_path}: {exc}",
                              key="data.instances") from None
        run.add_input(data_path)
        return instances, space, cfg.num_users
    syn = generate_synthetic(cfg.synth, cfg.labels)
    return syn.instances, syn.label_space, cfg.num_users or syn.num_users


def _prepare(run: Run, data_path: str | None) -> Prepared:
    instances, space, num_users = _load_data(run, data_path)
    cfg = run.cfg
    prep = prepare(instances, space, cfg.split, num_users, cfg.normalize_mode,
                   cfg.edge_weighting)
    log.info("%d instances after conflict resolution (%d rejected); split %d/%d/%d",
             len(prep.raw.train) + len(prep.raw.val) + len(prep.raw.test), prep.rejected,
             len(prep.train), len(prep.val), len(prep.test))
    return prep


def _write_splits(run: Run, prep: Prepared) -> None:
    space = prep.graph.label_space
    m = prep.graph.init_embeddings.shape[1]
    for part in ("train", "val", "test"):
        write_instances(run.path(f"split_{part}.csv"), getattr(prep.raw, part), space, m)
    (run.path("labels.ini")).write_text(labels_to_ini(space), encoding="utf-8")


def _report_summary(name: str, rep: MetricsReport) -> str:
    return (f"{name}: context MCC {rep.context_avg.mcc:.4f}, activity MCC "
            f"{rep.activity_avg.mcc:.4f}, overall MCC {rep.overall_avg.mcc:.4f}, "
            f"overall MacF1 {rep.overall_avg.macro_f1:.4f}")


# ---------------------------------------------------------------- commands

def cmd_gen(run: Run, ns) -> None:
    syn = generate_synthetic(run.cfg.synth, run.cfg.labels)
    write_instances(run.path("instances.csv"), syn.instances, syn.label_space,
                    run.cfg.synth.num_features)
    write_prototypes(run.path("prototypes.csv"), syn.node_names, syn.prototypes)
    run.path("labels.ini").write_text(labels_to_ini(syn.label_space), encoding="utf-8")
    log.info("wrote %d instances to %s", len(syn.instances), run.out / "instances.csv")


def cmd_stats(run: Run, ns) -> None:
    instances, space, num_users = _load_data(run, ns.data)
    clean, rejected = resolve_conflicts(instances, space)
    g = build_hypergraph(clean, space, num_users, run.cfg.edge_weighting)
    write_graph_report(g, run.path("edge_report.txt"))
    text = edge_statistics(g).to_text()
    if rejected.total:
        text += f"rejected instances: {rejected.total}\n"
    print(text, end="")


def cmd_build(run: Run, ns) -> None:
    prep = _prepare(run, ns.data)
    write_graph_report(prep.graph, run.path("graph_report.txt"))
    write_edge_table(prep.graph, run.path("edges.csv"))
    _write_splits(run, prep)
    print(edge_statistics(prep.graph).to_text(), end="")


def _save_checkpoint(run: Run, state, prep: Prepared, name: str = CHECKPOINT) -> None:
    ck = ckpt.Checkpoint(state.best_model(), state.config, prep.normalizer,
                         state.best_epoch, state.best_val_mcc)
    ckpt.save(ck, run.path(name))


def _write_log(path: Path, history) -> None:
    lines = ["epoch\ttrain_bce\ttrain_contrastive\tval_overall_mcc"]
    lines += [h.to_tsv() for h in history]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_train(run: Run, ns) -> None:
    prep = _prepare(run, ns.data)
    res = run_experiment((), prep.graph.label_space, run.cfg.train, prepared=prep)
    _write_log(run.path("train_log.tsv"), res.state.history)
    _save_checkpoint(run, res.state, prep)
    _write_splits(run, prep)
    if prep.val:
        evaluate(res.state, prep.val).write(run.path("metrics_val.csv"))
    res.test_report.write(run.path("metrics_test.csv"))
    print(f"best epoch {res.state.best_epoch}, val overall MCC {res.state.best_val_mcc:.4f}")
    print(_report_summary("test", res.test_report))


def cmd_eval(run: Run, ns) -> None:
    if not ns.checkpoint:
        raise ConfigError("eval needs --checkpoint", key="checkpoint")
    run.add_input(ns.checkpoint)
    ck = ckpt.load(ns.checkpoint)
    data = ns.data or run.cfg.instances
    if not data:
        raise ConfigError("eval needs --data or data.instances", key="data.instances")
    run.add_input(data)
    space = ck.label_space
    instances, _ = resolve_conflicts(read_instances(data, space), space)
    if not instances:
        raise ConfigError(f"{data}: no usable instances", key="data.instances")
    rep = evaluate(ck.model, apply_normalizer(ck.normalizer, instances), space,
                   ck.train_config.threshold)
    rep.write(run.path("metrics.csv"))
    print(_report_summary(Path(data).name, rep))


def cmd_ablate(run: Run, ns) -> None:
    prep = _prepare(run, ns.data)
    table = run_ablation(prep, run.cfg.train, ablation_configs(run.cfg.train))
    run.path("ablation.csv").write_text(table.to_csv(), encoding="utf-8")
    for row in table.rows:
        if row.report is not None:
            slug = row.variant.replace("/", "").replace(" ", "_")
            row.report.write(run.path(f"metrics_{slug}.csv"))
            print(_report_summary(row.variant, row.report))
        else:
            print(f"{row.variant}: failed: {row.error}")
    if any(r.report is None for r in table.rows):
        raise HyperHarError("one or more ablation variants failed")


SWEEP_HEADER = ("num_layers,embed_dim,context_mcc,context_macf1,activity_mcc,activity_macf1,"
                "overall_mcc,overall_macf1,best_epoch,status")


def cmd_sweep(run: Run, ns) -> None:
    prep = _prepare(run, ns.data)
    base = run.cfg.train
    dims = run.cfg.sweep.embed_dim or (base.model.embed_dim,)
    lines = [SWEEP_HEADER]
    failed = False
    for layers in run.cfg.sweep.num_layers:
        for dim in dims:
            try:
                model = replace(base.model, num_layers=layers, embed_dim=dim)
                res = run_experiment((), prep.graph.label_space, replace(base, model=model),
                                     prepared=prep)
            except HyperHarError as exc:
                failed = True
                lines.append(f"{layers},{dim},,,,,,,,error: {exc}")
                continue
            r = res.test_report
            lines.append(f"{layers},{dim},{r.context_avg.mcc:.6f},{r.context_avg.macro_f1:.6f},"
                         f"{r.activity_avg.mcc:.6f},{r.activity_avg.macro_f1:.6f},"
                         f"{r.overall_avg.mcc:.6f},{r.overall_avg.macro_f1:.6f},"
                         f"{res.state.best_epoch},ok")
            log.info("layers=%d dim=%d overall MCC %.4f", layers, dim, r.overall_mcc)
    run.path("sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    if failed:
        raise HyperHarError("one or more sweep settings failed")


def cmd_project(run: Run, ns) -> None:
    if not ns.checkpoint:
        raise ConfigError("project needs --checkpoint", key="checkpoint")
    run.add_input(ns.checkpoint)
    ck = ckpt.load(ns.checkpoint)
    g = ck.graph
    emb = ck.model.node_embeddings().data
    coords = pca_2d(emb)
    write_coordinates(run.path("projection.csv"), g.node_names, g.node_types, coords)
    write_scatter_svg(run.path("projection.svg"), g.node_names, g.node_types, coords,
                      "node embeddings, PCA projection (stand-in for UMAP)")
    score = separation_score(emb, g.node_types)
    run.path("separation.txt").write_text(f"{score:.6f}\n", encoding="utf-8")
    print(f"separation score {score:.6f}")


COMMANDS = {
    "gen": (cmd_gen, "generate a synthetic instance file"),
    "stats": (cmd_stats, "hyperedge distribution of an instance file"),
    "build": (cmd_build, "build the training hypergraph and write split files"),
    "train": (cmd_train, "train a model and write checkpoint, log and metrics"),
    "eval": (cmd_eval, "evaluate a checkpoint on an instance file"),
    "ablate": (cmd_ablate, "train full, w/o EH and w/o CL variants"),
    "sweep": (cmd_sweep, "grid over layer counts and embedding sizes"),
    "project": (cmd_project, "2-D projection and separation score of node embeddings"),
}
DATA_COMMANDS = ("stats", "build", "train", "ablate", "sweep", "eval")


def _common(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies use SUPPRESS so they do not clobber values given
    # before the subcommand name
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file", **kw)
    common.add_argument("--seed", type=int, help="overrides every seed in the config", **kw)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<command>)", **kw)
    common.add_argument("--quiet", action="store_true", help="only warnings and errors", **kw)
    common.add_argument("--manifest", help="replay the run recorded in this manifest.json",
                        **kw)
    return common


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hyperhar", parents=[_common(False)],
                                description="Heterogeneous hypergraph activity recognition.")
    p.add_argument("--version", action="version", version=f"hyperhar {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text, parents=[_common(True)])
        if name in DATA_COMMANDS:
            sp.add_argument("--data", help="instance file (default: data.instances, or the "
                                           "synthetic generator)")
        if name in ("eval", "project"):
            sp.add_argument("--checkpoint", help="model checkpoint file")
    return p


def _resolve(ns) -> tuple[str, RunConfig, dict]:
    """Command, config and command arguments, either from the flags or from
    a recorded manifest."""
    if ns.manifest:
        try:
            m = json.loads(Path(ns.manifest).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read manifest {ns.manifest}: {exc}",
                              key="manifest") from None
        if ns.command and ns.command != m.get("command"):
            raise ConfigError(f"manifest records {m.get('command')!r}, not {ns.command!r}",
                              key="manifest")
        cfg = parse_config(m["config_ini"], ns.manifest)
        return m["command"], cfg, dict(m.get("args", {}))
    if not ns.command:
        raise ConfigError("no command given", key="command")
    cfg = load_config(ns.config)
    if ns.seed is not None:
        cfg = cfg.with_seed(ns.seed)
    args = {}
    for key in ("data", "checkpoint"):
        v = getattr(ns, key, None)
        if key == "data" and v is None and ns.command in DATA_COMMANDS:
            v = cfg.instances
        if v is not None:
            args[key] = v
    return ns.command, cfg, args


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if ns.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    try:
        command, cfg, args = _resolve(ns)
        if ns.manifest and ns.seed is not None:
            cfg = cfg.with_seed(ns.seed)
        out = Path(ns.out or Path(os.environ.get(OUT_ENV, "hyperhar_out")) / command)
        out.mkdir(parents=True, exist_ok=True)
        run = Run(command, cfg, out, args)
        if ns.config and not ns.manifest:
            run.add_input(ns.config)
        call_ns = argparse.Namespace(data=args.get("data"), checkpoint=args.get("checkpoint"))
        try:
            with FileLock(str(out / ".lock"), timeout=0):
                COMMANDS[command][0](run, call_ns)
                run.write_manifest()
        except Timeout:
            raise HyperHarError(f"{out} is locked by another hyperhar process") from None
    except ConfigError as exc:
        key = f" [{exc.key}]" if exc.key else ""
        print(f"hyperhar: configuration error{key}: {exc}", file=sys.stderr)
        return 2
    except (HyperHarError, OSError, ArithmeticError) as exc:
        print(f"hyperhar: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
