"""Command line interface: ``quartetclust {preprocess,matrix,search,reproduce,gen}``."""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .compressor import DEFAULT_COMPRESSOR, CompressorError, CompressorId, available, canonical
from .distance import CorpusItem, DistanceError, build_matrix, read_matrix, write_matrix
from .experiments import EXPERIMENTS
from .midi import MidiError, preprocess
from .scoring import PENALTY_WEIGHT, mst_baseline
from .search import SearchConfig, hill_climb, parallel_search
from .synthgen import (
    DEFAULT_TAG_PATTERN,
    default_tag_specs,
    make_filetype_corpus,
    make_planted_instance,
    make_tag_corpus,
    tag_placements,
)

log = logging.getLogger("quartetclust")


def _manifest(command, args, outputs, started, **extra):
    return {
        "command": command,
        "args": {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"},
        "outputs": [str(p) for p in outputs],
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "versions": {"quartetclust": __version__, "python": platform.python_version(), "numpy": np.__version__},
        **extra,
    }


def _write_manifest(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")


def _read_label_map(path):
    mapping = {}
    for line in Path(path).read_text().splitlines():
        if line.strip() and not line.startswith("#"):
            key, _, pretty = line.partition("\t")
            mapping[key.strip()] = pretty.strip() or key.strip()
    return mapping


def _now():
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def cmd_preprocess(args):
    inputs = list(args.inputs)
    if args.output is None:
        # single-file form: preprocess IN.mid OUT.pp
        if len(inputs) != 2:
            print("error: give IN OUT.pp, or inputs with -o DIR", file=sys.stderr)
            return 2
        targets = [(Path(inputs[0]), Path(inputs[1]))]
    else:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        targets = [(Path(src), out / (Path(src).stem + ".pp")) for src in inputs]
    written, failed = [], []
    for src, dest in targets:
        try:
            stream = preprocess(src.read_bytes())
        except (OSError, MidiError) as exc:
            failed.append((src, exc))
            continue
        dest.write_bytes(stream)
        written.append(dest)
    print(f"preprocessed {len(written)} of {len(targets)} files")
    for src, exc in failed:
        print(f"  failed: {src}: {exc}", file=sys.stderr)
    return 1 if not written else 0


def cmd_matrix(args):
    started = _now()
    out = Path(args.output)
    extra = {}
    if args.planted:
        inst = make_planted_instance(args.n, args.seed)
        m = inst.matrix
        extra["source_tree"] = inst.tree.to_newick()
    else:
        files = sorted(p for p in Path(args.corpus).iterdir() if p.is_file() and not p.name.startswith("."))
        if len(files) < 4:
            print(f"error: need at least 4 files in {args.corpus}, found {len(files)}", file=sys.stderr)
            return 2
        args.compressor = canonical(args.compressor)
        names = _read_label_map(args.labels) if args.labels else {}
        corpus = [CorpusItem(names.get(p.name, p.name), p.read_bytes()) for p in files]
        m = build_matrix(corpus, args.compressor, workers=args.workers)
    write_matrix(m, out)
    _write_manifest(str(out) + ".manifest.json",
                    _manifest("matrix", args, [out], started, compressor=str(args.compressor), **extra))
    print(f"wrote {m.n}x{m.n} matrix to {out}")
    return 0


def cmd_search(args):
    started = _now()
    try:
        m = read_matrix(args.matrix)
    except (OSError, DistanceError, ValueError) as exc:
        print(f"error: cannot read matrix {args.matrix}: {exc}", file=sys.stderr)
        return 2
    if args.labels:
        names = _read_label_map(args.labels)
        m = type(m)([names.get(x, x) for x in m.labels], m.d)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    cfg = SearchConfig(
        seed=args.seed,
        plateau_limit=args.plateau,
        max_evals=args.max_evals,
        penalty_enabled=args.penalty > 0,
        penalty_weight=args.penalty if args.penalty > 0 else PENALTY_WEIGHT,
        workers=args.workers,
        max_seconds=args.max_seconds,
        checkpoint_path=str(out / "checkpoint.json"),
        checkpoint_interval=args.checkpoint_interval,
    )
    score_log = open(out / "scores.tsv", "w") if args.verbose else None
    report = None
    if score_log:
        score_log.write("tree_id\traw_cost\ts\tpenalty\ts_effective\n")
        report = lambda evals, sc: score_log.write(sc.as_row(evals) + "\n")  # noqa: E731
    try:
        res = hill_climb(m, cfg, report) if cfg.workers == 1 else parallel_search(m, cfg)
    finally:
        if score_log:
            score_log.close()
    outputs = [out / "tree.dot", out / "tree.nwk", out / "trace.csv"]
    outputs[0].write_text(res.tree.to_dot())
    outputs[1].write_text(res.tree.to_newick() + "\n")
    outputs[2].write_text(res.trace.to_csv())
    if args.mst:
        mst = mst_baseline(m)
        (out / "mst.dot").write_text(mst.to_dot())
        outputs.append(out / "mst.dot")
        print(f"mst weight = {mst.weight:.6f}")
    sc = res.score
    _write_manifest(out / "manifest.json", _manifest(
        "search", args, outputs, started, config=asdict(cfg), evals=res.evals, stop_reason=res.stop_reason,
        seconds=res.seconds, raw_cost=sc.raw_cost, s=sc.s, penalty=sc.penalty, s_effective=sc.s_effective,
    ))
    print(f"s = {sc.s:.6f}")
    print(f"penalty = {sc.penalty:.6f}")
    print(f"s_effective = {sc.s_effective:.6f}")
    print(f"evaluations = {res.evals} ({res.stop_reason}, {res.seconds:.1f} s)")
    return 0


def cmd_reproduce(args):
    started = _now()
    run = EXPERIMENTS[args.experiment]
    cfg = SearchConfig(seed=args.seed, workers=args.workers, plateau_limit=args.plateau,
                       penalty_enabled=args.experiment != "planted")
    rep = run(seed=args.seed, cfg=cfg)
    for line in rep.lines():
        print(line)
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        write_matrix(rep.matrix, out / "matrix.txt")
        (out / "tree.dot").write_text(rep.result.tree.to_dot())
        (out / "tree.nwk").write_text(rep.result.tree.to_newick() + "\n")
        (out / "trace.csv").write_text(rep.result.trace.to_csv())
        (out / "report.txt").write_text("\n".join(rep.lines()) + "\n")
        _write_manifest(out / "manifest.json", _manifest(
            "reproduce", args, sorted(out.iterdir()), started, config=asdict(cfg), passed=rep.passed))
    return 0 if rep.passed else 1


def cmd_gen(args):
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    entries = {}
    if args.kind == "tags":
        specs = default_tag_specs()
        for spec, item in zip(specs, make_tag_corpus(specs, seed=args.seed)):
            (out / item.label).write_bytes(item.data)
            entries[item.label] = {"file": item.label, "tags": spec.tags,
                                   "placements": tag_placements(spec, args.seed)}
        note = "tag pattern is a reconstruction: " + " ".join(DEFAULT_TAG_PATTERN)
    elif args.kind == "filetypes":
        for item in make_filetype_corpus(args.seed):
            (out / item.label).write_bytes(item.data)
            entries[item.label] = {"file": item.label, "type": item.label.rstrip("0123456789")}
        note = "synthetic stand-ins for four file types"
    else:
        inst = make_planted_instance(args.n, args.seed)
        write_matrix(inst.matrix, out / "matrix.txt")
        (out / "tree.nwk").write_text(inst.tree.to_newick() + "\n")
        (out / "tree.json").write_text(json.dumps(inst.tree.to_dict()) + "\n")
        entries = {label: {"file": "matrix.txt"} for label in inst.tree.labels}
        note = "distances (L + 1) / n of the tree in tree.nwk"
    _write_manifest(out / "manifest.json", {"kind": args.kind, "seed": args.seed, "note": note, "items": entries})
    print(f"wrote {args.kind} data to {out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="quartetclust", description=__doc__)
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, compressor=False, search=False):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--workers", type=int, default=1)
        if compressor:
            sp.add_argument("--compressor", type=CompressorId.parse, default=DEFAULT_COMPRESSOR,
                            help=f"one of {', '.join(available())}; parameters as name:key=value")
        if search:
            sp.add_argument("--plateau", type=int, default=None,
                            help="stop after this many consecutive rejected mutations")

    sp = sub.add_parser("preprocess", help="MIDI files to player-piano streams")
    sp.add_argument("inputs", nargs="+", help="MIDI files, or IN.mid OUT.pp without -o")
    sp.add_argument("-o", "--output", help="output directory; one NAME.pp per input")
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("matrix", help="distance matrix of a directory of files")
    sp.add_argument("corpus", nargs="?")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--planted", action="store_true", help="emit a planted tree-metric matrix instead")
    sp.add_argument("--n", type=int, default=18)
    sp.add_argument("--labels", help="tab-separated filename -> label map")
    common(sp, compressor=True)
    sp.set_defaults(func=cmd_matrix)

    sp = sub.add_parser("search", help="quartet tree search on a matrix file")
    sp.add_argument("matrix")
    sp.add_argument("-o", "--output", required=True, help="output directory")
    sp.add_argument("--penalty", type=float, default=PENALTY_WEIGHT, help="orphan penalty weight; 0 disables")
    sp.add_argument("--max-evals", type=int, default=None)
    sp.add_argument("--max-seconds", type=float, default=None)
    sp.add_argument("--checkpoint-interval", type=int, default=10_000)
    sp.add_argument("--mst", action="store_true", help="also write the minimum spanning tree")
    sp.add_argument("--labels", help="tab-separated label -> pretty label map")
    sp.add_argument("-v", "--verbose", action="store_true", help="write every evaluated score to scores.tsv")
    common(sp, search=True)
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("reproduce", help="run a controlled experiment and check it")
    sp.add_argument("experiment", choices=sorted(EXPERIMENTS))
    sp.add_argument("-o", "--output")
    common(sp, search=True)
    sp.set_defaults(func=cmd_reproduce)

    sp = sub.add_parser("gen", help="write a synthetic corpus")
    sp.add_argument("kind", choices=["tags", "planted", "filetypes"])
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n", type=int, default=18)
    sp.set_defaults(func=cmd_gen)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CompressorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
