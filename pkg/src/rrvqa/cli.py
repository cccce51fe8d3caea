"""Command-line front end.

    rrvqa synth --output corpus/ --contents 12 --levels 5
    rrvqa features --input corpus/manifest.csv --output fused.csv
    rrvqa train --input fused.csv --model model.json
    rrvqa predict --input fused.csv --model model.json --output pred.csv
    rrvqa evaluate --input pred.csv
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from typing import List, Optional

from rrvqa import dataset
from rrvqa.errors import SchemaError, VqaError
from rrvqa.features import write_frame_csv, write_pooled_csv
from rrvqa.fusion import FUSED_NAMES
from rrvqa.gbt import (
    GbtParams,
    dumps_model,
    importance_ranking,
    load_model,
    predict_batch,
    train,
)
from rrvqa.metrics import REPORT_FIELDS, evaluate
from rrvqa.parallel import default_workers
from rrvqa.pipeline import analyze_files, analyze_pair, load_pair, stage
from rrvqa.ssim import write_ssim_csv
from rrvqa.synth import generate_corpus
from rrvqa.tuning import SearchSpace, random_search, write_trials_csv
from rrvqa.video_io import RawParams

PARAM_FLAGS = ("n_estimators", "max_depth", "learning_rate", "subsample", "colsample_bytree",
               "reg_lambda", "gamma", "min_child_weight")


class CliError(VqaError):
    pass


class Outputs:
    """Tracks files written by a command; on failure every one of them is removed."""

    def __init__(self):
        self.paths: List[str] = []

    def add(self, path) -> str:
        path = os.fspath(path)
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        self.paths.append(path)
        return path

    def write_text(self, path, text: str) -> None:
        with open(self.add(path), "w", newline="\n") as fh:
            fh.write(text)

    def discard(self) -> None:
        for p in reversed(self.paths):
            try:
                os.remove(p)
            except OSError:
                pass


def _require_files(*paths) -> None:
    for p in paths:
        if p is not None and not os.path.isfile(p):
            raise CliError(f"input file not found: {p}")


def _raw(args) -> Optional[RawParams]:
    return RawParams.parse(args.raw) if getattr(args, "raw", None) else None


def _threads(args) -> int:
    return args.threads if args.threads is not None else default_workers()


def _read_manifest(path):
    base = os.path.dirname(os.path.abspath(path))
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for name in ("ref", "test"):
            if name not in fields:
                raise SchemaError(f"{path}: missing column {name!r}")
        extra = set(fields) - {"ref", "test", "mos"}
        if extra:
            raise SchemaError(f"{path}: unexpected column {sorted(extra)[0]!r}")
        rows = []
        for row in reader:
            rows.append((
                os.path.join(base, row["ref"]),
                os.path.join(base, row["test"]),
                float(row["mos"]) if "mos" in fields else None,
            ))
    return rows


def cmd_features(args, out: Outputs) -> int:
    raw = _raw(args)
    workers = _threads(args)
    if args.input:
        _require_files(args.input)
        pairs = _read_manifest(args.input)
        for ref, test, _ in pairs:
            _require_files(ref, test)
    else:
        if not (args.ref and args.test):
            raise CliError("features needs --ref and --test, or --input MANIFEST")
        _require_files(args.ref, args.test)
        pairs = [(args.ref, args.test, None)]
    with_mos = all(m is not None for _, _, m in pairs) and args.input is not None
    columns = list(FUSED_NAMES) + (["kl_proxy"] if args.diagnostics else []) + (["mos"] if with_mos else [])
    rows = []
    for i, (ref, test, mos) in enumerate(pairs):
        result = analyze_files(ref, test, raw, workers)
        row = list(result.fused.flatten())
        if args.diagnostics:
            row.append(result.kl_proxy)
        if with_mos:
            row.append(mos)
        rows.append(row)
        if args.per_frame:
            prefix = os.path.join(args.per_frame, f"{i:04d}_")
            write_frame_csv(out.add(prefix + "ref_frames.csv"), result.ref_frames)
            write_pooled_csv(out.add(prefix + "ref_pooled.csv"), result.ref_pooled)
            write_frame_csv(out.add(prefix + "test_frames.csv"), result.test_frames)
            write_pooled_csv(out.add(prefix + "test_pooled.csv"), result.test_pooled)
            write_ssim_csv(out.add(prefix + "ssim.csv"), result.ssim)
    if args.output:
        dataset.write_table(out.add(args.output), columns, rows)
    else:
        lines = [",".join(columns)] + [",".join(dataset.fmt(v) for v in r) for r in rows]
        print("\n".join(lines))
    return 0


def cmd_ssim(args, out: Outputs) -> int:
    if not (args.ref and args.test):
        raise CliError("ssim needs --ref and --test")
    _require_files(args.ref, args.test)
    ref, test = load_pair(args.ref, args.test, _raw(args))
    result = analyze_pair(ref, test, _threads(args), source=f"{args.ref} vs {args.test}").ssim
    if args.output:
        write_ssim_csv(out.add(args.output), result)
    print(f"mu_ssim,{result.mu_ssim:.9g}")
    return 0


def _params_from_args(args) -> GbtParams:
    base = {}
    if getattr(args, "params", None):
        _require_files(args.params)
        with open(args.params) as fh:
            base = json.load(fh)
        if not isinstance(base, dict):
            raise CliError(f"{args.params}: expected a JSON object of parameters")
    params = GbtParams.from_dict(base)
    overrides = {k: getattr(args, k) for k in PARAM_FLAGS if getattr(args, k, None) is not None}
    if args.seed is not None:
        overrides["seed"] = args.seed
    return GbtParams.from_dict({**params.to_dict(), **_rename(overrides)})


def _rename(d: dict) -> dict:
    d = dict(d)
    if "reg_lambda" in d:
        d["lambda"] = d.pop("reg_lambda")
    return d


def cmd_train(args, out: Outputs) -> int:
    _require_files(args.input)
    if not args.model:
        raise CliError("train needs --model to write the model file")
    params = _params_from_args(args)
    with stage("load", args.input):
        data = dataset.read_training_set(args.input)
    model = train(data, params)
    out.write_text(args.model, dumps_model(model))
    print(f"train_rmse,{model.train_rmse[-1]:.9g}")
    return 0


def cmd_predict(args, out: Outputs) -> int:
    _require_files(args.input, args.model)
    if not args.output:
        raise CliError("predict needs --output")
    model = load_model(args.model)
    table = dataset.read_table(args.input)
    table["pred"] = predict_batch(model, dataset.feature_matrix(table))
    dataset.write_columns(out.add(args.output), table)
    return 0


def cmd_evaluate(args, out: Outputs) -> int:
    _require_files(args.input)
    table = dataset.read_table(args.input, required=("pred", "mos"))
    report = evaluate(table["pred"], table["mos"])
    lines = [",".join(REPORT_FIELDS), ",".join(report.row())]
    if args.output:
        out.write_text(args.output, "\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_tune(args, out: Outputs) -> int:
    _require_files(args.input)
    if not args.output:
        raise CliError("tune needs --output for the trials CSV")
    data = dataset.read_training_set(args.input)
    seed = args.seed if args.seed is not None else 0
    best, history = random_search(data, SearchSpace(), trials=args.trials, k=args.folds,
                                  seed=seed, workers=_threads(args))
    write_trials_csv(out.add(args.output), history)
    best_path = args.best or os.path.splitext(args.output)[0] + "_best.json"
    out.write_text(best_path, json.dumps(best.to_dict(), indent=2) + "\n")
    top = max(history, key=lambda r: r.mean_plcc)
    print(f"best_trial,{top.trial}\nmean_plcc,{top.mean_plcc:.9g}")
    return 0


def cmd_importance(args, out: Outputs) -> int:
    _require_files(args.model)
    model = load_model(args.model)
    rows = importance_ranking(model)
    lines = ["feature,gain_share"] + [f"{name},{share:.9g}" for name, share in rows]
    if args.output:
        out.write_text(args.output, "\n".join(lines) + "\n")
    else:
        print("\n".join(lines))
    return 0


def cmd_synth(args, out: Outputs) -> int:
    if not args.output:
        raise CliError("synth needs --output DIR")
    width, height = (int(v) for v in args.size.lower().split("x"))
    seed = args.seed if args.seed is not None else 0
    existing = set(os.listdir(args.output)) if os.path.isdir(args.output) else set()
    try:
        entries = generate_corpus(args.output, args.contents, args.levels, seed,
                                  width, height, args.frames)
    finally:
        if os.path.isdir(args.output):
            for name in sorted(set(os.listdir(args.output)) - existing):
                out.paths.append(os.path.join(args.output, name))
    print(f"wrote {len(entries)} pairs to {args.output}")
    return 0


COMMANDS = {
    "features": cmd_features,
    "ssim": cmd_ssim,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "tune": cmd_tune,
    "importance": cmd_importance,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rrvqa",
        description="Reduced-reference video quality from DCT complexity residuals and SSIM.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, io=True):
        p.add_argument("--threads", type=int, default=None,
                       help="worker processes (default: available cores)")
        p.add_argument("--seed", type=int, default=None)
        if io:
            p.add_argument("--input")
            p.add_argument("--output")
        return p

    p = common(sub.add_parser("features", help="fused feature row(s) for ref/test pairs"))
    p.add_argument("--ref")
    p.add_argument("--test")
    p.add_argument("--raw", metavar="WxH:BITDEPTH", help="geometry of raw planar inputs")
    p.add_argument("--diagnostics", action="store_true", help="add the kl_proxy column")
    p.add_argument("--per-frame", metavar="DIR", help="also write per-frame and pooled CSVs")

    p = common(sub.add_parser("ssim", help="pooled SSIM of a ref/test pair"))
    p.add_argument("--ref")
    p.add_argument("--test")
    p.add_argument("--raw", metavar="WxH:BITDEPTH")

    p = common(sub.add_parser("train", help="fit a model on a fused CSV with a mos column"))
    p.add_argument("--model")
    p.add_argument("--params", help="JSON file of booster parameters (e.g. from tune)")
    p.add_argument("--n-estimators", dest="n_estimators", type=int)
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--subsample", type=float)
    p.add_argument("--colsample-bytree", dest="colsample_bytree", type=float)
    p.add_argument("--lambda", dest="reg_lambda", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--min-child-weight", dest="min_child_weight", type=float)

    p = common(sub.add_parser("predict", help="append a pred column"))
    p.add_argument("--model")

    common(sub.add_parser("evaluate", help="SROCC, PLCC, KROCC and RMSE of pred vs mos"))

    p = common(sub.add_parser("tune", help="seeded random search with k-fold CV"))
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--best", help="best-parameter JSON (default: <output>_best.json)")

    p = common(sub.add_parser("importance", help="gain share per feature"))
    p.add_argument("--model")

    p = common(sub.add_parser("synth", help="generate a synthetic corpus"))
    p.add_argument("--contents", type=int, default=12)
    p.add_argument("--levels", type=int, default=5)
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--size", default="64x64")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    out = Outputs()
    try:
        return COMMANDS[args.command](args, out)
    except (VqaError, OSError, ValueError) as exc:
        out.discard()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        out.discard()
        raise


if __name__ == "__main__":
    sys.exit(main())
