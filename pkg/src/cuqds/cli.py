"""Command-line harness: ``gen``, ``train``, ``stream`` and ``eval``.

Files written under ``--out``:

    gen     train.jsonl  val.jsonl  test.jsonl  config.txt
    train   model.json  calibrator.json  loss_curve.csv  train_report.txt
    stream  stream.jsonl  report.txt  report.jsonl
    eval    report.txt  report.jsonl   (also printed to stdout)

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment
from .config import CALIBRATORS, PREDICTORS, RunConfig, read_config
from .conformal import ConformalState, StreamRecord
from .data import generate_scenario, read_samples, write_samples
from .errors import ConfigError, CuqdsError, DataError, NumericError
from .metrics import evaluate_records
from .predictors import load_model, save_model

log = logging.getLogger("cuqds")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

TRAIN_FILE, VAL_FILE, TEST_FILE = "train.jsonl", "val.jsonl", "test.jsonl"
CALIBRATOR_FILE = "calibrator.json"
STREAM_FILE = "stream.jsonl"
REPORT_TXT, REPORT_JSONL = "report.txt", "report.jsonl"

# flag -> config key
_FLAGS = {
    "seed": int, "alpha": float, "beta": float, "m_inducing": int, "w1": float, "w2": float,
    "epochs": int, "window": int, "out": str, "data": str, "model": str,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cuqds", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'key = value' config file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--data", help="directory holding the sample files (default: --out)")
    common.add_argument("--model", help="model file (default: <out>/model.json)")
    common.add_argument("--seed", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--m-inducing", type=int, dest="m_inducing")
    common.add_argument("--w1", type=float)
    common.add_argument("--w2", type=float)
    common.add_argument("--epochs", type=int)
    common.add_argument("--predictor", choices=PREDICTORS)
    common.add_argument("--calibrator", choices=CALIBRATORS)
    common.add_argument("--window", type=int, help="score/error window, 0 = unbounded")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key")
    common.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("gen", parents=[common], help="generate train/val/test sample files")
    sub.add_parser("train", parents=[common], help="fit inducing set, train, warm up calibrator")
    sub.add_parser("stream", parents=[common], help="calibrate the test stream")
    ev = sub.add_parser("eval", parents=[common], help="metrics of a stream log")
    ev.add_argument("records", help="stream log (line-delimited StreamRecords)")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = read_config(args.config) if args.config else RunConfig()
    for key in (*_FLAGS, "predictor", "calibrator"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg.set(*item.split("=", 1))
    cfg.validate()
    return cfg


def _require_file(path: Path) -> Path:
    if not path.is_file():
        raise DataError(f"missing input file {path}")
    return path


def cmd_gen(cfg: RunConfig) -> None:
    train, val, test = generate_scenario(cfg.scenario())
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_samples(train, out / TRAIN_FILE)
    write_samples(val, out / VAL_FILE)
    write_samples(test, out / TEST_FILE)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    log.info("wrote %d/%d/%d samples to %s", len(train), len(val), len(test), out)


def cmd_train(cfg: RunConfig) -> None:
    data = cfg.data_dir
    train = read_samples(_require_file(data / TRAIN_FILE), "train")
    val = read_samples(_require_file(data / VAL_FILE), "validation")
    predictor, surrogate, result = experiment.train_models(cfg, train, val)
    state = experiment.warm_state(cfg, val, predictor, surrogate)

    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    model_path = cfg.model_path
    model_path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model_path, predictor, surrogate)
    with open(model_path.parent / CALIBRATOR_FILE, "w", encoding="utf-8") as fh:
        json.dump(state.to_dict(), fh)
        fh.write("\n")
    with open(out / "loss_curve.csv", "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for i, (a, b) in enumerate(zip(result.train_loss, result.val_loss)):
            fh.write(f"{i},{a!r},{b!r}\n")
    summary = experiment.validation_summary(val, predictor, surrogate)
    (out / "train_report.txt").write_text(
        summary.to_text()
        + f"best_epoch = {result.best_epoch}\nl1 = {surrogate.kernel.l1!r}\n"
        f"l2 = {surrogate.kernel.l2!r}\nnoise_std = {surrogate.noise_std!r}\n"
        f"q = {state.q!r}\n",
        encoding="utf-8",
    )
    log.info("trained: best epoch %d, q=%.4g", result.best_epoch, state.q)


def _write_report(report, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT_TXT).write_text(report.to_text(), encoding="utf-8")
    (out / REPORT_JSONL).write_text(report.to_json_line(), encoding="utf-8")


def cmd_stream(cfg: RunConfig) -> None:
    data = cfg.data_dir
    test = read_samples(_require_file(data / TEST_FILE), "test")
    predictor, surrogate = load_model(_require_file(cfg.model_path))
    val = warmed = None
    if cfg.calibrator == "split-cp":
        val = read_samples(_require_file(data / VAL_FILE), "validation")
    elif cfg.calibrator == "p-control":
        state_file = cfg.model_path.parent / CALIBRATOR_FILE
        if state_file.is_file():
            with open(state_file, encoding="utf-8") as fh:
                warmed = ConformalState.from_dict(json.load(fh))
        else:
            val = read_samples(_require_file(data / VAL_FILE), "validation")
    records, state = experiment.stream(cfg, test, val, predictor, surrogate, warmed)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(out / STREAM_FILE, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict()))
            fh.write("\n")
    report = evaluate_records(records, threshold=cfg.miss_threshold)
    _write_report(report, out)
    sys.stdout.write(report.to_text())


def read_records(path) -> list[StreamRecord]:
    records = []
    with open(_require_file(Path(path)), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(StreamRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad stream record ({exc})") from None
    return records


def cmd_eval(cfg: RunConfig, records_path) -> None:
    report = evaluate_records(read_records(records_path), threshold=cfg.miss_threshold)
    if cfg.out:
        _write_report(report, cfg.out_dir)
    sys.stdout.write(report.to_text())


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "gen":
            cmd_gen(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "stream":
            cmd_stream(cfg)
        else:
            cmd_eval(cfg, args.records)
    except ConfigError as exc:
        print(f"cuqds: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"cuqds: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"cuqds: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CuqdsError as exc:
        print(f"cuqds: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
