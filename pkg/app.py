#!/usr/bin/env python3
"""
Approximate Multiplier Toolkit

Command-line entry point for every pipeline stage:
1. Truth tables of the exact and approximate multipliers
2. Exhaustive error metrics and reconstruction reports
3. LUT export of the aggregated 8x8 designs
4. Two-level logic synthesis of the 3x3 designs
5. MNIST LeNet training, LUT-aware retraining and LUT inference

Exit codes: 0 success, 1 usage error, 2 data/format or accumulator error,
3 internal-consistency failure.
"""

import os
import sys
import json
import logging
import argparse
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

# Load environment variables from .env file
load_dotenv()

from multipliers import available_models, get_model, get_subject
from multipliers.aggregate import AggregationPlan, describe, export_lut16
from multipliers.logicsynth import emit_verilog, synthesize, write_pla
from multipliers.metrics import (
    ErrorReport,
    internal_consistency,
    render_report,
    render_reproduction,
    reproduce_reference,
    sweep,
)
from multipliers.mulcore import enumerate_table
from dnn.inference import calibrate, infer, weight_code_histogram
from dnn.lenet import LeNetModel, load_checkpoint, save_checkpoint
from dnn.lut_ops import load_lut
from dnn.trainer import retrain, train_lenet
from utils.data_processor import DataProcessor
from utils.database import ResultStore
from utils.errors import (
    AccumulatorOverflowError,
    ApproxMulError,
    ConsistencyError,
    DataFormatError,
    DomainError,
)
from utils.provenance import build_provenance
from utils.run_config import COMMANDS, RunConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CONSISTENCY = 3

INTERPRETATIONS = [
    "ER and MED divide by the number of operand pairs 2^(2n)",
    "MRED averages ED/exact over pairs with a nonzero exact product; "
    "mred_approx_denominator uses the approximate product instead",
    "aggregated designs use the assumed product index map and segment widths listed here",
]
DNN_INTERPRETATIONS = [
    "per-tensor affine uint8 quantization, min/max calibration, only the code product goes through the LUT",
    "DAL is measured against this repository's own exact-multiplier run",
    "retraining uses a straight-through estimator over the LUT forward pass with L2 weight decay",
]


def configure_logging() -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    log_file = os.getenv("APPROXMUL_LOG_FILE")
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, os.getenv("LOG_LEVEL", "INFO").upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers
    )


class ApproxMulToolkit:
    """Runs one validated command"""

    def __init__(self, config: RunConfig):
        """
        Initialize the toolkit

        Args:
            config: Validated run configuration
        """
        self.config = config
        self.logger = logging.getLogger("ApproxMulToolkit")

        db_path = config.db or os.getenv("APPROXMUL_DB")
        self.store = ResultStore(db_path) if db_path else None
        if self.store is not None:
            self.logger.info(f"Recording results in {db_path}")

    def run(self) -> int:
        handler = getattr(self, "cmd_" + self.config.command.replace("-", "_"))
        return handler()

    def _write(self, text: str, path: Optional[str] = None) -> None:
        """Write output text to a file, or to stdout when no path is given"""
        if path is None:
            sys.stdout.write(text)
            return
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        self.logger.info(f"Wrote {path}")

    def _json(self, payload: Dict[str, Any]) -> str:
        return json.dumps(payload, indent=2) + "\n"

    def cmd_tt(self) -> int:
        table = enumerate_table(get_model(self.config.model))
        self._write(table.to_text(), self.config.out)
        return EXIT_OK

    def _metric_subjects(self) -> List[str]:
        if self.config.all_models:
            return available_models()
        return [self.config.subject_name]

    def cmd_metrics(self) -> int:
        config = self.config
        fmt = config.format

        if config.hypotheses:
            reproduction = reproduce_reference(config.threads)
            provenance = build_provenance(interpretations=INTERPRETATIONS)
            self._write(render_reproduction(reproduction, fmt, provenance), config.out)
            return EXIT_OK

        reports: List[ErrorReport] = []
        for name in self._metric_subjects():
            subject = get_subject(name)
            if isinstance(subject, AggregationPlan):
                self.logger.debug(describe(subject))
            reports.append(sweep(subject, threads=config.threads))

        discrepancies = sorted({flag for report in reports for flag in report.flags})
        provenance = build_provenance(interpretations=INTERPRETATIONS, discrepancies=discrepancies)
        self._write(render_report(reports, fmt, provenance), config.out)

        if self.store is not None:
            for report in reports:
                self.store.store_error_report(report.model_dump(mode="json"))

        failed = [report.model_name for report in reports if not internal_consistency(report)]
        if failed:
            raise ConsistencyError(f"internal consistency check failed for {', '.join(failed)}")
        return EXIT_OK

    def cmd_export_lut(self) -> int:
        subject = get_subject(self.config.subject_name)
        if not isinstance(subject, AggregationPlan):
            raise DomainError(f"{self.config.subject_name} is not an aggregated 8x8 design")
        export_lut16(subject, self.config.out, self.config.threads)
        return EXIT_OK

    def cmd_synth(self) -> int:
        config = self.config
        model = get_model(config.model)
        report, covers = synthesize(model, config.threads)
        verilog = emit_verilog(model.name, covers, model.width_a)

        if config.out is None:
            self._write(verilog)
            self._write(self._json(report.model_dump(mode="json")))
            return EXIT_OK

        stem = os.path.splitext(config.out)[0]
        self._write(verilog, config.out)
        self._write(write_pla(covers, model.width_a), stem + ".pla")
        self._write(self._json(report.model_dump(mode="json")), stem + ".cost.json")
        return EXIT_OK

    def _calibrated(self, model: LeNetModel) -> LeNetModel:
        if model.quant_params is None:
            self.logger.info("Checkpoint carries no calibration; calibrating on training images")
            train = DataProcessor.load_mnist_dir(self.config.mnist, "train")
            codes = DataProcessor.pad_images(train.images[: self.config.calib_size])
            model.quant_params = calibrate(model, codes)
        return model

    def cmd_eval(self) -> int:
        config = self.config
        model = self._calibrated(load_checkpoint(config.checkpoint))
        test = DataProcessor.load_mnist_dir(config.mnist, "test")
        name, lut = load_lut(config.lut, config.threads)

        result = infer(model, test, lut, name, threads=config.threads)
        provenance = build_provenance(interpretations=DNN_INTERPRETATIONS)
        payload = {"provenance": provenance.model_dump(mode="json"), "result": result.model_dump(mode="json")}
        self._write(self._json(payload), config.out)

        if self.store is not None:
            self.store.store_eval_result(result.model_dump(mode="json"), config.checkpoint)
        return EXIT_OK

    def _training_set(self):
        train = DataProcessor.load_mnist_dir(self.config.mnist, "train")
        return DataProcessor.limit(train, self.config.max_train)

    def cmd_train(self) -> int:
        config = self.config
        train = self._training_set()
        test = DataProcessor.load_mnist_dir(config.mnist, "test")

        model = train_lenet(train, config.epochs, config.lr, config.l2, config.seed,
                            plus=config.plus, batch_size=config.batch_size, test_set=test)
        model.quant_params = calibrate(model, DataProcessor.pad_images(train.images[: config.calib_size]))
        save_checkpoint(model, config.out)
        return EXIT_OK

    def cmd_retrain(self) -> int:
        config = self.config
        model = load_checkpoint(config.checkpoint)
        name, lut = load_lut(config.lut, config.threads)
        retrained = retrain(
            model, lut, self._training_set(), config.epochs, config.l2,
            lr=config.lr, seed=config.seed, holdout_fraction=config.holdout,
            calib_size=config.calib_size, batch_size=config.batch_size,
            multiplier=name, threads=config.threads,
        )
        if retrained is model:
            retrained = self._calibrated(model)
        save_checkpoint(retrained, config.out)
        return EXIT_OK

    def cmd_hist(self) -> int:
        config = self.config
        model = self._calibrated(load_checkpoint(config.checkpoint))
        train = DataProcessor.load_mnist_dir(config.mnist, "train")
        codes = DataProcessor.pad_images(train.images[: config.calib_size])
        histogram = weight_code_histogram(model, model.quant_params, codes)
        payload = {"provenance": build_provenance(interpretations=DNN_INTERPRETATIONS).model_dump(mode="json")}
        payload.update(histogram)
        self._write(self._json(payload), config.out)
        return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Approximate multiplier toolkit')
    subparsers = parser.add_subparsers(dest='command', required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('name', nargs='?', help='Multiplier name (same as --model)')
    common.add_argument('--model', type=str, help='Multiplier name')
    common.add_argument('--variant', type=int, help='Aggregated 8x8 design 1, 2 or 3')
    common.add_argument('--all', dest='all_models', action='store_true', help='Every registered multiplier')
    common.add_argument('--hypotheses', action='store_true', help='Sweep every reconstruction hypothesis')
    common.add_argument('--format', choices=['csv', 'json'], help='Report format')
    common.add_argument('--seed', type=int, default=0, help='Random seed')
    common.add_argument('--threads', type=int,
                        help='Worker count for sweeps and inference (default APPROXMUL_THREADS or 1)')
    common.add_argument('--out', type=str, help='Output file path (stdout when omitted)')
    common.add_argument('--mnist', type=str, default=os.getenv("APPROXMUL_MNIST"), help='MNIST directory')
    common.add_argument('--lut', type=str, default='exact', help="LUT file, design name or 'exact'")
    common.add_argument('--checkpoint', type=str, help='Model checkpoint path')
    common.add_argument('--epochs', type=int, default=5, help='Training epochs')
    common.add_argument('--lr', type=float, default=0.01, help='Learning rate')
    common.add_argument('--l2', type=float, default=0.0, help='L2 weight decay')
    common.add_argument('--plus', action='store_true', help='Use LeNet+')
    common.add_argument('--db', type=str, help='Results store path')
    common.add_argument('--batch-size', type=int, default=64, help='Training mini-batch size')
    common.add_argument('--calib-size', type=int, default=1000, help='Calibration images')
    common.add_argument('--holdout', type=float, default=0.1, help='Retraining holdout fraction')
    common.add_argument('--max-train', type=int, help='Use only the first N training images')

    for command in COMMANDS:
        subparsers.add_parser(command, parents=[common])
    return parser


def parse_config(argv: Optional[List[str]] = None) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    name = args.pop('name')
    if name is not None:
        if args['model'] is not None and args['model'] != name:
            raise DomainError(f"conflicting multiplier names {name!r} and {args['model']!r}")
        args['model'] = name
    if args['format'] is None:
        args['format'] = 'csv' if args['all_models'] else 'json'
    args = {key: value for key, value in args.items() if value is not None}
    return RunConfig(**args)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the script"""
    configure_logging()
    logger = logging.getLogger("approxmul")

    try:
        config = parse_config(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    except (ValidationError, DomainError) as e:
        logger.error(f"Invalid arguments: {e}")
        return EXIT_USAGE

    try:
        return ApproxMulToolkit(config).run()
    except ConsistencyError as e:
        logger.error(str(e))
        return EXIT_CONSISTENCY
    except AccumulatorOverflowError as e:
        logger.error(f"Runtime error: {e}")
        return EXIT_DATA
    except (DataFormatError, OSError) as e:
        logger.error(f"Data error: {e}")
        return EXIT_DATA
    except ApproxMulError as e:
        logger.error(str(e))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
