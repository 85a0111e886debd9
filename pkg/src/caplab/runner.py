# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.
"""caplab experiment runner"""
from __future__ import annotations

import argparse
import csv
import enum
import json
import logging
import math
import os
import sys
from collections import Counter
from collections.abc import Callable
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
from joblib import Parallel, delayed

from .capacity import (
    distributional_capacity,
    iid_sup_capacity,
    sup_capacity,
    time_indexed_capacity,
)
from .complexity import expected_dataset_complexity
from .config import ExperimentConfig
from .diagnostics import (
    BoundReport,
    Verdict,
    bound_suite,
    capacity_overfit,
    ldm_bound_suite,
    log_summary,
    model_overfit,
    observational_overfit,
    underfit_at,
)
from .halting import build_a_prime, load_corpus, overfit_iff_halts, standard_corpus
from .ldm import (
    bootstrap_interval,
    build_ldm,
    convergence_trace,
    estimate_capacity,
    ldm_orientation,
    write_trace_csv,
)
from .learners import GibbsERM, Learner, build_channel
from .probcore import entropy
from .problem import Dataset, DatasetDistribution, HypothesisSpace, LossFunction
from .search import (
    Orientation,
    Provenance,
    bias,
    expressivity_decomposition,
    orientation,
    per_query_success,
    target_from_risk,
    tradeoff_check,
    write_orientations_csv,
)
from .util import (
    CapacityLimitError,
    ConfigError,
    ValidationError,
    derive_seed,
    quantity,
    summary_header,
)
from .vc import ClassifierClass, growth_function, vc_capacity_bound_check

LOG = logging.getLogger(__name__)

REPORT_VERSION = 1
THREADS_ENV = "CAPLAB_THREADS"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_CAPACITY_LIMIT = 3

ArtifactWriter = Callable[[Path], None]


@dataclass
class Experiment:
    """Problem objects assembled from a validated config."""

    config: ExperimentConfig
    dist: DatasetDistribution
    hypotheses: HypothesisSpace
    loss: LossFunction
    learner: Learner
    # worker threads for row evaluation inside each analysis
    n_jobs: int = 1

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> Experiment:
        """Build every problem object named by `config`.

        Raises:
            ConfigError: The objects do not fit together.
        """
        dist = config.build_distribution()
        if dist.n != config.n:
            raise ConfigError(f"dataset_dist draws {dist.n} examples, n is {config.n}")
        hypotheses = config.build_hypotheses()
        if hypotheses.n_features != config.space.n_features:
            raise ConfigError("hypotheses do not cover every feature of the space")
        loss = config.build_loss()
        learner = config.build_learner(hypotheses, loss)
        LOG.debug("Learner %s over %d hypotheses", learner.name, len(hypotheses))
        return cls(config, dist, hypotheses, loss, learner)


@dataclass
class AnalysisOutput:
    """Results of one analysis plus what it contributes to the shared artifacts."""

    results: dict[str, Any]
    verdicts: list[Verdict] = field(default_factory=list)
    reports: list[BoundReport] = field(default_factory=list)
    orientations: list[tuple[str, Orientation]] = field(default_factory=list)
    # csv suffix -> writer
    artifacts: dict[str, ArtifactWriter] = field(default_factory=dict)


def _channel(exp: Experiment, learner: Learner | None = None) -> Any:
    return build_channel(
        learner or exp.learner,
        exp.dist,
        exp.config.mode,
        cap=exp.config.enumeration_cap,
        n_jobs=exp.n_jobs,
    )


def analyze_capacity(exp: Experiment, options: dict[str, Any]) -> AnalysisOutput:
    ch = _channel(exp)
    results: dict[str, Any] = {
        "value": distributional_capacity(ch),
        "support_size": ch.n_inputs,
        "deterministic": ch.is_deterministic,
        "mode": exp.config.mode,
        "provenance": Provenance.EXACT,
    }
    if exp.learner.iterations > 1:
        results["per_iteration"] = [
            {
                "i": i,
                "value": time_indexed_capacity(
                    exp.learner,
                    i,
                    exp.dist,
                    cap=exp.config.enumeration_cap,
                    n_jobs=exp.n_jobs,
                ),
            }
            for i in range(1, exp.learner.iterations + 1)
        ]
    return AnalysisOutput(results)


def analyze_sup_capacity(exp: Experiment, options: dict[str, Any]) -> AnalysisOutput:
    result = sup_capacity(_channel(exp), options["tol"], options["max_iter"])
    results: dict[str, Any] = {
        "support": result.to_dict(),
        "provenance": Provenance.EXACT,
    }
    if options["iid"]:
        results["iid"] = iid_sup_capacity(
            exp.learner,
            exp.config.space,
            exp.config.n,
            starts=options["starts"],
            seed=exp.config.seed,
            mode=exp.config.mode,
            cap=exp.config.enumeration_cap,
            n_jobs=exp.n_jobs,
        ).to_dict()
    return AnalysisOutput(results)


def analyze_expressivity(exp: Experiment, options: dict[str, Any]) -> AnalysisOutput:
    ch = _channel(exp)
    at_sup = sup_capacity(ch)
    exact = Orientation(ch.output_marginal(), Provenance.EXACT, exp.config.mode)
    results = {
        "distributional": expressivity_decomposition(ch).to_dict(),
        "sup_input": expressivity_decomposition(ch, at_sup.achieving_input).to_dict(),
        "orientation": exact.to_dict(),
        "provenance": Provenance.EXACT,
    }
    return AnalysisOutput(results, orientations=[("expressivity", exact)])


def analyze_bias(exp: Experiment, options: dict[str, Any]) -> AnalysisOutput:
    t = target_from_risk(exp.hypotheses, exp.dist, exp.loss, options["epsilon"])
    cfg = exp.config
    o = orientation(exp.learner, exp.dist, cfg.mode, cfg.enumeration_cap, exp.n_jobs)
    results = {
        "epsilon": options["epsilon"],
        "target": list(t.bits),
        "target_size": t.norm_sq,
        "baseline": t.baseline,
        "degenerate": t.degenerate,
        "per_query_success": per_query_success(o, t),
        "bias": bias(o, t),
        "tradeoff": tradeoff_check(o, t).to_dict(),
        "provenance": Provenance.EXACT,
    }
    return AnalysisOutput(results, orientations=[("bias", o)])


def analyze_complexity(exp: Experiment, options: dict[str, Any]) -> AnalysisOutput:
    expected = expected_dataset_complexity(
        exp.dist, options["samples"], exp.config.seed, exp.config.enumeration_cap
    )
    return AnalysisOutput(expected.to_dict())


def analyze_bounds(exp: Experiment, options: dict[str, Any]) -> AnalysisOutput:
    cfg = exp.config
    t = target_from_risk(exp.hypotheses, exp.dist, exp.loss, options["epsilon"])
    reports = bound_suite(
        exp.learner, exp.dist, t, cfg.mode, cfg.enumeration_cap, exp.n_jobs
    )
    if options["ldm_K"] is not None:
        m = build_ldm(
            exp.learner, exp.dist, options["ldm_K"], cfg.seed, cfg.mode, exp.n_jobs
        )
        reports += ldm_bound_suite(m, t)
    results = {
        "epsilon": options["epsilon"],
        "reports": [report.to_dict() for report in reports],
    }
    return AnalysisOutput(results, reports=reports)


def analyze_ldm(exp: Experiment, options: dict[str, Any]) -> AnalysisOutput:
    cfg = exp.config
    k = options["K"]
    m = build_ldm(exp.learner, exp.dist, k, cfg.seed, cfg.mode, exp.n_jobs)
    low, high = bootstrap_interval(
        m,
        options["bootstrap"],
        options["confidence"],
        derive_seed(cfg.seed, "bootstrap", k),
    )
    estimated = ldm_orientation(m)
    results: dict[str, Any] = {
        "estimate": estimate_capacity(m).to_dict(),
        "ci_low": low,
        "ci_high": high,
        "confidence": options["confidence"],
        "bootstrap": options["bootstrap"],
        "orientation": estimated.to_dict(),
        "provenance": Provenance.LDM_ESTIMATE,
    }
    output = AnalysisOutput(results, orientations=[("ldm", estimated)])
    output.artifacts["ldm"] = m.write_csv
    if options["schedule"] is not None:
        trace = convergence_trace(
            exp.learner,
            exp.dist,
            options["schedule"],
            cfg.seed,
            options["bootstrap"],
            options["confidence"],
            cfg.mode,
            exp.n_jobs,
        )
        results["trace"] = [point.to_dict() for point in trace]
        output.artifacts["trace"] = lambda path: write_trace_csv(path, trace)
    return output


def analyze_vc(exp: Experiment, options: dict[str, Any]) -> AnalysisOutput:
    cfg = exp.config
    if options["classifiers"] == "hypotheses":
        cls = ClassifierClass.from_hypotheses(exp.hypotheses)
    elif options["classifiers"] == "thresholds":
        cls = ClassifierClass.thresholds(cfg.space.n_features)
    else:
        cls = ClassifierClass.full_tables(cfg.space)
    check = vc_capacity_bound_check(
        exp.learner,
        exp.dist,
        cls,
        options["sup"],
        cfg.mode,
        cfg.enumeration_cap,
        exp.n_jobs,
    )
    results = {
        "classifiers": options["classifiers"],
        "class_size": len(cls),
        "growth": [
            growth_function(cls, r, cfg.enumeration_cap) for r in range(1, cfg.n + 1)
        ],
        "check": check.to_dict(),
    }
    return AnalysisOutput(results)


def analyze_diagnostics(exp: Experiment, options: dict[str, Any]) -> AnalysisOutput:
    """Capacity overfitting, underfitting at every iteration (both the
    distributional and the sup variant), and per-model verdicts for the most
    probable model of each positive-probability dataset."""
    cfg = exp.config
    ch = _channel(exp)
    assert ch.input_support is not None
    expected = expected_dataset_complexity(
        exp.dist, options["samples"], cfg.seed, cfg.enumeration_cap
    ).value
    c_ad = distributional_capacity(ch)
    headline = [capacity_overfit(c_ad, expected, options["slack"])]
    for i in range(1, exp.learner.iterations + 1):
        for sup in (False, True):
            headline.append(
                underfit_at(
                    exp.learner,
                    i,
                    exp.dist,
                    expected,
                    sup,
                    cfg.enumeration_cap,
                    exp.n_jobs,
                )
            )
    verdicts = list(headline)
    models = []
    positive = np.flatnonzero(ch.input_probs.probs > 0.0)[: options["max_models"]]
    for d_idx in map(int, positive):
        g_idx = int(np.argmax(ch.rows[d_idx]))
        dataset = ch.input_support[d_idx]
        observed = observational_overfit(
            exp.hypotheses[g_idx], dataset, exp.dist, exp.loss
        )
        transfer = model_overfit(ch, g_idx, d_idx)
        verdicts += [observed, transfer]
        models.append(
            {
                "dataset": dataset.to_dict(),
                "hypothesis": g_idx,
                "observational": observed.to_dict(),
                "model": transfer.to_dict(),
            }
        )
    tally: dict[str, Counter[str]] = {}
    for verdict in verdicts:
        tally.setdefault(verdict.kind.value, Counter())[verdict.decision.value] += 1
    results = {
        "expected_complexity": expected,
        "verdicts": [verdict.to_dict() for verdict in headline],
        "models": models,
        "tally": {kind: dict(sorted(counts.items())) for kind, counts in tally.items()},
    }
    return AnalysisOutput(results, verdicts=verdicts)


def analyze_halting_demo(exp: Experiment, options: dict[str, Any]) -> AnalysisOutput:
    cfg = exp.config
    if options["corpus"] is not None:
        corpus = load_corpus(Path(options["corpus"]))
    else:
        corpus = standard_corpus()
    if not corpus:
        raise ConfigError("analyses.halting_demo.corpus: no *.cm programs found")
    train_set = Dataset(cfg.space, tuple(map(tuple, options["train_set"])))
    programs = []
    for entry in corpus:
        ap = build_a_prime(
            entry.program,
            entry.registers,
            train_set,
            cfg.space,
            exp.hypotheses,
            exp.loss,
        )
        checks = [
            overfit_iff_halts(ap, exp.dist, exp.loss, budget)
            for budget in options["budgets"]
        ]
        programs.append(
            {
                "name": entry.name,
                "input": list(entry.registers),
                "expected_steps": entry.expected_steps,
                "checks": [check.to_dict() for check in checks],
            }
        )
    results = {
        "train_set": train_set.to_dict(),
        "budgets": options["budgets"],
        "programs": programs,
        "all_agree": all(c["agree"] for p in programs for c in p["checks"]),
    }
    LOG.info("Halting demo over %s", quantity(len(programs), "program"))
    return AnalysisOutput(results)


def analyze_beta_sweep(exp: Experiment, options: dict[str, Any]) -> AnalysisOutput:
    points = []
    for beta in options["betas"]:
        ch = _channel(exp, GibbsERM(exp.hypotheses, exp.loss, beta))
        points.append(
            {
                "beta": beta,
                "capacity": distributional_capacity(ch),
                "expressivity": entropy(ch.output_marginal()),
            }
        )

    def _write(path: Path) -> None:
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["beta", "capacity", "expressivity"])
            for point in points:
                writer.writerow(
                    [
                        repr(float(point["beta"])),
                        repr(float(point["capacity"])),
                        repr(float(point["expressivity"])),
                    ]
                )

    output = AnalysisOutput({"points": points, "provenance": Provenance.EXACT})
    output.artifacts["beta_sweep"] = _write
    return output


ANALYSIS_RUNNERS: dict[str, Callable[[Experiment, dict[str, Any]], AnalysisOutput]] = {
    "capacity": analyze_capacity,
    "sup_capacity": analyze_sup_capacity,
    "expressivity": analyze_expressivity,
    "bias": analyze_bias,
    "complexity": analyze_complexity,
    "bounds": analyze_bounds,
    "ldm": analyze_ldm,
    "vc": analyze_vc,
    "diagnostics": analyze_diagnostics,
    "halting_demo": analyze_halting_demo,
    "beta_sweep": analyze_beta_sweep,
}


def run_analysis(exp: Experiment, name: str, options: dict[str, Any]) -> AnalysisOutput:
    LOG.info("Running %s", name)
    output = ANALYSIS_RUNNERS[name](exp, options)
    LOG.debug("Finished %s", name)
    return output


def jsonable(value: Any) -> Any:
    """Convert report values to plain JSON types; infinities become "inf"/"-inf"."""
    if isinstance(value, dict):
        return {str(key): jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(item) for item in value]
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def build_report(
    config: ExperimentConfig, outputs: dict[str, AnalysisOutput], generated_at: str
) -> dict[str, Any]:
    """JSON report; only `generated_at` differs between identical runs."""
    report: dict[str, Any] = jsonable(
        {
            "schema_version": REPORT_VERSION,
            "seed": config.seed,
            "config": config.to_dict(),
            "results": {name: output.results for name, output in outputs.items()},
        }
    )
    report["generated_at"] = generated_at
    return report


def write_summary_csv(path: Path, outputs: dict[str, AnalysisOutput]) -> None:
    """Columns analysis, item, result, lhs, rhs, detail."""
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["analysis", "item", "result", "lhs", "rhs", "detail"])
        for name, output in outputs.items():
            for verdict in output.verdicts:
                item = verdict.kind.value
                if verdict.variant:
                    item = f"{item}[{verdict.variant}]"
                writer.writerow(
                    [
                        name,
                        item,
                        verdict.decision.value,
                        repr(float(verdict.lhs)),
                        repr(float(verdict.rhs)),
                        verdict.detail,
                    ]
                )
            for report in output.reports:
                writer.writerow(
                    [
                        name,
                        report.bound_name,
                        "HOLDS" if report.holds else "VIOLATED",
                        repr(float(report.lhs)),
                        repr(float(report.rhs)),
                        "statistical" if report.statistical else "exact",
                    ]
                )


def error_origin(exc: BaseException) -> str:
    """Innermost caplab module on the traceback of `exc`."""
    origin = __name__
    tb = exc.__traceback__
    while tb is not None:
        module = tb.tb_frame.f_globals.get("__name__", "")
        if module == "caplab" or module.startswith("caplab."):
            origin = module
        tb = tb.tb_next
    return origin


class CapLab:
    """Experiment runner: validate a config and run its analyses."""

    def __init__(self) -> None:
        self.command = "run"
        self.config_path: Path | None = None
        self.output_dir = Path(".")
        self.threads: int | None = None
        self.seed_override: int | None = None

    def main(self, argv: list[str] | None = None) -> int:
        """Main entrypoint (parse args and call `run()`)

        Args:
            argv: specify command line args

        Return:
            0 on success, 2 for invalid input, 3 when an enumeration cap is hit,
            1 for anything else
        """
        self.process_args(argv)

        try:
            return self.run()

        except CapacityLimitError as exc:
            self.report_error(exc)
            return EXIT_CAPACITY_LIMIT

        except ValidationError as exc:
            self.report_error(exc)
            return EXIT_INVALID

        except Exception as exc:  # pylint: disable=broad-except
            summary_header()
            LOG.exception("[%s] internal error: %s", error_origin(exc), exc)
            return EXIT_FAILURE

    @staticmethod
    def report_error(exc: Exception) -> None:
        summary_header()
        LOG.error("[%s] %s", error_origin(exc), exc)
        LOG.debug("", exc_info=exc)

    def resolve_threads(self) -> int:
        """--threads, else $CAPLAB_THREADS, else 1.

        Raises:
            ConfigError: $CAPLAB_THREADS is not a positive integer.
        """
        if self.threads is not None:
            return self.threads
        value = os.environ.get(THREADS_ENV)
        if value is None:
            return 1
        try:
            threads = int(value)
        except ValueError:
            threads = 0
        if threads < 1:
            raise ConfigError(
                f"{THREADS_ENV} must be a positive integer, got {value!r}"
            )
        return threads

    def load(self) -> Experiment:
        assert self.config_path is not None
        config = ExperimentConfig.load(self.config_path)
        if self.seed_override is not None:
            config.seed = self.seed_override
        return Experiment.from_config(config)

    def run(self) -> int:
        """Validate the config, then (for `run`) execute every requested analysis
        and write the report and CSV artifacts.

        Returns:
            0 on success
        """
        experiment = self.load()
        config = experiment.config
        if self.command == "validate":
            LOG.info(
                "%s is valid, analyses: %s",
                self.config_path,
                ", ".join(config.analyses),
            )
            return EXIT_OK

        threads = self.resolve_threads()
        experiment.n_jobs = threads
        LOG.info(
            "Running %d analyses with %s",
            len(config.analyses),
            quantity(threads, "thread"),
        )
        outputs = dict(
            zip(
                config.analyses,
                Parallel(n_jobs=threads, prefer="threads")(
                    delayed(run_analysis)(experiment, name, options)
                    for name, options in config.analyses.items()
                ),
            )
        )
        self.write_outputs(config, outputs)
        log_summary(
            [v for output in outputs.values() for v in output.verdicts],
            [r for output in outputs.values() for r in output.reports],
        )
        return EXIT_OK

    def write_outputs(
        self, config: ExperimentConfig, outputs: dict[str, AnalysisOutput]
    ) -> None:
        """Write the JSON report and every CSV artifact to the output directory."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        generated_at = datetime.now(timezone.utc).isoformat()
        report_path = self.output_dir / config.output["report"]
        report = build_report(config, outputs, generated_at)
        report_path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
        LOG.info("Report written to %s", report_path)

        prefix = config.output["csv_prefix"]
        written = []
        for output in outputs.values():
            for suffix, writer in output.artifacts.items():
                path = self.output_dir / f"{prefix}_{suffix}.csv"
                writer(path)
                written.append(path)
        orientations = [o for output in outputs.values() for o in output.orientations]
        if orientations:
            path = self.output_dir / f"{prefix}_orientation.csv"
            write_orientations_csv(path, orientations)
            written.append(path)
        if any(output.verdicts or output.reports for output in outputs.values()):
            path = self.output_dir / f"{prefix}_summary.csv"
            write_summary_csv(path, outputs)
            written.append(path)
        for path in written:
            LOG.info("CSV written to %s", path)

    def process_args(self, argv: list[str] | None = None) -> None:
        """Parse command-line args and initialize self.

        Args:
            argv: specify command line args
        """
        parser = argparse.ArgumentParser(
            description="Information-theoretic learning capacity experiments",
            prog="caplab",
        )
        parser.add_argument(
            "command",
            choices=("run", "validate"),
            help="run the analyses, or only validate the config",
        )
        parser.add_argument("config", type=Path, help="experiment config (JSON)")
        parser.add_argument(
            "--output-dir",
            type=Path,
            default=Path("."),
            help="directory for the report and CSV files. default: .",
        )
        parser.add_argument(
            "--threads",
            type=int,
            help=f"worker threads. default: ${THREADS_ENV}, else 1",
        )
        parser.add_argument(
            "--seed-override", type=int, help="replace the seed from the config"
        )
        parser.add_argument(
            "-v", "--verbose", action="store_true", help="enable verbose debug logging"
        )
        args = parser.parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        if args.threads is not None and args.threads < 1:
            parser.error("--threads must be >= 1")
        if args.seed_override is not None and args.seed_override < 0:
            parser.error("--seed-override must be >= 0")

        self.command = args.command
        self.config_path = args.config
        self.output_dir = args.output_dir
        self.threads = args.threads
        self.seed_override = args.seed_override


def main() -> None:
    """caplab main entrypoint"""
    logging.basicConfig(format="%(message)s", level=logging.INFO)
    sys.exit(CapLab().main())
