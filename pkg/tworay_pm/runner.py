"""
Runner - experiment stages for the command line

Each stage writes its CSV artifacts through the shared manifest. A failing
stage is reported by name together with the files written before it.
"""

from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .ber_sim import BER_COLUMNS, BerSweep, los_comparison, received_values, run_ber
from .closed_form import LOS_ONLY, FixedArrayDesign, concordance_study, design_fixed_array
from .config import RunConfig
from .errors import StageError
from .geometry import desired_paths, ring_paths
from .reporting import Manifest, RunReport
from .sparse_design import (
    GroupSparseProblem, SparseDesignResult, finalize, reweight_iterate, solve_group_l1, summarize,
)
from .targets import rng_metadata

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("label", "antenna_number", "aperture", "average_spacing", "error_norm",
                   "pre_polish_error_norm", "constraint_residual")
TRACE_COLUMNS = ("design", "iteration", "objective", "weighted_objective", "weighted_previous",
                 "log_surrogate", "feasibility_residual", "ball_slack", "surviving_count", "solver_iterations",
                 "duality_gap")
PATTERN_COLUMNS = ("position", "radius", "eta_deg", "symbol", "bits", "magnitude_db", "phase_deg")
WEIGHT_COLUMNS = ("antenna", "offset", "symbol", "real", "imag", "magnitude")
CONCORDANCE_COLUMNS = ("instance", "antennas", "desired", "eavesdroppers", "concordant", "relative_difference",
                       "constraint_residual", "objective_excess", "gram_mismatch", "projection_mismatch")


class StudyRunner:
    """Runs stages against one RunConfig and one output directory"""

    def __init__(self, config: RunConfig, out_dir: str | Path, command: str = "study"):
        self.config = config
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = Manifest(self.out_dir)
        self.report = RunReport(command=command, config_echo=config.to_toml(), rng=rng_metadata(config.seed))
        self.report.notes["snr_convention"] = "desired-location symbol power over total complex noise variance"
        self.geometry = config.geometry()
        self.spec = config.constellation_spec()
        self._ula: FixedArrayDesign | None = None
        self._sparse: dict[str, SparseDesignResult] | None = None
        self.alpha: float | None = None
        self.manifest.write_text("config.echo.toml", self.report.config_echo)

    @contextmanager
    def stage(self, name: str):
        log.info("stage %s: start", name)
        start = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except Exception as err:
            raise StageError(name, err, self.manifest.entries) from err
        finally:
            self.report.timings[name] = time.perf_counter() - start
        log.info("stage %s: done in %.2f s", name, self.report.timings[name])

    # designs, computed once and shared between stages

    @property
    def ula(self) -> FixedArrayDesign:
        if self._ula is None:
            c = self.config
            self._ula = design_fixed_array(c.ula_layout(), self.geometry, self.spec, rcond=c.rcond(),
                                           workers=c.workers, label="ula")
        return self._ula

    @property
    def sparse(self) -> dict[str, SparseDesignResult]:
        if self._sparse is None:
            c = self.config
            self.alpha = self.ula.error_norm if c.alpha_mode == "from-ula" else c.alpha
            log.info("alpha = %.10g (%s)", self.alpha, c.alpha_mode)
            problem = GroupSparseProblem.build(c.candidate_grid(), self.geometry, self.spec, self.alpha, c.gamma,
                                               rcond=c.rcond())
            options = c.admm_options() if c.solver == "admm" else None
            usual = solve_group_l1(problem, backend=c.solver, options=options)
            self._sparse = {
                "usual-l1": finalize(problem, usual, "usual-l1"),
                "reweighted": reweight_iterate(problem, c.max_reweight_iters, backend=c.solver,
                                               options=options, initial=usual),
            }
        return self._sparse

    @property
    def design(self) -> FixedArrayDesign:
        """Design that patterns and BER are evaluated for"""
        if self.config.mode == "sparse":
            return self.sparse["reweighted"].polished
        return self.ula

    # artifacts

    def _write_weights(self, name: str, design: FixedArrayDesign):
        W = design.weights.weights
        rows = [(n, design.layout.offsets[n], m, W[n, m].real, W[n, m].imag, abs(W[n, m]))
                for n in range(W.shape[0]) for m in range(W.shape[1])]
        self.manifest.write_csv(name, WEIGHT_COLUMNS, rows)

    def _summary_row(self, result, pre_polish=None) -> dict:
        row = asdict(summarize(result))
        design = getattr(result, "polished", result)
        row["pre_polish_error_norm"] = pre_polish
        row["constraint_residual"] = design.constraint_residual
        return row

    def run_ula(self):
        with self.stage("ula"):
            design = self.ula
            self._write_weights("ula_weights.csv", design)
            self.manifest.write_csv(
                "ula_symbol_errors.csv", ("symbol", "bits", "error_norm", "solve_path", "numerical_rank",
                                           "rcond", "objective_excess"),
                [(m, self.spec.bit_labels[m], design.symbol_error_norms[m], s.path, s.rank, s.rcond,
                  s.objective_excess) for m, s in enumerate(design.solves)],
            )
            self.report.notes["ula_error_norm"] = design.error_norm
            # truncation raises the objective above the unregularised minimiser by this much
            self.report.notes["ula_objective_excess"] = design.objective_excess

    def run_sparse(self):
        with self.stage("sparse"):
            results = self.sparse
            self.report.notes["alpha"] = self.alpha
            self.report.notes["polish"] = {label: result.polish for label, result in results.items()}
            trace_rows = []
            for label, result in results.items():
                self._write_weights(f"{label}_weights.csv", result.polished)
                trace_rows += [(label, *asdict(rec).values()) for rec in result.trace]
            self.manifest.write_csv("sparse_trace.csv", TRACE_COLUMNS, trace_rows)
            grid = self.config.candidate_grid()
            self.manifest.write_csv(
                "group_norms.csv", ("antenna", "offset", "usual_l1", "reweighted"),
                [(n, grid.offsets[n], results["usual-l1"].grid_group_norms[n],
                  results["reweighted"].grid_group_norms[n]) for n in range(grid.count)],
            )

    def run_summary(self):
        with self.stage("summary"):
            rows = []
            if self.config.stage_ula or self._ula is not None:
                rows.append(self._summary_row(self.ula))
            if self._sparse is not None:
                for result in self._sparse.values():
                    rows.append(self._summary_row(result, result.pre_polish_error_norm))
            self.report.summary = rows
            self.manifest.write_csv("summary.csv", SUMMARY_COLUMNS,
                                    [tuple(row[c] for c in SUMMARY_COLUMNS) for row in rows])

    def run_patterns(self):
        with self.stage("patterns"):
            self.manifest.write_csv("patterns.csv", PATTERN_COLUMNS, run_pattern_sweep(self.config, self.design))

    def run_ber(self):
        with self.stage("ber"):
            design = self.design
            sweep = run_ber(design.weights, design.layout, self.geometry, self.spec, self.config.ber_config(),
                            label=design.label)
            self._write_ber("ber.csv", sweep)

    def run_los(self):
        with self.stage("los"):
            c = self.config
            layout = self.design.layout
            variants = {"redesign": c.los_weights in ("redesign", "both"),
                        "reuse": c.los_weights in ("reuse", "both")}
            if variants["redesign"]:
                los_design = design_fixed_array(layout, self.geometry, self.spec, channel_mode=LOS_ONLY,
                                                rcond=c.rcond(), workers=c.workers, label="los-redesign")
                sweep = los_comparison(los_design.weights, layout, self.geometry, self.spec, c.ber_config(),
                                       label="los-redesign")
                self._write_ber("ber_los_redesign.csv", sweep)
            if variants["reuse"]:
                sweep = los_comparison(self.design.weights, layout, self.geometry, self.spec, c.ber_config(),
                                       label="los-reuse")
                self._write_ber("ber_los_reuse.csv", sweep)

    def run_concordance(self):
        with self.stage("concordance"):
            records = concordance_study(self.config.concordance_instances, self.config.seed)
            self.manifest.write_csv("concordance.csv", CONCORDANCE_COLUMNS,
                                    [tuple(asdict(r).values()) for r in records])
            agreeing = sum(r.concordant for r in records)
            self.report.notes["printed_formula"] = {
                "instances": len(records),
                "agreeing": agreeing,
                "finding": "agrees with the KKT solution" if agreeing == len(records)
                else "systematic disagreement with the KKT solution",
                "median_relative_difference": float(np.nanmedian([r.relative_difference for r in records])),
            }

    def _write_ber(self, name: str, sweep: BerSweep):
        self.manifest.write_csv(name, BER_COLUMNS, sweep.rows())
        self.report.notes.setdefault("desired_ber", {})[sweep.label] = sweep.desired.ber

    def finish(self) -> RunReport:
        self.manifest.add_self("report.json")
        self.report.manifest = list(self.manifest.entries)
        self.report.write(self.out_dir)
        return self.report


def run_pattern_sweep(config: RunConfig, design: FixedArrayDesign | None = None) -> list[tuple]:
    """Magnitude (dB) and phase (degrees) per symbol at the desired receiver and every ring position"""
    geo = config.geometry()
    spec = config.constellation_spec()
    if design is None:
        design = design_fixed_array(config.ula_layout(), geo, spec, rcond=config.rcond(),
                                    workers=config.workers)
    W, layout = design.weights, design.layout
    mode = design.channel_mode

    rows = []

    def emit(position, radius, eta, values):
        for m, value in enumerate(values):
            rows.append((position, radius, eta, m, spec.bit_labels[m],
                         20.0 * np.log10(abs(value)), np.degrees(np.angle(value))))

    emit("desired", 0.0, 0.0, received_values(W, layout, desired_paths(geo), mode)[:, 0])
    ring = received_values(W, layout, ring_paths(geo), mode)
    for k, eta in enumerate(geo.ring_angles_deg):
        emit("eavesdropper", geo.ring_radius, eta, ring[:, k])
    return rows


def run_full_study(config: RunConfig, out_dir: str | Path) -> RunReport:
    """ULA design, sparse designs, summary, patterns, BER sweeps, LOS comparison and concordance"""
    runner = StudyRunner(config, out_dir, "study")
    try:
        if config.stage_ula:
            runner.run_ula()
        if config.stage_sparse:
            runner.run_sparse()
        if config.stage_ula or config.stage_sparse:
            runner.run_summary()
        if config.stage_patterns:
            runner.run_patterns()
        if config.stage_ber:
            runner.run_ber()
        if config.stage_los:
            runner.run_los()
        if config.stage_concordance:
            runner.run_concordance()
    except StageError as err:
        runner.finish()
        err.manifest = list(runner.manifest.entries)
        raise
    return runner.finish()


def run_command(command: str, config: RunConfig, out_dir: str | Path) -> RunReport:
    """One CLI subcommand"""
    if command == "study":
        return run_full_study(config, out_dir)
    runner = StudyRunner(config, out_dir, command)
    steps = {
        "design-ula": [runner.run_ula, runner.run_summary],
        "design-sparse": [runner.run_sparse, runner.run_summary],
        "patterns": [runner.run_patterns],
        "ber": [runner.run_ber],
    }[command]
    try:
        for step in steps:
            step()
    except StageError as err:
        runner.finish()
        err.manifest = list(runner.manifest.entries)
        raise
    return runner.finish()


