#!/usr/bin/env python3
"""
Fano Identifiability Toolkit
Expected dimensions, conditionally generic instances, tangent verdicts,
finite-field censuses and stationary subspace analysis from the command line
"""

import argparse
import csv
import io
import json
import os
import sys
from typing import Dict, List, Optional

import numpy as np

from config import OUTPUT_FORMATS, RunConfig, config
from dims import (delta, forward_differences, identifiable, identifiable_rank_constrained,
                  min_epoch_differences, stratification_table)
from exactla import FieldDesc, FieldKind
from fano import conditional_instance, fano_points_fq, run_trials, stratified_counts, tangent_system, verdict
from forms import gram_of, system_from_json, system_to_json, vanishes_on
from grass import random_plane, subspace_distance
from logger import setup_logging
from models import (BudgetExceeded, ContractViolation, FanoParams, FanoToolError, MultiDegree,
                    ParameterError)
from ssa import (RecoveryOptions, estimate_cumulants, generate_instance, identifiability_report,
                 read_epoch_csv, read_population_json, recover_from_epochs, sample_epochs, write_epoch_csv)

logger = setup_logging()

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_PARAMETER = 2
EXIT_BUDGET = 3


def _flatten(data: dict, prefix: str = "") -> Dict[str, object]:
    flat = {}
    for key in sorted(data):
        value = data[key]
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, name + "."))
        elif isinstance(value, list) and value and isinstance(value[0], dict):
            continue
        else:
            flat[name] = json.dumps(value) if isinstance(value, list) else value
    return flat


def render_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def render_csv(report: dict) -> str:
    """The report's 'rows' as a CSV table, or key,value pairs when it has none"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    rows = report.get("rows")
    if rows:
        flat_rows = [_flatten(row) for row in rows]
        header = sorted({key for row in flat_rows for key in row})
        writer.writerow(header)
        for row in flat_rows:
            writer.writerow([row.get(key, "") for key in header])
    else:
        writer.writerow(["key", "value"])
        for key, value in _flatten(report).items():
            writer.writerow([key, value])
    return buffer.getvalue()


def render_table(report: dict) -> str:
    lines = []
    for key, value in _flatten({k: v for k, v in report.items() if k != "rows"}).items():
        if not key.startswith("provenance."):
            lines.append(f"{key}: {value}")
    rows = report.get("rows")
    if rows:
        flat_rows = [_flatten(row) for row in rows]
        header = list(flat_rows[0].keys())
        for row in flat_rows[1:]:
            header.extend(key for key in row if key not in header)
        cells = [[str(row.get(key, "")) for key in header] for row in flat_rows]
        widths = [max(len(h), *(len(c[i]) for c in cells)) for i, h in enumerate(header)]
        lines.append("")
        lines.append("  ".join(h.rjust(w) for h, w in zip(header, widths)))
        lines.append("  ".join("-" * w for w in widths))
        lines.extend("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells)
    return "\n".join(lines) + "\n"


RENDERERS = {"json": render_json, "csv": render_csv, "table": render_table}


class FanoToolService:
    """Runs one subcommand and emits its report"""

    def __init__(self, run_config: RunConfig, args: argparse.Namespace):
        self.run_config = run_config
        self.args = args
        self.progress = config.progress and not getattr(args, "no_progress", False)

    def run(self) -> dict:
        """Main entry point for a command"""
        handler = getattr(self, "_cmd_" + self.run_config.command.replace("-", "_"))
        logger.debug(f"running '{self.run_config.command}' with seed {self.run_config.seed}")
        report = handler()
        self._emit(report)
        return report

    def _emit(self, report: dict):
        text = RENDERERS[self.run_config.format](report)
        if self.run_config.output:
            with open(self.run_config.output, "w", encoding="utf-8") as f:
                f.write(text)
            logger.info(f"Report written to: {os.path.abspath(self.run_config.output)}")
        else:
            sys.stdout.write(text)

    # -- helpers --------------------------------------------------------------

    def _degrees(self) -> MultiDegree:
        return MultiDegree.parse(self.args.degrees)

    def _field(self) -> FieldDesc:
        return FieldDesc.parse(self.run_config.scalar_field)

    def _provenance(self, **parameters) -> dict:
        return self.run_config.provenance(**parameters)

    def _load_instance(self):
        path = self.args.instance
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ParameterError(f"cannot read instance {path}: {e}")
        return system_from_json(data)

    def _census_kwargs(self) -> dict:
        return {"budget": self.run_config.budget, "allow_large": self.run_config.allow_large}

    def _seeds(self) -> List[int]:
        return list(range(self.run_config.seed, self.run_config.seed + self.run_config.trials))

    # -- commands -------------------------------------------------------------

    def _cmd_dims(self) -> dict:
        args = self.args
        d = self._degrees()
        if args.rank is not None and any(di != 2 for di in d.degrees):
            raise ParameterError(f"--rank applies to quadric systems only, got degrees {list(d.degrees)}")
        params = FanoParams(args.n, args.k, d)
        report = {
            "provenance": self._provenance(n=args.n, k=args.k, degrees=list(d.degrees), rank=args.rank),
            "delta": delta(params),
            "rows": [row.to_dict() for row in stratification_table(params)],
        }
        if args.rank is not None:
            report["identifiable"] = identifiable_rank_constrained(args.n, d.s, args.k, args.rank)
        else:
            report["identifiable"] = identifiable(params)
        report["forward_differences"] = [row.to_dict() for row in forward_differences(params)]
        if all(di == 2 for di in d.degrees):
            thresholds = min_epoch_differences(args.n, args.k)
            report["epoch_thresholds"] = {
                "delta_based": thresholds.delta_based,
                "closed_form": thresholds.closed_form,
                "coarse_bound": thresholds.coarse_bound,
                "discrepancy": thresholds.discrepancy,
            }
        return report

    def _cmd_gen(self) -> dict:
        args = self.args
        d = self._degrees()
        field = self._field()
        if not field.is_exact:
            raise ParameterError("instances are generated over exact fields (rational or prime)")
        plane = None
        if args.generic_plane:
            plane = random_plane(args.n, args.k, np.random.default_rng(self.run_config.seed))
        system, L = conditional_instance(args.n, args.k, d.degrees, self.run_config.seed, args.rank,
                                         args.bound, plane)
        if field.kind == FieldKind.PRIME:
            system, L = system.reduce_mod(field.p), L.with_field(field)
        if args.verify:
            self._verify_instance(system, L, args.rank)
        data = system_to_json(system, L, as_gram=args.as_gram)
        data["provenance"] = self._provenance(n=args.n, k=args.k, degrees=list(d.degrees), rank=args.rank,
                                              field=str(field), bound=args.bound, generic_plane=args.generic_plane)
        return data

    def _verify_instance(self, system, L, rank: Optional[int]):
        for index, f in enumerate(system):
            if not vanishes_on(f, L):
                raise ContractViolation(f"generated form {index} does not vanish on the plane")
            if rank is not None and gram_of(f).rank() != rank:
                raise ContractViolation(f"generated quadric {index} has rank {gram_of(f).rank()}, expected {rank}")
        logger.info(f"verified {len(system)} form(s): restriction zero" + (f", rank {rank}" if rank else ""))

    def _cmd_tangent(self) -> dict:
        args = self.args
        if args.instance is None:
            return self._sweep(q=None)
        system, plane = self._load_instance()
        if plane is None:
            raise ParameterError("tangent needs an instance with a plane")
        ts = tangent_system(system, plane)
        result = verdict(system, plane)
        report = {
            "provenance": self._provenance(instance=os.path.basename(args.instance), field=str(system.field)),
            "n": system.n,
            "k": plane.k,
            "rank": ts.rank,
            "shape": list(ts.matrix.shape),
            **result.to_dict(),
        }
        if args.show_matrix:
            report["columns"] = ts.labels()
            report["matrix"] = ts.matrix.to_json()
        return report

    def _cmd_census(self) -> dict:
        args = self.args
        if args.instance is None:
            if self.run_config.q is None:
                raise ParameterError("census sweeps need --q")
            return self._sweep(q=self.run_config.q)
        system, plane = self._load_instance()
        k = args.k if args.k is not None else (plane.k if plane is not None else None)
        if k is None:
            raise ParameterError("census needs --k or an instance with a plane")
        q = self.run_config.q if self.run_config.q is not None else system.field.p
        points = fano_points_fq(system, k, q, progress=self.progress, **self._census_kwargs())
        report = {
            "provenance": self._provenance(instance=os.path.basename(args.instance), k=k, q=q),
            "k": k,
            "q": q,
            "count": len(points),
            "planes": [p.to_json() for p in points],
        }
        if plane is not None and plane.k == k:
            strata = stratified_counts(system, k, plane, q, points=points)
            report["strata"] = {str(key): value for key, value in sorted(strata.items())}
        return report

    def _sweep(self, q: Optional[int]) -> dict:
        args = self.args
        if args.n is None or args.k is None:
            raise ParameterError("sweeps need --n and --k (or pass --instance)")
        d = self._degrees()
        summary = run_trials(args.n, args.k, d.degrees, self._seeds(), q=q, rank=args.rank,
                             bound=args.bound, point_tangents=getattr(args, "point_tangents", False),
                             progress=self.progress, **self._census_kwargs())
        report = summary.to_dict()
        report["rows"] = report.pop("trials")
        report["provenance"] = self._provenance(n=args.n, k=args.k, degrees=list(d.degrees), rank=args.rank,
                                                q=q, trials=self.run_config.trials, bound=args.bound)
        return report

    def _cmd_ssa_gen(self) -> dict:
        args = self.args
        rng = np.random.default_rng(self.run_config.seed)
        instance = generate_instance(args.n, args.k, args.s, args.rank, rng)
        report = instance.to_json()
        if args.samples is not None:
            if not args.samples_dir:
                raise ParameterError("--samples needs --samples-dir")
            os.makedirs(args.samples_dir, exist_ok=True)
            files = []
            for i, data in enumerate(sample_epochs(instance, args.samples, rng)):
                path = os.path.join(args.samples_dir, f"epoch_{i}.csv")
                write_epoch_csv(path, data)
                files.append(os.path.basename(path))
            report["sample_files"] = files
            logger.info(f"wrote {len(files)} epoch file(s) to {os.path.abspath(args.samples_dir)}")
        report["provenance"] = self._provenance(n=args.n, k=args.k, s=args.s, rank=args.rank, samples=args.samples)
        return report

    def _cmd_ssa_report(self) -> dict:
        args = self.args
        report = identifiability_report(args.n, args.k, args.s, args.rank).to_dict()
        report["provenance"] = self._provenance(n=args.n, k=args.k, s=args.s, rank=args.rank)
        return report

    def _cmd_ssa_recover(self) -> dict:
        args = self.args
        truth = None
        if args.instance:
            instance = read_population_json(args.instance)
            epochs, truth = instance.epochs, instance.ground_truth
            source = os.path.basename(args.instance)
        elif args.epochs:
            epochs = [estimate_cumulants(read_epoch_csv(path), unbiased=not args.biased) for path in args.epochs]
            source = [os.path.basename(path) for path in args.epochs]
        else:
            raise ParameterError("ssa-recover needs --instance or --epochs")
        k = args.k if args.k is not None else (truth.k if truth is not None else None)
        if k is None:
            raise ParameterError("ssa-recover needs --k when the data has no ground truth")
        opts = RecoveryOptions(
            restarts=args.restarts or config.restarts,
            max_iterations=args.max_iterations or config.max_iterations,
            residual_tolerance=args.residual_tolerance or config.residual_tolerance,
            cluster_radius=args.cluster_radius or config.cluster_radius,
            progress=self.progress,
        )
        result = recover_from_epochs(epochs, k, opts, np.random.default_rng(self.run_config.seed),
                                     rank_tol=self.run_config.tolerance)
        rows = []
        for cluster in result.clusters:
            row = cluster.to_dict()
            if truth is not None:
                chordal, angle = subspace_distance(cluster.plane, truth)
                row.update(chordal_to_truth=chordal, max_angle_to_truth=angle)
            rows.append(row)
        diagnostics = {key: value for key, value in result.diagnostics.items() if key != "iterations"}
        report = {
            "provenance": self._provenance(source=source, k=k, restarts=opts.restarts,
                                           residual_tolerance=opts.residual_tolerance,
                                           tolerance=self.run_config.tolerance),
            "clusters": len(result.clusters),
            "diagnostics": diagnostics,
            "rows": rows,
        }
        n_eff = result.diagnostics.get("effective_n")
        s = result.diagnostics.get("quadrics", 0)
        if n_eff is not None and 0 <= k < n_eff and s >= 2:
            report["identifiability"] = identifiability_report(n_eff, k, s).to_dict()
        return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fano-identifiability",
                                     description="Fano-scheme identifiability toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help=f"base seed (default {config.seed})")
    common.add_argument("--format", choices=OUTPUT_FORMATS, help=f"report format (default {config.output_format})")
    common.add_argument("--output", help="write the report here instead of stdout")
    common.add_argument("--tolerance", type=float, help=f"numeric tolerance (default {config.tolerance})")
    common.add_argument("--log-dir", help="also write a session log into this folder")
    common.add_argument("--verbose", action="store_true", help="debug output on the console")
    common.add_argument("--no-progress", action="store_true", help="hide progress bars")

    problem = argparse.ArgumentParser(add_help=False)
    problem.add_argument("--n", type=int, help="ambient projective dimension")
    problem.add_argument("--k", type=int, help="plane dimension")
    problem.add_argument("--degrees", default="2,2", help="multidegree, e.g. 2,2,3")
    problem.add_argument("--rank", type=int, help="Gram rank r of every quadric (needs r >= 2k+2)")
    problem.add_argument("--bound", type=int, help=f"coefficient bound (default {config.coefficient_bound})")

    enumeration = argparse.ArgumentParser(add_help=False)
    enumeration.add_argument("--q", type=int, help="prime field size")
    enumeration.add_argument("--budget", type=int, help=f"enumeration budget (default {config.budget})")
    enumeration.add_argument("--allow-large", action="store_true", help="ignore the enumeration budget")
    enumeration.add_argument("--trials", type=int, help=f"seeded trials for sweeps (default {config.trials})")

    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("dims", parents=[common, problem], help="expected dimensions and thresholds")

    gen = sub.add_parser("gen", parents=[common, problem], help="conditionally generic instance as JSON")
    gen.add_argument("--field", default="rational", help="rational or prime:p")
    gen.add_argument("--generic-plane", action="store_true", help="random plane instead of span(e_0..e_k)")
    gen.add_argument("--as-gram", action="store_true", help="write quadrics as Gram matrices")
    gen.add_argument("--verify", action="store_true", help="re-check restriction and rank before writing")

    tangent = sub.add_parser("tangent", parents=[common, problem, enumeration], help="local tangent verdict")
    tangent.add_argument("--instance", help="instance JSON with a plane")
    tangent.add_argument("--show-matrix", action="store_true", help="include the tangent matrix")

    census = sub.add_parser("census", parents=[common, problem, enumeration], help="finite-field Fano census")
    census.add_argument("--instance", help="instance JSON")
    census.add_argument("--point-tangents", action="store_true", help="tangent dimension at every found plane")

    ssa_gen = sub.add_parser("ssa-gen", parents=[common, problem], help="synthetic SSA instance")
    ssa_gen.add_argument("--s", type=int, required=True, help="number of epoch differences")
    ssa_gen.add_argument("--samples", type=int, help="also draw this many samples per epoch")
    ssa_gen.add_argument("--samples-dir", help="folder for the epoch CSV files")

    ssa_report = sub.add_parser("ssa-report", parents=[common, problem], help="identifiability report")
    ssa_report.add_argument("--s", type=int, required=True, help="number of epoch differences")

    ssa_recover = sub.add_parser("ssa-recover", parents=[common], help="recover the stationary subspace")
    ssa_recover.add_argument("--instance", help="population instance JSON")
    ssa_recover.add_argument("--epochs", nargs="+", help="epoch CSV files, epoch 0 first")
    ssa_recover.add_argument("--k", type=int, help="plane dimension (defaults to the ground truth's)")
    ssa_recover.add_argument("--biased", action="store_true", help="covariance divisor m instead of m-1")
    ssa_recover.add_argument("--restarts", type=int)
    ssa_recover.add_argument("--max-iterations", type=int)
    ssa_recover.add_argument("--residual-tolerance", type=float)
    ssa_recover.add_argument("--cluster-radius", type=float)
    return parser


def _require(args, *names):
    missing = [f"--{name.replace('_', '-')}" for name in names if getattr(args, name, None) is None]
    if missing:
        raise ParameterError(f"'{args.command}' needs {', '.join(missing)}")


def run(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run the command, return the exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_PARAMETER if e.code else EXIT_OK

    global logger
    logger = setup_logging(args.log_dir, args.verbose)

    if not config.validate():
        logger.error(f"Invalid configuration: {', '.join(config.get_invalid_settings())}")
        return EXIT_PARAMETER

    try:
        if args.command in ("dims", "gen", "ssa-gen", "ssa-report"):
            _require(args, "n", "k")
        run_config = RunConfig.from_args(args)
        FanoToolService(run_config, args).run()
        return EXIT_OK
    except BudgetExceeded as e:
        logger.error(f"Budget exceeded: {e}")
        return EXIT_BUDGET
    except ParameterError as e:
        logger.error(f"Invalid parameters: {e}")
        return EXIT_PARAMETER
    except ContractViolation as e:
        logger.error(f"Contract violation: {e}")
        return EXIT_INTERNAL
    except FanoToolError as e:
        logger.error(f"Error: {e}")
        return EXIT_INTERNAL
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return EXIT_INTERNAL
    except Exception as e:
        logger.error(f"Unexpected error: {e}")
        return EXIT_INTERNAL


def main():
    """Main entry point"""
    sys.exit(run())


if __name__ == "__main__":
    main()
