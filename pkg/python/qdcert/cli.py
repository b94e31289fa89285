"""
Command-line front end. Every subcommand writes ``<out>/report.json`` with the effective configuration and exits with

* 0 when the domain is certified disjoint or the check passed,
* 1 when an overlap was detected, the check failed, or an evaluation error stopped the run,
* 2 when the overlap decision is inconclusive,
* 64 on usage errors (unknown flags, malformed JSON, malformed input specifications).
"""

import argparse
import json
import logging
import math
import sys
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from qdcert import ChainError, GuardError, NumericalError, SpecificationError, __version__
from qdcert.config import Configuration
from qdcert.domains import (
    DiskSpec,
    QuadratureDomain,
    make_archipelago,
    parse_archipelago,
    parse_complex,
    parse_quadrature_domain,
)
from qdcert.kernels import (
    EvaluationPath,
    KernelEvaluator,
    PointQuad,
    antidiagonal_L,
    exp_transform,
    identity_suite,
    kernel_L,
    kernel_M_N,
)
from qdcert.leveldeform import branch_points, density_field, interface_fidelity, quadrature_identity_check
from qdcert.matrix_chain import (
    chain_run,
    chain_trace_table,
    merging_gram_residual,
    seed_from_domain,
    two_disk_seed,
    two_disk_threshold_table,
    write_chain_trace,
)
from qdcert.positivity import OverlapVerdict, decide_overlap
from qdcert.sampling import SamplePlan
from qdcert.spherical import orthogonal_halfplane_check, spherical_area
from qdcert.timer import time_block

__all__ = ["EXIT_FAIL", "EXIT_INCONCLUSIVE", "EXIT_PASS", "EXIT_USAGE", "main"]

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INCONCLUSIVE = 2
EXIT_USAGE = 64

REPORT_NAME = "report.json"
CHAIN_TRACE_NAME = "chain_trace.csv"
DENSITY_GRID_NAME = "density_grid.csv"

QUADRATURE_REL_TOLERANCE = 0.005
KERNEL_PATH_TOLERANCE = 1e-8
IDENTITY_TOLERANCE = 1e-10
OPERATOR_GRAM_TOLERANCE = 1e-8
SPHERE_AREA_TOLERANCE = 1e-6
MIN_THRESHOLD_STEPS = 3
IDENTITY_BLOCKS = 40
IDENTITY_OPERATOR_POINTS = 8

_OVERLAP_EXIT_CODES = {
    OverlapVerdict.DISJOINT_CERTIFIED: EXIT_PASS,
    OverlapVerdict.OVERLAP_DETECTED: EXIT_FAIL,
    OverlapVerdict.INCONCLUSIVE: EXIT_INCONCLUSIVE,
}


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    """Raises instead of exiting so that usage errors map to exit code 64."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _band(value: str) -> Tuple[float, float]:
    try:
        lo, hi = (float(part) for part in value.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {value!r}") from e
    return lo, hi


def _point(value: str) -> PointQuad:
    parts = value.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"expected w,z,u,v, got {value!r}")
    try:
        return PointQuad.of(*(parse_complex(p) for p in parts))
    except SpecificationError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _load_json(value: str) -> Any:
    """Inline JSON, or the path of a JSON file."""
    path = Path(value)
    try:
        text = path.read_text() if path.is_file() else value
    except OSError:
        text = value
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise UsageError(f"malformed JSON {value!r}: {e}") from e


def _jsonable(obj) -> Any:
    if hasattr(obj, "as_dict"):
        return _jsonable(obj.as_dict())
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, complex):
        return [_jsonable(obj.real), _jsonable(obj.imag)]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _domain(args) -> QuadratureDomain:
    if getattr(args, "pq", None):
        return parse_quadrature_domain(_load_json(args.pq))
    if getattr(args, "disks", None):
        return QuadratureDomain.from_archipelago(parse_archipelago(_load_json(args.disks)))
    raise UsageError("one of --disks or --pq is required")


def _disks(args) -> List[DiskSpec]:
    if not getattr(args, "disks", None):
        return []
    return list(parse_archipelago(_load_json(args.disks)).disks)


def _plan(ev: KernelEvaluator, config: Configuration) -> SamplePlan:
    return SamplePlan.for_evaluator(ev, config.samples, config.seed, config.band)


def overlap_subcommand(args, config: Configuration, durations: Dict[str, float]) -> Tuple[int, Dict]:
    domain = _domain(args)
    plan = None
    if config.band is not None:
        plan = _plan(KernelEvaluator(domain, config.guard, config.switchover), config)
    with time_block("decide_overlap", durations):
        decision = decide_overlap(
            domain,
            plan,
            config.max_iter,
            config.tol,
            config.sampled_violation_factor,
            config.guard,
            config.samples,
            config.seed,
            config.norm_cap,
        )
    return _OVERLAP_EXIT_CODES[decision.verdict], decision.as_dict()


def chain_subcommand(args, config: Configuration, durations: Dict[str, float]) -> Tuple[int, Dict]:
    result: Dict[str, Any] = {}
    code = EXIT_PASS
    if args.thresholds is not None:
        if args.thresholds < MIN_THRESHOLD_STEPS:
            raise UsageError(f"--thresholds needs at least {MIN_THRESHOLD_STEPS} steps, got {args.thresholds}")
        with time_block("thresholds", durations):
            result["thresholds"] = two_disk_threshold_table(args.thresholds, config.tol)
        if args.two_disk_a is None and not (args.disks or args.pq):
            return code, result

    with time_block("chain", durations):
        if args.two_disk_a is not None:
            seed = two_disk_seed(args.two_disk_a, config.tol)
        else:
            seed = seed_from_domain(_domain(args), config.tol, config.rank_tol)
        report, history = chain_run(seed, config.max_iter, config.tol, config.norm_cap, config.singular_cond)
    result["chain"] = report.as_dict()
    write_chain_trace(chain_trace_table(history, report), Path(args.out) / CHAIN_TRACE_NAME)
    result["trace"] = CHAIN_TRACE_NAME
    if not report.certified:
        code = EXIT_FAIL
    return code, result


def kernel_subcommand(args, config: Configuration, durations: Dict[str, float]) -> Tuple[int, Dict]:
    if args.point is None:
        raise UsageError("kernel needs --point w,z,u,v")
    ev = KernelEvaluator(_domain(args), config.guard, config.switchover)
    q = args.point
    with time_block("kernel", durations):
        values: Dict[str, Any] = {
            "E(w,z)": exp_transform(ev, q.w, q.z),
            "L": kernel_L(ev, q),
            "L_divided": kernel_L(ev, q, EvaluationPath.DIVIDED),
            "antidiagonal_L(w,z)": antidiagonal_L(ev, q.w, q.z),
        }
        values["M(w,z)"], values["N(w,z)"] = kernel_M_N(ev, q.w, q.z)
        agreement = 0.0
        if q.v != q.w and q.u != q.z:
            values["L_quotient"] = kernel_L(ev, q, EvaluationPath.QUOTIENT)
            agreement = abs(values["L_quotient"] - values["L_divided"]) / max(1.0, abs(values["L"]))
    result = {"point": list(q), "values": values, "path_disagreement": agreement}
    return (EXIT_PASS if agreement <= KERNEL_PATH_TOLERANCE else EXIT_FAIL), result


def levelset_subcommand(args, config: Configuration, durations: Dict[str, float]) -> Tuple[int, Dict]:
    if args.t is None:
        raise UsageError("levelset needs --t")
    with time_block("density_field", durations):
        field = density_field(args.t, config.grid_n, config.x_max)
    with time_block("quadrature", durations):
        check = quadrature_identity_check(args.t, args.h, field=field)
    result: Dict[str, Any] = {
        "quadrature": check.as_dict(),
        "branch_points": branch_points(args.t)._asdict(),
        "mass": field.mass,
        "hole_cells": field.hole_cells,
        "interface_fidelity": interface_fidelity(field),
        "unsupported": field.unsupported,
    }
    if args.grid_csv:
        field.write_csv(Path(args.out) / DENSITY_GRID_NAME)
        result["grid"] = DENSITY_GRID_NAME
    return (EXIT_PASS if check.rel_err <= QUADRATURE_REL_TOLERANCE else EXIT_FAIL), result


def sphere_subcommand(args, config: Configuration, durations: Dict[str, float]) -> Tuple[int, Dict]:
    with time_block("sphere", durations):
        pair = orthogonal_halfplane_check(config.sphere_n)
        areas = [spherical_area(d, config.sphere_n) for d in _disks(args)]
    passed = pair.passed() and all(a.abs_err <= SPHERE_AREA_TOLERANCE for a in areas)
    return (EXIT_PASS if passed else EXIT_FAIL), {"orthogonal_pair": pair.as_dict(), "areas": areas}


def _identity_quads(ev: KernelEvaluator, config: Configuration) -> List[PointQuad]:
    w, z = _plan(ev, config).sample_pairs()
    count = len(w)
    return [PointQuad.of(w[k], z[k], w[(k + 1) % count], z[(k + 1) % count]) for k in range(count)]


def identities_subcommand(args, config: Configuration, durations: Dict[str, float]) -> Tuple[int, Dict]:
    disks = _disks(args)
    if len(disks) < 2:
        raise UsageError("identities needs at least two disks in --disks")
    d1, d2 = disks[:2]
    ev1 = KernelEvaluator(make_archipelago([d1]), config.guard)
    ev2 = KernelEvaluator(make_archipelago([d2]), config.guard)
    union = KernelEvaluator(make_archipelago([d1, d2]), config.guard)
    quads = [args.point] if args.point is not None else _identity_quads(union, config)

    with time_block("identities", durations):
        suites = [identity_suite(ev1, ev2, q) for q in quads]
    worst = {field: max(getattr(s, field) for s in suites) for field in suites[0]._fields}
    worst["reverse_cauchy_schwarz"] = min(s.reverse_cauchy_schwarz for s in suites)
    passed = all(s.passed(IDENTITY_TOLERANCE) for s in suites)
    result: Dict[str, Any] = {"quadruples": len(quads), "residuals": worst}

    points = [q.w for q in quads[:IDENTITY_OPERATOR_POINTS]]
    try:
        with time_block("merging_gram", durations):
            merging = merging_gram_residual(d1, d2, IDENTITY_BLOCKS, points, config.tol)
        result["merging"] = merging.as_dict()
        passed = (
            passed
            and merging.closed_form <= IDENTITY_TOLERANCE
            and merging.operator_gram <= OPERATOR_GRAM_TOLERANCE
        )
    except SpecificationError as e:
        logger.info("operator merging check skipped: %s", e)
        result["merging"] = {"skipped": str(e)}
    return (EXIT_PASS if passed else EXIT_FAIL), result


def setup_global_log_arguments(parser, top_level=False):
    parser.add_argument(
        "--log",
        help="Set the python log level." if top_level else argparse.SUPPRESS,
        default="WARNING" if top_level else argparse.SUPPRESS,
    )
    parser.add_argument(
        "--verbose",
        "-v",
        help="Increase the logging verbosity." if top_level else argparse.SUPPRESS,
        action="count",
        default=0 if top_level else argparse.SUPPRESS,
    )


def setup_common_arguments(parser):
    parser.add_argument("--disks", help="Disks as JSON [[cx, cy, r], ...], inline or as a file path.")
    parser.add_argument("--pq", help="JSON file (or inline JSON) with the raw P and Q coefficients.")
    parser.add_argument("--max-iter", type=int, help="Number of chain steps (default 50).")
    parser.add_argument("--tol", type=float, help="Relative PSD tolerance (default 1e-10).")
    parser.add_argument("--samples", type=int, help="Number of sample points (default 32).")
    parser.add_argument("--band", type=_band, help="Radial sample band LO,HI (default [2 R0, 4 R0]).")
    parser.add_argument("--seed", type=int, help="Sampling seed (default 1).")
    parser.add_argument("--guard", type=float, help="Guard factor on the bounding radius (default 1.05).")
    parser.add_argument("--norm-cap", type=float, help="Chain norm cap (default 4 (R0 + 1)).")
    parser.add_argument("--out", default=".", help="Directory for the report and CSV outputs.")
    parser.add_argument("--no-timestamp", action="store_true", help="Leave timestamps and durations out of reports.")
    setup_global_log_arguments(parser)


def setup_overlap_subcommand(subparsers):
    parser = subparsers.add_parser("overlap", help="Decide whether the islands overlap in area measure.")
    setup_common_arguments(parser)
    parser.set_defaults(subcommand_impl=overlap_subcommand)


def setup_chain_subcommand(subparsers):
    parser = subparsers.add_parser("chain", help="Run the matrix chain and write its trace.")
    setup_common_arguments(parser)
    parser.add_argument("--two-disk-a", type=float, help="Use the unit disks centred at -a and a.")
    parser.add_argument("--thresholds", type=int, help="Also tabulate the two-disk thresholds for k = 0..K.")
    parser.set_defaults(subcommand_impl=chain_subcommand)


def setup_kernel_subcommand(subparsers):
    parser = subparsers.add_parser("kernel", help="Evaluate E, L, M and N at one quadruple.")
    setup_common_arguments(parser)
    parser.add_argument("--point", type=_point, help="The quadruple w,z,u,v as Python complex literals.")
    parser.set_defaults(subcommand_impl=kernel_subcommand)


def setup_levelset_subcommand(subparsers):
    parser = subparsers.add_parser("levelset", help="Check the quadrature identity of the level-set deformation.")
    setup_common_arguments(parser)
    parser.add_argument("--t", type=float, help="Level parameter in [0, 1].")
    parser.add_argument("--h", default="1", help="Harmonic test function: 1, z, z2, z3 or re_z2.")
    parser.add_argument("--n", type=int, help="Grid size (default 2000).")
    parser.add_argument("--x-max", type=float, help="Grid half-width (default 2.6).")
    parser.add_argument("--grid-csv", action="store_true", help=f"Also write {DENSITY_GRID_NAME}.")
    parser.set_defaults(subcommand_impl=levelset_subcommand)


def setup_sphere_subcommand(subparsers):
    parser = subparsers.add_parser("sphere", help="Check the spherical geometry of the orthogonal disk pair.")
    setup_common_arguments(parser)
    parser.add_argument("--n", dest="sphere_n", type=int, help="Quadrature and boundary samples (default 512).")
    parser.set_defaults(subcommand_impl=sphere_subcommand)


def setup_identities_subcommand(subparsers):
    parser = subparsers.add_parser("identities", help="Check the merging identities of the first two disks.")
    setup_common_arguments(parser)
    parser.add_argument("--point", type=_point, help="A single quadruple w,z,u,v instead of sampled ones.")
    parser.set_defaults(subcommand_impl=identities_subcommand)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="qdcert",
        description="""
Certify that planar disks (or quadrature domains) do not overlap, and run the accompanying verifications.
""",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    setup_global_log_arguments(parser, top_level=True)
    subparsers = parser.add_subparsers(title="subcommands")
    setup_overlap_subcommand(subparsers)
    setup_chain_subcommand(subparsers)
    setup_kernel_subcommand(subparsers)
    setup_levelset_subcommand(subparsers)
    setup_sphere_subcommand(subparsers)
    setup_identities_subcommand(subparsers)
    return parser


def write_report(out: Path, report: Dict) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / REPORT_NAME
    path.write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    logger.info("report written to %s", path)
    return path


def execute_subcommand(args) -> int:
    config: Configuration = args.configuration
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    durations: Dict[str, float] = {}
    report: Dict[str, Any] = {
        "command": args.command_name,
        "version": __version__,
        "configuration": config.as_dict(),
    }
    try:
        code, result = args.subcommand_impl(args, config, durations)
        report["result"] = result
    except (GuardError, NumericalError, ChainError) as e:
        logger.debug("Exception", exc_info=True)
        code = EXIT_FAIL
        report["error"] = {"category": type(e).__name__, "message": str(e)}
    report["exit_code"] = code
    if not args.no_timestamp:
        report["timestamp"] = datetime.now(timezone.utc).isoformat()
        report["durations"] = durations
    write_report(out, report)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=str(args.log).upper().strip())
        logging.root.setLevel(logging.root.level - args.verbose * 10)
        if not hasattr(args, "subcommand_impl"):
            parser.print_help()
            return EXIT_USAGE
        args.command_name = args.subcommand_impl.__name__[: -len("_subcommand")]
        args.configuration = Configuration(args)
        return execute_subcommand(args)
    except (UsageError, SpecificationError, ValueError) as e:
        logger.debug("Exception", exc_info=True)
        print(f"ERROR({type(e).__name__}): {e}", file=sys.stderr)
        return EXIT_USAGE
