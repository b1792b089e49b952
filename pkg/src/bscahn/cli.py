"""Command line driver: ``bscahn <subcommand> --config <path> [--out <dir>]``.

Exit codes: 0 on success, 2 on configuration errors, 3 on solver failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import ConfigError, dispatch, load_config
from .linalg import SingularMatrixError
from .system import ParameterError

SUBCOMMANDS = {
    "convergence-space": "convergence_space",
    "convergence-time": "convergence_time",
    "droplet": "droplet",
    "random-ic": "random_ic",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bscahn",
        description="Bulk-surface Cahn-Hilliard experiments "
                    "(P1 bulk-surface FEM, linearly implicit BDF)",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--dump-matrices", action="store_true",
                       help="export assembled operators in Matrix Market format")
    return parser


def _dump_matrices(cfg, out_dir: Path) -> None:
    from .fem import DofMap
    from .linalg import write_matrix_market
    from .system import build_coupled_operator
    from . import bdf

    m = cfg.mesh.build()
    d = DofMap.from_mesh(m)
    op = build_coupled_operator(m, d, cfg.params)
    write_matrix_market(op.M_blk, out_dir / "mass.mtx")
    write_matrix_market(op.A_K, out_dir / "a_form_K.mtx")
    write_matrix_market(op.A_L, out_dir / "a_form_L.mtx")
    step = bdf.build_step_operator(op, bdf.bdf_coefficients(cfg.q), cfg.tau)
    write_matrix_market(step.matrix, out_dir / "step_matrix.mtx")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        expected = SUBCOMMANDS[args.subcommand]
        if cfg.experiment != expected:
            raise ConfigError(
                f"config experiment {cfg.experiment!r} does not match "
                f"subcommand ({expected!r})")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(args.out) if args.out else Path(cfg.out_dir)
    try:
        dispatch(cfg, out_dir=out_dir)
        if args.dump_matrices:
            _dump_matrices(cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SingularMatrixError, ParameterError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
