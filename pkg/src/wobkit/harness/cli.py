"""Command-line entry point.

    wob solve       estimate a field over a scene's grid and write outputs
    wob converge    RMSE-vs-N study across path lengths, written as CSV
    wob compare-wos boundary-walk vs sphere-walk efficiency report

Exit codes: 0 success, 2 validation error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..geometry import BoundaryError
from ..problem import EstimatorConfig, Quantity, SpecError
from . import io
from .run import compare_wos, convergence_study, run_field
from .scene import SceneError, load_scene

EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scene", required=True, help="scene TOML file")
    p.add_argument("--M", type=int, default=None, help="boundary path length")
    p.add_argument("--N", type=int, default=None, help="samples per point")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--formulation", default=None,
                   help="dirichlet-double-layer | neumann-direct | "
                        "neumann-single-layer-forward | single-layer-mixed | wos")
    p.add_argument("--sampling", default=None, help="all-hits | hemisphere")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default="out", help="output directory")


def _cfg_from_args(scene, args) -> EstimatorConfig:
    d = scene.defaults
    return EstimatorConfig(
        formulation=args.formulation or d.formulation,
        M=args.M if args.M is not None else d.M,
        N=args.N if args.N is not None else d.N,
        sampling_mode=args.sampling or d.sampling_mode,
        ris_candidates=d.ris_candidates, k=d.k, p_k=d.p_k,
        volume_samples=d.volume_samples,
        quantity=getattr(args, "quantity", None) or d.quantity,
        seed=args.seed if args.seed is not None else d.seed)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="wob", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="estimate a field over the scene grid")
    _add_common(ps)
    ps.add_argument("--grid", default=None, metavar="WxH",
                    help="override the scene grid resolution")
    ps.add_argument("--quantity", default=None,
                    help="solution | gradient | normal-derivative | "
                         "boundary-solution")
    ps.add_argument("--formats", default="csv,pfm,png")

    pc = sub.add_parser("converge", help="RMSE vs sample count study")
    _add_common(pc)
    pc.add_argument("--N-schedule", dest="n_schedule", required=True,
                    help="comma-separated checkpoint sample counts")
    pc.add_argument("--M-list", dest="m_list", default=None,
                    help="comma-separated path lengths (default: scene M)")
    pc.add_argument("--quantity", default=None)

    pw = sub.add_parser("compare-wos", help="solver efficiency report")
    _add_common(pw)
    pw.add_argument("--eps-list", dest="eps_list", required=True,
                    help="comma-separated shell thicknesses")
    pw.add_argument("--M-list", dest="m_list", default="2,3,4,5,6,7")

    args = ap.parse_args(argv)
    try:
        scene = load_scene(args.scene)
        if args.threads:
            import numba
            numba.set_num_threads(args.threads)
        cfg = _cfg_from_args(scene, args)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)

        if args.command == "solve":
            if args.grid:
                w, h = (int(v) for v in args.grid.lower().split("x"))
                scene.grid.res = (w, h)
            print(f"scene={scene.name} formulation={cfg.formulation.value} "
                  f"M={cfg.M} N={cfg.N} seed={cfg.seed}")
            grid = run_field(scene, cfg)
            files = io.write_outputs(grid, out_dir,
                                     formats=args.formats.split(","))
            print(f"wall_time={grid.wall_time:.3f}s rays={grid.rays}")
            if grid.abs_err is not None:
                print(f"rmse={grid.rmse():.6g}")
            for f in files:
                print(f"wrote {f}")
        elif args.command == "converge":
            schedule = [int(v) for v in args.n_schedule.split(",") if v]
            m_list = ([int(v) for v in args.m_list.split(",") if v]
                      if args.m_list else [cfg.M])
            print(f"scene={scene.name} formulation={cfg.formulation.value} "
                  f"M={m_list} seed={cfg.seed}")
            rows = convergence_study(scene, cfg, schedule, m_list)
            path = io.write_convergence_csv(out_dir / "convergence.csv", rows)
            print(f"wrote {path}")
        else:
            eps_list = [float(v) for v in args.eps_list.split(",") if v]
            m_list = [int(v) for v in args.m_list.split(",") if v]
            n = cfg.N
            print(f"scene={scene.name} N={n} M={m_list} eps={eps_list}")
            rows = compare_wos(scene, cfg, eps_list, m_list, n)
            path = io.write_compare_csv(out_dir / "compare_wos.csv", rows)
            print(f"wrote {path}")
    except (SceneError, SpecError, BoundaryError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RuntimeError, OSError) as e:
        print(f"runtime failure: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
