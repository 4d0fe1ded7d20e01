"""Command-line entry points: identify, gen-data, check-sd."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import shapegrad as sg
from .cutquad import decompose
from .driver import (EXPERIMENTS, generate_synthetic_data, load_problem_data,
                     make_config, parse_config, run_identification)
from .fem import solve_dual, solve_primal
from .levelset import preset_levelset
from .mesh import build_uniform_mesh
from .velocity import build_velocity_space


def _load_config(args):
    overrides = {}
    for key, attr in (("sd", "sd"), ("tol", "tol"), ("max_iter", "max_iter"),
                      ("out", "out"), ("r", "r"), ("n", "n"),
                      ("gd_file", "gd_file")):
        val = getattr(args, attr, None)
        if val is not None:
            overrides[key] = val
    if args.config:
        return parse_config(args.config, overrides)
    if args.preset:
        typed = {}
        for k, v in overrides.items():
            if k in ("tol", "r"):
                typed[k] = float(v)
            elif k in ("max_iter", "n"):
                typed[k] = int(v)
            elif k == "sd":
                typed["sd_variant"] = v
            else:
                typed[k] = v
        return make_config(args.preset, **typed)
    raise SystemExit("either --config or --preset is required")


def _add_common(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--preset", choices=sorted(EXPERIMENTS),
                   help="experiment preset (used when no config file given)")
    p.add_argument("--sd", choices=("continuous", "discrete", "boundary"))
    p.add_argument("--tol")
    p.add_argument("--max-iter", dest="max_iter")
    p.add_argument("--out")
    p.add_argument("--r")
    p.add_argument("--n")
    p.add_argument("--gd-file", dest="gd_file")


def cmd_identify(args) -> int:
    config = _load_config(args)
    trace = run_identification(config)
    last = trace.rows[-1]
    print(f"exit={trace.exit_status} iterations={last.k} J={last.J:.6e}")
    return 0 if trace.exit_status in ("tolerance", "max_iter") else 1


def cmd_gen_data(args) -> int:
    config = _load_config(args)
    if config.gd_source != "synthetic":
        print("config uses analytic g_D; nothing to generate", file=sys.stderr)
        return 0
    out_file = config.gd_file or (Path(config.out or ".")
                                  / f"gd_{config.data}_{config.n_fine}.txt")
    table = generate_synthetic_data(config, out_file=out_file)
    print(f"wrote {len(table.s)} trace samples -> {out_file}")
    return 0


def cmd_check_sd(args) -> int:
    """Central finite-difference audit of the assembled shape gradients."""
    config = _load_config(args)
    t = float(args.t)
    mesh = build_uniform_mesh(config.n)
    phi = preset_levelset(config.init_preset, config.init_params, mesh)
    decomp = decompose(mesh, phi)
    data = load_problem_data(config)
    params = config.fem_params()
    u, system = solve_primal(mesh, decomp, data, params)
    p = solve_dual(mesh, decomp, system, u, data, params)
    space = build_velocity_space(mesh, decomp)
    functionals = {
        "continuous": sg.assemble_continuous_sd(mesh, decomp, space, u, p,
                                                data, params),
        "discrete": sg.assemble_discrete_sd(mesh, decomp, space, u, p, data,
                                            params),
        "boundary": sg.assemble_boundary_sd(mesh, decomp, space, u, p, params),
    }
    fd_kind = {
        "continuous": sg.PerturbationKind.MESH_MAP,
        "discrete": sg.PerturbationKind.MESH_MAP,
        "boundary": sg.PerturbationKind.BOUNDARY_CORRECTION,
    }
    rng = np.random.default_rng(args.seed)
    thetas = [sg.random_smooth_field(mesh, rng) for _ in range(args.num_fields)]
    fd_cache = {}
    rows = {name: [] for name in functionals}
    for i, theta in enumerate(thetas):
        for name, fn in functionals.items():
            kind = fd_kind[name]
            if (i, kind) not in fd_cache:
                jp = sg.perturbed_cost(mesh, phi, theta, +t, kind, data, params)
                jm = sg.perturbed_cost(mesh, phi, theta, -t, kind, data, params)
                fd_cache[(i, kind)] = (jp - jm) / (2.0 * t)
            fd = fd_cache[(i, kind)]
            assembled = sg.evaluate_sd(fn, theta)
            rel = abs(assembled - fd) / max(abs(assembled), 1e-300)
            rows[name].append((i, assembled, fd, rel))

    out_dir = Path(config.out) if config.out else None
    print(f"{'variant':<12}{'theta':<7}{'assembled':>16}{'fd':>16}{'rel_err':>12}")
    for name, table in rows.items():
        for (i, assembled, fd, rel) in table:
            print(f"{name:<12}{i:<7}{assembled:>16.8e}{fd:>16.8e}{rel:>12.2e}")
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            with open(out_dir / f"check_sd_{name}.csv", "w") as f:
                f.write("theta_id,assembled,fd,rel_err\n")
                for (i, assembled, fd, rel) in table:
                    f.write(f"{i},{assembled:.17g},{fd:.17g},{rel:.17g}\n")
    worst = {name: max(r[3] for r in table) for name, table in rows.items()}
    print("worst relative error per variant:",
          {k: f"{v:.2e}" for k, v in worst.items()})
    # the two exact variants must agree with their own perturbation family
    ok = worst["discrete"] <= 1e-3 and worst["boundary"] <= 1e-3
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cutshape",
        description="free-boundary identification on a fixed background mesh")
    sub = parser.add_subparsers(dest="command", required=True)

    p_id = sub.add_parser("identify", help="run the identification loop")
    _add_common(p_id)
    p_id.set_defaults(fn=cmd_identify)

    p_gen = sub.add_parser("gen-data", help="tabulate synthetic boundary data")
    _add_common(p_gen)
    p_gen.set_defaults(fn=cmd_gen_data)

    p_chk = sub.add_parser("check-sd",
                           help="finite-difference audit of shape gradients")
    _add_common(p_chk)
    p_chk.add_argument("--t", default="1e-5", help="finite-difference step")
    p_chk.add_argument("--num-fields", type=int, default=5)
    p_chk.add_argument("--seed", type=int, default=2024)
    p_chk.set_defaults(fn=cmd_check_sd)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
