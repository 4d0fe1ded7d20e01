"""Run experiment presets across shape-derivative variants and summarize
termination behaviour (iterations, final misfit, component count)."""

import argparse
import json
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from cutshape.driver import EXPERIMENTS, make_config, run_identification
from cutshape.levelset import read_polylines


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="/tmp/calibrate")
    ap.add_argument("--presets", nargs="*", default=sorted(EXPERIMENTS))
    ap.add_argument("--variants", nargs="*",
                    default=["continuous", "discrete", "boundary"])
    ap.add_argument("--r", type=float, default=None)
    args = ap.parse_args()

    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    gd_dir = out_root / "gd"
    summary = {}
    for preset in args.presets:
        for variant in args.variants:
            tag = f"{preset}__{variant}" + (f"__r{args.r}" if args.r else "")
            overrides = dict(sd_variant=variant,
                             gd_file=str(gd_dir / f"{preset}.txt"),
                             out=str(out_root / tag))
            if args.r is not None:
                overrides["r"] = args.r
            cfg = make_config(preset, **overrides)
            t0 = time.time()
            try:
                trace = run_identification(cfg)
                status = trace.exit_status
                iters = trace.iterations
                J = trace.final_J()
            except Exception as exc:  # noqa: BLE001 - calibration report
                status, iters, J = f"EXC:{exc}", -1, float("nan")
            dt = time.time() - t0
            n_final = len(read_polylines(out_root / tag / f"isoline_{iters}.txt")) \
                if iters >= 0 else 0
            summary[tag] = dict(status=status, iters=iters, J=J,
                                seconds=round(dt, 1), components=n_final)
            print(f"{tag:<45} {status:<10} it={iters:<4} J={J:.3e} "
                  f"comp={n_final} ({dt:.0f}s)", flush=True)
    (out_root / "summary.json").write_text(json.dumps(summary, indent=1))


if __name__ == "__main__":
    main()
